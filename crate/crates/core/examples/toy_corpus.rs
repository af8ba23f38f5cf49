//! Generate an oracle toy language, look at a few sentences and their exact
//! translations, and round-trip a corpus through its TSV format.

use distill_mt::corpus::{self, gen_toy_corpus, ToyKind, ToyLanguageSpec};

fn main() -> distill_mt::Result<()> {
    for kind in [ToyKind::WordReversal, ToyKind::SubstitutionCipher] {
        let spec = ToyLanguageSpec::new(kind, "abcdef", 5, 7);
        let toy = gen_toy_corpus(&spec, 500)?;
        println!("{} ({} distinct sentences possible)", spec.language_tag(), spec.capacity());
        for s in toy.monolingual.iter().take(3) {
            println!("  {:<20} -> {}", s.as_str(), toy.oracle.translate(s).as_str());
        }

        let reference = toy.oracle.reference_corpus(&toy.monolingual, &spec.language_tag(), spec.seed)?;
        let dir = std::env::temp_dir().join("distill-mt-toy-corpus");
        std::fs::create_dir_all(&dir).map_err(|e| distill_mt::Error::Input(e.to_string()))?;
        let path = dir.join(format!("{}.tsv", spec.language_tag()));
        corpus::save(&reference, &path)?;
        assert_eq!(corpus::load(&path)?, reference);
        println!("  {} pairs saved to {} and read back intact", reference.len(), path.display());
    }
    Ok(())
}
