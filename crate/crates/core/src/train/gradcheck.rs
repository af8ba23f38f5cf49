use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::loss::{evaluate, loss_value};
use super::Example;
use crate::error::{Error, Result};
use crate::model::TranslationModel;
use crate::rng;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute rather than
/// relative terms.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub coordinates: usize,
    pub max_rel_error: f64,
    /// Coordinate and tensor name where the worst error occurred.
    pub worst: Option<(usize, String)>,
    pub passed: bool,
}

/// Compare the analytic gradient of `ex`'s loss with central finite
/// differences on `samples` coordinates, stratified across every tensor.
pub fn grad_check(
    model: &TranslationModel,
    ex: &Example,
    smoothing_eps: f64,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(tol > 0.0) {
        return Err(Error::Config("gradient-check tolerance must be positive".into()));
    }
    let (_, grad) = evaluate(model, ex, smoothing_eps, true, None)?;
    let grad = grad.expect("gradient requested");

    let tensors = model.layout().tensors();
    let total = model.param_count();
    let mut rng = rng::stream(seed, "train/gradcheck");
    let mut coords: Vec<(usize, &str)> = Vec::new();
    for (name, m) in &tensors {
        let share = ((samples * m.len()) as f64 / total as f64).ceil() as usize;
        let n = share.max(4).min(m.len());
        for i in index::sample(&mut rng, m.len(), n) {
            coords.push((m.off + i, name.as_str()));
        }
    }

    let mut max_rel = 0.0f64;
    let mut worst = None;
    let mut probe = model.clone();
    for &(i, name) in &coords {
        let orig = model.params()[i];
        probe.params_mut()[i] = orig + FD_STEP;
        let up = loss_value(&probe, ex, smoothing_eps)?;
        probe.params_mut()[i] = orig - FD_STEP;
        let down = loss_value(&probe, ex, smoothing_eps)?;
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let analytic = grad[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > max_rel {
            max_rel = rel;
            worst = Some((i, name.to_string()));
        }
    }
    Ok(GradCheckReport {
        coordinates: coords.len(),
        max_rel_error: max_rel,
        worst,
        passed: max_rel < tol,
    })
}
