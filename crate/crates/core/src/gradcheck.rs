//! Central finite-difference verification of analytic gradients.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::PatchTriple;
use crate::error::{Error, Result};
use crate::model::S2Fin;
use crate::params::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Coordinates checked per leaf; leaves at most this large are checked
    /// exhaustively. The largest-magnitude coordinate is always included.
    pub samples_per_leaf: usize,
    /// Lower bound of the relative-error denominator.
    pub denominator_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            tolerance: 1e-3,
            samples_per_leaf: 5,
            denominator_floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafReport {
    pub path: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub leaves: Vec<LeafReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.leaves.iter().all(|l| l.passed)
    }

    pub fn failing(&self) -> impl Iterator<Item = &LeafReport> {
        self.leaves.iter().filter(|l| !l.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.leaves.iter().map(|l| l.max_rel_error).fold(0.0, f64::max)
    }
}

/// Relative error `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Compares `analytic` (one gradient vector per leaf of `params`) against
/// central differences of `loss`. Values are restored after each probe.
pub fn grad_check_with<F>(
    params: &mut ModelParams,
    analytic: &[Vec<f64>],
    mut loss: F,
    config: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&ModelParams) -> Result<f64>,
{
    if analytic.len() != params.len() {
        return Err(Error::ShapeMismatch {
            expected: alloc::format!("{} leaves", params.len()),
            actual: alloc::format!("{} leaves", analytic.len()),
        });
    }
    for (leaf, g) in params.leaves().iter().zip(analytic) {
        if g.len() != leaf.value.len() {
            return Err(Error::ShapeMismatch {
                expected: alloc::format!("{} values for `{}`", leaf.value.len(), leaf.path),
                actual: alloc::format!("{} values", g.len()),
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient { path: leaf.path.clone() });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut leaves = Vec::new();
    for li in 0..params.len() {
        if !params.leaves()[li].trainable {
            continue;
        }
        let g = &analytic[li];
        let coords = sample_coords(g, config.samples_per_leaf, &mut rng);
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for &j in &coords {
            let orig = params.leaves()[li].value.data()[j];
            params.leaves_mut()[li].value.data_mut()[j] = orig + config.step;
            let plus = loss(params);
            params.leaves_mut()[li].value.data_mut()[j] = orig - config.step;
            let minus = loss(params);
            params.leaves_mut()[li].value.data_mut()[j] = orig;
            let numeric = (plus? - minus?) / (2.0 * config.step);
            max_abs = max_abs.max((g[j] - numeric).abs());
            max_rel = max_rel.max(relative_error(g[j], numeric, config.denominator_floor));
        }
        let leaf = &params.leaves()[li];
        leaves.push(LeafReport {
            path: leaf.path.clone(),
            checked: coords.len(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
            passed: max_rel <= config.tolerance,
        });
    }
    Ok(GradCheckReport {
        tolerance: config.tolerance,
        leaves,
    })
}

fn sample_coords(g: &[f64], samples: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if g.len() <= samples.max(1) {
        return (0..g.len()).collect();
    }
    let top = g
        .iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bv), (i, &x)| if x.abs() > bv { (i, x.abs()) } else { (bi, bv) })
        .0;
    let mut coords = alloc::vec![top];
    for j in rand::seq::index::sample(rng, g.len(), samples).into_iter() {
        if coords.len() >= samples {
            break;
        }
        if j != top {
            coords.push(j);
        }
    }
    coords
}

/// Full-model check of the cross-entropy loss on one labeled patch.
pub fn grad_check(model: &S2Fin, params: &mut ModelParams, patch: &PatchTriple, config: &GradCheckConfig) -> Result<GradCheckReport> {
    let (_, _, grads) = model.loss_and_grad(params, patch)?;
    grad_check_with(params, &grads, |p| model.loss(p, patch), config)
}
