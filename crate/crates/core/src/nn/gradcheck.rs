//! Central finite-difference check of [`backward`](super::backward).
//!
//! The numeric side only calls [`forward`] and [`cross_entropy`], so it is
//! independent of the hand-written backward pass. ReLU and max pooling make
//! the loss piecewise smooth; an entry whose `+step`/`-step` probes land on
//! different activation patterns straddles a kink, where the two sides
//! legitimately disagree, and is counted separately instead of compared.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{backward, cross_entropy, forward, Mode, ModelParams, Tensor3, PARAM_GROUPS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Entries checked per parameter group (all of them if the group is smaller).
    pub per_group: usize,
    /// Lower bound on the relative-error denominator, so that entries whose
    /// true gradient is ~0 are compared absolutely.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-5, per_group: 48, floor: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCheck {
    pub name: &'static str,
    pub checked: usize,
    /// Sampled entries skipped because the probe straddled a kink.
    pub kinks: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Largest analytic gradient magnitude among the checked entries.
    pub max_gradient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub groups: Vec<GroupCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }
}

/// Mean eval-mode cross-entropy over `batch`.
pub fn batch_loss(params: &ModelParams, batch: &[(Tensor3, usize)]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Size("empty batch".into()));
    }
    let mut total = 0.0;
    for (x, y) in batch {
        total += cross_entropy(&forward(params, x, Mode::Eval)?.probs, *y)?;
    }
    Ok(total / batch.len() as f64)
}

/// Mean analytic gradient over `batch`, dropout off.
pub fn batch_gradient(params: &ModelParams, batch: &[(Tensor3, usize)]) -> Result<ModelParams> {
    let mut acc = ModelParams::zeros(params.arch)?;
    for (x, y) in batch {
        let (g, _) = backward(params, x, *y, None)?;
        acc.add_scaled(&g, 1.0 / batch.len() as f64);
    }
    Ok(acc)
}

/// ReLU on/off states and max-pool winners for every sample in `batch`.
fn activation_pattern(params: &ModelParams, batch: &[(Tensor3, usize)]) -> Result<Vec<usize>> {
    let mut pattern = Vec::new();
    for (x, _) in batch {
        let act = forward(params, x, Mode::Eval)?.activations;
        let on = |v: &f64| usize::from(*v > 0.0);
        pattern.extend(act.conv1_pre.values.iter().map(on));
        pattern.extend(act.conv2_pre.values.iter().map(on));
        pattern.extend(act.dense1_pre.iter().map(on));
        pattern.extend_from_slice(&act.pool1_argmax);
        pattern.extend_from_slice(&act.pool2_argmax);
    }
    Ok(pattern)
}

/// Whether moving one entry by `±step` changes any ReLU state or max-pool
/// winner, i.e. the central difference spans a kink.
pub fn straddles_kink(
    params: &ModelParams,
    batch: &[(Tensor3, usize)],
    group: usize,
    index: usize,
    step: f64,
) -> Result<bool> {
    let mut p = params.clone();
    let orig = p.groups()[group][index];
    p.groups_mut()[group][index] = orig + step;
    let plus = activation_pattern(&p, batch)?;
    p.groups_mut()[group][index] = orig - step;
    Ok(plus != activation_pattern(&p, batch)?)
}

/// `(L(w + h) - L(w - h)) / 2h` for one entry of one parameter group.
pub fn central_difference(
    params: &ModelParams,
    batch: &[(Tensor3, usize)],
    group: usize,
    index: usize,
    step: f64,
) -> Result<f64> {
    let mut p = params.clone();
    let orig = p.groups()[group][index];
    p.groups_mut()[group][index] = orig + step;
    let plus = batch_loss(&p, batch)?;
    p.groups_mut()[group][index] = orig - step;
    let minus = batch_loss(&p, batch)?;
    Ok((plus - minus) / (2.0 * step))
}

/// Compares analytic and numeric gradients on a seeded sample of entries
/// from every parameter group.
pub fn check_gradients(
    params: &ModelParams,
    batch: &[(Tensor3, usize)],
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let analytic = batch_gradient(params, batch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut groups = Vec::with_capacity(PARAM_GROUPS.len());
    for (g, name) in PARAM_GROUPS.iter().enumerate() {
        let len = params.groups()[g].len();
        let indices = sample(&mut rng, len, config.per_group.min(len)).into_vec();
        let mut check = GroupCheck {
            name,
            checked: 0,
            kinks: 0,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            max_gradient: 0.0,
        };
        for i in indices {
            if straddles_kink(params, batch, g, i, config.step)? {
                check.kinks += 1;
                continue;
            }
            check.checked += 1;
            let a = analytic.groups()[g][i];
            let n = central_difference(params, batch, g, i, config.step)?;
            let abs = (a - n).abs();
            let rel = abs / a.abs().max(n.abs()).max(config.floor);
            check.max_rel_error = check.max_rel_error.max(rel);
            check.max_abs_error = check.max_abs_error.max(abs);
            check.max_gradient = check.max_gradient.max(a.abs());
        }
        groups.push(check);
    }
    Ok(GradCheckReport { groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{weight_init, Architecture};

    #[test]
    fn small_network_passes() {
        let arch = Architecture {
            conv1_filters: 3,
            conv2_filters: 4,
            hidden: 6,
            ..Architecture::new(10, 10, 3)
        };
        let params = weight_init(arch, 8).unwrap();
        let batch: Vec<(Tensor3, usize)> = (0..3)
            .map(|s| {
                let v = (0..100).map(|i| ((i * (s + 3)) as f64 * 0.173).sin()).collect();
                (Tensor3::new(1, 10, 10, v).unwrap(), s)
            })
            .collect();
        let report = check_gradients(&params, &batch, &GradCheckConfig::default()).unwrap();
        assert_eq!(report.groups.len(), 8);
        assert!(report.max_rel_error() < 1e-4, "{report:?}");
        assert!(report.groups.iter().all(|g| g.checked > 0));
    }
}
