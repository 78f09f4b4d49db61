//! Checker architecture exploration: width-scaled candidates trained by
//! knowledge distillation, a consistency curve fitted against the width
//! multiplier, and the closed-form overhead-optimal multiplier.
//!
//! The consistency of a checker generated with multiplier `alpha` is modeled
//! as `f(alpha) = -a/alpha + b` with positive `a`, `b`. Under that model the
//! computational overhead `alpha^2 + (1 - f(alpha))` is minimized at
//! `alpha = cbrt(a/2)`, clamped into the curve's admissible range
//! `[a/b, 1]`.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DyveError, Result};
use crate::qnn::QuantModel;
use crate::rng;
use crate::runtime::{consistency_between, ClusterLabeling};
use crate::train::{train_distilled, KdTargets, RealModel};

/// Default multiplier sweep for consistency sampling.
pub const DEFAULT_ALPHA_SWEEP: [f64; 6] = [0.05, 0.1, 0.2, 0.4, 0.7, 1.0];

/// Knowledge-distillation hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdConfig {
    /// Softmax temperature for the soft targets.
    pub temperature: f64,
    /// Weight of the distillation term against the hard-label term.
    pub mix: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for KdConfig {
    fn default() -> Self {
        KdConfig { temperature: 4.0, mix: 0.9, epochs: 20, learning_rate: 0.02, batch_size: 32 }
    }
}

impl KdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(DyveError::InvalidTemperature(self.temperature));
        }
        if !(0.0..=1.0).contains(&self.mix) {
            return Err(DyveError::InvalidConfig(format!(
                "distillation mix {} outside [0, 1]",
                self.mix
            )));
        }
        Ok(())
    }
}

/// Temperature-softened probabilities: `softmax(logits / t)`.
pub fn soften(logits: &[f64], t: f64) -> Result<Vec<f64>> {
    Ok(log_soften(logits, t)?.iter().map(|l| l.exp()).collect())
}

/// Log of the softened probabilities, computed stably.
pub fn log_soften(logits: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(DyveError::InvalidTemperature(t));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = logits.iter().map(|z| (z - max) / t).collect();
    let log_sum = scaled.iter().map(|s| s.exp()).sum::<f64>().ln();
    Ok(scaled.iter().map(|s| s - log_sum).collect())
}

/// Cross-entropy of a predicted distribution against a target distribution,
/// `-sum(target * ln(pred))`, taking the prediction in log space.
fn cross_entropy_log(pred_log: &[f64], target: &[f64]) -> f64 {
    -pred_log.iter().zip(target.iter()).map(|(lp, t)| t * lp).sum::<f64>()
}

/// Distillation loss: `mix * T^2 * CE(softened checker, softened teacher)
/// + (1 - mix) * CE(checker, true label)`.
pub fn kd_loss(
    checker_logits: &[f64],
    teacher_logits: &[f64],
    label: usize,
    cfg: &KdConfig,
) -> Result<f64> {
    let target = soften(teacher_logits, cfg.temperature)?;
    Ok(kd_loss_from_target(checker_logits, &target, label, cfg))
}

/// Gradient of `kd_loss` with respect to the checker logits.
pub fn kd_loss_grad(
    checker_logits: &[f64],
    teacher_logits: &[f64],
    label: usize,
    cfg: &KdConfig,
) -> Result<Vec<f64>> {
    let target = soften(teacher_logits, cfg.temperature)?;
    Ok(kd_grad_from_target(checker_logits, &target, label, cfg))
}

/// Distillation loss against a precomputed softened teacher distribution
/// (already mapped into the checker's class space).
pub fn kd_loss_from_target(
    checker_logits: &[f64],
    teacher_soft: &[f64],
    label: usize,
    cfg: &KdConfig,
) -> f64 {
    let t = cfg.temperature;
    let soft_log = log_soften(checker_logits, t).expect("temperature validated");
    let hard_log = log_soften(checker_logits, 1.0).expect("unit temperature");
    cfg.mix * t * t * cross_entropy_log(&soft_log, teacher_soft)
        + (1.0 - cfg.mix) * -hard_log[label]
}

/// Gradient of `kd_loss_from_target` with respect to the checker logits:
/// `mix * T * (softened checker - target) + (1 - mix) * (checker - onehot)`.
pub fn kd_grad_from_target(
    checker_logits: &[f64],
    teacher_soft: &[f64],
    label: usize,
    cfg: &KdConfig,
) -> Vec<f64> {
    let t = cfg.temperature;
    let soft = soften(checker_logits, t).expect("temperature validated");
    let hard = soften(checker_logits, 1.0).expect("unit temperature");
    soft.iter()
        .zip(teacher_soft.iter())
        .zip(hard.iter().enumerate())
        .map(|((p, tgt), (i, q))| {
            let hard_term = q - f64::from(u8::from(i == label));
            cfg.mix * t * (p - tgt) + (1.0 - cfg.mix) * hard_term
        })
        .collect()
}

/// One point on the consistency curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencySample {
    pub alpha: f64,
    /// Fraction of held-out inputs where checker and task labels agree.
    pub consistency: f64,
    /// Checker multiply-accumulate count over the task's.
    pub flops_ratio: f64,
}

/// Fitted parameters of `f(alpha) = -a/alpha + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyFit {
    pub a: f64,
    pub b: f64,
}

impl ConsistencyFit {
    pub fn eval(&self, alpha: f64) -> f64 {
        -self.a / alpha + self.b
    }

    /// Multiplier range where the fitted consistency stays within [0, 1].
    pub fn valid_range(&self) -> (f64, f64) {
        (self.a / self.b, 1.0)
    }
}

/// Least-squares fit of consistency against `1/alpha` in the transformed
/// linear model `y = b - a * (1/alpha)`.
pub fn fit_consistency(samples: &[ConsistencySample]) -> Result<ConsistencyFit> {
    let mut distinct: Vec<f64> = samples.iter().map(|s| s.alpha).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(DyveError::DegenerateFit);
    }
    if samples.iter().any(|s| s.alpha <= 0.0 || s.alpha.is_nan()) {
        return Err(DyveError::InvalidMultiplier(
            samples.iter().map(|s| s.alpha).fold(f64::INFINITY, f64::min),
        ));
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| 1.0 / s.alpha).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.consistency).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys.iter()).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let a = -slope;
    let b = y_mean - slope * x_mean;
    if a <= 0.0 || a.is_nan() {
        return Err(DyveError::NonConformingFit { param: "a", value: a });
    }
    if b <= 0.0 || b.is_nan() {
        return Err(DyveError::NonConformingFit { param: "b", value: b });
    }
    Ok(ConsistencyFit { a, b })
}

/// The overhead-optimal multiplier and its predicted overhead.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalAlpha {
    pub alpha: f64,
    /// `alpha^2 + 1 + a/alpha - b` at the chosen multiplier.
    pub predicted_overhead: f64,
    /// True when the unconstrained optimum fell outside `[a/b, 1]`.
    pub clamped: bool,
}

/// Predicted computational overhead `alpha^2 + (1 - f(alpha))`.
pub fn predicted_overhead(fit: &ConsistencyFit, alpha: f64) -> f64 {
    alpha * alpha + 1.0 + fit.a / alpha - fit.b
}

/// Closed-form overhead minimizer `cbrt(a/2)`, clamped into the fit's valid
/// multiplier range.
pub fn optimal_alpha(fit: &ConsistencyFit) -> OptimalAlpha {
    let raw = (fit.a / 2.0).cbrt();
    let (lo, hi) = fit.valid_range();
    let alpha = raw.clamp(lo.min(hi), hi);
    OptimalAlpha { alpha, predicted_overhead: predicted_overhead(fit, alpha), clamped: alpha != raw }
}

/// Train a width-scaled checker against a fixed task model by knowledge
/// distillation and measure its held-out consistency.
///
/// The returned model is quantized to INT-8; `alpha` is recorded on it.
pub fn train_checker(
    task: &QuantModel,
    alpha: f64,
    kd: &KdConfig,
    train_data: &Dataset,
    holdout: &Dataset,
    seed: u64,
) -> Result<(QuantModel, ConsistencySample)> {
    let arch = task.arch().scaled(alpha)?;
    let checker = train_checker_model(task, &arch, alpha, None, kd, train_data, seed)?;
    let identity = ClusterLabeling::identity(task.num_classes());
    let consistency = consistency_between(task, &checker, &identity, holdout)?;
    let flops_ratio = checker.flops() as f64 / task.flops() as f64;
    Ok((checker, ConsistencySample { alpha, consistency, flops_ratio }))
}

/// Distill a checker for an already-built architecture, optionally against a
/// simplified task given by a cluster labeling. Identical seeds walk
/// identical generator streams, so the identity labeling reproduces
/// `train_checker`'s model byte for byte.
pub fn train_checker_model(
    task: &QuantModel,
    arch: &crate::qnn::Architecture,
    alpha: f64,
    labeling: Option<&ClusterLabeling>,
    kd: &KdConfig,
    train_data: &Dataset,
    seed: u64,
) -> Result<QuantModel> {
    kd.validate()?;
    let targets = distillation_targets(task, train_data, kd.temperature, labeling)?;
    let mut rng = rng::stream(seed, "train-checker");
    let mut real = RealModel::init(arch, &mut rng)?;
    if kd.epochs > 0 {
        train_distilled(&mut real, train_data, &targets, kd, &mut rng)?;
    }
    real.quantize(alpha)
}

/// Softened teacher targets for a dataset, optionally aggregated through a
/// cluster labeling (summing softened probabilities within each cluster).
pub fn distillation_targets(
    task: &QuantModel,
    data: &Dataset,
    temperature: f64,
    labeling: Option<&ClusterLabeling>,
) -> Result<KdTargets> {
    let mut soft = Vec::with_capacity(data.len());
    let mut hard = Vec::with_capacity(data.len());
    for idx in 0..data.len() {
        let (logits, _) = task.infer(data.input(idx))?;
        let softened = soften(&logits, temperature)?;
        match labeling {
            Some(lam) => {
                let mut merged = vec![0.0; lam.k()];
                for (class, p) in softened.iter().enumerate() {
                    merged[lam.checker_class_of(class)] += p;
                }
                soft.push(merged);
                hard.push(lam.checker_class_of(data.labels[idx]));
            }
            None => {
                soft.push(softened);
                hard.push(data.labels[idx]);
            }
        }
    }
    Ok(KdTargets { soft, hard })
}

/// Train one checker per multiplier and collect the consistency samples.
pub fn sweep_candidates(
    task: &QuantModel,
    alphas: &[f64],
    kd: &KdConfig,
    train_data: &Dataset,
    holdout: &Dataset,
    seed: u64,
) -> Result<Vec<(QuantModel, ConsistencySample)>> {
    alphas
        .iter()
        .map(|&alpha| {
            train_checker(task, alpha, kd, train_data, holdout, rng::derive(seed, &format!("sweep-{alpha}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol(a: f64, b: f64, eps: f64) -> bool {
        (a - b).abs() <= eps
    }

    #[test]
    fn soften_symmetry_and_closed_form() {
        let p = soften(&[0.0, 0.0], 3.7).unwrap();
        assert!(tol(p[0], 0.5, 1e-12) && tol(p[1], 0.5, 1e-12));

        let p = soften(&[3f64.ln(), 0.0], 1.0).unwrap();
        assert!(tol(p[0], 0.75, 1e-12), "{p:?}");
        assert!(tol(p[1], 0.25, 1e-12));
    }

    #[test]
    fn soften_flattens_monotonically_with_temperature() {
        let logits = [5.0, 0.0];
        let mut prev_gap = f64::INFINITY;
        for t in [1.0, 2.0, 4.0, 8.0, 32.0, 128.0] {
            let p = soften(&logits, t).unwrap();
            let gap = (p[0] - 0.5).abs();
            assert!(gap < prev_gap, "gap {gap} at T={t}");
            prev_gap = gap;
        }
        assert!(prev_gap < 0.01);
    }

    #[test]
    fn soften_sums_to_one_and_is_permutation_equivariant() {
        let logits = [1.2, -0.3, 4.0, 0.0];
        let p = soften(&logits, 2.5).unwrap();
        assert!(tol(p.iter().sum::<f64>(), 1.0, 1e-9));
        let permuted = [4.0, 0.0, 1.2, -0.3];
        let q = soften(&permuted, 2.5).unwrap();
        assert_eq!(q[0].to_bits(), p[2].to_bits());
        assert_eq!(q[2].to_bits(), p[0].to_bits());
    }

    #[test]
    fn invalid_temperature_is_rejected() {
        assert!(matches!(soften(&[1.0], 0.0), Err(DyveError::InvalidTemperature(_))));
        assert!(matches!(soften(&[1.0], -2.0), Err(DyveError::InvalidTemperature(_))));
    }

    #[test]
    fn zero_mix_reduces_to_cross_entropy() {
        let cfg = KdConfig { temperature: 1.0, mix: 0.0, ..KdConfig::default() };
        let checker = [0.4, -1.0, 2.2];
        let teacher = [9.0, 9.0, 9.0];
        let loss = kd_loss(&checker, &teacher, 2, &cfg).unwrap();
        let (ce, _) = crate::train::softmax_cross_entropy(&checker, 2);
        assert!(tol(loss, ce, 1e-6), "kd {loss} vs ce {ce}");
    }

    #[test]
    fn full_mix_with_matching_logits_gives_entropy_and_zero_grad() {
        let cfg = KdConfig { temperature: 3.0, mix: 1.0, ..KdConfig::default() };
        let logits = [1.0, 0.2, -0.7];
        let loss = kd_loss(&logits, &logits, 0, &cfg).unwrap();
        let p = soften(&logits, cfg.temperature).unwrap();
        let entropy: f64 = -p.iter().map(|v| v * v.ln()).sum::<f64>();
        assert!(tol(loss, cfg.temperature.powi(2) * entropy, 1e-9));
        let grad = kd_loss_grad(&logits, &logits, 0, &cfg).unwrap();
        assert!(grad.iter().all(|g| g.abs() < 1e-12), "{grad:?}");
    }

    #[test]
    fn kd_gradient_matches_finite_differences() {
        let cfg = KdConfig { temperature: 4.0, mix: 0.9, ..KdConfig::default() };
        let teacher = [2.0, -0.5, 0.3, 1.1];
        let mut checker = vec![0.1, 0.8, -1.2, 0.4];
        let grad = kd_loss_grad(&checker, &teacher, 3, &cfg).unwrap();
        let h = 1e-6;
        for i in 0..checker.len() {
            let orig = checker[i];
            checker[i] = orig + h;
            let lp = kd_loss(&checker, &teacher, 3, &cfg).unwrap();
            checker[i] = orig - h;
            let lm = kd_loss(&checker, &teacher, 3, &cfg).unwrap();
            checker[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-6 * fd.abs().max(1.0),
                "component {i}: analytic {} vs fd {fd}",
                grad[i]
            );
        }
    }

    #[test]
    fn exact_samples_recover_curve_parameters() {
        let truth = ConsistencyFit { a: 0.003, b: 0.94 };
        let samples: Vec<ConsistencySample> = DEFAULT_ALPHA_SWEEP
            .iter()
            .map(|&alpha| ConsistencySample {
                alpha,
                consistency: truth.eval(alpha),
                flops_ratio: alpha * alpha,
            })
            .collect();
        let fit = fit_consistency(&samples).unwrap();
        assert!(tol(fit.a, truth.a, 1e-9), "a = {}", fit.a);
        assert!(tol(fit.b, truth.b, 1e-9), "b = {}", fit.b);
    }

    #[test]
    fn two_points_define_the_line() {
        let truth = ConsistencyFit { a: 0.01, b: 0.9 };
        let samples = [
            ConsistencySample { alpha: 0.1, consistency: truth.eval(0.1), flops_ratio: 0.01 },
            ConsistencySample { alpha: 0.5, consistency: truth.eval(0.5), flops_ratio: 0.25 },
        ];
        let fit = fit_consistency(&samples).unwrap();
        assert!(tol(fit.a, truth.a, 1e-12));
        assert!(tol(fit.b, truth.b, 1e-12));
    }

    #[test]
    fn degenerate_and_nonconforming_fits_are_rejected() {
        let s = ConsistencySample { alpha: 0.3, consistency: 0.8, flops_ratio: 0.09 };
        assert!(matches!(fit_consistency(&[s]), Err(DyveError::DegenerateFit)));
        assert!(matches!(fit_consistency(&[s, s]), Err(DyveError::DegenerateFit)));

        // consistency that improves as the checker shrinks fits with a < 0
        let bad = [
            ConsistencySample { alpha: 0.1, consistency: 0.99, flops_ratio: 0.01 },
            ConsistencySample { alpha: 1.0, consistency: 0.5, flops_ratio: 1.0 },
        ];
        let err = fit_consistency(&bad).unwrap_err();
        assert!(matches!(err, DyveError::NonConformingFit { param: "a", .. }));
        assert!(err.to_string().contains("widen the multiplier sweep"));
    }

    #[test]
    fn noisy_samples_recover_slope_within_twenty_percent() {
        use rand::Rng;
        let truth = ConsistencyFit { a: 0.007, b: 1.0 };
        let mut rng = crate::rng::stream(2024, "noisy-fit");
        for trial in 0..20 {
            let samples: Vec<ConsistencySample> = DEFAULT_ALPHA_SWEEP
                .iter()
                .map(|&alpha| ConsistencySample {
                    alpha,
                    consistency: truth.eval(alpha)
                        + 0.01 * crate::rng::standard_normal(&mut rng),
                    flops_ratio: alpha * alpha,
                })
                .collect();
            let fit = fit_consistency(&samples).unwrap();
            assert!(
                (fit.a - truth.a).abs() / truth.a <= 0.2,
                "trial {trial}: recovered a = {} (rng {})",
                fit.a,
                rng.gen::<u32>()
            );
        }
    }

    #[test]
    fn optimal_alpha_closed_form() {
        let fit = ConsistencyFit { a: 0.016, b: 0.95 };
        let opt = optimal_alpha(&fit);
        assert!(tol(opt.alpha, 0.2, 1e-12), "alpha {}", opt.alpha);
        assert!(!opt.clamped);
        assert!(tol(opt.predicted_overhead, 0.04 + 1.0 + 0.08 - 0.95, 1e-12));
    }

    #[test]
    fn optimal_alpha_clamps_into_valid_range() {
        // unconstrained optimum cbrt(0.001) = 0.1 sits below a/b = 0.2
        let fit = ConsistencyFit { a: 0.002, b: 0.01 };
        let opt = optimal_alpha(&fit);
        assert!(opt.clamped);
        assert!(tol(opt.alpha, 0.2, 1e-12), "alpha {}", opt.alpha);

        // unconstrained optimum above 1
        let fit = ConsistencyFit { a: 3.0, b: 3.5 };
        let opt = optimal_alpha(&fit);
        assert!(opt.clamped);
        assert_eq!(opt.alpha, 1.0);
    }
}
