//! Integration tests across the exploration pipeline: distilled checkers,
//! campaign determinism, candidate evaluation, and detector comparisons.

mod common;

use common::{fixture, MASTER_SEED};
use dyve_core::arch::{train_checker, KdConfig};
use dyve_core::data::Dataset;
use dyve_core::fault::{
    run_bfa, run_random_campaign, toggle, BfaConfig, BitTarget, CampaignConfig, FaultTarget,
    Persistence, TargetScope,
};
use dyve_core::qnn::{Architecture, LayerSpec, LayerWeights, QuantModel, QuantTensor, TensorShape};
use dyve_core::rng;
use dyve_core::runtime::{replay_campaign_threshold, ClusterLabeling, DyvePair, ThresholdChecker};
use dyve_core::task::{evaluate_candidate, evaluate_fixed_checker, ImpactMatrix};
use dyve_core::train::accuracy;

fn kd_short() -> KdConfig {
    KdConfig { epochs: 12, ..KdConfig::default() }
}

#[test]
fn task_model_fits_the_synthetic_problem() {
    let fx = fixture();
    let acc = accuracy(&fx.task, &fx.holdout).unwrap();
    assert!(acc >= 0.95, "held-out accuracy {acc}");
}

/// Golden lock on the inference path: a seeded two-layer model must produce
/// these exact logit bits on this input, run after run.
#[test]
fn seeded_mlp_logits_are_bit_stable() {
    let arch = Architecture::mlp(4, &[6], 3);
    let mut rng = rng::stream(7, "golden-mlp");
    let real = dyve_core::train::RealModel::init(&arch, &mut rng).unwrap();
    let model = real.quantize(1.0).unwrap();
    let input = [0.25, -1.5, 2.0, 0.125];
    let (logits, label) = model.infer(&input).unwrap();
    let (again, _) = model.infer(&input).unwrap();
    let bits: Vec<u64> = logits.iter().map(|v| v.to_bits()).collect();
    assert_eq!(bits, again.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    const GOLDEN_BITS: [u64; 3] =
        [13832167117199967893, 4593748181228135557, 13834417760612628341];
    const GOLDEN_LABEL: usize = 1;
    assert_eq!(bits, GOLDEN_BITS, "inference bits drifted from the reference run");
    assert_eq!(label, GOLDEN_LABEL);
}

/// Pure distillation at full width on cleanly separable data tracks the
/// teacher almost perfectly.
#[test]
fn full_width_checker_reaches_near_perfect_consistency() {
    let blobs = dyve_core::data::synthetic_blobs(
        &dyve_core::data::BlobConfig {
            classes: 5,
            dim: 8,
            samples_per_class: 300,
            separation: 6.0,
            confusable: None,
            confusable_distance: 0.0,
        },
        MASTER_SEED,
    )
    .unwrap();
    let mut split_rng = rng::stream(MASTER_SEED, "separable-split");
    let (train, holdout) = blobs.split(1.0 / 3.0, &mut split_rng).unwrap();
    let arch = Architecture::mlp(8, &[16], 5);
    let mut train_rng = rng::stream(MASTER_SEED, "separable-task");
    let mut real = dyve_core::train::RealModel::init(&arch, &mut train_rng).unwrap();
    dyve_core::train::train_cross_entropy(
        &mut real,
        &train,
        &dyve_core::train::TrainConfig::default(),
        &mut train_rng,
    )
    .unwrap();
    let task = real.quantize(1.0).unwrap();

    let kd = KdConfig { mix: 1.0, ..KdConfig::default() };
    let (_, sample) = train_checker(
        &task,
        1.0,
        &kd,
        &train,
        &holdout,
        rng::derive(MASTER_SEED, "full-width"),
    )
    .unwrap();
    assert!(sample.consistency >= 0.99, "consistency {}", sample.consistency);
    assert!((sample.flops_ratio - 1.0).abs() < 1e-12);
}

#[test]
fn narrow_checker_is_less_consistent_than_full_width() {
    let fx = fixture();
    let seed = rng::derive(MASTER_SEED, "narrow-vs-full");
    let (_, narrow) =
        train_checker(&fx.task, 0.03, &kd_short(), &fx.train, &fx.holdout, seed).unwrap();
    let (_, full) =
        train_checker(&fx.task, 1.0, &kd_short(), &fx.train, &fx.holdout, seed).unwrap();
    assert!(
        narrow.consistency < full.consistency,
        "narrow {} vs full {}",
        narrow.consistency,
        full.consistency
    );
}

#[test]
fn zero_epoch_checker_stays_near_chance_consistency() {
    let fx = fixture();
    let kd = KdConfig { epochs: 0, ..KdConfig::default() };
    let (_, sample) = train_checker(
        &fx.task,
        0.5,
        &kd,
        &fx.train,
        &fx.holdout,
        rng::derive(MASTER_SEED, "zero-epochs"),
    )
    .unwrap();
    assert!(
        sample.consistency <= 0.35,
        "untrained checker should sit near the class prior, got {}",
        sample.consistency
    );
}

#[test]
fn campaign_is_reproducible_and_regression_locked() {
    let fx = fixture();
    let cfg = CampaignConfig { n_runs: 5_000, seed: 77, ..CampaignConfig::default() };
    let a = run_random_campaign(&fx.task, &fx.holdout, &cfg).unwrap();
    let b = run_random_campaign(&fx.task, &fx.holdout, &cfg).unwrap();
    assert_eq!(a, b, "same seed must reproduce the campaign bit for bit");
    assert_eq!(
        a.risk.probs.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.risk.probs.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    const GOLDEN_FAILURES: u64 = 5;
    assert_eq!(a.risk.failure_count, GOLDEN_FAILURES, "failure count drifted");
    if !a.risk.is_empty() {
        let sum: f64 = a.risk.probs.values().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12, "risk matrix is a distribution");
        for i in 0..a.risk.n() {
            assert_eq!(a.risk.probs.get(i, i), 0.0, "diagonal stays zero");
        }
    }
}

#[test]
fn activation_scope_campaign_runs_and_reproduces() {
    let fx = fixture();
    let cfg = CampaignConfig {
        n_runs: 2_000,
        seed: 13,
        scope: TargetScope::WeightsAndActivations,
        ..CampaignConfig::default()
    };
    let a = run_random_campaign(&fx.task, &fx.holdout, &cfg).unwrap();
    let b = run_random_campaign(&fx.task, &fx.holdout, &cfg).unwrap();
    assert_eq!(a, b);
    let hits_activations = a
        .failures
        .iter()
        .flat_map(|f| f.targets.iter())
        .any(|t| matches!(t, FaultTarget::Activation(_)));
    assert!(hits_activations, "activation faults should cause some failures");
}

#[test]
fn precision_vector_is_locked() {
    let fx = fixture();
    let p = dyve_core::fault::precision_vector(&fx.task, &fx.holdout).unwrap();
    assert_eq!(p.len(), 10);
    let confusable_min = p[0].min(p[1]);
    let separated_min = p[2..].iter().copied().fold(1.0f64, f64::min);
    assert!(
        confusable_min < separated_min,
        "confusable classes have the lowest precision: {p:?}"
    );
    const GOLDEN_P0: f64 = 0.8817733990147784;
    const GOLDEN_P5: f64 = 1.0;
    assert!((p[0] - GOLDEN_P0).abs() < 1e-12, "p[0] = {:?}", p[0]);
    assert!((p[5] - GOLDEN_P5).abs() < 1e-12, "p[5] = {:?}", p[5]);
}

#[test]
fn inconsistency_matrix_counts_disagreements() {
    // identity task over 6 classes; checker swaps the logits of classes 3
    // and 5, so inputs whose argmax is 3 read back as 5
    let identity = |swap: bool| -> QuantModel {
        let n = 6;
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = 1.0;
        }
        if swap {
            w[3 * n + 3] = 0.0;
            w[3 * n + 5] = 1.0;
            w[5 * n + 5] = 0.0;
            w[5 * n + 3] = 1.0;
        }
        QuantModel::new(
            Architecture {
                input: TensorShape::Flat(n),
                layers: vec![LayerSpec::Dense { in_features: n, out_features: n, bias: false }],
            },
            vec![Some(LayerWeights { weight: QuantTensor::quantize(&w), bias: None })],
            1.0,
        )
        .unwrap()
    };
    let task = identity(false);
    let checker = identity(true);
    let mut features = Vec::new();
    for i in 0..100 {
        let hot = if i < 8 { 3 } else { 0 };
        let mut x = vec![0.0; 6];
        x[hot] = 4.0;
        features.push(x);
    }
    let data = Dataset { features, labels: vec![0; 100], num_classes: 6, dim: 6 };
    let c = dyve_core::task::build_inconsistency_matrix(&task, &checker, &data).unwrap();
    assert!((c.matrix.get(3, 5) - 0.08).abs() < 1e-12);
    assert!((c.inconsistent_fraction - 0.08).abs() < 1e-12);
    assert_eq!(c.matrix.get(5, 3), 0.0);
    for i in 0..6 {
        assert_eq!(c.matrix.get(i, i), 0.0);
    }

    let same = dyve_core::task::build_inconsistency_matrix(&task, &task, &data).unwrap();
    assert!(same.matrix.values().iter().all(|&v| v == 0.0));
    assert_eq!(same.inconsistent_fraction, 0.0);
}

#[test]
fn inconsistency_matrix_of_a_seeded_pair_is_fixed() {
    let fx = fixture();
    let seed = rng::derive(MASTER_SEED, "inconsistency-golden");
    let (checker, sample) =
        train_checker(&fx.task, 0.3, &kd_short(), &fx.train, &fx.holdout, seed).unwrap();
    let a = dyve_core::task::build_inconsistency_matrix(&fx.task, &checker, &fx.holdout).unwrap();
    let b = dyve_core::task::build_inconsistency_matrix(&fx.task, &checker, &fx.holdout).unwrap();
    assert_eq!(a, b);
    assert!(
        (a.inconsistent_fraction - (1.0 - sample.consistency)).abs() < 1e-12,
        "off-diagonal mass {} complements consistency {}",
        a.inconsistent_fraction,
        sample.consistency
    );
    let off_diag: f64 = a.matrix.values().iter().sum();
    assert!((off_diag - a.inconsistent_fraction).abs() < 1e-12);
}

#[test]
fn identity_candidate_reproduces_stage1_checker_exactly() {
    let fx = fixture();
    let kd = kd_short();
    let alpha = 0.4;
    let seed = rng::derive(MASTER_SEED, "identity-equivalence");
    let (stage1, _) = train_checker(&fx.task, alpha, &kd, &fx.train, &fx.holdout, seed).unwrap();

    let campaign_cfg = CampaignConfig { n_runs: 4_000, seed: 5, ..CampaignConfig::default() };
    let campaign = run_random_campaign(&fx.task, &fx.holdout, &campaign_cfg).unwrap();
    let impact = ImpactMatrix::uniform(10);
    let identity = ClusterLabeling::identity(10);

    let baseline = evaluate_fixed_checker(
        &fx.task,
        stage1.clone(),
        &identity,
        &fx.holdout,
        &campaign,
        &impact,
    )
    .unwrap();
    let candidate = evaluate_candidate(
        &fx.task,
        stage1.arch(),
        alpha,
        &identity,
        &kd,
        &fx.train,
        &fx.holdout,
        &campaign,
        &impact,
        seed,
    )
    .unwrap();
    assert_eq!(candidate.checker.to_bytes(), stage1.to_bytes(), "retrained identity checker");
    assert_eq!(candidate.report(), baseline.report(), "identity candidate equals the baseline");
}

#[test]
fn full_merge_candidate_degenerates() {
    let fx = fixture();
    let all_one = ClusterLabeling::new(vec![1; 10]).unwrap();
    let campaign_cfg = CampaignConfig { n_runs: 3_000, seed: 21, ..CampaignConfig::default() };
    let campaign = run_random_campaign(&fx.task, &fx.holdout, &campaign_cfg).unwrap();
    let impact = ImpactMatrix::uniform(10);
    let stage1_arch = fx.task.arch().scaled(0.3).unwrap();
    let candidate = evaluate_candidate(
        &fx.task,
        &stage1_arch,
        0.3,
        &all_one,
        &kd_short(),
        &fx.train,
        &fx.holdout,
        &campaign,
        &impact,
        rng::derive(MASTER_SEED, "full-merge"),
    )
    .unwrap();
    let report = candidate.report();
    assert_eq!(report.consistency, 1.0, "single-cluster checker always agrees");
    let flops_ratio = candidate.checker.flops() as f64 / fx.task.flops() as f64;
    assert!((report.compute_overhead - flops_ratio).abs() < 1e-12);
    assert_eq!(report.weighted_coverage, Some(0.0), "nothing is detectable");
    assert_eq!(report.coverage, Some(0.0));
}

/// The progressive search's first committed flip must match an exhaustive
/// sweep over every (code, bit) pair under the same commit rule.
#[test]
fn bfa_first_flip_matches_exhaustive_search() {
    // two-class linear model where weight (0, 0) dominates the decision
    let w = vec![0.9, 0.02, -0.9, -0.02];
    let model = QuantModel::new(
        Architecture {
            input: TensorShape::Flat(2),
            layers: vec![LayerSpec::Dense { in_features: 2, out_features: 2, bias: false }],
        },
        vec![Some(LayerWeights { weight: QuantTensor::quantize(&w), bias: None })],
        1.0,
    )
    .unwrap();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for i in 0..64 {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let jitter = (i as f64) / 64.0;
        features.push(vec![sign * (2.0 + jitter), sign * (0.5 + jitter / 2.0)]);
        labels.push(if sign > 0.0 { 0 } else { 1 });
    }
    let data = Dataset { features, labels, num_classes: 2, dim: 2 };
    assert_eq!(accuracy(&model, &data).unwrap(), 1.0, "clean model is perfect");

    let cfg = BfaConfig { max_flips: 1, batch_size: 64, seed: 3, ..BfaConfig::default() };
    let out = run_bfa(&model, &data, &cfg).unwrap();
    assert_eq!(out.flips.len(), 1, "one flip committed");

    // exhaustive oracle: lowest post-flip accuracy, then highest loss, then
    // lexicographic target order
    let mut best: Option<(f64, f64, BitTarget)> = None;
    let mut work = model.clone();
    for index in 0..4 {
        for bit in 0..8u8 {
            let t = BitTarget { layer: 0, index, bit };
            toggle(&mut work, &[t]).unwrap();
            let acc = accuracy(&work, &data).unwrap();
            let mut loss = 0.0;
            for i in 0..data.len() {
                let (logits, _) = work.infer(data.input(i)).unwrap();
                loss += dyve_core::train::softmax_cross_entropy(&logits, data.labels[i]).0;
            }
            loss /= data.len() as f64;
            toggle(&mut work, &[t]).unwrap();
            let better = match &best {
                None => true,
                Some((bacc, bloss, bt)) => {
                    (acc, -loss, t.layer, t.index, t.bit)
                        < (*bacc, -*bloss, bt.layer, bt.index, bt.bit)
                }
            };
            if better {
                best = Some((acc, loss, t));
            }
        }
    }
    let (_, _, oracle_target) = best.unwrap();
    assert_eq!(out.flips[0], oracle_target, "greedy search agrees with exhaustive search");
    assert_eq!(oracle_target.index, 0, "the dominant weight is the target");
    assert_eq!(oracle_target.bit, 7, "its sign bit does the damage");
}

#[test]
fn bfa_is_deterministic_per_seed() {
    let fx = fixture();
    let cfg = BfaConfig { max_flips: 4, batch_size: 128, seed: 19, ..BfaConfig::default() };
    let a = run_bfa(&fx.task, &fx.holdout, &cfg).unwrap();
    let b = run_bfa(&fx.task, &fx.holdout, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(!a.flips.is_empty());
}

/// Weight faults on the INT-8 model rarely push activations out of the
/// calibrated range, so the range detector misses most failures.
#[test]
fn threshold_detector_misses_most_int8_failures() {
    let fx = fixture();
    let detector = ThresholdChecker::calibrate(&fx.task, &fx.train).unwrap();
    let cfg = CampaignConfig { n_runs: 60_000, seed: 31, ..CampaignConfig::default() };
    let campaign = run_random_campaign(&fx.task, &fx.holdout, &cfg).unwrap();
    assert!(campaign.risk.failure_count > 50, "campaign produced failures");
    let impact = ImpactMatrix::uniform(10);
    let replay =
        replay_campaign_threshold(&detector, &fx.task, &fx.holdout, &campaign, &impact.matrix)
            .unwrap();
    let cov = replay.metrics.coverage.unwrap();
    assert!(cov <= 0.4, "range detector coverage {cov} should be poor on INT-8 faults");
}

#[test]
fn verified_pair_beats_threshold_on_the_same_campaign() {
    let fx = fixture();
    let (checker, _) = train_checker(
        &fx.task,
        0.25,
        &kd_short(),
        &fx.train,
        &fx.holdout,
        rng::derive(MASTER_SEED, "duel-checker"),
    )
    .unwrap();
    let pair = DyvePair::new(
        fx.task.clone(),
        checker,
        ClusterLabeling::identity(10),
        None,
    )
    .unwrap();
    let cfg = CampaignConfig { n_runs: 60_000, seed: 31, ..CampaignConfig::default() };
    let campaign = run_random_campaign(&fx.task, &fx.holdout, &cfg).unwrap();
    let impact = ImpactMatrix::uniform(10);
    let dyve = dyve_core::runtime::replay_campaign(&pair, &fx.holdout, &campaign, &impact.matrix)
        .unwrap();
    let detector = ThresholdChecker::calibrate(&fx.task, &fx.train).unwrap();
    let thresh =
        replay_campaign_threshold(&detector, &fx.task, &fx.holdout, &campaign, &impact.matrix)
            .unwrap();
    assert!(
        dyve.metrics.coverage.unwrap() > thresh.metrics.coverage.unwrap(),
        "verified pair {} vs threshold {}",
        dyve.metrics.coverage.unwrap(),
        thresh.metrics.coverage.unwrap()
    );
    assert_eq!(dyve.metrics.false_positive_rate, 0.0);
}

#[test]
fn persistent_replay_leaves_failures_uncorrected() {
    let fx = fixture();
    let cfg = CampaignConfig {
        n_runs: 3_000,
        seed: 57,
        persistence: Persistence::Persistent,
        ..CampaignConfig::default()
    };
    let campaign = run_random_campaign(&fx.task, &fx.holdout, &cfg).unwrap();
    let pair = DyvePair::new(
        fx.task.clone(),
        fx.task.clone(),
        ClusterLabeling::identity(10),
        None,
    )
    .unwrap();
    let impact = ImpactMatrix::uniform(10);
    let replay =
        dyve_core::runtime::replay_campaign(&pair, &fx.holdout, &campaign, &impact.matrix).unwrap();
    // re-computation re-runs the still-faulty model, so failures persist
    assert_eq!(replay.recovered, 0, "persistent faults cannot be recovered");
    assert_eq!(replay.uncorrected, campaign.risk.failure_count);
}
