//! The online verification system: a task model paired with a small checker
//! model, a label comparator, and re-computation on mismatch. Also the
//! threshold-checking baseline detector, the overhead/coverage metrics, and
//! replay of fault campaigns through either detector.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{DyveError, Result};
use crate::fault::{CampaignOutcome, FaultTarget, Persistence};
use crate::matrix::{CountMatrix, SquareMatrix};
use crate::qnn::{ActivationFault, QuantModel};

/// Assignment of original classes to clusters. Cluster ids run 1..=K and
/// every cluster is non-empty, so the assignment partitions the label set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabeling {
    assign: Vec<usize>,
    k: usize,
}

impl ClusterLabeling {
    /// Every class in its own cluster.
    pub fn identity(n: usize) -> ClusterLabeling {
        ClusterLabeling { assign: (1..=n).collect(), k: n }
    }

    /// Build from 1-based cluster ids; ids must cover 1..=K with no gaps.
    pub fn new(assign: Vec<usize>) -> Result<ClusterLabeling> {
        if assign.is_empty() {
            return Err(DyveError::InvalidConfig("empty cluster labeling".into()));
        }
        let k = *assign.iter().max().unwrap();
        let mut seen = vec![false; k + 1];
        for &c in &assign {
            if c == 0 || c > k {
                return Err(DyveError::InvalidConfig(format!(
                    "cluster id {c} outside 1..={k}"
                )));
            }
            seen[c] = true;
        }
        if !seen[1..].iter().all(|&s| s) {
            return Err(DyveError::InvalidConfig(
                "cluster ids must cover 1..=K with no gaps".into(),
            ));
        }
        Ok(ClusterLabeling { assign, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_classes(&self) -> usize {
        self.assign.len()
    }

    /// 1-based cluster id of a class.
    pub fn cluster_of(&self, class: usize) -> usize {
        self.assign[class]
    }

    /// 0-based checker output class for an original class.
    pub fn checker_class_of(&self, class: usize) -> usize {
        self.assign[class] - 1
    }

    pub fn is_identity(&self) -> bool {
        self.k == self.assign.len()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.assign
    }

    /// True when both classes fell into the same cluster, making failures
    /// between them invisible to the comparator.
    pub fn merges(&self, a: usize, b: usize) -> bool {
        self.assign[a] == self.assign[b]
    }
}

/// The verified pair: task model, checker model, the class-to-cluster map the
/// comparator uses, and a per-class protection mask. Classes whose mask entry
/// is false are accepted without checking.
#[derive(Clone, Debug)]
pub struct DyvePair {
    pub task: QuantModel,
    pub checker: QuantModel,
    pub labeling: ClusterLabeling,
    pub protected: Vec<bool>,
}

/// Outcome of one verified inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub label: usize,
    /// Comparator flagged an inconsistency.
    pub detected: bool,
    /// The task model was re-run.
    pub recomputed: bool,
}

impl DyvePair {
    pub fn new(
        task: QuantModel,
        checker: QuantModel,
        labeling: ClusterLabeling,
        protected: Option<Vec<bool>>,
    ) -> Result<DyvePair> {
        if labeling.num_classes() != task.num_classes() {
            return Err(DyveError::DimensionMismatch(format!(
                "labeling over {} classes for a {}-class task",
                labeling.num_classes(),
                task.num_classes()
            )));
        }
        if checker.num_classes() != labeling.k() {
            return Err(DyveError::DimensionMismatch(format!(
                "checker emits {} classes but the labeling has {} clusters",
                checker.num_classes(),
                labeling.k()
            )));
        }
        let protected = protected.unwrap_or_else(|| vec![true; task.num_classes()]);
        if protected.len() != task.num_classes() {
            return Err(DyveError::DimensionMismatch(format!(
                "protection mask of length {} for {} classes",
                protected.len(),
                task.num_classes()
            )));
        }
        Ok(DyvePair { task, checker, labeling, protected })
    }

    /// Fault-free verified inference: both models run, the comparator checks
    /// cluster-level agreement, and any mismatch triggers re-computation
    /// whose result is accepted unconditionally.
    pub fn verify(&self, input: &[f64]) -> Result<Verdict> {
        self.verify_with(&self.task, input, Persistence::Transient)
    }

    /// Verified inference where the live task model may carry faults. Under
    /// transient persistence the re-computation runs the clean task model;
    /// under persistent faults it re-runs the live one.
    pub fn verify_with(
        &self,
        live_task: &QuantModel,
        input: &[f64],
        persistence: Persistence,
    ) -> Result<Verdict> {
        let task_label = live_task.infer_label(input)?;
        if !self.protected.get(task_label).copied().unwrap_or(true) {
            return Ok(Verdict { label: task_label, detected: false, recomputed: false });
        }
        let checker_label = self.checker.infer_label(input)?;
        if self.labeling.checker_class_of(task_label) == checker_label {
            return Ok(Verdict { label: task_label, detected: false, recomputed: false });
        }
        let recompute_model = match persistence {
            Persistence::Transient => &self.task,
            Persistence::Persistent => live_task,
        };
        let label = recompute_model.infer_label(input)?;
        Ok(Verdict { label, detected: true, recomputed: true })
    }

    /// Fraction of inputs the comparator accepts without re-computation.
    pub fn consistency_on(&self, data: &Dataset) -> Result<f64> {
        consistency_between_masked(
            &self.task,
            &self.checker,
            &self.labeling,
            Some(&self.protected),
            data,
        )
    }

    /// Storage and computational overhead of the pair at a given consistency:
    /// checker bytes over task bytes, and checker FLOPs plus the re-computed
    /// fraction of task FLOPs, normalized by task FLOPs.
    pub fn overheads(&self, p_consistent: f64) -> Result<(f64, f64)> {
        if self.task.storage_bytes() == 0 || self.task.flops() == 0 {
            return Err(DyveError::InvalidConfig(
                "task model has no parameters or no arithmetic".into(),
            ));
        }
        let o_s = self.checker.storage_bytes() as f64 / self.task.storage_bytes() as f64;
        let flop_ratio = self.checker.flops() as f64 / self.task.flops() as f64;
        Ok((o_s, computational_overhead(flop_ratio, p_consistent)?))
    }
}

/// Computational overhead: `flop_ratio + (1 - p_consistent)`, the always-on
/// checker cost plus the expected re-computation fraction.
pub fn computational_overhead(flop_ratio: f64, p_consistent: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_consistent) {
        return Err(DyveError::InvalidConfig(format!(
            "consistency {p_consistent} outside [0, 1]"
        )));
    }
    Ok(flop_ratio + (1.0 - p_consistent))
}

/// Fraction of inputs where the checker's cluster label matches the task
/// label's cluster.
pub fn consistency_between(
    task: &QuantModel,
    checker: &QuantModel,
    labeling: &ClusterLabeling,
    data: &Dataset,
) -> Result<f64> {
    consistency_between_masked(task, checker, labeling, None, data)
}

fn consistency_between_masked(
    task: &QuantModel,
    checker: &QuantModel,
    labeling: &ClusterLabeling,
    protected: Option<&[bool]>,
    data: &Dataset,
) -> Result<f64> {
    if data.is_empty() {
        return Err(DyveError::EmptyDataset);
    }
    let mut agree = 0usize;
    for idx in 0..data.len() {
        let t = task.infer_label(data.input(idx))?;
        if let Some(mask) = protected {
            if !mask[t] {
                agree += 1; // unchecked classes never trigger re-computation
                continue;
            }
        }
        let c = checker.infer_label(data.input(idx))?;
        if labeling.checker_class_of(t) == c {
            agree += 1;
        }
    }
    Ok(agree as f64 / data.len() as f64)
}

/// Joint empirical frequencies of fault-free (task label, checker label)
/// disagreements over original classes; the diagonal is forced to zero.
pub fn inconsistency_counts(
    task: &QuantModel,
    checker: &QuantModel,
    data: &Dataset,
) -> Result<(SquareMatrix, f64)> {
    if data.is_empty() {
        return Err(DyveError::EmptyDataset);
    }
    if checker.num_classes() != task.num_classes() {
        return Err(DyveError::DimensionMismatch(format!(
            "checker emits {} classes, task {}",
            checker.num_classes(),
            task.num_classes()
        )));
    }
    let n = task.num_classes();
    let mut m = SquareMatrix::zeros(n);
    let mut disagreements = 0usize;
    for idx in 0..data.len() {
        let t = task.infer_label(data.input(idx))?;
        let c = checker.infer_label(data.input(idx))?;
        if t != c {
            m.set(t, c, m.get(t, c) + 1.0);
            disagreements += 1;
        }
    }
    let total = data.len() as f64;
    let mut freq = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            freq.set(i, j, m.get(i, j) / total);
        }
    }
    Ok((freq, disagreements as f64 / total))
}

/// Detection and overhead metrics for one (detector, campaign) pairing.
///
/// `false_positive_rate` measures fault-free inputs whose final output is
/// perturbed by a false alarm. A correcting detector re-computes on its own
/// false alarms and reproduces the task label, so the rate is structurally
/// zero there; for flag-only detectors it equals the clean flag rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// O(S): checker parameter bytes over task parameter bytes.
    pub storage_overhead: f64,
    /// O(C): checker FLOPs plus expected re-computation, over task FLOPs.
    pub compute_overhead: f64,
    /// Cov: detected failures over total failures; absent with no failures.
    pub coverage: Option<f64>,
    /// WCov: impact-weighted coverage; absent with no failures.
    pub weighted_coverage: Option<f64>,
    /// FPR as described above.
    pub false_positive_rate: f64,
    /// FNR: missed failures over total failures; absent with no failures.
    pub false_negative_rate: Option<f64>,
    /// P_consistent measured on held-out data.
    pub consistency: f64,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<MetricsReport> {
        Ok(serde_json::from_str(text)?)
    }

    fn fmt_pct(v: Option<f64>) -> String {
        match v {
            Some(v) => format!("{:.2}%", v * 100.0),
            None => "-".into(),
        }
    }
}

/// Render reports as a fixed-width table with one row per (attack, detector).
pub fn render_comparison(rows: &[(String, String, MetricsReport)]) -> String {
    let mut out = format!(
        "{:<14} {:<12} {:>8} {:>8} {:>8} {:>8}\n",
        "attack", "detector", "FPR", "FNR", "O(C)", "WCov"
    );
    for (attack, detector, report) in rows {
        out.push_str(&format!(
            "{:<14} {:<12} {:>8} {:>8} {:>8} {:>8}\n",
            attack,
            detector,
            format!("{:.2}%", report.false_positive_rate * 100.0),
            MetricsReport::fmt_pct(report.false_negative_rate),
            format!("{:.2}%", report.compute_overhead * 100.0),
            MetricsReport::fmt_pct(report.weighted_coverage),
        ));
    }
    out
}

/// Coverage pair computed from detected/total failure counts under an impact
/// weighting. With a constant impact matrix the weighted coverage equals the
/// plain coverage bit for bit, because integer counts scale exactly.
pub fn compute_coverage(
    total: &CountMatrix,
    detected: &CountMatrix,
    impact: &SquareMatrix,
) -> Result<(Option<f64>, Option<f64>)> {
    if total.n() != detected.n() {
        return Err(DyveError::DimensionMismatch(format!(
            "total {}x{} vs detected {}x{}",
            total.n(),
            total.n(),
            detected.n(),
            detected.n()
        )));
    }
    for i in 0..total.n() {
        for j in 0..total.n() {
            if detected.get(i, j) > total.get(i, j) {
                return Err(DyveError::InvalidConfig(format!(
                    "detected failures exceed total failures at ({i}, {j})"
                )));
            }
        }
    }
    let tf: u64 = off_diagonal_total(total);
    if tf == 0 {
        return Ok((None, None));
    }
    let df: u64 = off_diagonal_total(detected);
    let cov = df as f64 / tf as f64;
    let weighted_tf = total.weighted_sum(impact)?;
    let wcov = if weighted_tf > 0.0 {
        Some(detected.weighted_sum(impact)? / weighted_tf)
    } else {
        None
    };
    Ok((Some(cov), wcov))
}

fn off_diagonal_total(m: &CountMatrix) -> u64 {
    let mut sum = 0;
    for i in 0..m.n() {
        for j in 0..m.n() {
            if i != j {
                sum += m.get(i, j);
            }
        }
    }
    sum
}

/// Probability that two independently failing classifiers emit the same
/// label: the dot product of their output distributions.
pub fn collision_probability(p: &[f64], q: &[f64]) -> Result<f64> {
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    if p.len() != q.len() {
        return Err(DyveError::DimensionMismatch(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(p.iter().zip(q.iter()).map(|(a, b)| a * b).sum())
}

fn check_distribution(d: &[f64], name: &str) -> Result<()> {
    if d.is_empty() {
        return Err(DyveError::InvalidDistribution(format!("{name} is empty")));
    }
    if d.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(DyveError::InvalidDistribution(format!(
            "{name} has a negative or non-finite entry"
        )));
    }
    let sum: f64 = d.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(DyveError::InvalidDistribution(format!("{name} sums to {sum}")));
    }
    Ok(())
}

/// Range detector calibrated on fault-free activations. Per layer it records
/// the activation extremes, widens each bound away from the interval by 10%
/// of its own magnitude, and flags any inference whose activations escape.
/// The widened interval strictly contains the calibration range on both
/// sides regardless of sign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChecker {
    /// (lower, upper) widened bound per layer.
    bounds: Vec<(f64, f64)>,
}

impl ThresholdChecker {
    pub fn calibrate(model: &QuantModel, data: &Dataset) -> Result<ThresholdChecker> {
        if data.is_empty() {
            return Err(DyveError::EmptyDataset);
        }
        let layer_count = model.arch().layers.len();
        let mut min = vec![f64::INFINITY; layer_count];
        let mut max = vec![f64::NEG_INFINITY; layer_count];
        for idx in 0..data.len() {
            let trace = model.infer_traced(data.input(idx))?;
            for (l, act) in trace.activations.iter().enumerate() {
                for &v in act {
                    min[l] = min[l].min(v);
                    max[l] = max[l].max(v);
                }
            }
        }
        let bounds = min
            .iter()
            .zip(max.iter())
            .map(|(&lo, &hi)| widen(lo, hi))
            .collect();
        Ok(ThresholdChecker { bounds })
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// True when any activation of this inference escapes its layer's range.
    pub fn flags(&self, model: &QuantModel, input: &[f64]) -> Result<bool> {
        self.flags_with_faults(model, input, &[])
    }

    pub fn flags_with_faults(
        &self,
        model: &QuantModel,
        input: &[f64],
        activation_faults: &[ActivationFault],
    ) -> Result<bool> {
        let trace = model.infer_with_activation_faults(input, activation_faults)?;
        if trace.activations.len() != self.bounds.len() {
            return Err(DyveError::DimensionMismatch(format!(
                "model has {} layers, detector calibrated over {}",
                trace.activations.len(),
                self.bounds.len()
            )));
        }
        for (act, &(lo, hi)) in trace.activations.iter().zip(self.bounds.iter()) {
            if act.iter().any(|&v| v < lo || v > hi) {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

fn widen(lo: f64, hi: f64) -> (f64, f64) {
    (lo - 0.1 * lo.abs(), hi + 0.1 * hi.abs())
}

/// A campaign replayed through a detector.
#[derive(Clone, Debug)]
pub struct ReplayReport {
    pub metrics: MetricsReport,
    pub total_failures: CountMatrix,
    pub detected_failures: CountMatrix,
    /// Failures whose re-computation restored the fault-free label.
    pub recovered: u64,
    /// Failures still misclassified after the verified pass.
    pub uncorrected: u64,
}

/// Replay every recorded failure through the verified pair.
///
/// A failure is counted detected when the comparator flags it and the
/// labeling separates the two classes; failures between merged classes are
/// structurally undetectable and never count as detected, whatever the
/// checker happened to say.
pub fn replay_campaign(
    pair: &DyvePair,
    data: &Dataset,
    outcome: &CampaignOutcome,
    impact: &SquareMatrix,
) -> Result<ReplayReport> {
    let n = pair.task.num_classes();
    let persistence = outcome.config.persistence;
    let mut checker_labels: Vec<Option<usize>> = vec![None; data.len()];
    let mut total = CountMatrix::zeros(n);
    let mut detected = CountMatrix::zeros(n);
    let mut recovered = 0u64;
    let mut uncorrected = 0u64;
    let mut live = pair.task.clone();
    for record in &outcome.failures {
        let (i, j) = (record.clean_label, record.faulty_label);
        total.increment(i, j);
        let input = data.input(record.input_index);
        let checker_label = match checker_labels[record.input_index] {
            Some(l) => l,
            None => {
                let l = pair.checker.infer_label(input)?;
                checker_labels[record.input_index] = Some(l);
                l
            }
        };
        let flagged = pair.protected.get(j).copied().unwrap_or(true)
            && pair.labeling.checker_class_of(j) != checker_label;
        let separable = !pair.labeling.merges(i, j);
        if flagged && separable {
            detected.increment(i, j);
        }
        // Recovery accounting mirrors the verified pass on the faulted model.
        let final_label = if flagged {
            match persistence {
                // the transient fault is gone, so the clean model re-runs
                Persistence::Transient => pair.task.infer_label(input)?,
                Persistence::Persistent => {
                    let weight_targets: Vec<_> = record
                        .targets
                        .iter()
                        .filter_map(|t| match t {
                            FaultTarget::Weight(b) => Some(*b),
                            FaultTarget::Activation(_) => None,
                        })
                        .collect();
                    crate::fault::toggle(&mut live, &weight_targets)?;
                    let l = live.infer_label(input)?;
                    crate::fault::toggle(&mut live, &weight_targets)?;
                    l
                }
            }
        } else {
            j
        };
        if final_label == i {
            recovered += 1;
        } else {
            uncorrected += 1;
        }
    }
    let consistency = pair.consistency_on(data)?;
    let (storage_overhead, compute_overhead) = pair.overheads(consistency)?;
    let false_positive_rate = measured_system_fpr(pair, data)?;
    let (coverage, weighted_coverage) = compute_coverage(&total, &detected, impact)?;
    let metrics = MetricsReport {
        storage_overhead,
        compute_overhead,
        coverage,
        weighted_coverage,
        false_positive_rate,
        false_negative_rate: coverage.map(|c| 1.0 - c),
        consistency,
    };
    Ok(ReplayReport { metrics, total_failures: total, detected_failures: detected, recovered, uncorrected })
}

/// Fraction of fault-free inputs whose verified output differs from the task
/// label. Re-computation reproduces the deterministic task label, so this
/// measures an identity that must hold at zero.
fn measured_system_fpr(pair: &DyvePair, data: &Dataset) -> Result<f64> {
    let mut mismatches = 0usize;
    for idx in 0..data.len() {
        let task_label = pair.task.infer_label(data.input(idx))?;
        let verdict = pair.verify(data.input(idx))?;
        if verdict.label != task_label {
            mismatches += 1;
        }
    }
    Ok(mismatches as f64 / data.len() as f64)
}

/// Replay every recorded failure through the threshold detector.
///
/// The detector only flags; it corrects nothing, so its false-positive rate
/// is the clean flag rate and its compute overhead is reported as the same
/// flagged fraction (the share of traffic a deployment would re-examine).
pub fn replay_campaign_threshold(
    detector: &ThresholdChecker,
    task: &QuantModel,
    data: &Dataset,
    outcome: &CampaignOutcome,
    impact: &SquareMatrix,
) -> Result<ReplayReport> {
    let n = task.num_classes();
    let mut total = CountMatrix::zeros(n);
    let mut detected = CountMatrix::zeros(n);
    let mut live = task.clone();
    for record in &outcome.failures {
        let (i, j) = (record.clean_label, record.faulty_label);
        total.increment(i, j);
        let weight_targets: Vec<_> = record
            .targets
            .iter()
            .filter_map(|t| match t {
                FaultTarget::Weight(b) => Some(*b),
                FaultTarget::Activation(_) => None,
            })
            .collect();
        let activation_targets: Vec<_> = record
            .targets
            .iter()
            .filter_map(|t| match t {
                FaultTarget::Activation(a) => Some(*a),
                FaultTarget::Weight(_) => None,
            })
            .collect();
        crate::fault::toggle(&mut live, &weight_targets)?;
        let flagged =
            detector.flags_with_faults(&live, data.input(record.input_index), &activation_targets)?;
        crate::fault::toggle(&mut live, &weight_targets)?;
        if flagged {
            detected.increment(i, j);
        }
    }
    let mut clean_flags = 0usize;
    for idx in 0..data.len() {
        if detector.flags(task, data.input(idx))? {
            clean_flags += 1;
        }
    }
    let clean_flag_rate = clean_flags as f64 / data.len() as f64;
    let (coverage, weighted_coverage) = compute_coverage(&total, &detected, impact)?;
    let metrics = MetricsReport {
        storage_overhead: 0.0,
        compute_overhead: clean_flag_rate,
        coverage,
        weighted_coverage,
        false_positive_rate: clean_flag_rate,
        false_negative_rate: coverage.map(|c| 1.0 - c),
        consistency: 1.0 - clean_flag_rate,
    };
    Ok(ReplayReport {
        metrics,
        total_failures: total,
        detected_failures: detected,
        recovered: 0,
        uncorrected: 0,
    })
}
