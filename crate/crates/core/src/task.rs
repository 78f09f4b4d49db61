//! Task exploration: combine the risk probability matrix with an impact
//! matrix, estimate the fault-free inconsistency matrix, agglomeratively
//! cluster classes into simplified tasks, retrain and evaluate a checker per
//! candidate, and pick the design with the best risk/overhead trade-off.

use serde::{Deserialize, Serialize};

use crate::arch::{train_checker_model, KdConfig};
use crate::data::Dataset;
use crate::error::{DyveError, Result};
use crate::fault::{CampaignOutcome, RiskProbMatrix};
use crate::matrix::SquareMatrix;
use crate::qnn::{Architecture, QuantModel};
use crate::runtime::{
    inconsistency_counts, replay_campaign, ClusterLabeling, DyvePair, MetricsReport, ReplayReport,
};

/// Application-assigned severity of misclassifying class `i` as class `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactMatrix {
    pub matrix: SquareMatrix,
    pub mode: ImpactMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImpactMode {
    Uniform,
    NonUniform,
    Custom,
}

impl ImpactMatrix {
    /// Every misclassification costs the same.
    pub fn uniform(n: usize) -> ImpactMatrix {
        ImpactMatrix { matrix: SquareMatrix::constant_off_diagonal(n, 1.0), mode: ImpactMode::Uniform }
    }

    /// Two-level impact keyed on the source (true) class: rows of the lowest
    /// quarter of classes by precision (at least one) get impact 1, the rest
    /// impact 100. Low-precision classes are not trustworthy to begin with,
    /// so failures out of them carry little extra risk.
    pub fn non_uniform(precision: &[f64]) -> ImpactMatrix {
        let n = precision.len();
        let low_count = (n / 4).max(1);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| precision[a].total_cmp(&precision[b]).then(a.cmp(&b)));
        let mut low = vec![false; n];
        for &c in order.iter().take(low_count) {
            low[c] = true;
        }
        let mut m = SquareMatrix::zeros(n);
        for (i, &row_is_low) in low.iter().enumerate() {
            for j in 0..n {
                if i != j {
                    m.set(i, j, if row_is_low { 1.0 } else { 100.0 });
                }
            }
        }
        ImpactMatrix { matrix: m, mode: ImpactMode::NonUniform }
    }

    /// Caller-provided impacts; entries must be non-negative and the diagonal
    /// is forced to zero.
    pub fn custom(mut matrix: SquareMatrix) -> Result<ImpactMatrix> {
        if matrix.values().iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(DyveError::InvalidConfig(
                "impact entries must be non-negative and finite".into(),
            ));
        }
        matrix.zero_diagonal();
        Ok(ImpactMatrix { matrix, mode: ImpactMode::Custom })
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    /// Classes whose entire row is zero carry no risk and need no checking.
    pub fn protected_mask(&self) -> Vec<bool> {
        let n = self.matrix.n();
        (0..n)
            .map(|i| (0..n).any(|j| i != j && self.matrix.get(i, j) > 0.0))
            .collect()
    }
}

/// Fault-free joint disagreement frequencies between task and checker labels
/// over the original classes; cell `(i, j)` estimates the probability that
/// the task says `i` while the checker says `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InconsistencyMatrix {
    pub matrix: SquareMatrix,
    /// Total disagreement mass, `1 - P_consistent` on the estimation split.
    pub inconsistent_fraction: f64,
}

/// Estimate the inconsistency matrix from fault-free runs of both models on
/// held-out data. The checker must still solve the original task.
pub fn build_inconsistency_matrix(
    task: &QuantModel,
    checker: &QuantModel,
    data: &Dataset,
) -> Result<InconsistencyMatrix> {
    let (matrix, inconsistent_fraction) = inconsistency_counts(task, checker, data)?;
    Ok(InconsistencyMatrix { matrix, inconsistent_fraction })
}

/// The clustering objective: risk probability weighted by impact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskMatrix {
    pub matrix: SquareMatrix,
}

/// Elementwise product of the risk probabilities and the impact matrix.
pub fn build_risk_matrix(risk: &RiskProbMatrix, impact: &ImpactMatrix) -> Result<RiskMatrix> {
    Ok(RiskMatrix { matrix: risk.probs.hadamard(&impact.matrix)? })
}

/// One clustering level: the labeling after a merge plus the merge's cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterLevel {
    pub k: usize,
    pub labeling: ClusterLabeling,
    /// Original classes in the two merged clusters.
    pub merged: (Vec<usize>, Vec<usize>),
    /// Detectability mass given up by this merge.
    pub cov_loss: f64,
    /// Inconsistency mass removed by this merge.
    pub o_save: f64,
}

/// Node of the merge dendrogram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "kebab-case")]
pub enum DendroNode {
    Leaf { class: usize },
    Merge { k_after: usize, cov_loss: f64, o_save: f64, children: Vec<DendroNode> },
}

/// Full clustering output: one level per K from N-1 down to 2, plus the
/// dendrogram forest left when the process stops at two clusters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringOutcome {
    pub levels: Vec<ClusterLevel>,
    pub forest: Vec<DendroNode>,
}

impl ClusteringOutcome {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<ClusteringOutcome> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Agglomerative class clustering.
///
/// Every class starts in its own cluster. Each round merges the cluster pair
/// with the smallest coverage loss `rbar[i][j] + rbar[j][i]`; among ties the
/// pair with the largest overhead saving `c[i][j] + c[j][i]` wins, and any
/// residual tie resolves to the lexicographically smallest index pair. After
/// a merge the absorbed cluster's rows/columns fold into the survivor by
/// summation, the diagonal returns to zero, and the labeling is recorded.
/// Produces one candidate labeling per K from N-1 down to 2.
pub fn agglomerative_clustering(
    rbar: &RiskMatrix,
    inconsistency: &InconsistencyMatrix,
    n: usize,
) -> Result<ClusteringOutcome> {
    if rbar.matrix.n() != n || inconsistency.matrix.n() != n {
        return Err(DyveError::DimensionMismatch(format!(
            "risk {}x{}, inconsistency {}x{}, classes {n}",
            rbar.matrix.n(),
            rbar.matrix.n(),
            inconsistency.matrix.n(),
            inconsistency.matrix.n()
        )));
    }
    if n < 3 {
        return Err(DyveError::NothingToCluster(n));
    }
    let mut r = clone_cells(&rbar.matrix);
    let mut c = clone_cells(&inconsistency.matrix);
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|q| vec![q]).collect();
    let mut nodes: Vec<DendroNode> = (0..n).map(|q| DendroNode::Leaf { class: q }).collect();
    let mut levels = Vec::with_capacity(n - 2);
    for k in (2..n).rev() {
        let (i, j, cov_loss, o_save) = select_merge(&r, &c);
        let merged = (clusters[i].clone(), clusters[j].clone());
        let absorbed = clusters.remove(j);
        clusters[i].extend(absorbed);
        let right = nodes.remove(j);
        let left = std::mem::replace(&mut nodes[i], DendroNode::Leaf { class: 0 });
        nodes[i] = DendroNode::Merge { k_after: k, cov_loss, o_save, children: vec![left, right] };
        fold_into(&mut r, i, j);
        fold_into(&mut c, i, j);
        let labeling = labeling_from_clusters(&clusters, n)?;
        levels.push(ClusterLevel { k, labeling, merged, cov_loss, o_save });
    }
    Ok(ClusteringOutcome { levels, forest: nodes })
}

fn clone_cells(m: &SquareMatrix) -> Vec<Vec<f64>> {
    (0..m.n()).map(|i| (0..m.n()).map(|j| m.get(i, j)).collect()).collect()
}

/// Smallest coverage loss, then largest overhead saving, then the first pair
/// in row-major order.
fn select_merge(r: &[Vec<f64>], c: &[Vec<f64>]) -> (usize, usize, f64, f64) {
    let m = r.len();
    let mut best: Option<(usize, usize, f64, f64)> = None;
    for i in 0..m {
        for j in (i + 1)..m {
            let cov = r[i][j] + r[j][i];
            let save = c[i][j] + c[j][i];
            let replace = match best {
                None => true,
                Some((_, _, bcov, bsave)) => cov < bcov || (cov == bcov && save > bsave),
            };
            if replace {
                best = Some((i, j, cov, save));
            }
        }
    }
    let (i, j, cov, save) = best.expect("at least two clusters remain");
    (i, j, cov, save)
}

/// Sum row/column `j` into row/column `i`, delete `j`, and zero the diagonal
/// entry that now holds intra-cluster mass.
fn fold_into(m: &mut Vec<Vec<f64>>, i: usize, j: usize) {
    let row_j = m.remove(j);
    for (dst, src) in m[i].iter_mut().zip(row_j.iter()) {
        *dst += src;
    }
    for row in m.iter_mut() {
        let v = row.remove(j);
        row[i] += v;
    }
    m[i][i] = 0.0;
}

fn labeling_from_clusters(clusters: &[Vec<usize>], n: usize) -> Result<ClusterLabeling> {
    let mut assign = vec![0usize; n];
    for (idx, members) in clusters.iter().enumerate() {
        for &class in members {
            assign[class] = idx + 1;
        }
    }
    ClusterLabeling::new(assign)
}

/// A retrained-and-measured simplified-task candidate.
#[derive(Clone, Debug)]
pub struct CandidateEvaluation {
    pub k: usize,
    pub labeling: ClusterLabeling,
    pub checker: QuantModel,
    pub replay: ReplayReport,
}

impl CandidateEvaluation {
    pub fn report(&self) -> &MetricsReport {
        &self.replay.metrics
    }
}

/// Retrain the stage-1 checker architecture on the simplified K-class task
/// (teacher probabilities summed within clusters, hard labels mapped through
/// the labeling), then replay the fault campaign through the verified pair.
/// Failures that land inside a single cluster are structurally undetectable
/// and count against coverage.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_candidate(
    task: &QuantModel,
    checker_arch: &Architecture,
    alpha: f64,
    labeling: &ClusterLabeling,
    kd: &KdConfig,
    train_data: &Dataset,
    holdout: &Dataset,
    outcome: &CampaignOutcome,
    impact: &ImpactMatrix,
    seed: u64,
) -> Result<CandidateEvaluation> {
    let arch_k = checker_arch.with_classes(labeling.k())?;
    let checker = train_checker_model(
        task,
        &arch_k,
        alpha,
        if labeling.is_identity() { None } else { Some(labeling) },
        kd,
        train_data,
        seed,
    )?;
    evaluate_fixed_checker(task, checker, labeling, holdout, outcome, impact)
}

/// Measure an already-trained checker under a labeling; used both for the
/// identity baseline (no retraining) and as the tail of `evaluate_candidate`.
pub fn evaluate_fixed_checker(
    task: &QuantModel,
    checker: QuantModel,
    labeling: &ClusterLabeling,
    holdout: &Dataset,
    outcome: &CampaignOutcome,
    impact: &ImpactMatrix,
) -> Result<CandidateEvaluation> {
    let pair = DyvePair::new(
        task.clone(),
        checker,
        labeling.clone(),
        Some(impact.protected_mask()),
    )?;
    let replay = replay_campaign(&pair, holdout, outcome, &impact.matrix)?;
    Ok(CandidateEvaluation {
        k: labeling.k(),
        labeling: labeling.clone(),
        checker: pair.checker,
        replay,
    })
}

/// The Pareto selection over candidate reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoChoice {
    pub selected_k: usize,
    /// Index into the input report list.
    pub selected_index: usize,
    /// K values on the Pareto frontier (lower overhead, higher coverage).
    pub frontier: Vec<usize>,
    /// Coverage floor applied: `(1 - epsilon) * WCov(identity)`.
    pub coverage_floor: f64,
}

/// Drop dominated points (lower overhead and higher weighted coverage
/// dominate), then pick the lowest-overhead point whose weighted coverage
/// stays within `epsilon` of the identity labeling's. Ties prefer higher
/// coverage, then the larger K.
pub fn select_pareto(reports: &[(usize, MetricsReport)], epsilon: f64) -> Result<ParetoChoice> {
    if reports.is_empty() {
        return Err(DyveError::InvalidConfig("no candidate reports".into()));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(DyveError::InvalidConfig(format!("epsilon {epsilon} outside [0, 1)")));
    }
    let wcov = |r: &MetricsReport| r.weighted_coverage.unwrap_or(0.0);
    let identity = reports
        .iter()
        .max_by_key(|(k, _)| *k)
        .expect("non-empty reports");
    let coverage_floor = (1.0 - epsilon) * wcov(&identity.1);
    let dominated = |a: &MetricsReport| {
        reports.iter().any(|(_, b)| {
            let better_oc = b.compute_overhead <= a.compute_overhead;
            let better_cov = wcov(b) >= wcov(a);
            let strictly = b.compute_overhead < a.compute_overhead || wcov(b) > wcov(a);
            better_oc && better_cov && strictly
        })
    };
    let frontier: Vec<usize> = reports
        .iter()
        .enumerate()
        .filter(|(_, (_, r))| !dominated(r))
        .map(|(idx, _)| idx)
        .collect();
    let feasible: Vec<usize> = frontier
        .iter()
        .copied()
        .filter(|&idx| wcov(&reports[idx].1) >= coverage_floor - 1e-12)
        .collect();
    let pool = if feasible.is_empty() { frontier.clone() } else { feasible };
    let selected_index = pool
        .into_iter()
        .min_by(|&a, &b| {
            let (ka, ra) = &reports[a];
            let (kb, rb) = &reports[b];
            ra.compute_overhead
                .total_cmp(&rb.compute_overhead)
                .then(wcov(rb).total_cmp(&wcov(ra)))
                .then(kb.cmp(ka))
        })
        .expect("non-empty pool");
    Ok(ParetoChoice {
        selected_k: reports[selected_index].0,
        selected_index,
        frontier: frontier.iter().map(|&idx| reports[idx].0).collect(),
        coverage_floor,
    })
}
