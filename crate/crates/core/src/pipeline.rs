//! End-to-end two-stage design exploration: a width-multiplier sweep with
//! distilled candidates, the consistency-curve fit and its closed-form
//! optimum, a fault campaign building the risk matrices, agglomerative task
//! simplification, per-candidate retraining, and Pareto selection.

use serde::{Deserialize, Serialize};

use crate::arch::{
    fit_consistency, optimal_alpha, sweep_candidates, train_checker, ConsistencyFit,
    ConsistencySample, KdConfig, OptimalAlpha,
};
use crate::data::Dataset;
use crate::error::Result;
use crate::fault::{precision_vector, run_random_campaign, CampaignConfig, CampaignOutcome};
use crate::qnn::QuantModel;
use crate::rng;
use crate::runtime::{computational_overhead, ClusterLabeling, MetricsReport};
use crate::task::{
    agglomerative_clustering, build_inconsistency_matrix, build_risk_matrix, evaluate_candidate,
    evaluate_fixed_checker, select_pareto, ClusteringOutcome, ImpactMatrix, InconsistencyMatrix,
    ParetoChoice, RiskMatrix,
};

/// How the impact matrix is built during exploration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImpactChoice {
    Uniform,
    /// Two-level impact from the task model's per-class precision.
    NonUniform,
    /// Caller-supplied impacts; classes with all-zero rows go unprotected.
    Custom(crate::matrix::SquareMatrix),
}

/// Everything the exploration stages need beyond the models and data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExploreParams {
    pub alpha_sweep: Vec<f64>,
    pub kd: KdConfig,
    pub campaign: CampaignConfig,
    pub impact: ImpactChoice,
    /// Tolerated relative weighted-coverage degradation during selection.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for ExploreParams {
    fn default() -> Self {
        ExploreParams {
            alpha_sweep: crate::arch::DEFAULT_ALPHA_SWEEP.to_vec(),
            kd: KdConfig::default(),
            campaign: CampaignConfig::default(),
            impact: ImpactChoice::NonUniform,
            epsilon: 0.02,
            seed: 0,
        }
    }
}

/// One row of the sweep table, mirroring the consistency/overhead curves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub consistency: f64,
    pub flops_ratio: f64,
    /// Overhead at the measured consistency.
    pub measured_overhead: f64,
}

pub fn sweep_rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha,consistency,flops_ratio,measured_overhead\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.alpha, r.consistency, r.flops_ratio, r.measured_overhead
        ));
    }
    out
}

pub fn sweep_rows_from_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "alpha,consistency,flops_ratio,measured_overhead" {
        return Err(crate::error::DyveError::ArtifactFormat(format!(
            "bad sweep header: {header}"
        )));
    }
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(crate::error::DyveError::ArtifactFormat(format!(
                "bad sweep row: {line}"
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| {
                crate::error::DyveError::ArtifactFormat(format!("bad number in: {line}"))
            })
        };
        rows.push(SweepRow {
            alpha: num(fields[0])?,
            consistency: num(fields[1])?,
            flops_ratio: num(fields[2])?,
            measured_overhead: num(fields[3])?,
        });
    }
    Ok(rows)
}

/// Candidate summary rows for the simplified-task sweep.
pub fn candidates_to_csv(rows: &[(usize, MetricsReport)]) -> String {
    let mut out = String::from("k,compute_overhead,weighted_coverage,coverage,consistency,fnr\n");
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for (k, r) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            k,
            r.compute_overhead,
            fmt(r.weighted_coverage),
            fmt(r.coverage),
            r.consistency,
            fmt(r.false_negative_rate),
        ));
    }
    out
}

/// Candidate rows read back: (K, compute overhead, weighted coverage,
/// coverage, consistency).
pub type CandidateRow = (usize, f64, Option<f64>, Option<f64>, f64);

pub fn candidates_from_csv(text: &str) -> Result<Vec<CandidateRow>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "k,compute_overhead,weighted_coverage,coverage,consistency,fnr" {
        return Err(crate::error::DyveError::ArtifactFormat(format!(
            "bad candidates header: {header}"
        )));
    }
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(crate::error::DyveError::ArtifactFormat(format!(
                "bad candidates row: {line}"
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| {
                crate::error::DyveError::ArtifactFormat(format!("bad number in: {line}"))
            })
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() { Ok(None) } else { Ok(Some(num(s)?)) }
        };
        rows.push((
            fields[0].parse().map_err(|_| {
                crate::error::DyveError::ArtifactFormat(format!("bad k in: {line}"))
            })?,
            num(fields[1])?,
            opt(fields[2])?,
            opt(fields[3])?,
            num(fields[4])?,
        ));
    }
    Ok(rows)
}

/// The fitted curve and chosen multiplier, as one JSON-friendly artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub fit: ConsistencyFit,
    pub optimum: OptimalAlpha,
    pub valid_range: (f64, f64),
}

/// Full output of the two-stage exploration.
#[derive(Clone, Debug)]
pub struct ExploreOutcome {
    pub sweep: Vec<SweepRow>,
    pub samples: Vec<ConsistencySample>,
    pub fit: FitArtifact,
    /// Checker trained at the chosen multiplier on the original task.
    pub stage1_checker: QuantModel,
    pub campaign: CampaignOutcome,
    pub precision: Vec<f64>,
    pub impact: ImpactMatrix,
    pub inconsistency: InconsistencyMatrix,
    pub risk_matrix: RiskMatrix,
    pub clustering: ClusteringOutcome,
    /// (K, report) per evaluated candidate, identity first.
    pub candidate_reports: Vec<(usize, MetricsReport)>,
    pub selection: ParetoChoice,
    /// The selected design, ready to deploy.
    pub chosen_checker: QuantModel,
    pub chosen_labeling: ClusterLabeling,
    pub chosen_report: MetricsReport,
}

/// Run both exploration stages against a fixed task model.
pub fn explore(
    task: &QuantModel,
    train_data: &Dataset,
    holdout: &Dataset,
    params: &ExploreParams,
) -> Result<ExploreOutcome> {
    // Stage 1: candidate pool, curve fit, checker at the optimal multiplier.
    let pool = sweep_candidates(
        task,
        &params.alpha_sweep,
        &params.kd,
        train_data,
        holdout,
        rng::derive(params.seed, "alpha-sweep"),
    )?;
    let samples: Vec<ConsistencySample> = pool.iter().map(|(_, s)| *s).collect();
    let sweep: Vec<SweepRow> = samples
        .iter()
        .map(|s| {
            Ok(SweepRow {
                alpha: s.alpha,
                consistency: s.consistency,
                flops_ratio: s.flops_ratio,
                measured_overhead: computational_overhead(s.flops_ratio, s.consistency)?,
            })
        })
        .collect::<Result<_>>()?;
    let fit = fit_consistency(&samples)?;
    let optimum = optimal_alpha(&fit);
    let (stage1_checker, _) = train_checker(
        task,
        optimum.alpha,
        &params.kd,
        train_data,
        holdout,
        rng::derive(params.seed, "stage1-checker"),
    )?;

    // Risk statistics from the fault campaign and the impact assignment.
    let campaign = run_random_campaign(task, holdout, &params.campaign)?;
    let precision = precision_vector(task, holdout)?;
    let impact = match &params.impact {
        ImpactChoice::Uniform => ImpactMatrix::uniform(task.num_classes()),
        ImpactChoice::NonUniform => ImpactMatrix::non_uniform(&precision),
        ImpactChoice::Custom(matrix) => ImpactMatrix::custom(matrix.clone())?,
    };
    let inconsistency = build_inconsistency_matrix(task, &stage1_checker, holdout)?;
    let risk_matrix = build_risk_matrix(&campaign.risk, &impact)?;

    // Stage 2: cluster, retrain per level, select.
    let n = task.num_classes();
    let clustering = agglomerative_clustering(&risk_matrix, &inconsistency, n)?;
    let identity = ClusterLabeling::identity(n);
    let baseline = evaluate_fixed_checker(
        task,
        stage1_checker.clone(),
        &identity,
        holdout,
        &campaign,
        &impact,
    )?;
    let checker_arch = stage1_checker.arch().clone();
    let mut evaluations = vec![baseline];
    for level in &clustering.levels {
        evaluations.push(evaluate_candidate(
            task,
            &checker_arch,
            optimum.alpha,
            &level.labeling,
            &params.kd,
            train_data,
            holdout,
            &campaign,
            &impact,
            rng::derive(params.seed, &format!("candidate-k{}", level.k)),
        )?);
    }
    let candidate_reports: Vec<(usize, MetricsReport)> =
        evaluations.iter().map(|e| (e.k, e.report().clone())).collect();
    let selection = select_pareto(&candidate_reports, params.epsilon)?;
    let chosen = &evaluations[selection.selected_index];
    Ok(ExploreOutcome {
        sweep,
        samples,
        fit: FitArtifact { fit, optimum, valid_range: fit.valid_range() },
        stage1_checker,
        campaign,
        precision,
        impact,
        inconsistency,
        risk_matrix,
        clustering,
        candidate_reports,
        selection,
        chosen_checker: chosen.checker.clone(),
        chosen_labeling: chosen.labeling.clone(),
        chosen_report: chosen.report().clone(),
    })
}
