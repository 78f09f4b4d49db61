//! The four pipeline subcommands: train-task, explore, attack, report.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use dyve_core::data::Dataset;
use dyve_core::fault::{
    run_bfa, run_random_campaign, toggle, BfaConfig, BfaOutcome, BitTarget, CampaignConfig,
    CampaignOutcome, FailureRecord, FaultTarget, Persistence, RiskProbMatrix, TargetScope,
};
use dyve_core::matrix::{CountMatrix, SquareMatrix};
use dyve_core::pipeline::{candidates_to_csv, explore, sweep_rows_to_csv, FitArtifact};
use dyve_core::qnn::QuantModel;
use dyve_core::rng;
use dyve_core::runtime::{
    render_comparison, replay_campaign, replay_campaign_threshold, ClusterLabeling, DyvePair,
    MetricsReport, ThresholdChecker,
};
use dyve_core::task::{ImpactMatrix, ParetoChoice};
use dyve_core::train::{accuracy, train_cross_entropy, RealModel, TrainConfig};

use crate::config::PipelineConfig;
use crate::ledger::{run_stage, StageScope};

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TaskMetrics {
    holdout_accuracy: f64,
    train_accuracy: f64,
    final_loss: f64,
    epochs: usize,
    flops: u64,
    storage_bytes: u64,
    num_classes: usize,
}

/// Deployment metadata saved next to the two models in the bundle.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct BundleMeta {
    labeling: ClusterLabeling,
    protected: Vec<bool>,
    selected_k: usize,
    checker_alpha: f64,
}

pub fn cmd_train_task(config: &PipelineConfig) -> Result<()> {
    let seed = rng::derive(config.master_seed, "task-train");
    run_stage(&config.output_dir, config.master_seed, "train-task", seed, |scope| {
        let (train, holdout) = config.load_dataset()?;
        let arch = config.task_architecture(train.dim, train.num_classes)?;
        let mut rng = rng::stream(config.master_seed, "task-train");
        let mut real = RealModel::init(&arch, &mut rng)?;
        let cfg = TrainConfig {
            epochs: config.task_model.epochs,
            learning_rate: config.task_model.learning_rate,
            batch_size: config.task_model.batch_size,
            ..TrainConfig::default()
        };
        let stats = if cfg.epochs > 0 {
            train_cross_entropy(&mut real, &train, &cfg, &mut rng)?
        } else {
            dyve_core::train::TrainStats { epochs_run: 0, final_loss: f64::NAN }
        };
        let task = real.quantize(1.0)?;
        let metrics = TaskMetrics {
            holdout_accuracy: accuracy(&task, &holdout)?,
            train_accuracy: accuracy(&task, &train)?,
            final_loss: stats.final_loss,
            epochs: stats.epochs_run,
            flops: task.flops(),
            storage_bytes: task.storage_bytes(),
            num_classes: task.num_classes(),
        };
        scope.write("task/model.qnn", &task.to_bytes())?;
        scope.write("task/metrics.json", serde_json::to_string_pretty(&metrics)?.as_bytes())?;
        println!(
            "trained task model: {} classes, held-out accuracy {:.2}%, {} FLOPs, {} bytes",
            metrics.num_classes,
            metrics.holdout_accuracy * 100.0,
            metrics.flops,
            metrics.storage_bytes
        );
        Ok(())
    })
}

pub fn cmd_explore(config: &PipelineConfig) -> Result<()> {
    let seed = rng::derive(config.master_seed, "explore");
    run_stage(&config.output_dir, config.master_seed, "explore", seed, |scope| {
        explore_body(config, scope)
    })
}

fn explore_body(config: &PipelineConfig, scope: &mut StageScope) -> Result<()> {
    let task_path = config.task_model_path();
    let task = QuantModel::load(&task_path)
        .with_context(|| format!("cannot load task model {} (run train-task first)", task_path.display()))?;
    let (train, holdout) = config.load_dataset()?;
    let params = config.explore_params()?;
    let out = explore(&task, &train, &holdout, &params)?;

    scope.write("explore/sweep.csv", sweep_rows_to_csv(&out.sweep).as_bytes())?;
    scope.write("explore/fit.json", serde_json::to_string_pretty(&out.fit)?.as_bytes())?;
    scope.write(
        "explore/risk_probability.csv",
        out.campaign.risk.probs.to_triplet_csv("probability").as_bytes(),
    )?;
    scope.write(
        "explore/risk_summary.json",
        serde_json::to_string_pretty(&serde_json::json!({
            "runs": out.campaign.risk.run_count,
            "failures": out.campaign.risk.failure_count,
        }))?
        .as_bytes(),
    )?;
    scope.write("explore/failure_log.csv", out.campaign.failures_to_csv().as_bytes())?;
    scope.write("explore/impact.csv", out.impact.matrix.to_triplet_csv("impact").as_bytes())?;
    scope.write(
        "explore/inconsistency.csv",
        out.inconsistency.matrix.to_triplet_csv("frequency").as_bytes(),
    )?;
    scope.write("explore/risk_matrix.csv", out.risk_matrix.matrix.to_triplet_csv("risk").as_bytes())?;
    scope.write("explore/precision.json", serde_json::to_string_pretty(&out.precision)?.as_bytes())?;
    scope.write("explore/dendrogram.json", out.clustering.to_json()?.as_bytes())?;
    scope.write("explore/candidates.csv", candidates_to_csv(&out.candidate_reports).as_bytes())?;
    scope.write("explore/selection.json", serde_json::to_string_pretty(&out.selection)?.as_bytes())?;

    let meta = BundleMeta {
        labeling: out.chosen_labeling.clone(),
        protected: out.impact.protected_mask(),
        selected_k: out.selection.selected_k,
        checker_alpha: out.chosen_checker.alpha(),
    };
    scope.write("explore/bundle/task.qnn", &task.to_bytes())?;
    scope.write("explore/bundle/checker.qnn", &out.chosen_checker.to_bytes())?;
    scope.write("explore/bundle/labeling.json", serde_json::to_string_pretty(&meta)?.as_bytes())?;
    scope.write(
        "explore/bundle/metrics.json",
        out.chosen_report.to_json()?.as_bytes(),
    )?;

    println!(
        "fit: consistency(alpha) = -{:.6}/alpha + {:.6}, optimal alpha {:.4}{}",
        out.fit.fit.a,
        out.fit.fit.b,
        out.fit.optimum.alpha,
        if out.fit.optimum.clamped { " (clamped)" } else { "" }
    );
    println!(
        "campaign: {} failures over {} runs",
        out.campaign.risk.failure_count, out.campaign.risk.run_count
    );
    println!(
        "selected design: K = {} (of {}), overhead {:.2}%, weighted coverage {}",
        out.selection.selected_k,
        task.num_classes(),
        out.chosen_report.compute_overhead * 100.0,
        out.chosen_report
            .weighted_coverage
            .map_or("-".into(), |w| format!("{:.2}%", w * 100.0))
    );
    Ok(())
}

pub fn cmd_attack(config: &PipelineConfig) -> Result<()> {
    let seed = rng::derive(config.master_seed, "attack-random");
    run_stage(&config.output_dir, config.master_seed, "attack", seed, |scope| {
        attack_body(config, scope)
    })
}

fn attack_body(config: &PipelineConfig, scope: &mut StageScope) -> Result<()> {
    let bundle = config.bundle_dir();
    let task = QuantModel::load(bundle.join("task.qnn"))
        .with_context(|| "cannot load bundle (run explore first)".to_string())?;
    let checker = QuantModel::load(bundle.join("checker.qnn"))?;
    let meta: BundleMeta =
        serde_json::from_str(&std::fs::read_to_string(bundle.join("labeling.json"))?)?;
    let impact_text =
        std::fs::read_to_string(config.output_dir.join("explore").join("impact.csv"))?;
    let impact = ImpactMatrix::custom(SquareMatrix::from_triplet_csv(&impact_text)?)?;
    let (train, holdout) = config.load_dataset()?;
    let pair = DyvePair::new(task.clone(), checker, meta.labeling.clone(), Some(meta.protected))?;

    // random fault attack
    let random_cfg = CampaignConfig {
        n_flips_per_run: config.campaign.flips_per_run,
        n_runs: config.attack.runs,
        seed: rng::derive(config.master_seed, "attack-random"),
        scope: match config.campaign.scope {
            crate::config::ScopeKind::Weights => TargetScope::Weights,
            crate::config::ScopeKind::WeightsAndActivations => {
                TargetScope::WeightsAndActivations
            }
        },
        persistence: Persistence::Transient,
    };
    let random_campaign = run_random_campaign(&task, &holdout, &random_cfg)?;
    let dyve_random = replay_campaign(&pair, &holdout, &random_campaign, &impact.matrix)?;
    let detector = ThresholdChecker::calibrate(&task, &train)?;
    let thresh_random =
        replay_campaign_threshold(&detector, &task, &holdout, &random_campaign, &impact.matrix)?;

    // progressive bit-search attack
    let bfa_cfg = BfaConfig {
        max_flips: config.attack.bfa_max_flips,
        candidates_per_step: config.attack.bfa_candidates_per_step,
        batch_size: config.attack.bfa_batch_size,
        seed: rng::derive(config.master_seed, "attack-bfa"),
    };
    let bfa = run_bfa(&task, &holdout, &bfa_cfg)?;
    let bfa_campaign = bfa_as_campaign(&task, &holdout, &bfa, &bfa_cfg)?;
    let dyve_bfa = replay_campaign(&pair, &holdout, &bfa_campaign, &impact.matrix)?;
    let thresh_bfa =
        replay_campaign_threshold(&detector, &task, &holdout, &bfa_campaign, &impact.matrix)?;

    let rows = vec![
        ("random".to_string(), "threshold".to_string(), thresh_random.metrics.clone()),
        ("random".to_string(), "dyve".to_string(), dyve_random.metrics.clone()),
        ("bfa".to_string(), "threshold".to_string(), thresh_bfa.metrics.clone()),
        ("bfa".to_string(), "dyve".to_string(), dyve_bfa.metrics.clone()),
    ];
    let table = render_comparison(&rows);

    scope.write("attack/random_dyve.json", dyve_random.metrics.to_json()?.as_bytes())?;
    scope.write("attack/random_threshold.json", thresh_random.metrics.to_json()?.as_bytes())?;
    scope.write("attack/bfa_dyve.json", dyve_bfa.metrics.to_json()?.as_bytes())?;
    scope.write("attack/bfa_threshold.json", thresh_bfa.metrics.to_json()?.as_bytes())?;
    scope.write("attack/bfa_trace.csv", bfa_trace_to_csv(&bfa).as_bytes())?;
    scope.write("attack/comparison.csv", comparison_to_csv(&rows).as_bytes())?;
    scope.write("attack/comparison.txt", table.as_bytes())?;

    println!(
        "random campaign: {} failures / {} runs; bit-search attack: {} flips (batch accuracy {:.3} -> {:.3})",
        random_campaign.risk.failure_count,
        random_campaign.risk.run_count,
        bfa.flips.len(),
        bfa.accuracy_trace.first().copied().unwrap_or(f64::NAN),
        bfa.accuracy_trace.last().copied().unwrap_or(f64::NAN),
    );
    print!("{table}");
    Ok(())
}

/// Evaluate the committed flip set over the held-out data and repackage the
/// label changes as a campaign, so both detectors replay it the same way.
fn bfa_as_campaign(
    task: &QuantModel,
    holdout: &Dataset,
    bfa: &BfaOutcome,
    cfg: &BfaConfig,
) -> Result<CampaignOutcome> {
    let mut attacked = task.clone();
    toggle(&mut attacked, &bfa.flips)?;
    let n = task.num_classes();
    let mut counts = CountMatrix::zeros(n);
    let mut failures = Vec::new();
    let targets: Vec<FaultTarget> = bfa.flips.iter().map(|&b| FaultTarget::Weight(b)).collect();
    for idx in 0..holdout.len() {
        let clean = task.infer_label(holdout.input(idx))?;
        let faulty = attacked.infer_label(holdout.input(idx))?;
        if faulty != clean {
            counts.increment(clean, faulty);
            failures.push(FailureRecord {
                run: idx as u64,
                input_index: idx,
                targets: targets.clone(),
                clean_label: clean,
                faulty_label: faulty,
            });
        }
    }
    let config = CampaignConfig {
        n_flips_per_run: bfa.flips.len().max(1),
        n_runs: holdout.len() as u64,
        seed: cfg.seed,
        scope: TargetScope::Weights,
        persistence: Persistence::Persistent,
    };
    Ok(CampaignOutcome {
        config,
        risk: RiskProbMatrix::from_counts(&counts, holdout.len() as u64),
        counts,
        failures,
    })
}

fn bfa_trace_to_csv(bfa: &BfaOutcome) -> String {
    let mut out = String::from("step,layer,index,bit,batch_accuracy\n");
    out.push_str(&format!("0,,,,{}\n", bfa.accuracy_trace[0]));
    for (i, flip) in bfa.flips.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            flip.layer,
            flip.index,
            flip.bit,
            bfa.accuracy_trace[i + 1]
        ));
    }
    out
}

pub fn bfa_trace_from_csv(text: &str) -> Result<(Vec<BitTarget>, Vec<f64>)> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "step,layer,index,bit,batch_accuracy" {
        bail!("bad trace header: {header}");
    }
    let mut flips = Vec::new();
    let mut trace = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            bail!("bad trace row: {line}");
        }
        trace.push(fields[4].parse::<f64>().with_context(|| format!("bad accuracy in {line}"))?);
        if !fields[1].is_empty() {
            flips.push(BitTarget {
                layer: fields[1].parse()?,
                index: fields[2].parse()?,
                bit: fields[3].parse()?,
            });
        }
    }
    Ok((flips, trace))
}

fn comparison_to_csv(rows: &[(String, String, MetricsReport)]) -> String {
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let mut out = String::from("attack,detector,fpr,fnr,compute_overhead,weighted_coverage\n");
    for (attack, detector, r) in rows {
        out.push_str(&format!(
            "{attack},{detector},{},{},{},{}\n",
            r.false_positive_rate,
            fmt(r.false_negative_rate),
            r.compute_overhead,
            fmt(r.weighted_coverage),
        ));
    }
    out
}

pub fn comparison_rows_from_csv(text: &str) -> Result<Vec<(String, String, f64, f64)>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "attack,detector,fpr,fnr,compute_overhead,weighted_coverage" {
        bail!("bad comparison header: {header}");
    }
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            bail!("bad comparison row: {line}");
        }
        let parse_opt = |s: &str| -> f64 { s.parse().unwrap_or(f64::NAN) };
        rows.push((
            fields[0].to_string(),
            fields[1].to_string(),
            fields[2].parse().with_context(|| format!("bad fpr in {line}"))?,
            parse_opt(fields[5]),
        ));
    }
    Ok(rows)
}

pub fn cmd_report(config: &PipelineConfig) -> Result<()> {
    let dir = &config.output_dir;
    let mut printed = false;

    if let Ok(text) = std::fs::read_to_string(dir.join("task/metrics.json")) {
        let metrics: TaskMetrics = serde_json::from_str(&text)?;
        println!(
            "task model: {} classes, held-out accuracy {:.2}%, {} FLOPs, {} parameter bytes",
            metrics.num_classes,
            metrics.holdout_accuracy * 100.0,
            metrics.flops,
            metrics.storage_bytes
        );
        printed = true;
    }
    if let Ok(text) = std::fs::read_to_string(dir.join("explore/sweep.csv")) {
        let rows = dyve_core::pipeline::sweep_rows_from_csv(&text)
            .map_err(|e| anyhow!("sweep.csv: {e}"))?;
        println!("\nmultiplier sweep (alpha, consistency, flop ratio, overhead):");
        for r in rows {
            println!(
                "  {:>5.2}  {:>7.4}  {:>7.4}  {:>7.4}",
                r.alpha, r.consistency, r.flops_ratio, r.measured_overhead
            );
        }
        printed = true;
    }
    if let Ok(text) = std::fs::read_to_string(dir.join("explore/fit.json")) {
        let fit: FitArtifact = serde_json::from_str(&text)?;
        println!(
            "fitted curve: consistency(alpha) = -{:.6}/alpha + {:.6}; optimal alpha {:.4}",
            fit.fit.a, fit.fit.b, fit.optimum.alpha
        );
        printed = true;
    }
    if let Ok(text) = std::fs::read_to_string(dir.join("explore/selection.json")) {
        let sel: ParetoChoice = serde_json::from_str(&text)?;
        println!(
            "selected design: K = {} (frontier {:?}, coverage floor {:.4})",
            sel.selected_k, sel.frontier, sel.coverage_floor
        );
        printed = true;
    }
    if let Ok(text) = std::fs::read_to_string(dir.join("explore/bundle/metrics.json")) {
        let m = MetricsReport::from_json(&text).map_err(|e| anyhow!("bundle metrics: {e}"))?;
        println!(
            "bundle: storage overhead {:.2}%, compute overhead {:.2}%, consistency {:.2}%",
            m.storage_overhead * 100.0,
            m.compute_overhead * 100.0,
            m.consistency * 100.0
        );
        printed = true;
    }
    if let Ok(text) = std::fs::read_to_string(dir.join("attack/bfa_trace.csv")) {
        let (flips, trace) = bfa_trace_from_csv(&text).map_err(|e| anyhow!("bfa_trace.csv: {e}"))?;
        println!(
            "bit-search attack: {} committed flips, batch accuracy {:.3} -> {:.3}",
            flips.len(),
            trace.first().copied().unwrap_or(f64::NAN),
            trace.last().copied().unwrap_or(f64::NAN)
        );
        printed = true;
    }
    if let Ok(text) = std::fs::read_to_string(dir.join("attack/comparison.csv")) {
        comparison_rows_from_csv(&text).map_err(|e| anyhow!("comparison.csv: {e}"))?;
        let table = std::fs::read_to_string(dir.join("attack/comparison.txt"))?;
        println!("\n{table}");
        printed = true;
    }
    if !printed {
        bail!("no artifacts under {} (run train-task / explore / attack first)", dir.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfa_trace_csv_round_trips() {
        let bfa = BfaOutcome {
            flips: vec![
                BitTarget { layer: 0, index: 7, bit: 7 },
                BitTarget { layer: 2, index: 1, bit: 0 },
            ],
            accuracy_trace: vec![0.97, 0.8, 0.5],
            stop: dyve_core::fault::BfaStop::MaxFlips,
        };
        let text = bfa_trace_to_csv(&bfa);
        let (flips, trace) = bfa_trace_from_csv(&text).unwrap();
        assert_eq!(flips, bfa.flips);
        assert_eq!(trace, bfa.accuracy_trace);
    }

    #[test]
    fn comparison_csv_round_trips() {
        let report = MetricsReport {
            storage_overhead: 0.01,
            compute_overhead: 0.07,
            coverage: Some(0.9),
            weighted_coverage: Some(0.92),
            false_positive_rate: 0.0,
            false_negative_rate: Some(0.1),
            consistency: 0.95,
        };
        let rows = vec![("random".to_string(), "dyve".to_string(), report)];
        let text = comparison_to_csv(&rows);
        let parsed = comparison_rows_from_csv(&text).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].0, "random");
        assert_eq!(parsed[0].2, 0.0);
        assert!((parsed[0].3 - 0.92).abs() < 1e-12);
    }
}
