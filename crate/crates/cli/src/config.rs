//! Pipeline configuration: one TOML file fully determines every artifact.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dyve_core::arch::KdConfig;
use dyve_core::data::{self, BlobConfig, Dataset};
use dyve_core::fault::{CampaignConfig, Persistence, TargetScope};
use dyve_core::pipeline::{ExploreParams, ImpactChoice};
use dyve_core::qnn::Architecture;
use dyve_core::rng;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Every stage derives its stream from this seed.
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub task_model: TaskModelConfig,
    #[serde(default)]
    pub kd: KdSection,
    #[serde(default)]
    pub explore: ExploreSection,
    #[serde(default)]
    pub campaign: CampaignSection,
    #[serde(default)]
    pub attack: AttackSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Gaussian blobs with one designated confusable class pair.
    Synthetic {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_samples")]
        samples_per_class: usize,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default = "default_confusable")]
        confusable: Option<[usize; 2]>,
        #[serde(default = "default_confusable_distance")]
        confusable_distance: f64,
        #[serde(default = "default_holdout")]
        holdout_fraction: f64,
    },
    /// Delimited file with a `features=<dim>,classes=<n>` schema header.
    Delimited {
        path: PathBuf,
        #[serde(default = "default_holdout")]
        holdout_fraction: f64,
    },
}

fn default_classes() -> usize {
    10
}
fn default_dim() -> usize {
    16
}
fn default_samples() -> usize {
    600
}
fn default_separation() -> f64 {
    4.5
}
fn default_confusable() -> Option<[usize; 2]> {
    Some([0, 1])
}
fn default_confusable_distance() -> f64 {
    3.0
}
fn default_holdout() -> f64 {
    1.0 / 3.0
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mlp,
    Cnn,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskModelConfig {
    pub kind: ModelKind,
    /// Hidden layer widths (the dense stages, for both kinds).
    pub hidden: Vec<usize>,
    /// Channels, height, width; cnn only, the product must equal the feature
    /// count.
    pub input: Option<[usize; 3]>,
    /// Per conv stage: out_channels, kernel, stride; cnn only.
    pub conv: Vec<[usize; 3]>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TaskModelConfig {
    fn default() -> Self {
        TaskModelConfig {
            kind: ModelKind::Mlp,
            hidden: vec![24, 16],
            input: None,
            conv: Vec::new(),
            epochs: 30,
            learning_rate: 0.05,
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KdSection {
    pub temperature: f64,
    pub mix: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for KdSection {
    fn default() -> Self {
        let kd = KdConfig::default();
        KdSection {
            temperature: kd.temperature,
            mix: kd.mix,
            epochs: kd.epochs,
            learning_rate: kd.learning_rate,
            batch_size: kd.batch_size,
        }
    }
}

impl KdSection {
    pub fn to_core(&self) -> KdConfig {
        KdConfig {
            temperature: self.temperature,
            mix: self.mix,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExploreSection {
    pub alpha_sweep: Vec<f64>,
    /// Tolerated relative weighted-coverage degradation during selection.
    pub epsilon: f64,
    pub impact: ImpactKind,
    /// Triplet CSV (`from,to,impact`) with per-cell impacts; classes whose
    /// whole row is zero are excluded from checking. Custom mode only.
    pub impact_path: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ImpactKind {
    Uniform,
    NonUniform,
    Custom,
}

impl Default for ExploreSection {
    fn default() -> Self {
        ExploreSection {
            alpha_sweep: dyve_core::arch::DEFAULT_ALPHA_SWEEP.to_vec(),
            epsilon: 0.02,
            impact: ImpactKind::NonUniform,
            impact_path: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignSection {
    pub runs: u64,
    pub flips_per_run: usize,
    pub scope: ScopeKind,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeKind {
    Weights,
    WeightsAndActivations,
}

impl Default for CampaignSection {
    fn default() -> Self {
        CampaignSection { runs: 60_000, flips_per_run: 1, scope: ScopeKind::Weights }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    /// Random-fault campaign size for the comparison table.
    pub runs: u64,
    pub bfa_max_flips: usize,
    pub bfa_batch_size: usize,
    pub bfa_candidates_per_step: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            runs: 60_000,
            bfa_max_flips: 50,
            bfa_batch_size: 256,
            bfa_candidates_per_step: 20,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.dataset {
            DatasetConfig::Synthetic {
                classes,
                dim,
                samples_per_class,
                confusable,
                holdout_fraction,
                ..
            } => {
                if *classes < 2 || *samples_per_class == 0 {
                    bail!("dataset needs at least two classes and one sample per class");
                }
                if dim < classes {
                    bail!("dataset dim {dim} must be at least the class count {classes}");
                }
                if let Some([a, b]) = confusable {
                    if a == b || *a >= *classes || *b >= *classes {
                        bail!("confusable pair [{a}, {b}] invalid for {classes} classes");
                    }
                }
                if !(*holdout_fraction > 0.0 && *holdout_fraction < 1.0) {
                    bail!("holdout fraction must lie in (0, 1)");
                }
            }
            DatasetConfig::Delimited { path, holdout_fraction } => {
                if !path.exists() {
                    bail!("dataset file {} does not exist", path.display());
                }
                if !(*holdout_fraction > 0.0 && *holdout_fraction < 1.0) {
                    bail!("holdout fraction must lie in (0, 1)");
                }
            }
        }
        match self.task_model.kind {
            ModelKind::Mlp => {
                if self.task_model.input.is_some() || !self.task_model.conv.is_empty() {
                    bail!("input and conv settings only apply to kind = \"cnn\"");
                }
            }
            ModelKind::Cnn => {
                let input = self
                    .task_model
                    .input
                    .ok_or_else(|| anyhow::anyhow!("cnn needs an input shape"))?;
                if input.contains(&0) || self.task_model.conv.is_empty() {
                    bail!("cnn needs a non-empty input shape and at least one conv stage");
                }
            }
        }
        if self.task_model.batch_size == 0 || self.kd.batch_size == 0 {
            bail!("batch sizes must be positive");
        }
        if self.kd.temperature <= 0.0 || self.kd.temperature.is_nan() {
            bail!("distillation temperature must be positive");
        }
        if !(0.0..=1.0).contains(&self.kd.mix) {
            bail!("distillation mix must lie in [0, 1]");
        }
        if self.explore.alpha_sweep.is_empty()
            || self.explore.alpha_sweep.iter().any(|&a| !(a > 0.0 && a <= 1.0))
        {
            bail!("alpha sweep values must lie in (0, 1]");
        }
        match (self.explore.impact, &self.explore.impact_path) {
            (ImpactKind::Custom, Some(path)) if !path.exists() => {
                bail!("impact file {} does not exist", path.display())
            }
            (ImpactKind::Custom, None) => bail!("impact = \"custom\" needs impact_path"),
            (ImpactKind::Uniform | ImpactKind::NonUniform, Some(_)) => {
                bail!("impact_path only applies to impact = \"custom\"")
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.explore.epsilon) {
            bail!("epsilon must lie in [0, 1)");
        }
        if self.campaign.runs == 0 || self.campaign.flips_per_run == 0 {
            bail!("campaign needs positive runs and flips per run");
        }
        if self.attack.runs == 0 {
            bail!("attack campaign needs positive runs");
        }
        Ok(())
    }

    /// Build (train, holdout) splits; fully seeded from the master seed.
    pub fn load_dataset(&self) -> Result<(Dataset, Dataset)> {
        let (full, holdout_fraction) = match &self.dataset {
            DatasetConfig::Synthetic {
                classes,
                dim,
                samples_per_class,
                separation,
                confusable,
                confusable_distance,
                holdout_fraction,
            } => {
                let cfg = BlobConfig {
                    classes: *classes,
                    dim: *dim,
                    samples_per_class: *samples_per_class,
                    separation: *separation,
                    confusable: confusable.map(|[a, b]| (a, b)),
                    confusable_distance: *confusable_distance,
                };
                let seed = rng::derive(self.master_seed, "dataset");
                (data::synthetic_blobs(&cfg, seed)?, *holdout_fraction)
            }
            DatasetConfig::Delimited { path, holdout_fraction } => {
                (data::load_delimited(path)?, *holdout_fraction)
            }
        };
        let mut split_rng = rng::stream(self.master_seed, "split");
        Ok(full.split(holdout_fraction, &mut split_rng)?)
    }

    /// Task-model architecture for a dataset of this shape.
    pub fn task_architecture(&self, dim: usize, classes: usize) -> Result<Architecture> {
        let model = &self.task_model;
        match model.kind {
            ModelKind::Mlp => Ok(Architecture::mlp(dim, &model.hidden, classes)),
            ModelKind::Cnn => {
                let [c, h, w] = model.input.expect("validated");
                if c * h * w != dim {
                    bail!("cnn input {c}x{h}x{w} does not match feature count {dim}");
                }
                let conv: Vec<(usize, usize, usize)> =
                    model.conv.iter().map(|[o, k, s]| (*o, *k, *s)).collect();
                Ok(Architecture::cnn((c, h, w), &conv, &model.hidden, classes)?)
            }
        }
    }

    pub fn campaign_config(&self) -> CampaignConfig {
        CampaignConfig {
            n_flips_per_run: self.campaign.flips_per_run,
            n_runs: self.campaign.runs,
            seed: rng::derive(self.master_seed, "campaign"),
            scope: match self.campaign.scope {
                ScopeKind::Weights => TargetScope::Weights,
                ScopeKind::WeightsAndActivations => TargetScope::WeightsAndActivations,
            },
            persistence: Persistence::Transient,
        }
    }

    pub fn explore_params(&self) -> Result<ExploreParams> {
        let impact = match self.explore.impact {
            ImpactKind::Uniform => ImpactChoice::Uniform,
            ImpactKind::NonUniform => ImpactChoice::NonUniform,
            ImpactKind::Custom => {
                let path = self.explore.impact_path.as_ref().expect("validated");
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read impact file {}", path.display()))?;
                ImpactChoice::Custom(dyve_core::matrix::SquareMatrix::from_triplet_csv(&text)?)
            }
        };
        Ok(ExploreParams {
            alpha_sweep: self.explore.alpha_sweep.clone(),
            kd: self.kd.to_core(),
            campaign: self.campaign_config(),
            impact,
            epsilon: self.explore.epsilon,
            seed: rng::derive(self.master_seed, "explore"),
        })
    }

    pub fn task_model_path(&self) -> PathBuf {
        self.output_dir.join("task").join("model.qnn")
    }

    pub fn bundle_dir(&self) -> PathBuf {
        self.output_dir.join("explore").join("bundle")
    }
}
