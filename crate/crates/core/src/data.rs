//! Labeled datasets: a built-in synthetic generator and a delimited-file
//! loader for small real datasets.

use std::path::Path;

use rand_chacha::ChaCha12Rng;

use crate::error::{DyveError, Result};
use crate::rng::{self, standard_normal};

/// Feature vectors with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub dim: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Dataset> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(DyveError::EmptyDataset);
        }
        let dim = features[0].len();
        if features.iter().any(|f| f.len() != dim) {
            return Err(DyveError::InvalidConfig("ragged feature rows".into()));
        }
        if labels.iter().any(|&l| l >= num_classes) {
            return Err(DyveError::InvalidConfig("label outside class range".into()));
        }
        Ok(Dataset { features, labels, num_classes, dim })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn input(&self, idx: usize) -> &[f64] {
        &self.features[idx]
    }

    /// Deterministic shuffled split; `holdout_fraction` of the rows land in
    /// the second returned set.
    pub fn split(&self, holdout_fraction: f64, rng: &mut ChaCha12Rng) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&holdout_fraction) || holdout_fraction <= 0.0 {
            return Err(DyveError::InvalidConfig(format!(
                "holdout fraction {holdout_fraction} outside (0, 1)"
            )));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        shuffle(&mut order, rng);
        let holdout_len = ((self.len() as f64) * holdout_fraction).round() as usize;
        let holdout_len = holdout_len.clamp(1, self.len() - 1);
        let pick = |indices: &[usize]| Dataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            dim: self.dim,
        };
        let (holdout_idx, train_idx) = order.split_at(holdout_len);
        Ok((pick(train_idx), pick(holdout_idx)))
    }
}

fn shuffle(order: &mut [usize], rng: &mut ChaCha12Rng) {
    use rand::Rng;
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// Gaussian-blob generator configuration. Class means sit on scaled axes so
/// classes separate cleanly, except for one designated confusable pair whose
/// means are placed close together.
#[derive(Clone, Debug)]
pub struct BlobConfig {
    pub classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    /// Distance of each class mean from the origin.
    pub separation: f64,
    /// Two classes drawn close together, if any.
    pub confusable: Option<(usize, usize)>,
    /// Distance between the confusable pair's means.
    pub confusable_distance: f64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        BlobConfig {
            classes: 10,
            dim: 16,
            samples_per_class: 600,
            separation: 4.5,
            confusable: Some((0, 1)),
            confusable_distance: 3.0,
        }
    }
}

/// Generate unit-variance Gaussian blobs around deterministic class means.
pub fn synthetic_blobs(cfg: &BlobConfig, seed: u64) -> Result<Dataset> {
    if cfg.classes < 2 || cfg.samples_per_class == 0 {
        return Err(DyveError::InvalidConfig(
            "need at least two classes and one sample per class".into(),
        ));
    }
    if cfg.dim < cfg.classes {
        return Err(DyveError::InvalidConfig(format!(
            "blob dimension {} must be at least the class count {}",
            cfg.dim, cfg.classes
        )));
    }
    if let Some((a, b)) = cfg.confusable {
        if a == b || a >= cfg.classes || b >= cfg.classes {
            return Err(DyveError::InvalidConfig(format!(
                "confusable pair ({a}, {b}) invalid for {} classes",
                cfg.classes
            )));
        }
    }
    let mut means: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|c| {
            let mut m = vec![0.0; cfg.dim];
            m[c] = cfg.separation;
            m
        })
        .collect();
    if let Some((a, b)) = cfg.confusable {
        // Pull class b next to class a along the line between their axes.
        let dir_scale = cfg.confusable_distance / 2f64.sqrt();
        let mut m = means[a].clone();
        m[a] -= dir_scale;
        m[b] = dir_scale;
        means[b] = m;
    }
    let mut rng = rng::stream(seed, "synthetic-blobs");
    let mut features = Vec::with_capacity(cfg.classes * cfg.samples_per_class);
    let mut labels = Vec::with_capacity(cfg.classes * cfg.samples_per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..cfg.samples_per_class {
            let x: Vec<f64> = mean.iter().map(|&m| m + standard_normal(&mut rng)).collect();
            features.push(x);
            labels.push(c);
        }
    }
    let mut order: Vec<usize> = (0..features.len()).collect();
    shuffle(&mut order, &mut rng);
    let dataset = Dataset {
        features: order.iter().map(|&i| features[i].clone()).collect(),
        labels: order.iter().map(|&i| labels[i]).collect(),
        num_classes: cfg.classes,
        dim: cfg.dim,
    };
    Ok(dataset)
}

/// Load a delimited dataset. The first line is a schema header of the form
/// `features=<dim>,classes=<n>`; every following line holds `dim` numbers and
/// a trailing integer label, comma-separated.
pub fn load_delimited(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_delimited(&std::fs::read_to_string(path)?)
}

pub fn parse_delimited(text: &str) -> Result<Dataset> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| DyveError::InvalidConfig("empty dataset file".into()))?;
    let (dim, classes) = parse_schema(header)?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(DyveError::InvalidConfig(format!(
                "line {}: expected {} fields, got {}",
                lineno + 2,
                dim + 1,
                fields.len()
            )));
        }
        let mut row = Vec::with_capacity(dim);
        for f in &fields[..dim] {
            row.push(f.trim().parse::<f64>().map_err(|_| {
                DyveError::InvalidConfig(format!("line {}: bad number {f}", lineno + 2))
            })?);
        }
        let label: usize = fields[dim].trim().parse().map_err(|_| {
            DyveError::InvalidConfig(format!("line {}: bad label {}", lineno + 2, fields[dim]))
        })?;
        if label >= classes {
            return Err(DyveError::InvalidConfig(format!(
                "line {}: label {label} outside 0..{classes}",
                lineno + 2
            )));
        }
        features.push(row);
        labels.push(label);
    }
    Dataset::new(features, labels, classes)
}

pub fn save_delimited(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = format!("features={},classes={}\n", dataset.dim, dataset.num_classes);
    for (row, label) in dataset.features.iter().zip(dataset.labels.iter()) {
        let fields: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&fields.join(","));
        out.push_str(&format!(",{label}\n"));
    }
    Ok(std::fs::write(path, out)?)
}

fn parse_schema(header: &str) -> Result<(usize, usize)> {
    let mut dim = None;
    let mut classes = None;
    for part in header.split(',') {
        match part.trim().split_once('=') {
            Some(("features", v)) => dim = v.trim().parse().ok(),
            Some(("classes", v)) => classes = v.trim().parse().ok(),
            _ => {}
        }
    }
    match (dim, classes) {
        (Some(d), Some(c)) if d > 0 && c > 1 => Ok((d, c)),
        _ => Err(DyveError::InvalidConfig(format!(
            "schema header must read features=<dim>,classes=<n>, got: {header}"
        ))),
    }
}
