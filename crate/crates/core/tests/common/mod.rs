//! Shared fixture: the builtin synthetic classification problem and a task
//! model trained on it, built once per test binary.

use std::sync::OnceLock;

use dyve_core::data::{synthetic_blobs, BlobConfig, Dataset};
use dyve_core::qnn::{Architecture, QuantModel};
use dyve_core::rng;
use dyve_core::train::{train_cross_entropy, RealModel, TrainConfig};

pub const MASTER_SEED: u64 = 42;

pub struct Fixture {
    pub task: QuantModel,
    pub train: Dataset,
    pub holdout: Dataset,
}

pub fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let data = synthetic_blobs(&BlobConfig::default(), MASTER_SEED).expect("blob config valid");
        let mut split_rng = rng::stream(MASTER_SEED, "split");
        let (train, holdout) = data.split(1.0 / 3.0, &mut split_rng).expect("split valid");
        let arch = Architecture::mlp(data.dim, &[24, 16], data.num_classes);
        let mut train_rng = rng::stream(MASTER_SEED, "task-train");
        let mut real = RealModel::init(&arch, &mut train_rng).expect("arch valid");
        train_cross_entropy(&mut real, &train, &TrainConfig::default(), &mut train_rng)
            .expect("training converges");
        let task = real.quantize(1.0).expect("quantization valid");
        Fixture { task, train, holdout }
    })
}
