//! Turning effective settings into datasets, architectures and training
//! configurations.

use std::path::{Path, PathBuf};

use mcdc_core::data::{load_mnist, resize_dataset, subset_by_classes, synthetic_blobs, LabeledDataset, Split};
use mcdc_core::model::{ArchitectureSpec, Family, ModelParams};
use mcdc_core::train::TrainConfig;
use mcdc_core::SeededRng;

use crate::config::{read_kv_file, Settings};
use crate::manifest;
use crate::CliError;

pub const DATA_DIR_ENV: &str = "MCDC_DATA_DIR";

pub fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

pub fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

pub fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Layer defaults, an optional run manifest, the config file and flags.
pub fn resolve(
    checkpoint: Option<&Path>,
    config: Option<&Path>,
    flags: &[(String, String)],
) -> Result<Settings, CliError> {
    let mut s = Settings::defaults();
    if let Some(ckpt) = checkpoint {
        s.overlay(&manifest::layer_beside(ckpt)?, true)?;
    }
    if let Some(path) = config {
        s.overlay(&read_kv_file(path)?, false)?;
    }
    s.overlay(flags, false)?;
    if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
        if !dir.is_empty() {
            s.set("data_root", dir);
        }
    }
    if s.str("data_seed")?.is_empty() {
        let seed = s.str("seed")?.to_owned();
        s.set("data_seed", seed);
    }
    s.flag_on("deterministic")?;
    Ok(s)
}

pub fn parse_split(raw: &str) -> Result<Split, CliError> {
    raw.parse().map_err(config_err)
}

/// The dataset named by `dataset`, restricted and resized per settings.
pub fn load_dataset(s: &Settings, split: Split) -> Result<LabeledDataset<f32>, CliError> {
    let data_seed: u64 = s.parse("data_seed")?;
    let root = SeededRng::new(data_seed);
    let name = s.str("dataset")?;
    let ds = match name {
        "mnist" | "mnist2" => {
            let data_root = PathBuf::from(s.str("data_root")?);
            let full = load_mnist(&data_root, split).map_err(|e| {
                CliError::Data(format!("cannot load MNIST {split} split under {}: {e}", data_root.display()))
            })?;
            let default_classes = (name == "mnist2").then(|| vec![0, 1]);
            let default_cap = (name == "mnist2").then_some(500);
            let classes = s.list("classes")?.or(default_classes);
            let cap = s.optional_usize("per_class_cap")?.or(default_cap);
            if classes.is_some() || cap.is_some() {
                let classes = classes.unwrap_or_else(|| (0..full.class_count).collect());
                let mut rng = root.split(&format!("subset-{split}"));
                subset_by_classes(&full, &classes, cap.unwrap_or(usize::MAX), &mut rng).map_err(data_err)?
            } else {
                full
            }
        }
        "blobs" => {
            let mut rng = root.split(&format!("blobs-{split}"));
            synthetic_blobs(
                s.parse("blobs_n_per_class")?,
                s.parse("blobs_k")?,
                s.parse("blobs_dim")?,
                s.parse("blobs_separation")?,
                &mut rng,
            )
            .map_err(config_err)?
        }
        other => return Err(CliError::Config(format!("unknown dataset `{other}` (mnist, mnist2, blobs)"))),
    };
    match s.optional_usize("image_size")? {
        Some(size) if name != "blobs" => resize_dataset(&ds, size, size).map_err(config_err),
        _ => Ok(ds),
    }
}

pub fn architecture(s: &Settings, ds: &LabeledDataset<f32>) -> Result<ArchitectureSpec, CliError> {
    let family: Family = s.parse("family")?;
    let latent = s.parse("latent_dim")?;
    let mut spec = match family {
        Family::ConvPaper => ArchitectureSpec::conv_paper(
            ds.image_shape(),
            s.parse("base_channels")?,
            s.parse("num_blocks")?,
            latent,
        ),
        Family::MlpToy => {
            let hidden = s.list("hidden")?.unwrap_or_default();
            ArchitectureSpec::mlp_toy(ds.images.item_len(), hidden, latent)
        }
    };
    spec.negative_slope = s.parse("negative_slope")?;
    spec.validate().map_err(config_err)?;
    Ok(spec)
}

pub fn train_config(s: &Settings) -> Result<TrainConfig, CliError> {
    let variant = s
        .raw("variant")
        .ok_or_else(|| CliError::Config("no variant given by --variant or the config file".into()))?
        .parse()
        .map_err(config_err)?;
    let mut cfg = TrainConfig::new(variant);
    cfg.lambda = s.parse("lambda")?;
    cfg.gamma = s.parse("gamma")?;
    cfg.alpha_rule = s.parse("alpha_rule")?;
    cfg.batch_size = s.parse("batch_size")?;
    cfg.epochs = s.parse("epochs")?;
    cfg.inner_steps = s.parse("inner_steps")?;
    cfg.lr = s.parse("lr")?;
    cfg.seed = s.parse("seed")?;
    cfg.mix_weight = s.parse("mix_weight")?;
    cfg.validate().map_err(config_err)?;
    if cfg.epochs == 0 {
        return Err(CliError::Config("epochs must be positive".into()));
    }
    Ok(cfg)
}

pub fn check_compatible(model: &ModelParams<f32>, ds: &LabeledDataset<f32>) -> Result<(), CliError> {
    if model.spec.input_len() != ds.images.item_len() {
        return Err(CliError::Data(format!(
            "checkpoint expects inputs of shape {:?} but the dataset has images of shape {:?}",
            model.spec.input_shape,
            ds.image_shape()
        )));
    }
    Ok(())
}
