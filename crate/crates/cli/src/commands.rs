use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use mcdc_core::analysis::{
    class_pca_profile, encode_dataset, even_alphas, grid_to_pgm, interpolation_grid, mixing_side_score,
    profile_csv, project_2d, projection_csv, sample_pairs, InterpolationGrid,
};
use mcdc_core::checkpoint::{load_model, save_trainer};
use mcdc_core::cluster::{cluster_metrics, kmeans_traced, pca_fit, pca_whiten, KmeansOptions};
use mcdc_core::data::LabeledDataset;
use mcdc_core::model::{build_model, ModelParams};
use mcdc_core::nn::Tensor;
use mcdc_core::train::{train as run_training, Trainer};
use mcdc_core::SeededRng;

use crate::config::Settings;
use crate::manifest::{unix_now, Manifest};
use crate::setup::{
    architecture, check_compatible, config_err, data_err, load_dataset, parse_split, resolve, runtime_err,
    train_config,
};
use crate::{AnalyzeArgs, CheckpointArgs, CliError, EvalArgs, InterpolateArgs, TrainArgs};

const ENCODE_BATCH: usize = 256;
const SIDE_SCORE_ALPHA: f64 = 0.25;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const EVAL_FILE: &str = "eval.txt";
pub const PROFILE_FILE: &str = "profile.csv";
pub const PROJECTION_FILE: &str = "projection.csv";
pub const GRID_FILE: &str = "interpolation.pgm";
pub const RECON_FILE: &str = "recon.pgm";
pub const INTERPOLATION_FILE: &str = "interpolation.txt";

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let started = unix_now();
    let settings = resolve(None, args.common.config.as_deref(), &args.flag_layer()?)?;
    let cfg = train_config(&settings)?;
    let ds = load_dataset(&settings, parse_split("train")?)?;
    let spec = architecture(&settings, &ds)?;
    let out = args.common.out.clone().unwrap_or_else(|| {
        PathBuf::from("runs").join(format!("{}-{}-seed{}", cfg.variant, settings.raw("dataset").unwrap_or(""), cfg.seed))
    });
    ensure_dir(&out)?;

    let model = build_model::<f32>(&spec, &mut SeededRng::new(cfg.seed).split("init")).map_err(config_err)?;
    let mut trainer = Trainer::new(model, cfg.lr);
    let metrics_path = out.join(METRICS_FILE);
    let mut csv = fs::File::create(&metrics_path)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", metrics_path.display())))?;
    let header = "epoch,recon,adversarial,mix_consistency,total,discriminator\n";
    csv.write_all(header.as_bytes()).map_err(runtime_err)?;
    let mut io_error = None;
    let history = run_training(&mut trainer, &ds, &cfg, |epoch, l| {
        let row = format!(
            "{},{},{},{},{},{}\n",
            epoch + 1,
            l.recon,
            l.adversarial,
            l.mix_consistency,
            l.total_autoencoder,
            l.discriminator
        );
        if let Err(e) = csv.write_all(row.as_bytes()) {
            io_error.get_or_insert(e);
        }
    })
    .map_err(runtime_err)?;
    if let Some(e) = io_error {
        return Err(CliError::Runtime(format!("cannot write {}: {e}", metrics_path.display())));
    }
    save_trainer(&out.join(CHECKPOINT_FILE), &trainer).map_err(runtime_err)?;
    Manifest {
        command: "train".into(),
        settings: settings.clone(),
        started_at: started,
        finished_at: unix_now(),
        artifacts: vec![
            ("checkpoint".into(), CHECKPOINT_FILE.into()),
            ("metrics_csv".into(), METRICS_FILE.into()),
        ],
    }
    .write(&out)?;

    let last = history.last().expect("epochs >= 1");
    if !(last.total_autoencoder.is_finite() && last.discriminator.is_finite()) {
        return Err(CliError::Runtime("training diverged: non-finite loss".into()));
    }
    println!(
        "trained {} epochs ({} samples): recon={} total={} -> {}",
        cfg.epochs,
        ds.len(),
        last.recon,
        last.total_autoencoder,
        out.display()
    );
    Ok(())
}

/// Settings, model, dataset and output directory for checkpoint commands.
struct Loaded {
    settings: Settings,
    model: ModelParams<f32>,
    ds: LabeledDataset<f32>,
    out: PathBuf,
    seed: u64,
}

fn load_for(args: &CheckpointArgs, split: &str, flags: Vec<(String, String)>) -> Result<Loaded, CliError> {
    let mut layer = args.common.flag_layer()?;
    layer.extend(flags);
    let settings = resolve(Some(&args.checkpoint), args.common.config.as_deref(), &layer)?;
    let split = parse_split(split)?;
    if !args.checkpoint.is_file() {
        return Err(CliError::Data(format!("checkpoint {} not found", args.checkpoint.display())));
    }
    let model = load_model::<f32>(&args.checkpoint)
        .map_err(|e| CliError::Data(format!("cannot load checkpoint {}: {e}", args.checkpoint.display())))?;
    let ds = load_dataset(&settings, split)?;
    check_compatible(&model, &ds)?;
    let out = args.common.out.clone().unwrap_or_else(|| {
        args.checkpoint
            .parent()
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    });
    ensure_dir(&out)?;
    let seed = settings.parse("seed")?;
    Ok(Loaded {
        settings,
        model,
        ds,
        out,
        seed,
    })
}

fn flag(key: &str, v: Option<impl ToString>) -> Vec<(String, String)> {
    v.map(|v| vec![(key.to_owned(), v.to_string())]).unwrap_or_default()
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let mut flags = flag("kmeans_restarts", args.kmeans_restarts);
    flags.extend(flag("whiten_dims", args.whiten_dims));
    let run = load_for(&args.base, &args.split, flags)?;
    let s = &run.settings;
    let k = args.k.unwrap_or(run.ds.class_count);
    let restarts: usize = s.parse("kmeans_restarts")?;
    let eps: f64 = s.parse("whiten_eps")?;

    let z = encode_dataset(&run.model, &run.ds, ENCODE_BATCH).map_err(runtime_err)?;
    let mut basis = pca_fit(&z).map_err(data_err)?;
    if let Some(dims) = s.optional_usize("whiten_dims")? {
        basis = basis.truncated(dims);
    }
    let white = pca_whiten(&z, &basis, eps).map_err(runtime_err)?;
    let opts = KmeansOptions {
        k,
        n_init: restarts,
        max_iter: s.parse("kmeans_max_iter")?,
        parallel: !s.flag_on("deterministic")?,
    };
    let (result, _) = kmeans_traced(&white, &opts, &mut SeededRng::new(run.seed).split("kmeans")).map_err(config_err)?;
    let m = cluster_metrics(&run.ds.labels, &result.assignments).map_err(runtime_err)?;

    println!("acc={} nmi={} inertia={}", m.acc, m.nmi, result.inertia);
    let mut report = String::new();
    for (key, v) in [
        ("acc", m.acc.to_string()),
        ("nmi", m.nmi.to_string()),
        ("mutual_information", m.mutual_information.to_string()),
        ("entropy_y", m.entropy_y.to_string()),
        ("entropy_c", m.entropy_c.to_string()),
        ("inertia", result.inertia.to_string()),
        ("k", k.to_string()),
        ("kmeans_restarts", restarts.to_string()),
        ("best_restart", result.best_restart.to_string()),
        ("whitened_dims", white.cols().to_string()),
        ("samples", run.ds.len().to_string()),
        ("split", args.split.clone()),
        ("checkpoint", args.base.checkpoint.display().to_string()),
    ] {
        writeln!(report, "{key} = {v}").unwrap();
    }
    write_file(&run.out.join(EVAL_FILE), report)
}

pub fn analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let run = load_for(&args.base, &args.split, flag("cutoff", args.cutoff))?;
    let cutoff: usize = run.settings.parse("cutoff")?;
    let z = encode_dataset(&run.model, &run.ds, ENCODE_BATCH).map_err(runtime_err)?;
    let profile = class_pca_profile(&z, &run.ds.labels, cutoff).map_err(data_err)?;
    if profile.was_clamped() {
        eprintln!(
            "mcdc: warning: cutoff {} exceeds the latent dimension; using {}",
            profile.requested_cutoff, profile.cutoff
        );
    }
    let proj = project_2d(&z).map_err(data_err)?;
    write_file(&run.out.join(PROFILE_FILE), profile_csv(&profile))?;
    write_file(
        &run.out.join(PROJECTION_FILE),
        projection_csv(&proj, &run.ds.labels).map_err(runtime_err)?,
    )?;
    println!(
        "first_component_share={} cutoff={} classes={}",
        profile.mean_share[0],
        profile.cutoff,
        profile.classes_used.len()
    );
    Ok(())
}

pub fn interpolate(args: &InterpolateArgs) -> Result<(), CliError> {
    let mut flags = flag("pairs", args.pairs);
    flags.extend(flag("steps", args.steps));
    let run = load_for(&args.base, &args.split, flags)?;
    let n_pairs: usize = run.settings.parse("pairs")?;
    let steps: usize = run.settings.parse("steps")?;
    if n_pairs == 0 || steps == 0 {
        return Err(CliError::Config("pairs and steps must be positive".into()));
    }
    let pairs = sample_pairs(run.ds.len(), n_pairs, &mut SeededRng::new(run.seed).split("pairs")).map_err(data_err)?;
    let x_i = run.ds.images.select(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let x_j = run.ds.images.select(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let alphas = even_alphas(steps);
    let grid = interpolation_grid(&run.model, &x_i, &x_j, &alphas).map_err(runtime_err)?;
    write_file(&run.out.join(GRID_FILE), grid_to_pgm(&grid).map_err(runtime_err)?)?;

    if args.recon_check {
        let rec = run
            .model
            .decode(&run.model.encode(&x_i).map_err(runtime_err)?)
            .map_err(runtime_err)?;
        let mut shape = vec![n_pairs, 1];
        shape.extend_from_slice(&x_i.shape()[1..]);
        let column = InterpolationGrid {
            rows: n_pairs,
            cols: 1,
            alphas: vec![0.0],
            images: Tensor::new(shape, rec.into_data()).map_err(runtime_err)?,
        };
        write_file(&run.out.join(RECON_FILE), grid_to_pgm(&column).map_err(runtime_err)?)?;
    }

    let trained = mixing_side_score(&run.model, &x_i, &x_j, SIDE_SCORE_ALPHA).map_err(runtime_err)?;
    let fresh = build_model::<f32>(&run.model.spec, &mut SeededRng::new(run.seed).split("init")).map_err(runtime_err)?;
    let untrained = mixing_side_score(&fresh, &x_i, &x_j, SIDE_SCORE_ALPHA).map_err(runtime_err)?;
    println!("side_score alpha={SIDE_SCORE_ALPHA} trained={trained} untrained={untrained}");
    let alpha_list = alphas.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let report = format!(
        "pairs = {n_pairs}\nsteps = {steps}\nalphas = {alpha_list}\nside_score_alpha = {SIDE_SCORE_ALPHA}\nside_score = {trained}\nside_score_untrained = {untrained}\n"
    );
    write_file(&run.out.join(INTERPOLATION_FILE), report)
}
