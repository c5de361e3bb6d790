//! `mvp`: generate data, train, reconstruct, estimate views, evaluate, and
//! check gradients.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 verification failure.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvp::checkpoint::{encode_checkpoint, fnv1a64, load_checkpoint, save_checkpoint};
use mvp::eval::{
    interpolation_report, layer_features, lr_baseline, predict_views, read_metrics_csv,
    recognition_protocol, reconstruction_quality, view_estimation_error, weight_sparsity_stats,
    EvalReport, FeatureSet,
};
use mvp::model::{reconstruct_spectrum, to_model_space, to_pixels, Parameters, ViewHeadKind, ViewLabel};
use mvp::numerics::{derive_seed, Rng};
use mvp::synthdata::{
    build_pairs, read_pgm, write_pgm, Dataset, DatasetConfig, GrayImage, Pairing, MANIFEST_FILE,
};
use mvp::training::gradcheck::{run_gradcheck, GRADCHECK_TOL};
use mvp::training::{append_metrics, cluster_init_views, Trainer, UnsupervisedConfig};
use mvp::MvpError;

use config::{resolve, ConfigError, RunConfig};

const DEFAULT_VIEWS: &str = "-45,-30,-15,0,15,30,45";

#[derive(Parser)]
#[command(name = "mvp", version, about = "Multi-view perceptron toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic multi-view face dataset.
    GenData(GenDataArgs),
    /// Train a model; writes ckpt_epochN.mvpc files and metrics.csv.
    Train(TrainArgs),
    /// Reconstruct view spectra for input images.
    Reconstruct(ReconstructArgs),
    /// Predict the view of each image.
    EstimateView(EstimateArgs),
    /// Run an evaluation protocol and write its report.
    Eval(EvalArgs),
    /// Compare analytic gradients with finite differences on a tiny network.
    Gradcheck(GradcheckArgs),
    /// List the keys accepted in a `train --config` file.
    ConfigKeys,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, default_value = "data")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    identities: usize,
    /// Identities used for training; the rest are held out [default: identities − min(20, identities/2)].
    #[arg(long)]
    train_identities: Option<usize>,
    /// Yaw angles in degrees, comma separated.
    #[arg(long, default_value = DEFAULT_VIEWS, allow_hyphen_values = true)]
    views: String,
    #[arg(long, default_value_t = 3)]
    illums: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    /// Landmark blob std in pixels [default: 1.6 · size / 32].
    #[arg(long)]
    blob_std: Option<f64>,
}

/// Every option maps onto a config key and overrides the `--config` file.
#[derive(Args)]
struct TrainArgs {
    /// Plain-text file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data_root: Option<String>,
    #[arg(long)]
    manifest: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    arch: Option<String>,
    /// discrete | continuous
    #[arg(long)]
    view_head: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    /// one-sample | weighted
    #[arg(long)]
    grad_mode: Option<String>,
    /// sgd | adam
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    momentum: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    sigma_y: Option<String>,
    #[arg(long)]
    sigma_v: Option<String>,
    /// Train without view labels, starting from clustered view guesses.
    #[arg(long)]
    unsupervised: bool,
    #[arg(long)]
    clusters: Option<String>,
    #[arg(long)]
    sigma_tilde: Option<String>,
    /// Continue from a checkpoint written by `train`.
    #[arg(long)]
    resume: Option<PathBuf>,
}

impl TrainArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let pairs: [(&'static str, &Option<String>); 18] = [
            ("data_root", &self.data_root),
            ("manifest", &self.manifest),
            ("out_dir", &self.out),
            ("arch", &self.arch),
            ("view_head", &self.view_head),
            ("samples", &self.samples),
            ("grad_mode", &self.grad_mode),
            ("optimizer", &self.optimizer),
            ("learning_rate", &self.lr),
            ("momentum", &self.momentum),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("seed", &self.seed),
            ("sigma_y", &self.sigma_y),
            ("sigma_v", &self.sigma_v),
            ("clusters", &self.clusters),
            ("sigma_tilde", &self.sigma_tilde),
            ("unsupervised", &None),
        ];
        let mut out: Vec<(&'static str, String)> = pairs
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect();
        if self.unsupervised {
            out.push(("unsupervised", "true".into()));
        }
        out
    }
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input PGM images.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// `all`, or comma-separated labels: class indices (discrete head) or degrees (continuous head).
    #[arg(long, default_value = "all", allow_hyphen_values = true)]
    views: String,
    /// Manifest whose view list `all` expands to under the continuous head.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "recon")]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset whose test identities are estimated (unless --input is given).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Explicit PGM images instead of the test split.
    #[arg(long, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Candidate yaws in degrees [default: the manifest views, else -45..45 step 15].
    #[arg(long, allow_hyphen_values = true)]
    candidates: Option<String>,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "views.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// recognition | recon-quality | view-error | interpolation | sparsity
    protocol: String,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Report CSV; a `.txt` summary is written next to it [default: <protocol>.csv].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recognition features: `pixels` or a hidden layer index [default: deepest identity layer].
    #[arg(long)]
    layer: Option<String>,
    /// Metrics CSV for `sparsity`.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Second metrics CSV whose final loss is compared against.
    #[arg(long)]
    compare: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io(String),
    Verify(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Verify(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Verify(m) => m,
        }
    }
}

impl From<MvpError> for CliError {
    fn from(e: MvpError) -> Self {
        let msg = e.to_string();
        match e {
            MvpError::Io { .. } | MvpError::ParseAt { .. } | MvpError::ParseLine { .. } => CliError::Io(msg),
            MvpError::Checksum { .. } => CliError::Verify(msg),
            MvpError::Contract(_) | MvpError::Dimension { .. } => CliError::Usage(msg),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(p, err) => CliError::Io(format!("{}: {err}", p.display())),
            ConfigError::Invalid(m) => CliError::Usage(m),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn parse_list(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| usage(format!("`{s}` is not a number"))))
        .collect()
}

fn default_train_identities(identities: usize) -> usize {
    identities - (identities / 2).min(20)
}

fn cmd_gen_data(a: &GenDataArgs) -> CliResult<()> {
    let cfg = DatasetConfig {
        seed: a.seed,
        identities: a.identities,
        train_identities: a.train_identities.unwrap_or_else(|| default_train_identities(a.identities)),
        views: parse_list(&a.views)?,
        illuminations: a.illums,
        size: a.size,
        blob_std: a.blob_std.unwrap_or(1.6 * a.size as f64 / 32.0),
    };
    let data = Dataset::generate(&cfg)?;
    data.write(&a.out)?;
    println!("manifest: {}", a.out.join(MANIFEST_FILE).display());
    println!("records: {}", data.manifest.records.len());
    Ok(())
}

fn checkpoint_path(out: &Path, epoch: usize) -> PathBuf {
    out.join(format!("ckpt_epoch{epoch}.mvpc"))
}

fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let cfg: RunConfig = resolve(a.config.as_deref(), &a.overrides())?;
    let data = Dataset::load(&cfg.manifest_path())?;
    let train = data.train_split();
    let arch = cfg.architecture(data.manifest.views.len()).map_err(usage)?;
    let pairs = build_pairs(&train, Pairing::AllViews, arch.view_head)?;

    let mut trainer = match &a.resume {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            if ck.params.arch != arch {
                return Err(usage(format!(
                    "checkpoint architecture {} differs from configured {arch}",
                    ck.params.arch
                )));
            }
            Trainer::resume(ck, cfg.train.clone())?
        }
        None => Trainer::new(Parameters::init(&arch, cfg.train.seed)?, cfg.train.clone())?,
    };
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let cfg_path = out.join("config.txt");
    fs::write(&cfg_path, cfg.to_text()).map_err(|e| io_err(&cfg_path, e))?;
    let metrics = out.join("metrics.csv");
    if trainer.epochs_done == 0 {
        if metrics.exists() {
            fs::remove_file(&metrics).map_err(|e| io_err(&metrics, e))?;
        }
        save_checkpoint(&checkpoint_path(out, 0), &trainer.checkpoint())?;
    }

    let unsup = if cfg.unsupervised {
        let targets: Vec<Vec<f64>> = pairs.iter().map(|p| p.target.clone()).collect();
        let side = (arch.output_dim as f64).sqrt().round() as usize;
        let mut rng = Rng::new(derive_seed(&[cfg.train.seed, 0xC1]));
        let clusters = cluster_init_views(&targets, side, cfg.clusters, &mut rng)?;
        Some(UnsupervisedConfig {
            v_tilde: clusters.v_tilde,
            sigma_tilde: cfg.sigma_tilde,
            clusters: cfg.clusters,
        })
    } else {
        None
    };

    println!("pairs: {}  arch: {arch}", pairs.len());
    trainer.run(&pairs, unsup.as_ref(), |t, m| {
        save_checkpoint(&checkpoint_path(out, m.epoch), &t.checkpoint())?;
        append_metrics(&metrics, m)?;
        println!(
            "epoch {:>4}  loss {:.4}  max-weight median {:.3}  {:.1}s",
            m.epoch, m.mean_loss, m.max_weight_median, m.wall_seconds
        );
        Ok(())
    })?;
    let last = checkpoint_path(out, trainer.epochs_done);
    let bytes = encode_checkpoint(&trainer.checkpoint());
    println!("checkpoint: {}", last.display());
    println!("checksum: {:016x}", fnv1a64(&bytes));
    Ok(())
}

fn load_params(path: &Path) -> CliResult<Parameters> {
    Ok(load_checkpoint(path)?.params)
}

fn image_side(params: &Parameters) -> usize {
    (params.arch.output_dim as f64).sqrt().round() as usize
}

/// Labels plus the text used in file names and CSVs.
fn parse_labels(spec: &str, params: &Parameters, manifest: Option<&Path>) -> CliResult<Vec<(ViewLabel, String)>> {
    match params.arch.view_head {
        ViewHeadKind::Discrete(m) => {
            if spec == "all" {
                return Ok((0..m).map(|j| (ViewLabel::Class(j), j.to_string())).collect());
            }
            spec.split(',')
                .map(|s| {
                    let j: usize = s.trim().parse().map_err(|_| usage(format!("`{s}` is not a class index")))?;
                    if j >= m {
                        let valid: Vec<String> = (0..m).map(|k| k.to_string()).collect();
                        return Err(usage(format!("view label {j} not available; valid labels: {}", valid.join(","))));
                    }
                    Ok((ViewLabel::Class(j), j.to_string()))
                })
                .collect()
        }
        ViewHeadKind::Continuous => {
            let degrees = if spec == "all" {
                match manifest {
                    Some(p) => mvp::synthdata::read_manifest(p)?.views,
                    None => parse_list(DEFAULT_VIEWS)?,
                }
            } else {
                parse_list(spec)?
            };
            Ok(degrees.into_iter().map(|d| (ViewLabel::from_degrees(d), d.to_string())).collect())
        }
    }
}

fn cmd_reconstruct(a: &ReconstructArgs) -> CliResult<()> {
    let params = load_params(&a.checkpoint)?;
    let labels = parse_labels(&a.views, &params, a.manifest.as_deref())?;
    let side = image_side(&params);
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let label_values: Vec<ViewLabel> = labels.iter().map(|(l, _)| *l).collect();
    for (i, path) in a.input.iter().enumerate() {
        let img = read_pgm(path)?;
        if img.pixels.len() != params.arch.input_dim {
            return Err(usage(format!(
                "{} has {} pixels, model expects {}",
                path.display(),
                img.pixels.len(),
                params.arch.input_dim
            )));
        }
        let mut rng = Rng::new(derive_seed(&[a.seed, i as u64]));
        let spec = reconstruct_spectrum(&to_model_space(&img.pixels), &label_values, a.samples, &params, &mut rng)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("input");
        let mut sheet = vec![img.clone()];
        for ((_, name), y) in labels.iter().zip(&spec.images) {
            let out = GrayImage::square(side, to_pixels(y))?;
            write_pgm(&out, &a.out.join(format!("{stem}_view{name}.pgm")))?;
            sheet.push(out);
        }
        let sheet_path = a.out.join(format!("{stem}_sheet.pgm"));
        write_pgm(&GrayImage::hconcat(&sheet)?, &sheet_path)?;
        println!("{}: {} views, sheet {}", path.display(), labels.len(), sheet_path.display());
    }
    Ok(())
}

fn cmd_estimate_view(a: &EstimateArgs) -> CliResult<()> {
    let params = load_params(&a.checkpoint)?;
    let data = match &a.manifest {
        Some(p) => Some(Dataset::load(p)?),
        None => None,
    };
    let candidates = match (&a.candidates, &data) {
        (Some(c), _) => parse_list(c)?,
        (None, Some(d)) => d.manifest.views.clone(),
        (None, None) => parse_list(DEFAULT_VIEWS)?,
    };
    // (path, pixels, true yaw)
    let mut items: Vec<(String, Vec<f64>, Option<f64>)> = Vec::new();
    if a.input.is_empty() {
        let d = data.ok_or_else(|| usage("give --manifest or --input"))?;
        let test = d.test_split();
        for (r, px) in test.manifest.records.iter().zip(test.images) {
            items.push((r.path.clone(), px, Some(r.yaw)));
        }
    } else {
        for p in &a.input {
            items.push((p.display().to_string(), read_pgm(p)?.pixels, None));
        }
    }
    let images: Vec<Vec<f64>> = items.iter().map(|(_, px, _)| px.clone()).collect();
    let preds = predict_views(&params, &images, &candidates, a.samples, a.seed)?;
    let mut csv = String::from("path,true_view,predicted_view,abs_error\n");
    let mut errs = Vec::new();
    for ((path, _, truth), p) in items.iter().zip(&preds) {
        match truth {
            Some(t) => {
                let e = (p.degrees - t).abs();
                errs.push(e);
                csv.push_str(&format!("{path},{t},{},{e}\n", p.degrees));
            }
            None => csv.push_str(&format!("{path},,{},\n", p.degrees)),
        }
    }
    fs::write(&a.out, csv).map_err(|e| io_err(&a.out, e))?;
    println!("predictions: {} -> {}", preds.len(), a.out.display());
    if !errs.is_empty() {
        println!("mae: {:.4}", errs.iter().sum::<f64>() / errs.len() as f64);
    }
    Ok(())
}

fn eval_report(a: &EvalArgs) -> CliResult<EvalReport> {
    if a.protocol == "sparsity" {
        let path = a.metrics.as_ref().ok_or_else(|| usage("sparsity needs --metrics"))?;
        let metrics = read_metrics_csv(path)?;
        let other = match &a.compare {
            Some(p) => Some(read_metrics_csv(p)?),
            None => None,
        };
        return Ok(weight_sparsity_stats(&metrics, other.as_deref())?);
    }
    let known = ["recognition", "recon-quality", "view-error", "interpolation"];
    if !known.contains(&a.protocol.as_str()) {
        return Err(usage(format!(
            "unknown protocol `{}`; expected recognition, recon-quality, view-error, interpolation or sparsity",
            a.protocol
        )));
    }
    let ck = a.checkpoint.as_ref().ok_or_else(|| usage(format!("{} needs --checkpoint", a.protocol)))?;
    let mf = a.manifest.as_ref().ok_or_else(|| usage(format!("{} needs --manifest", a.protocol)))?;
    let params = load_params(ck)?;
    let data = Dataset::load(mf)?;
    let (train, test) = (data.train_split(), data.test_split());
    let views = data.manifest.views.clone();
    let report = match a.protocol.as_str() {
        "recognition" => {
            let (tr, te, name) = match a.layer.as_deref() {
                Some("pixels") => (FeatureSet::pixels(&train)?, FeatureSet::pixels(&test)?, "pixels".to_string()),
                other => {
                    let layer = match other {
                        Some(s) => s.parse().map_err(|_| usage(format!("--layer `{s}` is not pixels or an index")))?,
                        None => params.arch.identity_depth() - 1,
                    };
                    if layer >= params.arch.layers.len() {
                        return Err(usage(format!("network has {} hidden layers", params.arch.layers.len())));
                    }
                    (
                        layer_features(&params, &train, layer)?,
                        layer_features(&params, &test, layer)?,
                        format!("h{}", layer + 1),
                    )
                }
            };
            let mut r = recognition_protocol(&tr, &te, &views)?;
            r.push_meta("features", name);
            r
        }
        "recon-quality" => reconstruction_quality(&params, &train, &test, a.samples, a.seed)?,
        "view-error" => {
            let mut r = view_estimation_error(&params, &test, a.samples, a.seed)?;
            let lr = lr_baseline(&train, &test)?;
            r.rows.extend(lr.rows);
            let ratio = r.rows[0].average / r.rows[1].average;
            r.push_scalar("mvp_over_lr", ratio);
            r
        }
        _ => interpolation_report(&params, &data, a.samples, a.seed)?,
    };
    Ok(report)
}

fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let report = eval_report(a)?;
    let out = a.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", a.protocol)));
    report.write(&out)?;
    print!("{}", report.to_csv());
    print!("{}", report.summary());
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> CliResult<()> {
    let report = run_gradcheck(a.seed)?;
    for e in &report.entries {
        println!("{:<10} {:<10} {:<8} {:.3e}", e.objective, e.head, e.tensor, e.max_rel_error);
    }
    println!("max relative error: {:.3e} (tolerance {GRADCHECK_TOL:e})", report.max_error());
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Verify("gradient check failed".into()))
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::Train(a) => cmd_train(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::EstimateView(a) => cmd_estimate_view(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::ConfigKeys => {
            for (k, doc) in config::KEYS {
                println!("{k:<14} {doc}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mvp::checkpoint::Checkpoint;

    #[test]
    fn held_out_identity_default() {
        assert_eq!(default_train_identities(50), 30);
        assert_eq!(default_train_identities(2), 1);
        assert_eq!(default_train_identities(100), 80);
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        let io = MvpError::Io {
            path: "x".into(),
            source: std::io::Error::other("gone"),
        };
        assert_eq!(CliError::from(io).code(), 2);
        assert_eq!(CliError::from(MvpError::Checksum { stored: 1, computed: 2 }).code(), 3);
        assert_eq!(CliError::from(MvpError::Contract("bad".into())).code(), 1);
    }

    #[test]
    fn checkpoints_are_named_by_epoch() {
        assert_eq!(checkpoint_path(Path::new("r"), 3), PathBuf::from("r/ckpt_epoch3.mvpc"));
    }

    #[test]
    fn weights_only_checkpoint_is_accepted_for_inference() {
        let arch = "4-3(2)-4[2]".parse().unwrap();
        let p = Parameters::init(&arch, 1).unwrap();
        let bytes = encode_checkpoint(&Checkpoint::weights_only(p.clone()));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.mvpc");
        fs::write(&path, bytes).unwrap();
        assert_eq!(load_params(&path).unwrap(), p);
    }
}
