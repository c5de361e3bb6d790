//! Training run configuration: defaults, an optional `key = value` file,
//! then command-line overrides.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mvp::model::{Architecture, ViewHeadKind};
use mvp::synthdata::MANIFEST_FILE;
use mvp::training::{GradMode, OptimizerKind, TrainConfig};

pub const DEFAULT_ARCH: &str = "32x32-512-512(10)-512(10)-1024-32x32[7]";

/// Every key accepted in a config file, with its meaning.
pub const KEYS: &[(&str, &str)] = &[
    ("data_root", "directory holding the dataset (default: data)"),
    ("manifest", "manifest path (default: <data_root>/manifest.txt)"),
    ("out_dir", "where checkpoints and metrics go (default: run)"),
    ("arch", "network size string (default: 32x32-512-512(10)-512(10)-1024-32x32[7])"),
    ("view_head", "discrete | continuous; overrides the head in `arch` (default: from arch)"),
    ("samples", "view samples per pair and step (default: 20)"),
    ("grad_mode", "one-sample | weighted (default: one-sample)"),
    ("optimizer", "sgd | adam (default: sgd)"),
    ("learning_rate", "step size (default: 0.05)"),
    ("momentum", "SGD momentum or Adam beta1 (default: 0.9)"),
    ("epochs", "total epochs to reach (default: 100)"),
    ("batch_size", "pairs per update (default: 16)"),
    ("seed", "seed for initialization and sampling (default: 0)"),
    ("sigma_y", "pixel noise std (default: 1)"),
    ("sigma_v", "continuous view head std (default: 0.1)"),
    ("unsupervised", "true | false: train without view labels (default: false)"),
    ("clusters", "view clusters for the label-free initialization (default: 7)"),
    ("sigma_tilde", "std of the label-free view prior (default: 0.3)"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_root: PathBuf,
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub arch: String,
    pub view_head: Option<String>,
    pub train: TrainConfig,
    pub unsupervised: bool,
    pub clusters: usize,
    pub sigma_tilde: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_root: PathBuf::from("data"),
            manifest: None,
            out_dir: PathBuf::from("run"),
            arch: DEFAULT_ARCH.to_string(),
            view_head: None,
            train: TrainConfig::default(),
            unsupervised: false,
            clusters: 7,
            sigma_tilde: 0.3,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value `{value}` for `{key}`"))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        let t = &mut self.train;
        match key {
            "data_root" => self.data_root = PathBuf::from(value),
            "manifest" => self.manifest = Some(PathBuf::from(value)),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "arch" => {
                value
                    .parse::<Architecture>()
                    .map_err(|e| format!("invalid arch `{value}`: {e}"))?;
                self.arch = value.to_string();
            }
            "view_head" => match value {
                "discrete" | "continuous" => self.view_head = Some(value.to_string()),
                _ => return Err(format!("view_head must be discrete or continuous, got `{value}`")),
            },
            "samples" => t.samples = num(key, value)?,
            "grad_mode" => {
                t.mode = match value {
                    "one-sample" => GradMode::OneSample,
                    "weighted" => GradMode::WeightedAverage,
                    _ => return Err(format!("grad_mode must be one-sample or weighted, got `{value}`")),
                }
            }
            "optimizer" => {
                t.optimizer = match value {
                    "sgd" => OptimizerKind::Sgd,
                    "adam" => OptimizerKind::Adam,
                    _ => return Err(format!("optimizer must be sgd or adam, got `{value}`")),
                }
            }
            "learning_rate" => t.learning_rate = num(key, value)?,
            "momentum" => t.momentum = num(key, value)?,
            "epochs" => t.epochs = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "sigma_y" => t.sigma_y = num(key, value)?,
            "sigma_v" => t.sigma_v = num(key, value)?,
            "unsupervised" => self.unsupervised = num(key, value)?,
            "clusters" => self.clusters = num(key, value)?,
            "sigma_tilde" => self.sigma_tilde = num(key, value)?,
            _ => return Err(format!("unknown config key `{key}`")),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
            self.set(k.trim(), v).map_err(|e| format!("line {}: {e}", i + 1))?;
        }
        Ok(())
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.manifest
            .clone()
            .unwrap_or_else(|| self.data_root.join(MANIFEST_FILE))
    }

    /// The architecture with the requested view head, sized for `views` when
    /// the head is discrete.
    pub fn architecture(&self, views: usize) -> Result<Architecture, String> {
        let mut arch: Architecture = self.arch.parse().map_err(|e| format!("{e}"))?;
        match self.view_head.as_deref() {
            Some("continuous") => arch.view_head = ViewHeadKind::Continuous,
            Some("discrete") => arch.view_head = ViewHeadKind::Discrete(views),
            _ => {}
        }
        if self.unsupervised && arch.view_head != ViewHeadKind::Continuous {
            return Err("unsupervised training needs the continuous view head".into());
        }
        Ok(arch)
    }

    /// Resolved settings as a config file that reproduces this run.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let _ = writeln!(s, "data_root = {}", self.data_root.display());
        let _ = writeln!(s, "manifest = {}", self.manifest_path().display());
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(s, "arch = {}", self.arch);
        if let Some(h) = &self.view_head {
            let _ = writeln!(s, "view_head = {h}");
        }
        let _ = writeln!(s, "samples = {}", t.samples);
        let mode = match t.mode {
            GradMode::OneSample => "one-sample",
            GradMode::WeightedAverage => "weighted",
        };
        let _ = writeln!(s, "grad_mode = {mode}");
        let opt = match t.optimizer {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        };
        let _ = writeln!(s, "optimizer = {opt}");
        let _ = writeln!(s, "learning_rate = {}", t.learning_rate);
        let _ = writeln!(s, "momentum = {}", t.momentum);
        let _ = writeln!(s, "epochs = {}", t.epochs);
        let _ = writeln!(s, "batch_size = {}", t.batch_size);
        let _ = writeln!(s, "seed = {}", t.seed);
        let _ = writeln!(s, "sigma_y = {}", t.sigma_y);
        let _ = writeln!(s, "sigma_v = {}", t.sigma_v);
        let _ = writeln!(s, "unsupervised = {}", self.unsupervised);
        let _ = writeln!(s, "clusters = {}", self.clusters);
        let _ = writeln!(s, "sigma_tilde = {}", self.sigma_tilde);
        s
    }
}

/// Defaults, then the file (if any), then `overrides` in order.
pub fn resolve(file: Option<&Path>, overrides: &[(&str, String)]) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        cfg.apply_text(&text)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
    }
    for (k, v) in overrides {
        cfg.set(k, v).map_err(ConfigError::Invalid)?;
    }
    cfg.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(cfg)
}

#[derive(Debug)]
pub enum ConfigError {
    Io(PathBuf, std::io::Error),
    Invalid(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_is_settable_and_documented() {
        let cfg = RunConfig::default();
        let text = cfg.to_text();
        let mut again = RunConfig::default();
        again.apply_text(&text).unwrap();
        assert_eq!(again.manifest, Some(PathBuf::from("data/manifest.txt")));
        for line in text.lines() {
            let key = line.split('=').next().unwrap().trim();
            assert!(KEYS.iter().any(|(k, _)| *k == key), "{key}");
        }
    }

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nepochs = 7\nlearning_rate = 0.01 # inline\ngrad_mode = weighted\n").unwrap();
        let cfg = resolve(Some(&path), &[("epochs", "3".into())]).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert_eq!(cfg.train.mode, GradMode::WeightedAverage);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let mut cfg = RunConfig::default();
        assert!(cfg.apply_text("epoch = 3").unwrap_err().contains("unknown config key"));
        assert!(cfg.apply_text("samples = many").is_err());
        assert!(cfg.apply_text("no equals sign").unwrap_err().contains("line 1"));
        assert!(cfg.set("arch", "not-an-arch").is_err());
        assert!(matches!(resolve(None, &[("samples", "0".into())]), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn view_head_override() {
        let mut cfg = RunConfig::default();
        cfg.set("view_head", "discrete").unwrap();
        assert_eq!(cfg.architecture(5).unwrap().view_head, ViewHeadKind::Discrete(5));
        cfg.set("view_head", "continuous").unwrap();
        assert_eq!(cfg.architecture(5).unwrap().view_head, ViewHeadKind::Continuous);
        let mut un = RunConfig::default();
        un.set("unsupervised", "true").unwrap();
        assert!(un.architecture(7).is_err());
    }
}
