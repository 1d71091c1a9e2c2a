//! Sectioned `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! [train]
//! epochs = 2000
//! g_hidden = 64,64
//! [penalty]
//! kind = eps-centered
//! ```
//!
//! Every key name is unique across sections, so keys may also appear before
//! the first section header. A key under the wrong header is unknown there.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use licfg::cfg::{Penalty, PenaltyKind, TrainConfig};
use licfg::data::{grid_mixture, ring_mixture, GaussianMixture};
use licfg::neighborhood::NSizeOptions;
use licfg::nn::Activation;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown section [{name}] at line {line}")]
    UnknownSection { name: String, line: usize },
    #[error("unknown key `{key}` at line {line}")]
    UnknownKey { key: String, line: usize },
    #[error("duplicate key `{key}` at line {line}")]
    Duplicate { key: String, line: usize },
    #[error("expected number at line {line}")]
    ExpectedNumber { line: usize },
    #[error("expected non-negative integer at line {line}")]
    ExpectedInteger { line: usize },
    #[error("expected true or false at line {line}")]
    ExpectedBool { line: usize },
    #[error("invalid value at line {line}: {message}")]
    InvalidValue { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    Ring,
    Grid,
}

impl Dataset {
    pub fn name(self) -> &'static str {
        match self {
            Dataset::Ring => "ring",
            Dataset::Grid => "grid",
        }
    }

    pub fn mixture(self) -> GaussianMixture {
        match self {
            Dataset::Ring => ring_mixture(),
            Dataset::Grid => grid_mixture(),
        }
    }
}

impl FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ring" => Ok(Dataset::Ring),
            "grid" => Ok(Dataset::Grid),
            other => Err(format!("unknown dataset `{other}` (ring, grid)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NSizeSettings {
    pub options: NSizeOptions,
    pub seeds: Vec<u64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSettings {
    pub dir: PathBuf,
    /// Write measured wall time into the training log instead of zeros.
    pub wall_clock: bool,
    pub eval_samples: usize,
    pub min_count: usize,
    pub knn_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub train: TrainConfig,
    pub dataset: Dataset,
    pub nsize: NSizeSettings,
    pub output: OutputSettings,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            dataset: Dataset::Ring,
            nsize: NSizeSettings {
                options: NSizeOptions::default(),
                seeds: vec![0, 1, 2, 3, 4],
                alpha: 0.3,
            },
            output: OutputSettings {
                dir: PathBuf::from("out"),
                wall_clock: false,
                eval_samples: 2000,
                min_count: 10,
                knn_k: 3,
            },
        }
    }
}

const SECTIONS: [&str; 5] = ["train", "penalty", "data", "nsize", "output"];

fn home_section(key: &str) -> Option<&'static str> {
    Some(match key {
        "batch_size" | "d_updates" | "n_update" | "gen_steps" | "eta_m" | "delta" | "lr" | "adam_beta1"
        | "adam_beta2" | "latent_dim" | "g_hidden" | "d_hidden" | "g_activation" | "d_activation" | "epochs"
        | "seed" | "regression_steps" | "snapshot_interval" | "divergence_threshold" => "train",
        "kind" | "gamma" | "eps_norm" => "penalty",
        "dataset" => "data",
        "epsilon_hat" | "probes" | "z1_draws" | "nsize_seed" | "seeds" | "alpha" => "nsize",
        "dir" | "wall_clock" | "eval_samples" | "min_count" | "knn_k" => "output",
        _ => return None,
    })
}

fn number(v: &str, line: usize) -> Result<f64, ConfigError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(ConfigError::ExpectedNumber { line }),
    }
}

fn integer<T: FromStr>(v: &str, line: usize) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::ExpectedInteger { line })
}

fn boolean(v: &str, line: usize) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::ExpectedBool { line }),
    }
}

fn list<T: FromStr>(v: &str, line: usize) -> Result<Vec<T>, ConfigError> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| integer(s.trim(), line)).collect()
}

fn activation(v: &str, line: usize) -> Result<Activation, ConfigError> {
    Activation::parse(v).ok_or_else(|| ConfigError::InvalidValue {
        line,
        message: format!("unknown activation `{v}` (tanh, relu)"),
    })
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    None,
    One,
    Zero,
    Eps,
}

impl Kind {
    fn parse(v: &str, line: usize) -> Result<Self, ConfigError> {
        Ok(match v {
            "none" => Kind::None,
            "1-centered" | "c1" => Kind::One,
            "0-centered" | "c0" => Kind::Zero,
            "eps-centered" | "eps" => Kind::Eps,
            other => {
                return Err(ConfigError::InvalidValue {
                    line,
                    message: format!("unknown penalty kind `{other}` (none, 1-centered, 0-centered, eps-centered)"),
                })
            }
        })
    }
}

/// Parses configuration text; defaults fill every key not given.
pub fn parse_config_str(text: &str) -> Result<ConfigFile, ConfigError> {
    let mut cfg = ConfigFile::default();
    let (mut kind, mut gamma, mut eps_norm) = (Kind::Eps, 0.1, 0.3);
    let mut section: Option<&str> = None;
    let mut seen: Vec<String> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line,
                message: "unterminated section header".into(),
            })?;
            let name = name.trim();
            section = Some(SECTIONS.iter().copied().find(|s| *s == name).ok_or_else(|| {
                ConfigError::UnknownSection {
                    name: name.to_string(),
                    line,
                }
            })?);
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let (key, v) = (key.trim(), value.trim());
        match home_section(key) {
            Some(h) if section.is_none_or(|s| s == h) => {}
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                    line,
                })
            }
        }
        if seen.iter().any(|k| k == key) {
            return Err(ConfigError::Duplicate {
                key: key.to_string(),
                line,
            });
        }
        seen.push(key.to_string());

        let t = &mut cfg.train;
        match key {
            "batch_size" => t.batch_size = integer(v, line)?,
            "d_updates" => t.d_updates = integer(v, line)?,
            "n_update" => t.n_update = integer(v, line)?,
            "gen_steps" => t.gen_steps = integer(v, line)?,
            "eta_m" => t.eta_m = number(v, line)?,
            "delta" => t.delta = number(v, line)?,
            "lr" => t.lr = number(v, line)?,
            "adam_beta1" => t.adam_beta1 = number(v, line)?,
            "adam_beta2" => t.adam_beta2 = number(v, line)?,
            "latent_dim" => t.latent_dim = integer(v, line)?,
            "g_hidden" => t.g_hidden = list(v, line)?,
            "d_hidden" => t.d_hidden = list(v, line)?,
            "g_activation" => t.g_activation = activation(v, line)?,
            "d_activation" => t.d_activation = activation(v, line)?,
            "epochs" => t.epochs = integer(v, line)?,
            "seed" => t.seed = integer(v, line)?,
            "regression_steps" => t.regression_steps = integer(v, line)?,
            "snapshot_interval" => t.snapshot_interval = integer(v, line)?,
            "divergence_threshold" => t.divergence_threshold = number(v, line)?,
            "kind" => kind = Kind::parse(v, line)?,
            "gamma" => gamma = number(v, line)?,
            "eps_norm" => eps_norm = number(v, line)?,
            "dataset" => {
                cfg.dataset = v.parse().map_err(|message| ConfigError::InvalidValue { line, message })?
            }
            "epsilon_hat" => cfg.nsize.options.epsilon_hat = number(v, line)?,
            "probes" => cfg.nsize.options.probes = integer(v, line)?,
            "z1_draws" => cfg.nsize.options.z1_draws = integer(v, line)?,
            "nsize_seed" => cfg.nsize.options.seed = integer(v, line)?,
            "seeds" => cfg.nsize.seeds = list(v, line)?,
            "alpha" => cfg.nsize.alpha = number(v, line)?,
            "dir" => {
                if v.is_empty() {
                    return Err(ConfigError::InvalidValue {
                        line,
                        message: "empty output directory".into(),
                    });
                }
                cfg.output.dir = PathBuf::from(v)
            }
            "wall_clock" => cfg.output.wall_clock = boolean(v, line)?,
            "eval_samples" => cfg.output.eval_samples = integer(v, line)?,
            "min_count" => cfg.output.min_count = integer(v, line)?,
            "knn_k" => cfg.output.knn_k = integer(v, line)?,
            _ => unreachable!("home_section covers every key"),
        }
    }

    cfg.train.penalty = match kind {
        Kind::None => Penalty::none(),
        Kind::One => Penalty {
            kind: PenaltyKind::Centered1,
            gamma,
        },
        Kind::Zero => Penalty {
            kind: PenaltyKind::Centered0,
            gamma,
        },
        Kind::Eps => Penalty {
            kind: PenaltyKind::CenteredEps { eps_norm },
            gamma,
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ConfigFile, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg = parse_config_str(&text)?;
    log::info!("resolved configuration:\n{}", cfg.render());
    Ok(cfg)
}

impl ConfigFile {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let o = &self.nsize.options;
        if !(o.epsilon_hat > 0.0) {
            return Err(ConfigError::Invalid("epsilon_hat must be positive".into()));
        }
        if o.probes < 2 {
            return Err(ConfigError::Invalid("probes must be >= 2".into()));
        }
        if o.z1_draws == 0 {
            return Err(ConfigError::Invalid("z1_draws must be >= 1".into()));
        }
        if !(self.nsize.alpha > 0.0) {
            return Err(ConfigError::Invalid("alpha must be positive".into()));
        }
        let out = &self.output;
        if out.min_count == 0 || out.knn_k == 0 {
            return Err(ConfigError::Invalid("min_count and knn_k must be >= 1".into()));
        }
        if out.eval_samples <= out.knn_k {
            return Err(ConfigError::Invalid("eval_samples must exceed knn_k".into()));
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn render(&self) -> String {
        let t = &self.train;
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "[train]");
        for (k, v) in [
            ("batch_size", t.batch_size.to_string()),
            ("d_updates", t.d_updates.to_string()),
            ("n_update", t.n_update.to_string()),
            ("gen_steps", t.gen_steps.to_string()),
            ("eta_m", format!("{:?}", t.eta_m)),
            ("delta", format!("{:?}", t.delta)),
            ("lr", format!("{:?}", t.lr)),
            ("adam_beta1", format!("{:?}", t.adam_beta1)),
            ("adam_beta2", format!("{:?}", t.adam_beta2)),
            ("latent_dim", t.latent_dim.to_string()),
            ("g_hidden", join(&t.g_hidden)),
            ("d_hidden", join(&t.d_hidden)),
            ("g_activation", t.g_activation.name().to_string()),
            ("d_activation", t.d_activation.name().to_string()),
            ("epochs", t.epochs.to_string()),
            ("seed", t.seed.to_string()),
            ("regression_steps", t.regression_steps.to_string()),
            ("snapshot_interval", t.snapshot_interval.to_string()),
            ("divergence_threshold", format!("{:?}", t.divergence_threshold)),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "\n[penalty]");
        let p = &t.penalty;
        let _ = writeln!(s, "kind = {}", p.kind.label());
        if p.kind != PenaltyKind::None {
            let _ = writeln!(s, "gamma = {:?}", p.gamma);
        }
        if let PenaltyKind::CenteredEps { eps_norm } = p.kind {
            let _ = writeln!(s, "eps_norm = {eps_norm:?}");
        }
        let _ = writeln!(s, "\n[data]\ndataset = {}", self.dataset.name());
        let n = &self.nsize;
        let seeds = n.seeds.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(
            s,
            "\n[nsize]\nepsilon_hat = {:?}\nprobes = {}\nz1_draws = {}\nnsize_seed = {}\nseeds = {}\nalpha = {:?}",
            n.options.epsilon_hat, n.options.probes, n.options.z1_draws, n.options.seed, seeds, n.alpha
        );
        let o = &self.output;
        let _ = writeln!(
            s,
            "\n[output]\ndir = {}\nwall_clock = {}\neval_samples = {}\nmin_count = {}\nknn_k = {}",
            o.dir.display(),
            o.wall_clock,
            o.eval_samples,
            o.min_count,
            o.knn_k
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gives_defaults() {
        let c = parse_config_str("dataset = ring\n").unwrap();
        assert_eq!(c, ConfigFile::default());
        let t = &c.train;
        assert_eq!((t.batch_size, t.d_updates, t.n_update, t.gen_steps), (64, 1, 640, 15));
        assert_eq!(t.penalty.gamma, 0.1);
        assert_eq!(t.penalty.kind, PenaltyKind::CenteredEps { eps_norm: 0.3 });
    }

    #[test]
    fn sections_and_comments() {
        let c = parse_config_str(
            "# experiment\n[train]\nepochs = 5   # short\ng_hidden = 8, 8\n\n[penalty]\nkind = 0-centered\ngamma = 1\n[data]\ndataset = grid\n[output]\nwall_clock = true\n",
        )
        .unwrap();
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.train.g_hidden, vec![8, 8]);
        assert_eq!(c.train.penalty, Penalty { kind: PenaltyKind::Centered0, gamma: 1.0 });
        assert_eq!(c.dataset, Dataset::Grid);
        assert!(c.output.wall_clock);
    }

    #[test]
    fn type_errors_carry_line_numbers() {
        let e = parse_config_str("[penalty]\n\ngamma = high\n").unwrap_err();
        assert_eq!(e.to_string(), "expected number at line 3");
        let e = parse_config_str("epochs = 1.5").unwrap_err();
        assert!(matches!(e, ConfigError::ExpectedInteger { line: 1 }));
        let e = parse_config_str("gamma = inf").unwrap_err();
        assert!(matches!(e, ConfigError::ExpectedNumber { line: 1 }));
    }

    #[test]
    fn unknown_keys_and_sections() {
        let e = parse_config_str("unknown_key = 1").unwrap_err();
        assert!(e.to_string().contains("unknown key"));
        let e = parse_config_str("[train]\ngamma = 1").unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey { line: 2, .. }));
        assert!(matches!(parse_config_str("[model]"), Err(ConfigError::UnknownSection { .. })));
        assert!(matches!(parse_config_str("[train"), Err(ConfigError::Syntax { .. })));
        assert!(matches!(parse_config_str("epochs"), Err(ConfigError::Syntax { .. })));
        assert!(matches!(parse_config_str("epochs = 1\nepochs = 2"), Err(ConfigError::Duplicate { line: 2, .. })));
    }

    #[test]
    fn invalid_values() {
        assert!(matches!(parse_config_str("kind = 2-centered"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(parse_config_str("dataset = moons"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(parse_config_str("batch_size = 0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse_config_str("eps_norm = 0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse_config_str("wall_clock = yes"), Err(ConfigError::ExpectedBool { line: 1 })));
    }

    #[test]
    fn render_round_trips() {
        let mut c = ConfigFile::default();
        c.train.epochs = 17;
        c.train.eta_m = 0.1 + 0.2;
        c.train.penalty = Penalty { kind: PenaltyKind::Centered1, gamma: 10.0 };
        c.dataset = Dataset::Grid;
        c.nsize.seeds = vec![3, 9];
        assert_eq!(parse_config_str(&c.render()).unwrap(), c);
        let none = ConfigFile {
            train: TrainConfig { penalty: Penalty::none(), ..TrainConfig::default() },
            ..ConfigFile::default()
        };
        assert_eq!(parse_config_str(&none.render()).unwrap(), none);
    }
}
