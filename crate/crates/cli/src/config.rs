//! Flat `key = value` configuration with `[section]` headers.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are looked up as
//! `section.key`; the resolved configuration is written back in the same
//! format so an echo file can be fed to `--config` again.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use tumorscope::classifiers::ClassifierConfig;
use tumorscope::cnn::{ConvSpec, ModelSpec, TrainConfig};
use tumorscope::dataset::Layout;
use tumorscope::gradcam::Upsample;

#[derive(Debug, thiserror::Error)]
#[error("config line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data_root: Option<PathBuf>,
    pub layout: Layout,
    pub target_size: usize,
    pub split_fraction: f64,
    pub split_seed: u64,
    /// Images per class to generate instead of reading `data_root`.
    pub synthetic: Option<usize>,
    pub synthetic_size: usize,
    pub synthetic_seed: u64,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub classifiers: ClassifierConfig,
    pub search_trials: usize,
    pub search_epochs: usize,
    pub overlay_alpha: f32,
    pub upsample: Upsample,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_root: None,
            layout: Layout::default(),
            target_size: 32,
            split_fraction: 0.8,
            split_seed: 42,
            synthetic: None,
            synthetic_size: 64,
            synthetic_seed: 42,
            model: ModelSpec::default(),
            train: TrainConfig::default(),
            classifiers: ClassifierConfig::default(),
            search_trials: 10,
            search_epochs: 5,
            overlay_alpha: 0.5,
            upsample: Upsample::Bilinear,
        }
    }
}

fn parse<T: FromStr>(value: &str, line: usize) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError {
        line,
        message: format!("cannot parse {value:?}"),
    })
}

fn parse_list(value: &str, line: usize) -> Result<Vec<usize>, ConfigError> {
    value.split(',').map(|v| parse(v.trim(), line)).collect()
}

fn parse_bool(value: &str, line: usize) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError {
            line,
            message: format!("expected true or false, got {value:?}"),
        }),
    }
}

fn list(values: impl IntoIterator<Item = usize>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies every assignment in `text` on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError {
                    line,
                    message: format!("expected key = value, got {content:?}"),
                });
            };
            self.set(&format!("{section}.{}", key.trim()), value.trim(), line)?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, v: &str, line: usize) -> Result<(), ConfigError> {
        let c = &mut self.classifiers;
        match key {
            "data.root" => self.data_root = (!v.is_empty()).then(|| PathBuf::from(v)),
            "data.positive" => self.layout.positive = v.to_string(),
            "data.negative" => self.layout.negative = v.to_string(),
            "data.target_size" => self.target_size = parse(v, line)?,
            "data.split_fraction" => self.split_fraction = parse(v, line)?,
            "data.split_seed" => self.split_seed = parse(v, line)?,
            "data.synthetic" => self.synthetic = if v == "none" { None } else { Some(parse(v, line)?) },
            "data.synthetic_size" => self.synthetic_size = parse(v, line)?,
            "data.synthetic_seed" => self.synthetic_seed = parse(v, line)?,
            "model.filters" => {
                let filters = parse_list(v, line)?;
                let kernels: Vec<usize> = self.model.convs.iter().map(|c| c.kernel).collect();
                self.model.convs = filters
                    .iter()
                    .enumerate()
                    .map(|(i, &f)| ConvSpec::same(f, kernels.get(i).copied().unwrap_or(3)))
                    .collect();
            }
            "model.kernels" => {
                let kernels = parse_list(v, line)?;
                if kernels.len() != self.model.convs.len() {
                    return Err(ConfigError {
                        line,
                        message: format!("expected {} kernel sizes", self.model.convs.len()),
                    });
                }
                for (c, k) in self.model.convs.iter_mut().zip(kernels) {
                    *c = ConvSpec::same(c.filters, k);
                }
            }
            "model.pool_window" => self.model.pool_window = parse(v, line)?,
            "model.pool_stride" => self.model.pool_stride = parse(v, line)?,
            "model.dropout" => self.model.dropout = parse(v, line)?,
            "model.bn_momentum" => self.model.bn_momentum = parse(v, line)?,
            "model.bn_eps" => self.model.bn_eps = parse(v, line)?,
            "train.epochs" => self.train.epochs = parse(v, line)?,
            "train.batch_size" => self.train.batch_size = parse(v, line)?,
            "train.learning_rate" => self.train.learning_rate = parse(v, line)?,
            "train.seed" => self.train.seed = parse(v, line)?,
            "train.deterministic" => self.train.deterministic = parse_bool(v, line)?,
            "train.checkpoint_interval" => self.train.checkpoint_interval = parse(v, line)?,
            "classifiers.knn_k" => c.knn_k = parse(v, line)?,
            "classifiers.logistic_l2" => c.logistic.l2 = parse(v, line)?,
            "classifiers.logistic_learning_rate" => c.logistic.learning_rate = parse(v, line)?,
            "classifiers.logistic_epochs" => c.logistic.epochs = parse(v, line)?,
            "classifiers.svm_c" => c.svm.c = parse(v, line)?,
            "classifiers.svm_learning_rate" => c.svm.learning_rate = parse(v, line)?,
            "classifiers.svm_epochs" => c.svm.epochs = parse(v, line)?,
            "classifiers.forest_trees" => c.forest.n_trees = parse(v, line)?,
            "classifiers.forest_max_depth" => {
                c.forest.max_depth = if v == "none" { None } else { Some(parse(v, line)?) }
            }
            "classifiers.forest_bootstrap" => c.forest.bootstrap = parse_bool(v, line)?,
            "classifiers.forest_seed" => c.forest.seed = parse(v, line)?,
            "classifiers.mlp_hidden" => c.mlp.hidden = parse_list(v, line)?,
            "classifiers.mlp_epochs" => c.mlp.epochs = parse(v, line)?,
            "classifiers.mlp_learning_rate" => c.mlp.learning_rate = parse(v, line)?,
            "classifiers.mlp_seed" => c.mlp.seed = parse(v, line)?,
            "search.trials" => self.search_trials = parse(v, line)?,
            "search.budget_epochs" => self.search_epochs = parse(v, line)?,
            "localize.alpha" => self.overlay_alpha = parse(v, line)?,
            "localize.upsample" => {
                self.upsample = match v {
                    "bilinear" => Upsample::Bilinear,
                    "nearest" => Upsample::Nearest,
                    _ => {
                        return Err(ConfigError {
                            line,
                            message: format!("upsample must be bilinear or nearest, got {v:?}"),
                        })
                    }
                }
            }
            _ => {
                return Err(ConfigError {
                    line,
                    message: format!("unknown key {key}"),
                })
            }
        }
        Ok(())
    }

    /// Sets every seed at once.
    pub fn set_seed(&mut self, seed: u64) {
        self.split_seed = seed;
        self.synthetic_seed = seed;
        self.train.seed = seed;
        self.classifiers.forest.seed = seed;
        self.classifiers.mlp.seed = seed;
    }

    /// The fully resolved configuration in file form.
    pub fn to_text(&self) -> String {
        let c = &self.classifiers;
        let mut s = String::new();
        let _ = writeln!(s, "[data]");
        let root = self.data_root.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let _ = writeln!(s, "root = {root}");
        let _ = writeln!(s, "positive = {}", self.layout.positive);
        let _ = writeln!(s, "negative = {}", self.layout.negative);
        let _ = writeln!(s, "target_size = {}", self.target_size);
        let _ = writeln!(s, "split_fraction = {}", self.split_fraction);
        let _ = writeln!(s, "split_seed = {}", self.split_seed);
        let synthetic = self.synthetic.map_or("none".to_string(), |n| n.to_string());
        let _ = writeln!(s, "synthetic = {synthetic}");
        let _ = writeln!(s, "synthetic_size = {}", self.synthetic_size);
        let _ = writeln!(s, "synthetic_seed = {}", self.synthetic_seed);
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "filters = {}", list(self.model.convs.iter().map(|c| c.filters)));
        let _ = writeln!(s, "kernels = {}", list(self.model.convs.iter().map(|c| c.kernel)));
        let _ = writeln!(s, "pool_window = {}", self.model.pool_window);
        let _ = writeln!(s, "pool_stride = {}", self.model.pool_stride);
        let _ = writeln!(s, "dropout = {}", self.model.dropout);
        let _ = writeln!(s, "bn_momentum = {}", self.model.bn_momentum);
        let _ = writeln!(s, "bn_eps = {}", self.model.bn_eps);
        let _ = writeln!(s, "\n[train]");
        let _ = writeln!(s, "epochs = {}", self.train.epochs);
        let _ = writeln!(s, "batch_size = {}", self.train.batch_size);
        let _ = writeln!(s, "learning_rate = {}", self.train.learning_rate);
        let _ = writeln!(s, "seed = {}", self.train.seed);
        let _ = writeln!(s, "deterministic = {}", self.train.deterministic);
        let _ = writeln!(s, "checkpoint_interval = {}", self.train.checkpoint_interval);
        let _ = writeln!(s, "\n[classifiers]");
        let _ = writeln!(s, "knn_k = {}", c.knn_k);
        let _ = writeln!(s, "logistic_l2 = {}", c.logistic.l2);
        let _ = writeln!(s, "logistic_learning_rate = {}", c.logistic.learning_rate);
        let _ = writeln!(s, "logistic_epochs = {}", c.logistic.epochs);
        let _ = writeln!(s, "svm_c = {}", c.svm.c);
        let _ = writeln!(s, "svm_learning_rate = {}", c.svm.learning_rate);
        let _ = writeln!(s, "svm_epochs = {}", c.svm.epochs);
        let _ = writeln!(s, "forest_trees = {}", c.forest.n_trees);
        let depth = c.forest.max_depth.map_or("none".to_string(), |d| d.to_string());
        let _ = writeln!(s, "forest_max_depth = {depth}");
        let _ = writeln!(s, "forest_bootstrap = {}", c.forest.bootstrap);
        let _ = writeln!(s, "forest_seed = {}", c.forest.seed);
        let _ = writeln!(s, "mlp_hidden = {}", list(c.mlp.hidden.iter().copied()));
        let _ = writeln!(s, "mlp_epochs = {}", c.mlp.epochs);
        let _ = writeln!(s, "mlp_learning_rate = {}", c.mlp.learning_rate);
        let _ = writeln!(s, "mlp_seed = {}", c.mlp.seed);
        let _ = writeln!(s, "\n[search]");
        let _ = writeln!(s, "trials = {}", self.search_trials);
        let _ = writeln!(s, "budget_epochs = {}", self.search_epochs);
        let _ = writeln!(s, "\n[localize]");
        let _ = writeln!(s, "alpha = {}", self.overlay_alpha);
        let upsample = match self.upsample {
            Upsample::Bilinear => "bilinear",
            Upsample::Nearest => "nearest",
        };
        let _ = writeln!(s, "upsample = {upsample}");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("[train]\nepochs = 3\n[model]\nfilters = 8,8,16,16\nkernels = 3,5,3,3\n[classifiers]\nforest_max_depth = none\nmlp_hidden = 32,16\n")
            .unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.model.convs[1], ConvSpec::same(8, 5));
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("[train]\n\nepochs = three\n").unwrap_err();
        assert_eq!(err.line, 3);
        let err = cfg.apply_text("[train]\nbogus = 1\n").unwrap_err();
        assert!(err.message.contains("train.bogus"));
        assert!(cfg.apply_text("no equals sign").is_err());
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("# comment\n\n[data]\n  target_size = 16  \n").unwrap();
        assert_eq!(cfg.target_size, 16);
    }
}
