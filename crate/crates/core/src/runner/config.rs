use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{BackendId, BackendSpec, HyperParamOverrides};
use crate::corpus::Format;
use crate::fusion::{FusionConfig, DEFAULT_THRESHOLD};
use crate::textprep::CleanConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunId {
    Run1Fusion,
    Run2Mono,
    Run3Multi,
    Run4Lstm,
}

impl RunId {
    pub fn required_backends(self) -> &'static [BackendId] {
        match self {
            RunId::Run1Fusion => &BackendId::ALL,
            RunId::Run2Mono => &[BackendId::TransformerMono],
            RunId::Run3Multi => &[BackendId::TransformerMulti],
            RunId::Run4Lstm => &[BackendId::LstmCustom],
        }
    }

    pub fn is_fusion(self) -> bool {
        self == RunId::Run1Fusion
    }
}

impl fmt::Display for RunId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunId::Run1Fusion => "run1_fusion",
            RunId::Run2Mono => "run2_mono",
            RunId::Run3Multi => "run3_multi",
            RunId::Run4Lstm => "run4_lstm",
        })
    }
}

/// Where the three splits come from. Missing test or validation files are
/// carved out of the training file with a seeded split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub train: PathBuf,
    #[serde(default)]
    pub validation: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    /// Posts held out for validation when no validation file is given.
    /// Defaults to 20% of what remains after the test split.
    #[serde(default)]
    pub validation_size: Option<usize>,
    /// Posts held out for testing when no test file is given.
    #[serde(default)]
    pub test_size: Option<usize>,
    #[serde(default)]
    pub stratified: bool,
    /// Input format; guessed from each file's extension when absent.
    #[serde(default)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    #[default]
    Equal,
    Merit,
    Weights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSettings {
    #[serde(default)]
    pub mode: FusionMode,
    /// Per-model weights keyed by short model id (`mono`, `multi`, `lstm`);
    /// required in `weights` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<String, f64>>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl Default for FusionSettings {
    fn default() -> Self {
        Self {
            mode: FusionMode::Equal,
            weights: None,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BackendEntry {
    backend_id: BackendId,
    #[serde(default)]
    checkpoint_id: Option<String>,
    #[serde(default)]
    hyperparams: HyperParamOverrides,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    run_id: RunId,
    #[serde(default)]
    seed: u64,
    out_dir: PathBuf,
    data: DataConfig,
    #[serde(default)]
    clean: CleanConfig,
    #[serde(default)]
    backends: Vec<BackendEntry>,
    #[serde(default)]
    fusion: Option<FusionSettings>,
    #[serde(default = "default_threshold")]
    threshold: f64,
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
}

/// A fully resolved run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: RunId,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub clean: CleanConfig,
    pub backends: Vec<BackendSpec>,
    /// Present for the fusion run only.
    pub fusion: Option<FusionSettings>,
    /// Decision threshold for single-model runs.
    pub threshold: f64,
}

impl RunConfig {
    /// Builds a config with default backends for `run_id`. Backend seeds
    /// follow the run seed.
    pub fn new(run_id: RunId, data: DataConfig, out_dir: impl Into<PathBuf>, seed: u64) -> Self {
        let backends = run_id
            .required_backends()
            .iter()
            .map(|&b| {
                let mut spec = BackendSpec::with_defaults(b);
                spec.hyperparams.seed = seed;
                spec
            })
            .collect();
        Self {
            run_id,
            seed,
            out_dir: out_dir.into(),
            data,
            clean: CleanConfig::default(),
            backends,
            fusion: run_id.is_fusion().then(FusionSettings::default),
            threshold: DEFAULT_THRESHOLD,
        }
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text, base, overrides)
    }

    /// Parses TOML; relative data paths and `out_dir` are taken relative to
    /// `base`. An `out_dir` override is used as given.
    pub fn from_toml(text: &str, base: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let file: RunConfigFile = toml::from_str(text)?;
        let rebase = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        };
        let seed = overrides.seed.unwrap_or(file.seed);
        let out_dir = overrides
            .out_dir
            .clone()
            .unwrap_or_else(|| rebase(&file.out_dir));
        let mut data = file.data;
        data.train = rebase(&data.train);
        data.validation = data.validation.as_deref().map(rebase);
        data.test = data.test.as_deref().map(rebase);

        let entries = if file.backends.is_empty() {
            file.run_id
                .required_backends()
                .iter()
                .map(|&b| BackendEntry {
                    backend_id: b,
                    checkpoint_id: None,
                    hyperparams: HyperParamOverrides::default(),
                })
                .collect()
        } else {
            file.backends
        };
        let backends = entries
            .into_iter()
            .map(|e| {
                let mut defaults = crate::backends::HyperParams::defaults_for(e.backend_id);
                defaults.seed = seed;
                BackendSpec {
                    backend_id: e.backend_id,
                    checkpoint_id: e
                        .checkpoint_id
                        .unwrap_or_else(|| e.backend_id.default_checkpoint().to_string()),
                    hyperparams: e.hyperparams.apply(defaults),
                }
            })
            .collect();

        let fusion = if file.run_id.is_fusion() {
            Some(file.fusion.unwrap_or_default())
        } else {
            if file.fusion.is_some() {
                return Err(ConfigError::Invalid(format!(
                    "[fusion] is only valid for run1_fusion, not {}",
                    file.run_id
                )));
            }
            None
        };

        let config = Self {
            run_id: file.run_id,
            seed,
            out_dir,
            data,
            clean: file.clean,
            backends,
            fusion,
            threshold: file.threshold,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut have: Vec<BackendId> = self.backends.iter().map(|b| b.backend_id).collect();
        have.sort();
        let mut want = self.run_id.required_backends().to_vec();
        want.sort();
        if have != want {
            return Err(ConfigError::Invalid(format!(
                "{} needs backends {:?}, config lists {:?}",
                self.run_id, want, have
            )));
        }
        for spec in &self.backends {
            spec.validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if let Some(f) = &self.fusion {
            if f.mode == FusionMode::Weights {
                let weights = f.weights.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("fusion mode \"weights\" needs [fusion.weights]".into())
                })?;
                let cfg = FusionConfig {
                    weights: weights.clone(),
                    threshold: f.threshold,
                };
                cfg.validate()
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                let names: Vec<&str> = self.backends.iter().map(|b| b.backend_id.short_name()).collect();
                if weights.len() != names.len() || !names.iter().all(|n| weights.contains_key(*n)) {
                    return Err(ConfigError::Invalid(format!(
                        "fusion weights must name exactly {names:?}"
                    )));
                }
            } else if !(f.threshold > 0.0 && f.threshold < 1.0) {
                return Err(ConfigError::Invalid(format!(
                    "fusion threshold must lie in (0, 1), got {}",
                    f.threshold
                )));
            }
        }
        Ok(())
    }

    /// The threshold that turns final scores into labels.
    pub fn decision_threshold(&self) -> f64 {
        self.fusion
            .as_ref()
            .map(|f| f.threshold)
            .unwrap_or(self.threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RUN4: &str = r#"
run_id = "run4_lstm"
seed = 7
out_dir = "runs/run4"

[data]
train = "data/corpus.jsonl"
test_size = 100

[[backends]]
backend_id = "lstm_custom"
hyperparams = { epochs = 4, lstm_units = 16 }
"#;

    #[test]
    fn parses_and_rebases_paths() {
        let c = RunConfig::from_toml(RUN4, Path::new("/cfg"), &Overrides::default()).unwrap();
        assert_eq!(c.run_id, RunId::Run4Lstm);
        assert_eq!(c.data.train, PathBuf::from("/cfg/data/corpus.jsonl"));
        assert_eq!(c.out_dir, PathBuf::from("/cfg/runs/run4"));
        let hp = &c.backends[0].hyperparams;
        assert_eq!((hp.epochs, hp.lstm_units, hp.seed, hp.batch_size), (4, 16, 7, 32));
        assert!(c.fusion.is_none());
        assert_eq!(c.backends[0].checkpoint_id, "");
    }

    #[test]
    fn cli_overrides_win() {
        let o = Overrides {
            seed: Some(99),
            out_dir: Some(PathBuf::from("elsewhere")),
        };
        let c = RunConfig::from_toml(RUN4, Path::new("/cfg"), &o).unwrap();
        assert_eq!(c.seed, 99);
        assert_eq!(c.backends[0].hyperparams.seed, 99);
        assert_eq!(c.out_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn backend_count_must_match_run() {
        let bad = RUN4.replace("run4_lstm", "run2_mono");
        let err = RunConfig::from_toml(&bad, Path::new(""), &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("needs backends"), "{err}");

        let fusion = "run_id = \"run1_fusion\"\nout_dir = \"o\"\n[data]\ntrain = \"t.jsonl\"\n";
        let c = RunConfig::from_toml(fusion, Path::new(""), &Overrides::default()).unwrap();
        assert_eq!(c.backends.len(), 3);
        assert_eq!(c.fusion, Some(FusionSettings::default()));
    }

    #[test]
    fn weights_mode_needs_all_models() {
        let text = "run_id = \"run1_fusion\"\nout_dir = \"o\"\n[data]\ntrain = \"t.jsonl\"\n\
                    [fusion]\nmode = \"weights\"\nweights = { mono = 1.0, lstm = 0.0 }\n";
        assert!(RunConfig::from_toml(text, Path::new(""), &Overrides::default()).is_err());
        let text = text.replace("lstm = 0.0", "lstm = 0.0, multi = 0.0");
        let c = RunConfig::from_toml(&text, Path::new(""), &Overrides::default()).unwrap();
        assert_eq!(c.fusion.unwrap().mode, FusionMode::Weights);
    }

    #[test]
    fn fusion_section_rejected_for_single_runs() {
        let text = format!("{RUN4}\n[fusion]\nmode = \"equal\"\n");
        assert!(RunConfig::from_toml(&text, Path::new(""), &Overrides::default()).is_err());
    }
}
