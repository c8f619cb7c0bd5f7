//! File-backed run configuration. Flags override the file, which overrides
//! the built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::dataio::SynthConfig;
use crate::inference::{WindowSpec, DEFAULT_THRESHOLD};
use crate::training::TrainConfig;

/// Environment variable naming the default run directory.
pub const RUN_DIR_ENV: &str = "TAMPERLOC_RUN_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub root: Option<PathBuf>,
    pub train_frac: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            root: None,
            train_frac: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n: usize,
    pub size: usize,
    /// Noise, trace and area ranges of the generator.
    pub params: SynthConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            n: 200,
            size: 128,
            params: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub threshold: f64,
    pub qfs: Vec<u8>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            qfs: vec![75],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub run_dir: Option<PathBuf>,
    pub data: DataSection,
    pub synth: SynthSection,
    pub train: TrainConfig,
    pub window: WindowSpec,
    pub eval: EvalSection,
}

impl RunConfig {
    /// Reads `path` when given, otherwise returns the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    /// Run directory from the flag, the file, or the environment, in that order.
    pub fn resolve_run_dir(&self, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        flag.or_else(|| self.run_dir.clone())
            .or_else(|| std::env::var_os(RUN_DIR_ENV).map(PathBuf::from))
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "no run directory: pass --run-dir or set {RUN_DIR_ENV}"
                ))
            })
    }

    pub fn resolve_data_root(&self, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        flag.or_else(|| self.data.root.clone())
            .ok_or_else(|| CliError::Usage("no dataset: pass --data".into()))
    }

    pub fn resolve_seed(&self, flag: Option<u64>) -> Result<u64, CliError> {
        flag.or(self.seed)
            .ok_or_else(|| CliError::Usage("a seed is required: pass --seed".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_sections_parse() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 3
            [train]
            epochs = 4
            degradation = { mode = "uniform", lo = 70, hi = 100 }
            [window]
            window = 256
            stride = 128
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.train.epochs, 4);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert_eq!(
            cfg.window,
            WindowSpec {
                window: 256,
                stride: 128
            }
        );
        assert_eq!(cfg.eval, EvalSection::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "colour = 1\n",
            "[window]\nwidth = 3\n",
            "[train]\nepoch = 3\n",
            "[train.weights]\nlambda = 1.0\n",
            "[train.restoration]\nbase_width = 4\ndepth = 2\nresidual = true\nextra = 1\n",
            "[synth.params]\nnoise = 0.1\n",
        ] {
            assert!(toml::from_str::<RunConfig>(text).is_err(), "{text}");
        }
    }
}
