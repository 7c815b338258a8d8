//! Line-oriented `key = value` pipeline configuration.
//!
//! Keys use dotted section prefixes (`gan.patience`, `eval.threshold`);
//! blank lines and `#` comments are skipped. Parsing is strict — unknown or
//! duplicate keys are errors — and every range violation is reported with
//! the full dotted path of the offending key, so a bad config pinpoints
//! itself.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key {path:?}")]
    UnknownKey { line: usize, path: String },
    #[error("line {line}: duplicate key {path:?}")]
    DuplicateKey { line: usize, path: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{path}: referenced file {file:?} does not exist")]
    MissingFile { path: String, file: PathBuf },
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
}

/// Everything the stages need, with defaults sized for the bundled toy
/// corpus (32 px spectrograms, 16 Hz line tone).
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub line_freq_hz: f64,
    pub image_size: usize,
    pub stft_window_s: f64,
    pub dataset: DatasetConfig,
    pub gan: GanSettings,
    pub sieve: SieveSettings,
    pub cesp: CespSettings,
    pub eval: EvalSettings,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetConfig {
    pub name: String,
    /// EDF recordings, parallel to `annotations`.
    pub recordings: Vec<PathBuf>,
    pub annotations: Vec<PathBuf>,
    /// Prepared corpus directories for the non-toy protocol stage.
    pub protocol_real: Option<PathBuf>,
    pub protocol_synthetic: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GanSettings {
    pub batch_size: usize,
    /// Consecutive discriminator-ahead batches before training stops;
    /// 0 disables early stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub sample_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SieveSettings {
    pub nu: f64,
    /// RBF width; `auto` (None) scales it from the feature variance.
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CespSettings {
    pub folds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub augmentation_factor: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub threshold: f64,
    pub sph_s: f64,
    pub sop_s: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            out_dir: PathBuf::from("runs/pf"),
            line_freq_hz: 16.0,
            image_size: 32,
            stft_window_s: 60.0,
            dataset: DatasetConfig { name: "toy".into(), ..DatasetConfig::default() },
            gan: GanSettings {
                batch_size: 32,
                patience: 15,
                learning_rate: 1e-3,
                max_epochs: 50,
                sample_count: 64,
            },
            sieve: SieveSettings { nu: 0.1, gamma: None },
            cesp: CespSettings {
                folds: 10,
                epochs: 20,
                batch_size: 16,
                learning_rate: 1e-3,
                augmentation_factor: 0,
            },
            eval: EvalSettings { threshold: 0.5, sph_s: 600.0, sop_s: 1800.0 },
        }
    }
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.into(), message: message.into() }
}

fn parse_num<T: std::str::FromStr>(path: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| invalid(path, format!("cannot parse {value:?} as a number")))
}

fn parse_paths(value: &str) -> Vec<PathBuf> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(PathBuf::from)
        .collect()
}

impl PipelineConfig {
    /// Apply one `key = value` assignment. Unknown keys are rejected so a
    /// typo cannot silently fall back to a default.
    fn set(&mut self, path: &str, value: &str) -> Result<(), ConfigError> {
        match path {
            "seed" => self.seed = parse_num(path, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "line_freq_hz" => self.line_freq_hz = parse_num(path, value)?,
            "image_size" => self.image_size = parse_num(path, value)?,
            "stft_window_s" => self.stft_window_s = parse_num(path, value)?,
            "dataset.name" => self.dataset.name = value.to_string(),
            "dataset.recordings" => self.dataset.recordings = parse_paths(value),
            "dataset.annotations" => self.dataset.annotations = parse_paths(value),
            "dataset.protocol_real" => self.dataset.protocol_real = Some(PathBuf::from(value)),
            "dataset.protocol_synthetic" => {
                self.dataset.protocol_synthetic = Some(PathBuf::from(value))
            }
            "gan.batch_size" => self.gan.batch_size = parse_num(path, value)?,
            "gan.patience" => self.gan.patience = parse_num(path, value)?,
            "gan.learning_rate" => self.gan.learning_rate = parse_num(path, value)?,
            "gan.max_epochs" => self.gan.max_epochs = parse_num(path, value)?,
            "gan.sample_count" => self.gan.sample_count = parse_num(path, value)?,
            "sieve.nu" => self.sieve.nu = parse_num(path, value)?,
            "sieve.gamma" => {
                self.sieve.gamma =
                    if value == "auto" { None } else { Some(parse_num(path, value)?) }
            }
            "cesp.folds" => self.cesp.folds = parse_num(path, value)?,
            "cesp.epochs" => self.cesp.epochs = parse_num(path, value)?,
            "cesp.batch_size" => self.cesp.batch_size = parse_num(path, value)?,
            "cesp.learning_rate" => self.cesp.learning_rate = parse_num(path, value)?,
            "cesp.augmentation_factor" => {
                self.cesp.augmentation_factor = parse_num(path, value)?
            }
            "eval.threshold" => self.eval.threshold = parse_num(path, value)?,
            "eval.sph_s" => self.eval.sph_s = parse_num(path, value)?,
            "eval.sop_s" => self.eval.sop_s = parse_num(path, value)?,
            _ => {
                return Err(ConfigError::UnknownKey { line: 0, path: path.into() });
            }
        }
        Ok(())
    }

    /// Range checks, each failing with the dotted path of the bad key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |path: &str, v: f64| -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(path, format!("must be positive, got {v}")))
            }
        };
        let at_least = |path: &str, v: usize, min: usize| -> Result<(), ConfigError> {
            if v >= min {
                Ok(())
            } else {
                Err(invalid(path, format!("must be at least {min}, got {v}")))
            }
        };

        positive("line_freq_hz", self.line_freq_hz)?;
        positive("stft_window_s", self.stft_window_s)?;
        if self.image_size == 0 || self.image_size % 8 != 0 {
            return Err(invalid(
                "image_size",
                format!("must be a positive multiple of 8, got {}", self.image_size),
            ));
        }
        at_least("gan.batch_size", self.gan.batch_size, 1)?;
        positive("gan.learning_rate", self.gan.learning_rate)?;
        at_least("gan.max_epochs", self.gan.max_epochs, 1)?;
        at_least("gan.sample_count", self.gan.sample_count, 1)?;
        if !(self.sieve.nu > 0.0 && self.sieve.nu <= 1.0) {
            return Err(invalid("sieve.nu", format!("must lie in (0, 1], got {}", self.sieve.nu)));
        }
        if let Some(g) = self.sieve.gamma {
            positive("sieve.gamma", g)?;
        }
        at_least("cesp.folds", self.cesp.folds, 2)?;
        at_least("cesp.epochs", self.cesp.epochs, 1)?;
        at_least("cesp.batch_size", self.cesp.batch_size, 1)?;
        positive("cesp.learning_rate", self.cesp.learning_rate)?;
        if !(self.eval.threshold > 0.0 && self.eval.threshold < 1.0) {
            return Err(invalid(
                "eval.threshold",
                format!("must lie in (0, 1), got {}", self.eval.threshold),
            ));
        }
        positive("eval.sph_s", self.eval.sph_s)?;
        positive("eval.sop_s", self.eval.sop_s)?;

        if self.dataset.recordings.len() != self.dataset.annotations.len() {
            return Err(invalid(
                "dataset.annotations",
                format!(
                    "{} entries but dataset.recordings has {}",
                    self.dataset.annotations.len(),
                    self.dataset.recordings.len()
                ),
            ));
        }
        let files = self
            .dataset
            .recordings
            .iter()
            .map(|p| ("dataset.recordings", p))
            .chain(self.dataset.annotations.iter().map(|p| ("dataset.annotations", p)))
            .chain(self.dataset.protocol_real.iter().map(|p| ("dataset.protocol_real", p)))
            .chain(
                self.dataset
                    .protocol_synthetic
                    .iter()
                    .map(|p| ("dataset.protocol_synthetic", p)),
            );
        for (path, file) in files {
            if !file.exists() {
                return Err(ConfigError::MissingFile { path: path.into(), file: file.clone() });
            }
        }
        Ok(())
    }
}

/// Parse a config file body on top of the defaults. Validation is separate
/// so callers can apply command-line overrides first.
pub fn parse_config(text: &str) -> Result<PipelineConfig, ConfigError> {
    let mut config = PipelineConfig::default();
    let mut seen: Vec<String> = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Malformed { line: line_no, text: raw.to_string() });
        };
        let key = key.trim();
        let value = value.trim();
        if seen.iter().any(|k| k == key) {
            return Err(ConfigError::DuplicateKey { line: line_no, path: key.into() });
        }
        seen.push(key.to_string());
        config.set(key, value).map_err(|e| match e {
            ConfigError::UnknownKey { path, .. } => ConfigError::UnknownKey { line: line_no, path },
            other => other,
        })?;
    }
    Ok(config)
}

pub fn load_config(path: &std::path::Path) -> Result<PipelineConfig, ConfigError> {
    parse_config(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn parses_dotted_keys_comments_and_blanks() {
        let text = "\
# toy run
seed = 99

gan.learning_rate = 0.002
sieve.gamma = auto
eval.threshold = 0.7
dataset.name = demo
";
        let c = parse_config(text).unwrap();
        assert_eq!(c.seed, 99);
        assert_eq!(c.gan.learning_rate, 0.002);
        assert_eq!(c.sieve.gamma, None);
        assert_eq!(c.eval.threshold, 0.7);
        assert_eq!(c.dataset.name, "demo");
        // Untouched keys keep their defaults.
        assert_eq!(c.cesp.folds, 10);
    }

    #[test]
    fn explicit_gamma_parses_as_number() {
        let c = parse_config("sieve.gamma = 0.25\n").unwrap();
        assert_eq!(c.sieve.gamma, Some(0.25));
    }

    #[test]
    fn unknown_duplicate_and_malformed_lines_are_rejected() {
        match parse_config("gan.lr = 1\n") {
            Err(ConfigError::UnknownKey { line: 1, path }) => assert_eq!(path, "gan.lr"),
            other => panic!("expected unknown-key error, got {other:?}"),
        }
        match parse_config("seed = 1\nseed = 2\n") {
            Err(ConfigError::DuplicateKey { line: 2, path }) => assert_eq!(path, "seed"),
            other => panic!("expected duplicate-key error, got {other:?}"),
        }
        assert!(matches!(
            parse_config("just some words\n"),
            Err(ConfigError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn missing_referenced_file_is_named() {
        let mut c = PipelineConfig::default();
        c.dataset.recordings = vec![PathBuf::from("/nonexistent/a.edf")];
        c.dataset.annotations = vec![PathBuf::from("/nonexistent/a.txt")];
        match c.validate() {
            Err(ConfigError::MissingFile { path, file }) => {
                assert_eq!(path, "dataset.recordings");
                assert_eq!(file, PathBuf::from("/nonexistent/a.edf"));
            }
            other => panic!("expected missing-file error, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_recording_annotation_counts_are_rejected() {
        let mut c = PipelineConfig::default();
        c.dataset.recordings = vec![PathBuf::from("a.edf"), PathBuf::from("b.edf")];
        c.dataset.annotations = vec![PathBuf::from("a.txt")];
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("dataset.annotations"), "{err}");
    }

    /// Every numeric key paired with values outside its legal range. The
    /// property test below mutates a valid config with one of these and
    /// requires rejection that names the key.
    const OUT_OF_RANGE: &[(&str, &[&str])] = &[
        ("line_freq_hz", &["0", "-50", "nan"]),
        ("image_size", &["0", "12", "9"]),
        ("stft_window_s", &["0", "-1"]),
        ("gan.batch_size", &["0"]),
        ("gan.learning_rate", &["0", "-0.001", "inf"]),
        ("gan.max_epochs", &["0"]),
        ("gan.sample_count", &["0"]),
        ("sieve.nu", &["0", "-0.1", "1.5"]),
        ("sieve.gamma", &["0", "-2"]),
        ("cesp.folds", &["0", "1"]),
        ("cesp.epochs", &["0"]),
        ("cesp.batch_size", &["0"]),
        ("cesp.learning_rate", &["0", "-1"]),
        ("eval.threshold", &["0", "1", "1.2", "-0.3"]),
        ("eval.sph_s", &["0", "-600"]),
        ("eval.sop_s", &["0", "-1800"]),
    ];

    proptest::proptest! {
        #[test]
        fn every_out_of_range_field_is_rejected_with_its_path(
            key_idx in 0..OUT_OF_RANGE.len(),
            value_idx: proptest::sample::Index,
        ) {
            let (path, values) = OUT_OF_RANGE[key_idx];
            let value = values[value_idx.index(values.len())];
            let text = format!("{path} = {value}\n");
            let outcome = parse_config(&text).and_then(|c| c.validate());
            let err = outcome.expect_err("out-of-range value must be rejected");
            proptest::prop_assert!(
                err.to_string().contains(path),
                "error for {path}={value} does not name the key: {err}"
            );
        }
    }
}
