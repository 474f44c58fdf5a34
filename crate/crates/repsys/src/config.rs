//! Run configuration: defaults, overridden by a `key = value` config file,
//! overridden by command-line flags. The fully resolved configuration is
//! echoed to `run.json` so any run can be reproduced exactly.

use std::path::{Path, PathBuf};

use crate::aggregate::BaselineMethod;
use crate::error::{Error, Result};
use crate::ingest::RatingFormat;
use crate::learn::{Algorithm, CvOptions, RegressorSpec};

/// Settings gathered from one source (flags or file); `None` means "not
/// set here".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialConfig {
    pub dataset: Option<PathBuf>,
    pub format: Option<RatingFormat>,
    pub lambda: Option<f64>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub baselines: Option<Vec<BaselineMethod>>,
    pub k_folds: Option<usize>,
    pub seed: Option<u64>,
    pub weight_floor: Option<f64>,
    pub strict_fold_scaling: Option<bool>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub knn_k: Option<usize>,
    pub svr_c: Option<f64>,
    pub svr_epsilon: Option<f64>,
    pub svr_gamma: Option<f64>,
    pub svr_tolerance: Option<f64>,
    pub cart_min_leaf: Option<usize>,
    pub cart_max_depth: Option<usize>,
    pub lr_log_transform: Option<bool>,
    pub imdb_m: Option<f64>,
    pub prior_weight: Option<f64>,
}

impl PartialConfig {
    /// Fill unset fields from a lower-precedence source.
    pub fn or(mut self, fallback: PartialConfig) -> PartialConfig {
        macro_rules! take {
            ($field:ident) => {
                if self.$field.is_none() {
                    self.$field = fallback.$field;
                }
            };
        }
        take!(dataset);
        take!(format);
        take!(lambda);
        take!(algorithms);
        take!(baselines);
        take!(k_folds);
        take!(seed);
        take!(weight_floor);
        take!(strict_fold_scaling);
        take!(threads);
        take!(out);
        take!(knn_k);
        take!(svr_c);
        take!(svr_epsilon);
        take!(svr_gamma);
        take!(svr_tolerance);
        take!(cart_min_leaf);
        take!(cart_max_depth);
        take!(lr_log_transform);
        take!(imdb_m);
        take!(prior_weight);
        self
    }

    /// Apply defaults and validate, producing a runnable configuration.
    pub fn resolve(self) -> Result<RunConfig> {
        let config = RunConfig {
            dataset: self.dataset,
            format: self.format.unwrap_or(RatingFormat::Csv),
            lambda: self.lambda.unwrap_or(0.95),
            algorithms: normalize(self.algorithms.unwrap_or_else(|| Algorithm::ALL.to_vec())),
            baselines: normalize(self.baselines.unwrap_or_else(|| BaselineMethod::ALL.to_vec())),
            k_folds: self.k_folds.unwrap_or(10),
            seed: self.seed.unwrap_or(0),
            weight_floor: self.weight_floor.unwrap_or(0.01),
            strict_fold_scaling: self.strict_fold_scaling.unwrap_or(false),
            threads: self.threads,
            out: self.out.unwrap_or_else(|| PathBuf::from("out")),
            knn_k: self.knn_k.unwrap_or(5),
            svr_c: self.svr_c.unwrap_or(1.0),
            svr_epsilon: self.svr_epsilon.unwrap_or(0.1),
            svr_gamma: self.svr_gamma,
            svr_tolerance: self.svr_tolerance.unwrap_or(1e-3),
            cart_min_leaf: self.cart_min_leaf.unwrap_or(5),
            cart_max_depth: self.cart_max_depth.unwrap_or(12),
            lr_log_transform: self.lr_log_transform.unwrap_or(false),
            imdb_m: self.imdb_m,
            prior_weight: self.prior_weight.unwrap_or(2.0),
        };
        config.validate()?;
        Ok(config)
    }
}

fn normalize<T: Ord + Copy>(mut list: Vec<T>) -> Vec<T> {
    list.sort_unstable();
    list.dedup();
    list
}

/// Fully resolved configuration; every field has a concrete value except
/// the optional dataset (not all subcommands need one) and the two
/// auto-derived constants.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub format: RatingFormat,
    pub lambda: f64,
    pub algorithms: Vec<Algorithm>,
    pub baselines: Vec<BaselineMethod>,
    pub k_folds: usize,
    pub seed: u64,
    pub weight_floor: f64,
    pub strict_fold_scaling: bool,
    /// Worker-thread cap; `None` lets the runtime decide. Never affects
    /// output bytes.
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub knn_k: usize,
    pub svr_c: f64,
    pub svr_epsilon: f64,
    /// `None` derives 1 / feature count.
    pub svr_gamma: Option<f64>,
    pub svr_tolerance: f64,
    pub cart_min_leaf: usize,
    pub cart_max_depth: usize,
    pub lr_log_transform: bool,
    /// `None` derives the lower quartile of per-product rating counts.
    pub imdb_m: Option<f64>,
    pub prior_weight: f64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::Config(format!(
                "k_folds must be at least 2, got {}",
                self.k_folds
            )));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!(
                "lambda must be in (0, 1), got {}",
                self.lambda
            )));
        }
        if self.algorithms.is_empty() && self.baselines.is_empty() {
            return Err(Error::Config(
                "select at least one algorithm or baseline".to_string(),
            ));
        }
        if !(self.weight_floor.is_finite() && (0.0..=1.0).contains(&self.weight_floor)) {
            return Err(Error::Config(format!(
                "weight_floor must be in [0, 1], got {}",
                self.weight_floor
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".to_string()));
        }
        // Hyperparameters are validated by the regressor spec they feed.
        self.regressor_spec(Algorithm::Linear).validate()?;
        if let Some(m) = self.imdb_m {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::Config(format!("imdb_m must be nonnegative, got {m}")));
            }
        }
        if !(self.prior_weight.is_finite() && self.prior_weight >= 0.0) {
            return Err(Error::Config(format!(
                "prior_weight must be nonnegative, got {}",
                self.prior_weight
            )));
        }
        Ok(())
    }

    pub fn dataset(&self) -> Result<&Path> {
        self.dataset
            .as_deref()
            .ok_or_else(|| Error::Config("--dataset is required".to_string()))
    }

    pub fn regressor_spec(&self, algorithm: Algorithm) -> RegressorSpec {
        RegressorSpec {
            algorithm,
            knn_k: self.knn_k,
            svr_c: self.svr_c,
            svr_epsilon: self.svr_epsilon,
            svr_gamma: self.svr_gamma,
            svr_tolerance: self.svr_tolerance,
            cart_min_leaf: self.cart_min_leaf,
            cart_max_depth: self.cart_max_depth,
            lr_log_transform: self.lr_log_transform,
        }
    }

    pub fn cv_options(&self) -> CvOptions {
        CvOptions {
            weight_floor: self.weight_floor,
            strict_fold_scaling: self.strict_fold_scaling,
        }
    }

    /// Every resolved result-affecting parameter as JSON (keys sorted), for
    /// `run.json`. The `threads` and `out` knobs steer execution, not
    /// results, and are deliberately excluded so output bytes never depend
    /// on them.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dataset": self.dataset.as_ref().map(|p| p.display().to_string()),
            "format": self.format.to_string(),
            "lambda": self.lambda,
            "algorithms": self.algorithms.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            "baselines": self.baselines.iter().map(|b| b.to_string()).collect::<Vec<_>>(),
            "k_folds": self.k_folds,
            "seed": self.seed,
            "weight_floor": self.weight_floor,
            "strict_fold_scaling": self.strict_fold_scaling,
            "knn_k": self.knn_k,
            "svr_c": self.svr_c,
            "svr_epsilon": self.svr_epsilon,
            "svr_gamma": self.svr_gamma,
            "svr_tolerance": self.svr_tolerance,
            "cart_min_leaf": self.cart_min_leaf,
            "cart_max_depth": self.cart_max_depth,
            "lr_log_transform": self.lr_log_transform,
            "imdb_m": self.imdb_m,
            "prior_weight": self.prior_weight,
        })
    }
}

/// Parse a `key = value` config file (`#` starts a comment). List values
/// are comma-separated; the literal `none` denotes an empty list.
pub fn parse_config_file(path: &Path) -> Result<PartialConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut config = PartialConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::Config(format!(
            "{}:{line_no}: {reason}",
            path.display()
        ));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| malformed("expected `key = value`".to_string()))?;
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return Err(malformed(format!("empty value for `{key}`")));
        }

        macro_rules! parse_as {
            ($ty:ty) => {
                value
                    .parse::<$ty>()
                    .map_err(|_| malformed(format!("invalid value `{value}` for `{key}`")))?
            };
        }
        match key {
            "dataset" => config.dataset = Some(PathBuf::from(value)),
            "format" => config.format = Some(parse_as!(RatingFormat)),
            "lambda" => config.lambda = Some(parse_as!(f64)),
            "algo" => config.algorithms = Some(parse_list(value)?),
            "baseline" => config.baselines = Some(parse_list(value)?),
            "k_folds" => config.k_folds = Some(parse_as!(usize)),
            "seed" => config.seed = Some(parse_as!(u64)),
            "weight_floor" => config.weight_floor = Some(parse_as!(f64)),
            "strict_fold_scaling" => config.strict_fold_scaling = Some(parse_as!(bool)),
            "threads" => config.threads = Some(parse_as!(usize)),
            "out" => config.out = Some(PathBuf::from(value)),
            "knn_k" => config.knn_k = Some(parse_as!(usize)),
            "svr_c" => config.svr_c = Some(parse_as!(f64)),
            "svr_epsilon" => config.svr_epsilon = Some(parse_as!(f64)),
            "svr_gamma" => config.svr_gamma = Some(parse_as!(f64)),
            "svr_tolerance" => config.svr_tolerance = Some(parse_as!(f64)),
            "cart_min_leaf" => config.cart_min_leaf = Some(parse_as!(usize)),
            "cart_max_depth" => config.cart_max_depth = Some(parse_as!(usize)),
            "lr_log_transform" => config.lr_log_transform = Some(parse_as!(bool)),
            "imdb_m" => config.imdb_m = Some(parse_as!(f64)),
            "prior_weight" => config.prior_weight = Some(parse_as!(f64)),
            other => return Err(malformed(format!("unknown key `{other}`"))),
        }
    }
    Ok(config)
}

/// Parse a comma-separated list of names (`none` for an empty list).
pub fn parse_list<T: std::str::FromStr<Err = Error>>(value: &str) -> Result<Vec<T>> {
    if value.trim() == "none" {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|part| part.trim().parse::<T>())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_config(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file
    }

    #[test]
    fn defaults_match_the_documented_values() {
        let config = PartialConfig::default().resolve().unwrap();
        assert_eq!(config.lambda, 0.95);
        assert_eq!(config.k_folds, 10);
        assert_eq!(config.seed, 0);
        assert_eq!(config.weight_floor, 0.01);
        assert_eq!(config.algorithms, Algorithm::ALL.to_vec());
        assert_eq!(config.baselines, BaselineMethod::ALL.to_vec());
        assert_eq!(config.knn_k, 5);
        assert_eq!(config.svr_c, 1.0);
        assert_eq!(config.svr_epsilon, 0.1);
        assert_eq!(config.svr_gamma, None);
        assert_eq!(config.cart_min_leaf, 5);
        assert_eq!(config.cart_max_depth, 12);
        assert_eq!(config.prior_weight, 2.0);
        assert!(!config.strict_fold_scaling);
        assert!(!config.lr_log_transform);
    }

    #[test]
    fn flags_override_file_which_overrides_defaults() {
        let file = write_config("lambda = 0.5\nseed = 7\nk_folds = 4\n");
        let from_file = parse_config_file(file.path()).unwrap();
        let flags = PartialConfig {
            lambda: Some(0.8),
            ..PartialConfig::default()
        };
        let config = flags.or(from_file).resolve().unwrap();
        assert_eq!(config.lambda, 0.8); // flag wins
        assert_eq!(config.seed, 7); // file wins over default
        assert_eq!(config.k_folds, 4);
        assert_eq!(config.weight_floor, 0.01); // default
    }

    #[test]
    fn config_file_supports_comments_and_lists() {
        let file = write_config(
            "# experiment setup\nalgo = rt, knn # two models\nbaseline = average\nstrict_fold_scaling = true\n",
        );
        let config = parse_config_file(file.path()).unwrap().resolve().unwrap();
        assert_eq!(config.algorithms, vec![Algorithm::Tree, Algorithm::Knn]);
        assert_eq!(config.baselines, vec![BaselineMethod::Average]);
        assert!(config.strict_fold_scaling);
    }

    #[test]
    fn none_empties_a_list_and_duplicates_collapse() {
        let file = write_config("algo = none\nbaseline = median, average, median\n");
        let config = parse_config_file(file.path()).unwrap().resolve().unwrap();
        assert!(config.algorithms.is_empty());
        assert_eq!(
            config.baselines,
            vec![BaselineMethod::Average, BaselineMethod::Median]
        );
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let file = write_config("mystery = 1\n");
        assert!(matches!(
            parse_config_file(file.path()).unwrap_err(),
            Error::Config(_)
        ));
        let file = write_config("lambda = fast\n");
        assert!(matches!(
            parse_config_file(file.path()).unwrap_err(),
            Error::Config(_)
        ));
        let file = write_config("just a line\n");
        assert!(matches!(
            parse_config_file(file.path()).unwrap_err(),
            Error::Config(_)
        ));
    }

    #[test]
    fn validation_rejects_out_of_range_settings() {
        for (partial, needle) in [
            (
                PartialConfig {
                    k_folds: Some(1),
                    ..PartialConfig::default()
                },
                "k_folds",
            ),
            (
                PartialConfig {
                    lambda: Some(1.0),
                    ..PartialConfig::default()
                },
                "lambda",
            ),
            (
                PartialConfig {
                    weight_floor: Some(1.5),
                    ..PartialConfig::default()
                },
                "weight_floor",
            ),
            (
                PartialConfig {
                    algorithms: Some(vec![]),
                    baselines: Some(vec![]),
                    ..PartialConfig::default()
                },
                "at least one",
            ),
            (
                PartialConfig {
                    threads: Some(0),
                    ..PartialConfig::default()
                },
                "threads",
            ),
        ] {
            match partial.resolve().unwrap_err() {
                Error::Config(msg) => assert!(msg.contains(needle), "{msg} missing {needle}"),
                other => panic!("unexpected error {other:?}"),
            }
        }
    }

    #[test]
    fn json_echo_contains_every_result_affecting_parameter() {
        let config = PartialConfig::default().resolve().unwrap();
        let value = config.to_json();
        let object = value.as_object().unwrap();
        for key in [
            "dataset",
            "format",
            "lambda",
            "algorithms",
            "baselines",
            "k_folds",
            "seed",
            "weight_floor",
            "strict_fold_scaling",
            "knn_k",
            "svr_c",
            "svr_epsilon",
            "svr_gamma",
            "svr_tolerance",
            "cart_min_leaf",
            "cart_max_depth",
            "lr_log_transform",
            "imdb_m",
            "prior_weight",
        ] {
            assert!(object.contains_key(key), "missing {key}");
        }
        // Execution knobs must not leak into outputs: byte-identical runs
        // are required regardless of worker count or destination directory.
        assert!(!object.contains_key("threads"));
        assert!(!object.contains_key("out"));
        assert_eq!(value["lambda"], 0.95);
        assert_eq!(value["algorithms"][1], "rt");
    }
}
