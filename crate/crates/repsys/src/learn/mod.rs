//! Reliability regression under seeded k-fold cross-validation.
//!
//! Four interchangeable regressors predict each consumer's scaled
//! reliability from the five behavioural features. Every consumer receives
//! exactly one out-of-fold prediction, which is then inverted into an
//! aggregation weight (low predicted error means high weight).

mod knn;
mod linear;
mod svr;
mod tree;

pub use knn::KnnModel;
pub use linear::LinearModel;
pub use svr::{SvrModel, SvrParams, DEFAULT_MAX_ITER};
pub use tree::{LeafInfo, RegressionTree, TreeParams};

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmt::fmt_sig9;
use crate::ingest::ConsumerId;
use crate::profile::{ProfileMatrix, ScalingParams, FEATURE_COUNT, REL_COLUMN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Algorithm {
    Linear,
    Tree,
    Svr,
    Knn,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Linear,
        Algorithm::Tree,
        Algorithm::Svr,
        Algorithm::Knn,
    ];

    /// Short uppercase tag used in reports and rankings.
    pub fn label(&self) -> &'static str {
        match self {
            Algorithm::Linear => "LR",
            Algorithm::Tree => "RT",
            Algorithm::Svr => "SVR",
            Algorithm::Knn => "KNN",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(Algorithm::Linear),
            "rt" => Ok(Algorithm::Tree),
            "svr" => Ok(Algorithm::Svr),
            "knn" => Ok(Algorithm::Knn),
            other => Err(Error::Config(format!(
                "unknown algorithm `{other}` (expected lr, rt, svr or knn)"
            ))),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Algorithm::Linear => "lr",
            Algorithm::Tree => "rt",
            Algorithm::Svr => "svr",
            Algorithm::Knn => "knn",
        };
        f.write_str(s)
    }
}

/// Algorithm choice plus every hyperparameter, all defaulted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressorSpec {
    pub algorithm: Algorithm,
    pub knn_k: usize,
    pub svr_c: f64,
    pub svr_epsilon: f64,
    /// RBF width; `None` means 1 / feature count.
    pub svr_gamma: Option<f64>,
    pub svr_tolerance: f64,
    pub cart_min_leaf: usize,
    pub cart_max_depth: usize,
    /// Apply ln(1 + v) to the three count features before scaling
    /// (linear regression only).
    pub lr_log_transform: bool,
}

impl RegressorSpec {
    pub fn new(algorithm: Algorithm) -> Self {
        RegressorSpec {
            algorithm,
            knn_k: 5,
            svr_c: 1.0,
            svr_epsilon: 0.1,
            svr_gamma: None,
            svr_tolerance: 1e-3,
            cart_min_leaf: 5,
            cart_max_depth: 12,
            lr_log_transform: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knn_k == 0 {
            return Err(Error::Config("knn_k must be at least 1".to_string()));
        }
        if !(self.svr_c.is_finite() && self.svr_c > 0.0) {
            return Err(Error::Config(format!(
                "svr_c must be positive, got {}",
                self.svr_c
            )));
        }
        if !(self.svr_epsilon.is_finite() && self.svr_epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "svr_epsilon must be nonnegative, got {}",
                self.svr_epsilon
            )));
        }
        if let Some(g) = self.svr_gamma {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::Config(format!("svr_gamma must be positive, got {g}")));
            }
        }
        if !(self.svr_tolerance.is_finite() && self.svr_tolerance > 0.0) {
            return Err(Error::Config(format!(
                "svr_tolerance must be positive, got {}",
                self.svr_tolerance
            )));
        }
        if self.cart_min_leaf == 0 {
            return Err(Error::Config("cart_min_leaf must be at least 1".to_string()));
        }
        if self.cart_max_depth == 0 {
            return Err(Error::Config("cart_max_depth must be at least 1".to_string()));
        }
        Ok(())
    }

    /// Hyperparameters relevant to this spec's algorithm, as `key=value`
    /// pairs for report labeling.
    pub fn describe(&self) -> Vec<(String, String)> {
        match self.algorithm {
            Algorithm::Linear => vec![(
                "log_transform".to_string(),
                self.lr_log_transform.to_string(),
            )],
            Algorithm::Tree => vec![
                ("min_leaf".to_string(), self.cart_min_leaf.to_string()),
                ("max_depth".to_string(), self.cart_max_depth.to_string()),
            ],
            Algorithm::Svr => vec![
                ("c".to_string(), fmt_sig9(self.svr_c)),
                ("epsilon".to_string(), fmt_sig9(self.svr_epsilon)),
                (
                    "gamma".to_string(),
                    match self.svr_gamma {
                        Some(g) => fmt_sig9(g),
                        None => fmt_sig9(1.0 / FEATURE_COUNT as f64),
                    },
                ),
                ("tolerance".to_string(), fmt_sig9(self.svr_tolerance)),
            ],
            Algorithm::Knn => vec![("k".to_string(), self.knn_k.to_string())],
        }
    }
}

/// Feature rows plus aligned targets, validated once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if rows.len() != targets.len() {
            return Err(Error::Config(format!(
                "{} feature rows but {} targets",
                rows.len(),
                targets.len()
            )));
        }
        let arity = rows[0].len();
        for row in &rows {
            if row.len() != arity {
                return Err(Error::FeatureArity {
                    expected: arity,
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("feature value"));
            }
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target value"));
        }
        Ok(FeatureMatrix { rows, targets })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

/// A fitted regressor; prediction is a pure function of (spec, training
/// data, query), so values are safe to share across threads.
#[derive(Debug, Clone)]
pub enum TrainedRegressor {
    Linear(LinearModel),
    Tree(RegressionTree),
    Svr(SvrModel),
    Knn(KnnModel),
}

pub fn fit(spec: &RegressorSpec, data: &FeatureMatrix) -> Result<TrainedRegressor> {
    spec.validate()?;
    match spec.algorithm {
        Algorithm::Linear => Ok(TrainedRegressor::Linear(LinearModel::fit(
            data.rows(),
            data.targets(),
        )?)),
        Algorithm::Tree => Ok(TrainedRegressor::Tree(RegressionTree::fit(
            data.rows(),
            data.targets(),
            TreeParams {
                min_leaf: spec.cart_min_leaf,
                max_depth: spec.cart_max_depth,
            },
        )?)),
        Algorithm::Svr => Ok(TrainedRegressor::Svr(SvrModel::fit(
            data.rows().to_vec(),
            data.targets(),
            SvrParams {
                c: spec.svr_c,
                epsilon: spec.svr_epsilon,
                gamma: spec
                    .svr_gamma
                    .unwrap_or(1.0 / data.n_features() as f64),
                tolerance: spec.svr_tolerance,
                max_iter: DEFAULT_MAX_ITER,
            },
        )?)),
        Algorithm::Knn => Ok(TrainedRegressor::Knn(KnnModel::fit(
            data.rows().to_vec(),
            data.targets().to_vec(),
            spec.knn_k,
        )?)),
    }
}

impl TrainedRegressor {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            TrainedRegressor::Linear(m) => m.predict(x),
            TrainedRegressor::Tree(m) => m.predict(x),
            TrainedRegressor::Svr(m) => {
                if x.len() != m.n_features() {
                    return Err(Error::FeatureArity {
                        expected: m.n_features(),
                        got: x.len(),
                    });
                }
                Ok(m.predict(x))
            }
            TrainedRegressor::Knn(m) => m.predict(x),
        }
    }
}

/// Seeded assignment of every consumer to one of k folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    seed: u64,
    assignment: BTreeMap<ConsumerId, usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold_of(&self, consumer: ConsumerId) -> Option<usize> {
        self.assignment.get(&consumer).copied()
    }

    pub fn consumers(&self) -> impl Iterator<Item = ConsumerId> + '_ {
        self.assignment.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Sort consumers, shuffle with a seeded generator, deal round-robin into
/// k folds. Fold sizes differ by at most one.
pub fn kfold_split(consumer_ids: &[ConsumerId], k: usize, seed: u64) -> Result<FoldPlan> {
    let n = consumer_ids.len();
    if k < 2 || k > n {
        return Err(Error::BadFoldCount { k, n });
    }
    let mut ids = consumer_ids.to_vec();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("duplicate consumer id in fold input".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let assignment = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id, i % k))
        .collect();
    Ok(FoldPlan { k, seed, assignment })
}

/// Invert a predicted (scaled) reliability into an aggregation weight:
/// clamp to [0, 1], then `w = max(floor, 1 - clamped)`.
pub fn reliability_to_weight(predicted_scaled_rel: f64, floor: f64) -> Result<f64> {
    if !predicted_scaled_rel.is_finite() {
        return Err(Error::NonFinite("predicted reliability"));
    }
    Ok((1.0 - predicted_scaled_rel.clamp(0.0, 1.0)).max(floor))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightEntry {
    /// Raw out-of-fold prediction of the scaled reliability.
    pub predicted_rel_scaled: f64,
    /// Aggregation weight in [floor, 1].
    pub weight: f64,
}

/// One weight per consumer, keyed and emitted in ascending consumer id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightMap {
    entries: BTreeMap<ConsumerId, WeightEntry>,
}

pub const WEIGHTS_HEADER: &str = "consumer_id,predicted_rel_scaled,weight";

impl WeightMap {
    pub fn from_entries(entries: BTreeMap<ConsumerId, WeightEntry>) -> Self {
        WeightMap { entries }
    }

    /// Equal full weight for every consumer (reduces weighted scores to
    /// plain means).
    pub fn uniform<I: IntoIterator<Item = ConsumerId>>(ids: I) -> Self {
        WeightMap {
            entries: ids
                .into_iter()
                .map(|id| {
                    (
                        id,
                        WeightEntry {
                            predicted_rel_scaled: 0.0,
                            weight: 1.0,
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn weight(&self, consumer: ConsumerId) -> Result<f64> {
        self.entries
            .get(&consumer)
            .map(|e| e.weight)
            .ok_or(Error::MissingWeight(consumer))
    }

    pub fn get(&self, consumer: ConsumerId) -> Option<&WeightEntry> {
        self.entries.get(&consumer)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ConsumerId, &WeightEntry)> {
        self.entries.iter().map(|(&id, e)| (id, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{WEIGHTS_HEADER}")?;
        for (id, e) in &self.entries {
            writeln!(
                w,
                "{},{},{}",
                id,
                fmt_sig9(e.predicted_rel_scaled),
                fmt_sig9(e.weight)
            )?;
        }
        Ok(())
    }

    pub fn parse_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            if line_no == 1 {
                if line != WEIGHTS_HEADER {
                    return Err(Error::Malformed {
                        line: 1,
                        reason: format!("expected header `{WEIGHTS_HEADER}`"),
                        text: line.to_string(),
                    });
                }
                continue;
            }
            let malformed = |reason: &str| Error::Malformed {
                line: line_no,
                reason: reason.to_string(),
                text: line.to_string(),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(malformed(&format!("expected 3 fields, got {}", fields.len())));
            }
            let id: ConsumerId = fields[0].parse().map_err(|_| malformed("invalid consumer id"))?;
            entries.insert(
                id,
                WeightEntry {
                    predicted_rel_scaled: fields[1]
                        .parse()
                        .map_err(|_| malformed("invalid prediction"))?,
                    weight: fields[2].parse().map_err(|_| malformed("invalid weight"))?,
                },
            );
        }
        Ok(WeightMap { entries })
    }
}

/// Per-fold training summary (regression error is on the scaled target).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FoldDiagnostic {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub regression_mae: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    /// Lower bound on weights so aggregation denominators never vanish.
    pub weight_floor: f64,
    /// Refit feature scaling on each training fold instead of the full
    /// collection.
    pub strict_fold_scaling: bool,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            weight_floor: 0.01,
            strict_fold_scaling: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub weights: WeightMap,
    pub fold_diagnostics: Vec<FoldDiagnostic>,
}

/// Out-of-fold reliability prediction for every consumer, converted into
/// weights. Folds train in parallel; each fold is internally sequential and
/// results merge in fold order, so the outcome is thread-count independent.
pub fn predict_weights_cv(
    matrix: &ProfileMatrix,
    spec: &RegressorSpec,
    plan: &FoldPlan,
    options: &CvOptions,
) -> Result<CvOutcome> {
    spec.validate()?;
    if !(options.weight_floor.is_finite() && (0.0..=1.0).contains(&options.weight_floor)) {
        return Err(Error::Config(format!(
            "weight_floor must be in [0, 1], got {}",
            options.weight_floor
        )));
    }
    if plan.len() != matrix.len() || !plan.consumers().eq(matrix.consumer_ids.iter().copied()) {
        return Err(Error::PlanMismatch);
    }

    let transformed;
    let working = if spec.algorithm == Algorithm::Linear && spec.lr_log_transform {
        transformed = matrix.with_log_counts()?;
        &transformed
    } else {
        matrix
    };

    let fold_of: Vec<usize> = working
        .consumer_ids
        .iter()
        .map(|&id| plan.fold_of(id).expect("plan covers the matrix"))
        .collect();

    let per_fold: Vec<(Vec<(ConsumerId, f64)>, FoldDiagnostic)> = (0..plan.k())
        .into_par_iter()
        .map(|fold| -> Result<_> {
            let train_idx: Vec<usize> =
                (0..working.len()).filter(|&i| fold_of[i] != fold).collect();
            let test_idx: Vec<usize> =
                (0..working.len()).filter(|&i| fold_of[i] == fold).collect();

            let row_for: Box<dyn Fn(usize) -> [f64; 6]> = if options.strict_fold_scaling {
                let train_raw: Vec<[f64; 6]> =
                    train_idx.iter().map(|&i| working.raw[i]).collect();
                let scaling = ScalingParams::fit(&train_raw)?;
                let raw = &working.raw;
                Box::new(move |i| scaling.apply(&raw[i]))
            } else {
                let scaled = &working.scaled;
                Box::new(move |i| scaled[i])
            };

            let train_rows: Vec<Vec<f64>> = train_idx
                .iter()
                .map(|&i| row_for(i)[..FEATURE_COUNT].to_vec())
                .collect();
            let train_targets: Vec<f64> =
                train_idx.iter().map(|&i| row_for(i)[REL_COLUMN]).collect();
            let model = fit(spec, &FeatureMatrix::new(train_rows, train_targets)?)?;

            let mut predictions = Vec::with_capacity(test_idx.len());
            let mut abs_err = 0.0;
            for &i in &test_idx {
                let row = row_for(i);
                let pred = model.predict(&row[..FEATURE_COUNT])?;
                abs_err += (pred - row[REL_COLUMN]).abs();
                predictions.push((working.consumer_ids[i], pred));
            }
            Ok((
                predictions,
                FoldDiagnostic {
                    fold,
                    train_size: train_idx.len(),
                    test_size: test_idx.len(),
                    regression_mae: abs_err / test_idx.len() as f64,
                },
            ))
        })
        .collect::<Result<_>>()?;

    let mut entries = BTreeMap::new();
    let mut fold_diagnostics = Vec::with_capacity(plan.k());
    for (predictions, diagnostic) in per_fold {
        for (consumer, pred) in predictions {
            entries.insert(
                consumer,
                WeightEntry {
                    predicted_rel_scaled: pred,
                    weight: reliability_to_weight(pred, options.weight_floor)?,
                },
            );
        }
        fold_diagnostics.push(diagnostic);
    }
    Ok(CvOutcome {
        weights: WeightMap::from_entries(entries),
        fold_diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::ConsumerProfile;
    use approx::assert_abs_diff_eq;

    fn synthetic_matrix(n: usize) -> ProfileMatrix {
        // rel is an exact linear function of the features, so LR should
        // predict it out-of-fold to machine precision.
        let profiles: Vec<ConsumerProfile> = (0..n)
            .map(|i| {
                let t = i as f64;
                let pos = (i % 13) as u32;
                let nut = (i % 7) as u32;
                let ngv = (i % 5) as u32;
                let exp = (t * 0.137).fract();
                let fluc = (t * 0.291).fract();
                ConsumerProfile {
                    consumer_id: (i + 1) as ConsumerId,
                    pos,
                    nut,
                    ngv,
                    exp,
                    fluc,
                    rel: 0.02 * pos as f64 + 0.01 * nut as f64 + 0.03 * ngv as f64
                        + 0.1 * exp
                        + 0.2 * fluc,
                }
            })
            .collect();
        ProfileMatrix::from_profiles(&profiles).unwrap()
    }

    #[test]
    fn algorithm_names_round_trip() {
        for algo in Algorithm::ALL {
            let parsed: Algorithm = algo.to_string().parse().unwrap();
            assert_eq!(parsed, algo);
        }
        assert!("boost".parse::<Algorithm>().is_err());
        assert_eq!(Algorithm::Tree.label(), "RT");
    }

    #[test]
    fn spec_validation_catches_bad_hyperparameters() {
        let mut spec = RegressorSpec::new(Algorithm::Knn);
        spec.knn_k = 0;
        assert!(spec.validate().is_err());
        let mut spec = RegressorSpec::new(Algorithm::Svr);
        spec.svr_gamma = Some(-1.0);
        assert!(spec.validate().is_err());
        let mut spec = RegressorSpec::new(Algorithm::Tree);
        spec.cart_min_leaf = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn feature_matrix_rejects_ragged_and_nonfinite_rows() {
        assert!(matches!(
            FeatureMatrix::new(vec![], vec![]).unwrap_err(),
            Error::EmptyTrainingSet
        ));
        assert!(matches!(
            FeatureMatrix::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0.0, 0.0]).unwrap_err(),
            Error::FeatureArity { .. }
        ));
        assert!(matches!(
            FeatureMatrix::new(vec![vec![f64::NAN]], vec![0.0]).unwrap_err(),
            Error::NonFinite(_)
        ));
    }

    #[test]
    fn ten_singleton_folds_for_ten_consumers() {
        let ids: Vec<ConsumerId> = (1..=10).collect();
        let plan = kfold_split(&ids, 10, 0).unwrap();
        assert_eq!(plan.fold_sizes(), vec![1; 10]);
    }

    #[test]
    fn round_robin_sizes_for_943_consumers() {
        let ids: Vec<ConsumerId> = (1..=943).collect();
        let plan = kfold_split(&ids, 10, 0).unwrap();
        let mut sizes = plan.fold_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 943);
        sizes.sort_unstable();
        assert_eq!(&sizes[..7], &[94; 7]);
        assert_eq!(&sizes[7..], &[95; 3]);
    }

    #[test]
    fn folds_partition_the_consumer_set() {
        let ids: Vec<ConsumerId> = (1..=57).collect();
        let plan = kfold_split(&ids, 7, 3).unwrap();
        let covered: Vec<ConsumerId> = plan.consumers().collect();
        assert_eq!(covered, ids);
        for id in ids {
            assert!(plan.fold_of(id).unwrap() < 7);
        }
    }

    #[test]
    fn same_seed_reproduces_the_plan_and_different_seed_moves_it() {
        let ids: Vec<ConsumerId> = (1..=100).collect();
        let a = kfold_split(&ids, 10, 42).unwrap();
        let b = kfold_split(&ids, 10, 42).unwrap();
        let c = kfold_split(&ids, 10, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn input_order_does_not_change_the_plan() {
        let ids: Vec<ConsumerId> = (1..=50).collect();
        let mut shuffled = ids.clone();
        shuffled.reverse();
        assert_eq!(
            kfold_split(&ids, 5, 9).unwrap(),
            kfold_split(&shuffled, 5, 9).unwrap()
        );
    }

    #[test]
    fn bad_fold_counts_are_rejected() {
        let ids: Vec<ConsumerId> = (1..=5).collect();
        assert!(matches!(
            kfold_split(&ids, 1, 0).unwrap_err(),
            Error::BadFoldCount { k: 1, n: 5 }
        ));
        assert!(matches!(
            kfold_split(&ids, 6, 0).unwrap_err(),
            Error::BadFoldCount { k: 6, n: 5 }
        ));
    }

    #[test]
    fn weight_inversion_examples() {
        assert_abs_diff_eq!(reliability_to_weight(0.0, 0.01).unwrap(), 1.0);
        assert_abs_diff_eq!(reliability_to_weight(1.0, 0.01).unwrap(), 0.01);
        assert_abs_diff_eq!(reliability_to_weight(0.25, 0.01).unwrap(), 0.75);
        // Out-of-range predictions clamp first.
        assert_abs_diff_eq!(reliability_to_weight(-3.0, 0.01).unwrap(), 1.0);
        assert_abs_diff_eq!(reliability_to_weight(7.0, 0.01).unwrap(), 0.01);
        assert!(reliability_to_weight(f64::NAN, 0.01).is_err());
    }

    #[test]
    fn weights_never_increase_with_predicted_error() {
        let mut prev = f64::INFINITY;
        for step in 0..=20 {
            let pred = step as f64 / 20.0;
            let w = reliability_to_weight(pred, 0.01).unwrap();
            assert!(w <= prev);
            assert!((0.01..=1.0).contains(&w));
            prev = w;
        }
    }

    #[test]
    fn cv_gives_every_consumer_exactly_one_out_of_fold_prediction() {
        let matrix = synthetic_matrix(40);
        let plan = kfold_split(&matrix.consumer_ids, 10, 0).unwrap();
        let spec = RegressorSpec::new(Algorithm::Knn);
        let outcome =
            predict_weights_cv(&matrix, &spec, &plan, &CvOptions::default()).unwrap();
        assert_eq!(outcome.weights.len(), 40);
        let ids: Vec<ConsumerId> = outcome.weights.iter().map(|(id, _)| id).collect();
        assert_eq!(ids, matrix.consumer_ids);
        assert_eq!(outcome.fold_diagnostics.len(), 10);
        for (i, d) in outcome.fold_diagnostics.iter().enumerate() {
            assert_eq!(d.fold, i);
            assert_eq!(d.train_size + d.test_size, 40);
        }
    }

    #[test]
    fn linear_cv_on_linear_target_is_nearly_exact() {
        let matrix = synthetic_matrix(60);
        let plan = kfold_split(&matrix.consumer_ids, 10, 0).unwrap();
        let spec = RegressorSpec::new(Algorithm::Linear);
        let outcome =
            predict_weights_cv(&matrix, &spec, &plan, &CvOptions::default()).unwrap();
        for d in &outcome.fold_diagnostics {
            assert!(d.regression_mae < 1e-6, "fold {} mae {}", d.fold, d.regression_mae);
        }
    }

    #[test]
    fn cv_is_reproducible_for_every_algorithm() {
        let matrix = synthetic_matrix(30);
        let plan = kfold_split(&matrix.consumer_ids, 5, 7).unwrap();
        for algo in Algorithm::ALL {
            let spec = RegressorSpec::new(algo);
            let a = predict_weights_cv(&matrix, &spec, &plan, &CvOptions::default()).unwrap();
            let b = predict_weights_cv(&matrix, &spec, &plan, &CvOptions::default()).unwrap();
            assert_eq!(a, b, "{algo} not reproducible");
        }
    }

    #[test]
    fn strict_fold_scaling_changes_only_the_scaling() {
        let matrix = synthetic_matrix(30);
        let plan = kfold_split(&matrix.consumer_ids, 5, 0).unwrap();
        let spec = RegressorSpec::new(Algorithm::Linear);
        let strict = CvOptions {
            strict_fold_scaling: true,
            ..CvOptions::default()
        };
        let outcome = predict_weights_cv(&matrix, &spec, &plan, &strict).unwrap();
        assert_eq!(outcome.weights.len(), 30);
        // The linear target stays linear under per-fold affine rescaling.
        for d in &outcome.fold_diagnostics {
            assert!(d.regression_mae < 1e-6);
        }
    }

    #[test]
    fn plan_must_cover_the_matrix() {
        let matrix = synthetic_matrix(20);
        let other_ids: Vec<ConsumerId> = (100..120).collect();
        let plan = kfold_split(&other_ids, 5, 0).unwrap();
        let spec = RegressorSpec::new(Algorithm::Knn);
        assert!(matches!(
            predict_weights_cv(&matrix, &spec, &plan, &CvOptions::default()).unwrap_err(),
            Error::PlanMismatch
        ));
    }

    #[test]
    fn uniform_weights_are_all_one() {
        let map = WeightMap::uniform(1..=5);
        assert_eq!(map.len(), 5);
        for (_, e) in map.iter() {
            assert_eq!(e.weight, 1.0);
        }
        assert!(matches!(map.weight(99).unwrap_err(), Error::MissingWeight(99)));
    }

    #[test]
    fn weights_csv_round_trips() {
        let matrix = synthetic_matrix(12);
        let plan = kfold_split(&matrix.consumer_ids, 3, 1).unwrap();
        let spec = RegressorSpec::new(Algorithm::Tree);
        let outcome =
            predict_weights_cv(&matrix, &spec, &plan, &CvOptions::default()).unwrap();
        let mut buf = Vec::new();
        outcome.weights.write_csv(&mut buf).unwrap();
        let reparsed = WeightMap::parse_csv(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(reparsed.len(), outcome.weights.len());
        for (id, e) in outcome.weights.iter() {
            let r = reparsed.get(id).unwrap();
            assert_abs_diff_eq!(r.weight, e.weight, epsilon = 1e-8);
            assert_abs_diff_eq!(r.predicted_rel_scaled, e.predicted_rel_scaled, epsilon = 1e-8);
        }
    }

    #[test]
    fn every_algorithm_produces_floored_weights() {
        let matrix = synthetic_matrix(25);
        let plan = kfold_split(&matrix.consumer_ids, 5, 2).unwrap();
        for algo in Algorithm::ALL {
            let spec = RegressorSpec::new(algo);
            let outcome =
                predict_weights_cv(&matrix, &spec, &plan, &CvOptions::default()).unwrap();
            for (_, e) in outcome.weights.iter() {
                assert!((0.01..=1.0).contains(&e.weight), "{algo}: weight {}", e.weight);
            }
        }
    }
}
