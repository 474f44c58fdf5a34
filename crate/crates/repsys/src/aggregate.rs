//! Product score aggregation: the weighted reputation score and five
//! classical baselines (mean, median, IMDb-style weighted rating, Bayesian
//! average, Dirichlet expectation).
//!
//! Everything is computed from the per-product aggregates maintained by the
//! rating table (sum, count, half-star histogram), so each product costs
//! O(bins) regardless of its rater count, and tables are emitted in
//! ascending product id.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmt::fmt_sig9;
use crate::ingest::{bin_value, rating_bin, ProductId, RatingTable};
use crate::learn::WeightMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BaselineMethod {
    Average,
    Median,
    Imdb,
    Bayesian,
    Dirichlet,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 5] = [
        BaselineMethod::Average,
        BaselineMethod::Median,
        BaselineMethod::Imdb,
        BaselineMethod::Bayesian,
        BaselineMethod::Dirichlet,
    ];
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "average" => Ok(BaselineMethod::Average),
            "median" => Ok(BaselineMethod::Median),
            "imdb" => Ok(BaselineMethod::Imdb),
            "bayesian" => Ok(BaselineMethod::Bayesian),
            "dirichlet" => Ok(BaselineMethod::Dirichlet),
            other => Err(Error::Config(format!(
                "unknown baseline `{other}` (expected average, median, imdb, bayesian or dirichlet)"
            ))),
        }
    }
}

impl fmt::Display for BaselineMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BaselineMethod::Average => "average",
            BaselineMethod::Median => "median",
            BaselineMethod::Imdb => "imdb",
            BaselineMethod::Bayesian => "bayesian",
            BaselineMethod::Dirichlet => "dirichlet",
        };
        f.write_str(s)
    }
}

/// Baseline choice plus its constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineSpec {
    pub method: BaselineMethod,
    /// Minimum-votes constant for the IMDb formula; `None` picks the 25th
    /// percentile of per-product rating counts.
    pub imdb_m: Option<f64>,
    /// Prior strength C for the Bayesian and Dirichlet forms.
    pub prior_weight: f64,
}

impl BaselineSpec {
    pub fn new(method: BaselineMethod) -> Self {
        BaselineSpec {
            method,
            imdb_m: None,
            prior_weight: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
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

    /// The effective minimum-votes constant: configured value, or the 25th
    /// percentile (nearest-rank) of per-product rating counts.
    pub fn resolve_imdb_m(&self, table: &RatingTable) -> Result<f64> {
        if let Some(m) = self.imdb_m {
            return Ok(m);
        }
        let mut counts: Vec<u32> = table
            .product_ids()
            .map(|p| table.product_stats(p).expect("listed product").count)
            .collect();
        if counts.is_empty() {
            return Err(Error::EmptyInput);
        }
        counts.sort_unstable();
        let rank = counts.len().div_ceil(4); // nearest-rank quartile, at least 1
        Ok(counts[rank - 1] as f64)
    }

    /// Label carrying the full parameterization, e.g. `imdb(m=6)`.
    pub fn label(&self, table: &RatingTable) -> Result<String> {
        Ok(match self.method {
            BaselineMethod::Average => "average".to_string(),
            BaselineMethod::Median => "median".to_string(),
            BaselineMethod::Imdb => format!("imdb(m={})", fmt_sig9(self.resolve_imdb_m(table)?)),
            BaselineMethod::Bayesian => format!("bayesian(C={})", fmt_sig9(self.prior_weight)),
            BaselineMethod::Dirichlet => format!("dirichlet(C={})", fmt_sig9(self.prior_weight)),
        })
    }

    /// Constants relevant to this method, as `key=value` pairs for report
    /// labeling (resolved, so auto-derived values are concrete).
    pub fn describe_params(&self, table: &RatingTable) -> Result<Vec<(String, String)>> {
        Ok(match self.method {
            BaselineMethod::Average | BaselineMethod::Median => Vec::new(),
            BaselineMethod::Imdb => vec![(
                "m".to_string(),
                fmt_sig9(self.resolve_imdb_m(table)?),
            )],
            BaselineMethod::Bayesian | BaselineMethod::Dirichlet => {
                vec![("C".to_string(), fmt_sig9(self.prior_weight))]
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreEntry {
    pub score: f64,
    pub n_ratings: u32,
}

/// One aggregated score per rated product, tagged with the producing
/// method's label.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductScoreTable {
    method: String,
    entries: BTreeMap<ProductId, ScoreEntry>,
}

pub const SCORES_HEADER: &str = "product_id,score,n_ratings,method";

impl ProductScoreTable {
    pub fn new(method: impl Into<String>, entries: BTreeMap<ProductId, ScoreEntry>) -> Self {
        ProductScoreTable {
            method: method.into(),
            entries,
        }
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, product: ProductId) -> Option<&ScoreEntry> {
        self.entries.get(&product)
    }

    pub fn score(&self, product: ProductId) -> Result<f64> {
        self.entries
            .get(&product)
            .map(|e| e.score)
            .ok_or(Error::MissingScore(product))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ProductId, &ScoreEntry)> {
        self.entries.iter().map(|(&p, e)| (p, e))
    }

    pub fn product_ids(&self) -> impl Iterator<Item = ProductId> + '_ {
        self.entries.keys().copied()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{SCORES_HEADER}")?;
        for (p, e) in &self.entries {
            writeln!(w, "{},{},{},{}", p, fmt_sig9(e.score), e.n_ratings, self.method)?;
        }
        Ok(())
    }

    pub fn parse_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut method: Option<String> = None;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            if line_no == 1 {
                if line != SCORES_HEADER {
                    return Err(Error::Malformed {
                        line: 1,
                        reason: format!("expected header `{SCORES_HEADER}`"),
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
            if fields.len() != 4 {
                return Err(malformed(&format!("expected 4 fields, got {}", fields.len())));
            }
            let product: ProductId = fields[0].parse().map_err(|_| malformed("invalid product id"))?;
            let score: f64 = fields[1].parse().map_err(|_| malformed("invalid score"))?;
            let n_ratings: u32 = fields[2].parse().map_err(|_| malformed("invalid count"))?;
            match &method {
                None => method = Some(fields[3].to_string()),
                Some(m) if m != fields[3] => {
                    return Err(malformed("mixed method labels in one score table"));
                }
                _ => {}
            }
            entries.insert(product, ScoreEntry { score, n_ratings });
        }
        let method = method.ok_or(Error::EmptyInput)?;
        Ok(ProductScoreTable { method, entries })
    }
}

/// Weighted reputation score of one product: `sum(w_j * r_j) / sum(w_j)`
/// over its raters. A vanishing weight mass (impossible under a positive
/// floor, but guarded) falls back to the plain mean.
pub fn weighted_score(table: &RatingTable, weights: &WeightMap, product: ProductId) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut plain_sum = 0.0;
    let mut count = 0u32;
    for rec in table.product_ratings(product)? {
        let w = weights.weight(rec.consumer_id)?;
        num += w * rec.rating;
        den += w;
        plain_sum += rec.rating;
        count += 1;
    }
    if den < 1e-12 {
        return Ok(plain_sum / count as f64);
    }
    Ok(num / den)
}

/// Weighted scores for every rated product, labeled with `method`.
pub fn score_all(
    table: &RatingTable,
    weights: &WeightMap,
    method: impl Into<String>,
) -> Result<ProductScoreTable> {
    if table.is_empty() {
        return Err(Error::EmptyInput);
    }
    let products: Vec<ProductId> = table.product_ids().collect();
    let scored: Vec<(ProductId, ScoreEntry)> = products
        .par_iter()
        .map(|&p| -> Result<_> {
            Ok((
                p,
                ScoreEntry {
                    score: weighted_score(table, weights, p)?,
                    n_ratings: table.product_stats(p)?.count,
                },
            ))
        })
        .collect::<Result<_>>()?;
    Ok(ProductScoreTable::new(method, scored.into_iter().collect()))
}

/// Median straight off the half-star histogram (even counts average the
/// two central order statistics).
fn histogram_median(histogram: &[u32], count: u32) -> f64 {
    let lo_rank = count.div_ceil(2); // 1-indexed lower middle
    let hi_rank = count / 2 + 1; // upper middle (== lo for odd counts)
    let mut seen = 0u32;
    let mut lo = None;
    let mut hi = None;
    for (bin, &c) in histogram.iter().enumerate() {
        seen += c;
        if lo.is_none() && seen >= lo_rank {
            lo = Some(bin_value(bin));
        }
        if hi.is_none() && seen >= hi_rank {
            hi = Some(bin_value(bin));
            break;
        }
    }
    let lo = lo.expect("ranks are within the histogram mass");
    let hi = hi.expect("ranks are within the histogram mass");
    (lo + hi) / 2.0
}

/// Baseline scores for every rated product.
pub fn baseline_scores(table: &RatingTable, spec: &BaselineSpec) -> Result<ProductScoreTable> {
    spec.validate()?;
    if table.is_empty() {
        return Err(Error::EmptyInput);
    }
    let label = spec.label(table)?;
    let global_mean = table.global_mean();
    let imdb_m = match spec.method {
        BaselineMethod::Imdb => spec.resolve_imdb_m(table)?,
        _ => 0.0,
    };
    let levels: Vec<(usize, f64)> = table
        .rating_levels()
        .iter()
        .map(|&l| (rating_bin(l).expect("levels are on-grid"), l))
        .collect();

    let mut entries = BTreeMap::new();
    for product in table.product_ids() {
        let stats = table.product_stats(product)?;
        let v = stats.count as f64;
        let score = match spec.method {
            BaselineMethod::Average => stats.mean,
            BaselineMethod::Median => histogram_median(&stats.histogram, stats.count),
            BaselineMethod::Imdb => {
                (v / (v + imdb_m)) * stats.mean + (imdb_m / (v + imdb_m)) * global_mean
            }
            BaselineMethod::Bayesian => {
                (spec.prior_weight * global_mean + stats.sum) / (spec.prior_weight + v)
            }
            BaselineMethod::Dirichlet => {
                let c = spec.prior_weight;
                let base = c / levels.len() as f64;
                let total: f64 = levels
                    .iter()
                    .map(|&(bin, x)| x * (stats.histogram[bin] as f64 + base))
                    .sum();
                total / (v + c)
            }
        };
        entries.insert(
            product,
            ScoreEntry {
                score,
                n_ratings: stats.count,
            },
        );
    }
    Ok(ProductScoreTable::new(label, entries))
}
