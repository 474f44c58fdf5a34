//! Consumer profiles: six behavioural variables derived from a rating table.
//!
//! Per consumer we compute three rating-tendency counts (`pos`, `nut`,
//! `ngv`), a relative experience share (`exp`), a rating-similarity score
//! (`fluc`, exponential-decay agreement with co-raters), and the target
//! variable `rel` (mean absolute deviation from product means; lower is
//! more reliable).
//!
//! `fluc` is the expensive one: naively it compares every pair of raters
//! per product. We instead fold each product's half-star histogram against
//! a precomputed decay-power table, which is exact and reduces the cost per
//! (consumer, product) pair to the fixed bin count.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmt::fmt_sig9;
use crate::ingest::{rating_bin, ConsumerId, RatingTable, RATING_BINS};

/// Ratings at or below this value count as negative tendency.
pub const NEGATIVE_MAX: f64 = 2.5;
/// Ratings at or above this value count as positive tendency.
pub const POSITIVE_MIN: f64 = 3.5;

/// Decay base for the rating-similarity variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaConfig {
    lambda: f64,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        LambdaConfig { lambda: 0.95 }
    }
}

impl LambdaConfig {
    /// Requires `0 < lambda <= 1`.
    pub fn new(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 || lambda > 1.0 {
            return Err(Error::Config(format!(
                "lambda must be in (0, 1], got {lambda}"
            )));
        }
        Ok(LambdaConfig { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `lambda^(d/2)` for every half-star bin distance `d`.
    fn powers(&self) -> [f64; RATING_BINS] {
        let mut powers = [0.0; RATING_BINS];
        for (d, p) in powers.iter_mut().enumerate() {
            *p = self.lambda.powf(d as f64 * 0.5);
        }
        powers
    }
}

/// The six per-consumer variables. `pos`/`nut`/`ngv` are raw counts;
/// `exp`, `fluc` and `rel` are already in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsumerProfile {
    pub consumer_id: ConsumerId,
    pub pos: u32,
    pub nut: u32,
    pub ngv: u32,
    pub exp: f64,
    pub fluc: f64,
    pub rel: f64,
}

impl ConsumerProfile {
    /// Variables as a row in CSV column order.
    pub fn as_row(&self) -> [f64; 6] {
        [
            self.pos as f64,
            self.nut as f64,
            self.ngv as f64,
            self.exp,
            self.fluc,
            self.rel,
        ]
    }
}

pub const PROFILE_HEADER: &str = "consumer_id,pos,nut,ngv,exp,fluc,rel";
/// Columns preceding `rel`, the regression target.
pub const FEATURE_COUNT: usize = 5;
pub const REL_COLUMN: usize = 5;

/// Compute profiles for every consumer in the table, ordered by consumer id.
///
/// Products with a single rater carry no co-rater signal: they are skipped
/// by `fluc`, and a consumer with no co-rated product gets `fluc = 1.0`
/// (perfect self-agreement). `rel` uses all of the consumer's products and
/// deviates from product means that include the consumer's own rating.
pub fn build_profiles(table: &RatingTable, lambda: LambdaConfig) -> Result<Vec<ConsumerProfile>> {
    if table.is_empty() {
        return Err(Error::EmptyInput);
    }
    let powers = lambda.powers();
    let consumers: Vec<ConsumerId> = table.consumer_ids().collect();
    let max_count = consumers
        .iter()
        .map(|&c| table.consumer_records(c).expect("listed consumer").len())
        .max()
        .expect("non-empty table") as f64;

    // Per-consumer computation is independent and collected in id order, so
    // the result does not depend on the thread count.
    consumers
        .par_iter()
        .map(|&consumer| {
            let records = table.consumer_records(consumer).expect("listed consumer");

            let mut pos = 0u32;
            let mut nut = 0u32;
            let mut ngv = 0u32;
            let mut rel_sum = 0.0;
            let mut fluc_sum = 0.0;
            let mut fluc_products = 0u32;
            for rec in records {
                if rec.rating <= NEGATIVE_MAX {
                    ngv += 1;
                } else if rec.rating >= POSITIVE_MIN {
                    pos += 1;
                } else {
                    nut += 1;
                }

                let stats = table.product_stats(rec.product_id)?;
                rel_sum += (rec.rating - stats.mean).abs();

                if stats.count >= 2 {
                    let own_bin = rating_bin(rec.rating).expect("table ratings are on-grid");
                    let mut decay_total = 0.0;
                    for (bin, &count) in stats.histogram.iter().enumerate() {
                        if count > 0 {
                            decay_total +=
                                count as f64 * powers[own_bin.abs_diff(bin)];
                        }
                    }
                    // Drop the consumer's own lambda^0 term from the total.
                    fluc_sum += (decay_total - 1.0) / (stats.count - 1) as f64;
                    fluc_products += 1;
                }
            }

            let m = records.len() as f64;
            Ok(ConsumerProfile {
                consumer_id: consumer,
                pos,
                nut,
                ngv,
                exp: m / max_count,
                fluc: if fluc_products == 0 {
                    1.0
                } else {
                    fluc_sum / fluc_products as f64
                },
                rel: rel_sum / m,
            })
        })
        .collect()
}

/// Per-column min-max bounds for mapping variables onto [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams {
    pub mins: [f64; 6],
    pub maxs: [f64; 6],
}

impl ScalingParams {
    pub fn fit(rows: &[[f64; 6]]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyProfiles);
        }
        let mut mins = [f64::INFINITY; 6];
        let mut maxs = [f64::NEG_INFINITY; 6];
        for row in rows {
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite("profile variable"));
                }
                mins[c] = mins[c].min(v);
                maxs[c] = maxs[c].max(v);
            }
        }
        Ok(ScalingParams { mins, maxs })
    }

    /// Scale one row; constant columns map to 0.
    pub fn apply(&self, row: &[f64; 6]) -> [f64; 6] {
        let mut out = [0.0; 6];
        for c in 0..6 {
            let span = self.maxs[c] - self.mins[c];
            out[c] = if span > 0.0 {
                (row[c] - self.mins[c]) / span
            } else {
                0.0
            };
        }
        out
    }

    /// Map a scaled `rel` column value back to its raw range.
    pub fn unscale_rel(&self, scaled: f64) -> f64 {
        self.mins[REL_COLUMN] + scaled * (self.maxs[REL_COLUMN] - self.mins[REL_COLUMN])
    }
}

/// Profiles in matrix form: raw rows, min-max scaled rows, and the bounds
/// used. Row order matches `consumer_ids` (ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileMatrix {
    pub consumer_ids: Vec<ConsumerId>,
    pub raw: Vec<[f64; 6]>,
    pub scaled: Vec<[f64; 6]>,
    pub scaling: ScalingParams,
}

impl ProfileMatrix {
    pub fn from_profiles(profiles: &[ConsumerProfile]) -> Result<Self> {
        let raw: Vec<[f64; 6]> = profiles.iter().map(|p| p.as_row()).collect();
        Self::from_rows(profiles.iter().map(|p| p.consumer_id).collect(), raw)
    }

    fn from_rows(consumer_ids: Vec<ConsumerId>, raw: Vec<[f64; 6]>) -> Result<Self> {
        let scaling = ScalingParams::fit(&raw)?;
        let scaled = raw.iter().map(|r| scaling.apply(r)).collect();
        Ok(ProfileMatrix {
            consumer_ids,
            raw,
            scaled,
            scaling,
        })
    }

    pub fn len(&self) -> usize {
        self.consumer_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.consumer_ids.is_empty()
    }

    /// Same matrix with `ln(1 + v)` applied to the three raw count columns
    /// (scaling refit). Compresses the heavy-tailed count distributions.
    pub fn with_log_counts(&self) -> Result<Self> {
        let raw: Vec<[f64; 6]> = self
            .raw
            .iter()
            .map(|row| {
                let mut out = *row;
                for v in out.iter_mut().take(3) {
                    *v = v.ln_1p();
                }
                out
            })
            .collect();
        Self::from_rows(self.consumer_ids.clone(), raw)
    }
}

/// Write profiles as CSV (counts as integers, unit-interval variables at
/// nine significant digits).
pub fn write_profiles_csv<W: Write>(profiles: &[ConsumerProfile], mut w: W) -> Result<()> {
    writeln!(w, "{PROFILE_HEADER}")?;
    for p in profiles {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            p.consumer_id,
            p.pos,
            p.nut,
            p.ngv,
            fmt_sig9(p.exp),
            fmt_sig9(p.fluc),
            fmt_sig9(p.rel)
        )?;
    }
    Ok(())
}

/// Parse a CSV produced by [`write_profiles_csv`].
pub fn parse_profiles<R: BufRead>(reader: R) -> Result<Vec<ConsumerProfile>> {
    let mut profiles = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if line_no == 1 {
            if line != PROFILE_HEADER {
                return Err(Error::Malformed {
                    line: 1,
                    reason: format!("expected header `{PROFILE_HEADER}`"),
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
        if fields.len() != 7 {
            return Err(malformed(&format!("expected 7 fields, got {}", fields.len())));
        }
        profiles.push(ConsumerProfile {
            consumer_id: fields[0].parse().map_err(|_| malformed("invalid consumer id"))?,
            pos: fields[1].parse().map_err(|_| malformed("invalid pos count"))?,
            nut: fields[2].parse().map_err(|_| malformed("invalid nut count"))?,
            ngv: fields[3].parse().map_err(|_| malformed("invalid ngv count"))?,
            exp: fields[4].parse().map_err(|_| malformed("invalid exp value"))?,
            fluc: fields[5].parse().map_err(|_| malformed("invalid fluc value"))?,
            rel: fields[6].parse().map_err(|_| malformed("invalid rel value"))?,
        });
    }
    if profiles.is_empty() {
        return Err(Error::EmptyProfiles);
    }
    Ok(profiles)
}
