//! Rating-log ingestion: parse MovieLens-style files into an immutable,
//! indexed in-memory table.
//!
//! All ratings live on the half-star grid 0.5..=5.0. Per-product histograms
//! are kept over that fixed grid regardless of the admissible level set, so
//! downstream aggregation is exact even when a file mixes step sizes.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

pub type ConsumerId = u32;
pub type ProductId = u32;

/// Number of half-star bins; bin `i` holds rating `(i + 1) / 2`.
pub const RATING_BINS: usize = 10;
pub const MIN_RATING: f64 = 0.5;
pub const MAX_RATING: f64 = 5.0;

/// One rating event, already validated onto the half-star grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingRecord {
    pub consumer_id: ConsumerId,
    pub product_id: ProductId,
    pub rating: f64,
    pub timestamp: i64,
}

/// Wire formats accepted by [`parse_ratings`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatingFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp`
    Ml100k,
    /// `UserID::MovieID::Rating::Timestamp` (also used by the 10M release)
    Ml1m,
    /// header `consumer_id,product_id,rating,timestamp`
    Csv,
}

impl FromStr for RatingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml-100k" => Ok(RatingFormat::Ml100k),
            "ml-1m" => Ok(RatingFormat::Ml1m),
            "csv" => Ok(RatingFormat::Csv),
            other => Err(Error::Config(format!(
                "unknown format `{other}` (expected ml-100k, ml-1m or csv)"
            ))),
        }
    }
}

impl fmt::Display for RatingFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RatingFormat::Ml100k => "ml-100k",
            RatingFormat::Ml1m => "ml-1m",
            RatingFormat::Csv => "csv",
        };
        f.write_str(s)
    }
}

pub const CSV_HEADER: &str = "consumer_id,product_id,rating,timestamp";

/// Half-star bin index for a rating, or `None` when the value is outside
/// [0.5, 5.0] or off the 0.5 grid.
pub fn rating_bin(rating: f64) -> Option<usize> {
    let doubled = rating * 2.0;
    let nearest = doubled.round();
    if (doubled - nearest).abs() > 1e-9 {
        return None;
    }
    let idx = nearest as i64;
    if (1..=RATING_BINS as i64).contains(&idx) {
        Some(idx as usize - 1)
    } else {
        None
    }
}

/// Rating value stored in half-star bin `bin`.
pub fn bin_value(bin: usize) -> f64 {
    (bin as f64 + 1.0) / 2.0
}

/// Per-product aggregates maintained by the table.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductStats {
    /// Arithmetic mean of the product's ratings.
    pub mean: f64,
    /// Exact sum of the product's ratings (half-stars sum exactly in f64).
    pub sum: f64,
    pub count: u32,
    /// Count per half-star bin; bins always sum to `count`.
    pub histogram: [u32; RATING_BINS],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct DatasetStats {
    pub consumer_count: usize,
    pub product_count: usize,
    pub rating_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub duplicate_pairs_removed: u32,
    /// Records whose rating is not in the table's admissible level set.
    pub out_of_level: u32,
    pub min_timestamp: Option<i64>,
    pub max_timestamp: Option<i64>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.duplicate_pairs_removed == 0 && self.out_of_level == 0
    }
}

/// Immutable indexed rating table. Records are stored sorted by
/// (consumer_id, product_id); per-consumer views are contiguous spans and
/// per-product views are index lists into the same storage.
#[derive(Debug, Clone, Default)]
pub struct RatingTable {
    records: Vec<RatingRecord>,
    consumer_spans: BTreeMap<ConsumerId, (u32, u32)>,
    product_records: BTreeMap<ProductId, Vec<u32>>,
    product_stats: BTreeMap<ProductId, ProductStats>,
    rating_levels: Vec<f64>,
    global_mean: f64,
    duplicates_removed: u32,
}

impl RatingTable {
    /// Build a table from records, auto-detecting the admissible level set:
    /// integer stars 1..=5 unless any half-star value is present.
    pub fn from_records(records: Vec<RatingRecord>) -> Result<Self> {
        let levels = detect_levels(&records);
        Self::build(records, levels)
    }

    /// Build a table with an explicitly declared level set. Ratings off the
    /// declared set are kept and later flagged by [`RatingTable::validate`].
    pub fn with_levels(records: Vec<RatingRecord>, levels: Vec<f64>) -> Result<Self> {
        for &level in &levels {
            if rating_bin(level).is_none() {
                return Err(Error::Config(format!(
                    "level {level} is not on the half-star grid"
                )));
            }
        }
        Self::build(records, levels)
    }

    fn build(mut records: Vec<RatingRecord>, levels: Vec<f64>) -> Result<Self> {
        for rec in &records {
            if !rec.rating.is_finite() || rating_bin(rec.rating).is_none() {
                return Err(Error::InvalidRecord {
                    consumer: rec.consumer_id,
                    product: rec.product_id,
                    reason: format!("rating {} is off the half-star grid", rec.rating),
                });
            }
            if rec.timestamp < 0 {
                return Err(Error::InvalidRecord {
                    consumer: rec.consumer_id,
                    product: rec.product_id,
                    reason: format!("negative timestamp {}", rec.timestamp),
                });
            }
        }

        // Stable sort keeps input order within equal (consumer, product)
        // pairs so duplicate resolution can break timestamp ties by
        // last-in-file.
        records.sort_by_key(|r| (r.consumer_id, r.product_id));

        let mut deduped: Vec<RatingRecord> = Vec::with_capacity(records.len());
        let mut duplicates_removed = 0u32;
        for rec in records {
            match deduped.last_mut() {
                Some(last)
                    if last.consumer_id == rec.consumer_id
                        && last.product_id == rec.product_id =>
                {
                    // keep greatest timestamp; ties resolve to the later record
                    if rec.timestamp >= last.timestamp {
                        *last = rec;
                    }
                    duplicates_removed += 1;
                }
                _ => deduped.push(rec),
            }
        }

        let mut consumer_spans = BTreeMap::new();
        let mut product_records: BTreeMap<ProductId, Vec<u32>> = BTreeMap::new();
        let mut product_stats: BTreeMap<ProductId, ProductStats> = BTreeMap::new();
        let mut start = 0usize;
        for i in 0..deduped.len() {
            let rec = deduped[i];
            if i + 1 == deduped.len() || deduped[i + 1].consumer_id != rec.consumer_id {
                consumer_spans.insert(rec.consumer_id, (start as u32, (i + 1 - start) as u32));
                start = i + 1;
            }
            product_records.entry(rec.product_id).or_default().push(i as u32);
            let stats = product_stats.entry(rec.product_id).or_insert(ProductStats {
                mean: 0.0,
                sum: 0.0,
                count: 0,
                histogram: [0; RATING_BINS],
            });
            stats.sum += rec.rating;
            stats.count += 1;
            stats.histogram[rating_bin(rec.rating).expect("validated above")] += 1;
        }
        let mut total = 0.0;
        for stats in product_stats.values_mut() {
            stats.mean = stats.sum / stats.count as f64;
            total += stats.sum;
        }
        let global_mean = if deduped.is_empty() {
            0.0
        } else {
            total / deduped.len() as f64
        };

        Ok(RatingTable {
            records: deduped,
            consumer_spans,
            product_records,
            product_stats,
            rating_levels: levels,
            global_mean,
            duplicates_removed,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn consumer_ids(&self) -> impl Iterator<Item = ConsumerId> + '_ {
        self.consumer_spans.keys().copied()
    }

    pub fn product_ids(&self) -> impl Iterator<Item = ProductId> + '_ {
        self.product_records.keys().copied()
    }

    /// All records by one consumer, ordered by ascending product id.
    pub fn consumer_records(&self, consumer: ConsumerId) -> Result<&[RatingRecord]> {
        let &(start, len) = self
            .consumer_spans
            .get(&consumer)
            .ok_or(Error::UnknownConsumer(consumer))?;
        Ok(&self.records[start as usize..(start + len) as usize])
    }

    /// All records for one product, ordered by ascending consumer id.
    pub fn product_ratings(&self, product: ProductId) -> Result<impl Iterator<Item = &RatingRecord>> {
        let idxs = self
            .product_records
            .get(&product)
            .ok_or(Error::UnknownProduct(product))?;
        Ok(idxs.iter().map(move |&i| &self.records[i as usize]))
    }

    pub fn product_stats(&self, product: ProductId) -> Result<&ProductStats> {
        self.product_stats
            .get(&product)
            .ok_or(Error::UnknownProduct(product))
    }

    /// Mean of a product's ratings (includes every rater).
    pub fn product_mean(&self, product: ProductId) -> Result<f64> {
        Ok(self.product_stats(product)?.mean)
    }

    /// Grand mean over all rating records.
    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    /// Admissible rating levels, ascending.
    pub fn rating_levels(&self) -> &[f64] {
        &self.rating_levels
    }

    pub fn min_level(&self) -> f64 {
        self.rating_levels.first().copied().unwrap_or(MIN_RATING)
    }

    pub fn max_level(&self) -> f64 {
        self.rating_levels.last().copied().unwrap_or(MAX_RATING)
    }

    pub fn duplicates_removed(&self) -> u32 {
        self.duplicates_removed
    }

    pub fn stats(&self) -> DatasetStats {
        DatasetStats {
            consumer_count: self.consumer_spans.len(),
            product_count: self.product_records.len(),
            rating_count: self.records.len(),
        }
    }

    pub fn validate(&self) -> ValidationReport {
        let level_bins: Vec<usize> = self
            .rating_levels
            .iter()
            .filter_map(|&l| rating_bin(l))
            .collect();
        let mut out_of_level = 0u32;
        for rec in &self.records {
            let bin = rating_bin(rec.rating).expect("table ratings are on-grid");
            if !level_bins.contains(&bin) {
                out_of_level += 1;
            }
        }
        ValidationReport {
            duplicate_pairs_removed: self.duplicates_removed,
            out_of_level,
            min_timestamp: self.records.iter().map(|r| r.timestamp).min(),
            max_timestamp: self.records.iter().map(|r| r.timestamp).max(),
        }
    }

    /// Write the canonical CSV form; re-parsing it yields an identical table.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for rec in &self.records {
            writeln!(
                w,
                "{},{},{},{}",
                rec.consumer_id, rec.product_id, rec.rating, rec.timestamp
            )?;
        }
        Ok(())
    }
}

fn detect_levels(records: &[RatingRecord]) -> Vec<f64> {
    let half_stars = records.iter().any(|r| r.rating.fract() != 0.0);
    if half_stars {
        (1..=RATING_BINS).map(|i| i as f64 / 2.0).collect()
    } else {
        (1..=5).map(|i| i as f64).collect()
    }
}

/// Parse a rating stream in the given wire format into an indexed table.
///
/// Duplicate (consumer, product) pairs keep the record with the greatest
/// timestamp; the removal count is retained on the table. Any malformed
/// line is fatal and reported with its line number.
pub fn parse_ratings<R: BufRead>(reader: R, format: RatingFormat) -> Result<RatingTable> {
    let mut records = Vec::new();
    let mut saw_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| {
            if e.kind() == std::io::ErrorKind::InvalidData {
                Error::Malformed {
                    line: line_no,
                    reason: "invalid UTF-8".to_string(),
                    text: String::new(),
                }
            } else {
                Error::Io(e)
            }
        })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if format == RatingFormat::Csv && !saw_header {
            if line != CSV_HEADER {
                return Err(Error::Malformed {
                    line: line_no,
                    reason: format!("expected header `{CSV_HEADER}`"),
                    text: line.to_string(),
                });
            }
            saw_header = true;
            continue;
        }
        records.push(parse_line(line, line_no, format)?);
    }
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    RatingTable::from_records(records)
}

fn parse_line(line: &str, line_no: usize, format: RatingFormat) -> Result<RatingRecord> {
    let malformed = |reason: &str| Error::Malformed {
        line: line_no,
        reason: reason.to_string(),
        text: line.to_string(),
    };

    let fields: Vec<&str> = match format {
        RatingFormat::Ml100k => line.split('\t').collect(),
        RatingFormat::Ml1m => line.split("::").collect(),
        RatingFormat::Csv => line.split(',').collect(),
    };
    if fields.len() != 4 {
        return Err(malformed(&format!("expected 4 fields, got {}", fields.len())));
    }

    let consumer_id: ConsumerId = fields[0]
        .parse()
        .map_err(|_| malformed("invalid consumer id"))?;
    let product_id: ProductId = fields[1]
        .parse()
        .map_err(|_| malformed("invalid product id"))?;
    if consumer_id == 0 {
        return Err(malformed("consumer id must be positive"));
    }
    if product_id == 0 {
        return Err(malformed("product id must be positive"));
    }
    let rating: f64 = fields[2].parse().map_err(|_| malformed("invalid rating"))?;
    if !rating.is_finite() || !(MIN_RATING..=MAX_RATING).contains(&rating) {
        return Err(Error::RatingRange {
            line: line_no,
            rating,
            text: line.to_string(),
        });
    }
    if rating_bin(rating).is_none() {
        return Err(malformed("rating not on the half-star grid"));
    }
    let timestamp: i64 = fields[3]
        .parse()
        .map_err(|_| malformed("invalid timestamp"))?;
    if timestamp < 0 {
        return Err(malformed("negative timestamp"));
    }

    Ok(RatingRecord {
        consumer_id,
        product_id,
        rating,
        timestamp,
    })
}
