//! Evaluation of score tables: rating-level mean absolute error, Kendall
//! tau-b rank agreement between score tables (including top-k% restricted
//! curves), and MAE-based method rankings.

use std::collections::BTreeMap;
use std::io::Write;

use crate::aggregate::ProductScoreTable;
use crate::error::{Error, Result};
use crate::fmt::fmt_sig9;
use crate::ingest::RatingTable;
use crate::learn::FoldDiagnostic;

/// Mean absolute error of a score table against the ratings: the mean over
/// products of the mean absolute deviation of each product's ratings from
/// its score. Every rated product must be scored.
pub fn mae(table: &RatingTable, scores: &ProductScoreTable) -> Result<f64> {
    if table.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut product_count = 0usize;
    let mut total = 0.0;
    for product in table.product_ids() {
        let score = scores.score(product)?;
        let mut abs_sum = 0.0;
        let mut n = 0u32;
        for rec in table.product_ratings(product)? {
            abs_sum += (rec.rating - score).abs();
            n += 1;
        }
        total += abs_sum / n as f64;
        product_count += 1;
    }
    Ok(total / product_count as f64)
}

/// Kendall tau-b over paired scores, computed in O(n log n): sort by the
/// first key, count discordant pairs as merge-sort inversions of the second,
/// and correct both denominators for ties.
pub fn kendall_tau_pairs(pairs: &[(f64, f64)]) -> Result<f64> {
    let n = pairs.len();
    if n < 2 {
        return Err(Error::TooFewItems { need: 2, got: n });
    }
    let mut sorted: Vec<(f64, f64)> = pairs.to_vec();
    sorted.sort_by(|x, y| {
        x.0.partial_cmp(&y.0)
            .expect("finite scores")
            .then(x.1.partial_cmp(&y.1).expect("finite scores"))
    });

    let n0 = pairs_of(n as u64);
    // Ties among first keys (n1) and joint ties (n3), from the sorted runs.
    let mut n1 = 0u64;
    let mut n3 = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && sorted[j].0 == sorted[i].0 {
            j += 1;
        }
        n1 += pairs_of((j - i) as u64);
        let mut k = i;
        while k < j {
            let mut l = k;
            while l < j && sorted[l].1 == sorted[k].1 {
                l += 1;
            }
            n3 += pairs_of((l - k) as u64);
            k = l;
        }
        i = j;
    }
    // Ties among second keys (n2).
    let mut b_sorted: Vec<f64> = sorted.iter().map(|p| p.1).collect();
    b_sorted.sort_by(|x, y| x.partial_cmp(y).expect("finite scores"));
    let mut n2 = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && b_sorted[j] == b_sorted[i] {
            j += 1;
        }
        n2 += pairs_of((j - i) as u64);
        i = j;
    }

    let den1 = n0 - n1;
    let den2 = n0 - n2;
    if den1 == 0 || den2 == 0 {
        return Err(Error::DegenerateRanking);
    }

    let mut b_seq: Vec<f64> = sorted.iter().map(|p| p.1).collect();
    let swaps = count_inversions(&mut b_seq);
    // Concordant minus discordant from the inversion count.
    let numerator = n0 as i128 - n1 as i128 - n2 as i128 + n3 as i128 - 2 * swaps as i128;
    Ok(numerator as f64 / ((den1 as f64) * (den2 as f64)).sqrt())
}

fn pairs_of(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Merge-sort inversion count (pairs out of ascending order).
fn count_inversions(values: &mut [f64]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mut buf = values.to_vec();
    sort_count(values, &mut buf)
}

fn sort_count(values: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = values.split_at_mut(mid);
    let (buf_l, buf_r) = buf.split_at_mut(mid);
    let mut inversions = sort_count(left, buf_l) + sort_count(right, buf_r);

    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < left.len() && j < right.len() {
        if left[i] <= right[j] {
            buf[k] = left[i];
            i += 1;
        } else {
            buf[k] = right[j];
            inversions += (left.len() - i) as u64;
            j += 1;
        }
        k += 1;
    }
    while i < left.len() {
        buf[k] = left[i];
        i += 1;
        k += 1;
    }
    while j < right.len() {
        buf[k] = right[j];
        j += 1;
        k += 1;
    }
    values.copy_from_slice(&buf[..n]);
    inversions
}

/// Kendall tau-b between two score tables over their (identical) product
/// sets.
pub fn kendall_tau(a: &ProductScoreTable, b: &ProductScoreTable) -> Result<f64> {
    if a.len() != b.len() || !a.product_ids().eq(b.product_ids()) {
        return Err(Error::ProductSetMismatch);
    }
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b.iter())
        .map(|((_, ea), (_, eb))| (ea.score, eb.score))
        .collect();
    kendall_tau_pairs(&pairs)
}

/// Thresholds (percent of the product set) at which curve points are taken.
pub const DEFAULT_THRESHOLDS: [u32; 11] = [1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold_pct: u32,
    pub set_size: usize,
    pub tau: f64,
}

/// Tau at each top-k% threshold, where subsets are chosen by the reference
/// table's ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct KendallCurve {
    pub reference: String,
    pub other: String,
    pub points: Vec<CurvePoint>,
}

/// Rank agreement restricted to the reference table's top products, swept
/// over [`DEFAULT_THRESHOLDS`]. The top ⌈p·M/100⌉ products are selected by
/// descending reference score with ties broken by ascending product id; the
/// selection never drops below two products so tau stays defined.
pub fn topk_tau_curve(
    reference: &ProductScoreTable,
    other: &ProductScoreTable,
) -> Result<KendallCurve> {
    let m = reference.len();
    if m < 10 {
        return Err(Error::TooFewItems { need: 10, got: m });
    }
    if m != other.len() || !reference.product_ids().eq(other.product_ids()) {
        return Err(Error::ProductSetMismatch);
    }

    // Reference ranking: best first.
    let mut ranked: Vec<(f64, u32)> = reference.iter().map(|(p, e)| (e.score, p)).collect();
    ranked.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .expect("finite scores")
            .then(a.1.cmp(&b.1))
    });

    let mut points = Vec::with_capacity(DEFAULT_THRESHOLDS.len());
    for &pct in &DEFAULT_THRESHOLDS {
        let take = (pct as usize * m).div_ceil(100).clamp(2, m);
        let pairs: Vec<(f64, f64)> = ranked[..take]
            .iter()
            .map(|&(score, p)| -> Result<(f64, f64)> {
                Ok((score, other.score(p)?))
            })
            .collect::<Result<_>>()?;
        // A subset where one side is fully tied has no defined rank
        // correlation; that threshold simply has no point on the curve
        // (the CSV stays plot-ready, the remaining points stand).
        match kendall_tau_pairs(&pairs) {
            Ok(tau) => points.push(CurvePoint {
                threshold_pct: pct,
                set_size: take,
                tau,
            }),
            Err(Error::DegenerateRanking) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(KendallCurve {
        reference: reference.method().to_string(),
        other: other.method().to_string(),
        points,
    })
}

pub const KENDALL_HEADER: &str = "reference,other,threshold_pct,set_size,tau";

pub fn write_kendall_csv<W: Write>(curves: &[KendallCurve], mut w: W) -> Result<()> {
    writeln!(w, "{KENDALL_HEADER}")?;
    for curve in curves {
        for p in &curve.points {
            writeln!(
                w,
                "{},{},{},{},{}",
                curve.reference,
                curve.other,
                p.threshold_pct,
                p.set_size,
                fmt_sig9(p.tau)
            )?;
        }
    }
    Ok(())
}

/// Methods ordered by ascending MAE; equal MAEs order lexicographically.
pub fn rank_models(maes: &BTreeMap<String, f64>) -> Vec<String> {
    let mut names: Vec<&String> = maes.keys().collect();
    names.sort_by(|a, b| {
        maes[*a]
            .partial_cmp(&maes[*b])
            .expect("finite MAE")
            .then(a.cmp(b))
    });
    names.into_iter().cloned().collect()
}

/// One evaluated method in the report: its label, the hyperparameters it
/// ran with, its rating-level MAE, and (for cross-validated models) the
/// per-fold training diagnostics.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ModelEval {
    pub name: String,
    pub params: BTreeMap<String, String>,
    pub mae: f64,
    pub fold_diagnostics: Vec<FoldDiagnostic>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EvalReport {
    pub dataset: String,
    pub lambda: f64,
    pub seed: u64,
    pub models: Vec<ModelEval>,
    pub ranking: Vec<String>,
}

impl EvalReport {
    /// Ranking recomputed from the models' MAEs (ascending, ties by name).
    pub fn compute_ranking(models: &[ModelEval]) -> Vec<String> {
        let maes: BTreeMap<String, f64> =
            models.iter().map(|m| (m.name.clone(), m.mae)).collect();
        rank_models(&maes)
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)
            .map_err(|e| Error::Config(format!("report serialization failed: {e}")))?;
        writeln!(w)?;
        Ok(())
    }
}
