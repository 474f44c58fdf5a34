//! k-nearest-neighbor regression: stores the training rows and answers
//! queries with the unweighted mean of the k nearest targets under
//! Euclidean distance. Distance ties at the selection boundary resolve to
//! the lower training-row index, so predictions are fully deterministic.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    k: usize,
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl KnnModel {
    pub fn fit(rows: Vec<Vec<f64>>, targets: Vec<f64>, k: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if k == 0 {
            return Err(Error::Config("knn_k must be at least 1".to_string()));
        }
        if k > rows.len() {
            return Err(Error::Config(format!(
                "knn_k = {k} exceeds the training-set size {}",
                rows.len()
            )));
        }
        Ok(KnnModel { k, rows, targets })
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.rows[0].len() {
            return Err(Error::FeatureArity {
                expected: self.rows[0].len(),
                got: x.len(),
            });
        }
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.partial_cmp(&b.0)
                .expect("finite distances")
                .then(a.1.cmp(&b.1))
        };
        // Selection is O(n); the k winners are then ordered so the
        // accumulation sequence (and thus the float result) is canonical.
        dist.select_nth_unstable_by(self.k - 1, cmp);
        let selected = &mut dist[..self.k];
        selected.sort_unstable_by(cmp);
        let sum: f64 = selected.iter().map(|&(_, i)| self.targets[i]).sum();
        Ok(sum / self.k as f64)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
