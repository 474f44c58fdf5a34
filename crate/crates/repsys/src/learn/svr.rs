//! ε-insensitive support vector regression trained by sequential minimal
//! optimization over the standard 2n-variable dual with an RBF kernel.
//!
//! Variables `a[0..n]` and `a[n..2n]` are the two coefficient groups of the
//! dual (sign `z_t` = +1 for the first, −1 for the second); the fitted
//! function is `f(x) = Σ_i (a[i] − a[n+i])·K(x_i, x) + b`. Each iteration
//! picks the maximal first-order violating pair, takes the exact
//! two-variable Newton step clipped to the box `[0, C]`, and updates the
//! gradient incrementally. Kernel rows are memoized in a bounded FIFO cache
//! so large problems stay within a fixed memory budget.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Iteration cap; hitting it is reported as a numerical failure.
pub const DEFAULT_MAX_ITER: usize = 10_000_000;

/// Kernel-row cache budget for large training sets, in bytes.
const CACHE_BYTES: usize = 64 << 20;
/// Problems up to this size keep every kernel row.
const FULL_CACHE_LIMIT: usize = 3000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrParams {
    /// Box penalty C > 0.
    pub c: f64,
    /// Tube half-width ε ≥ 0; residuals inside the tube carry no loss.
    pub epsilon: f64,
    /// RBF width γ > 0: K(a, b) = exp(−γ‖a − b‖²).
    pub gamma: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl SvrParams {
    fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::Config(format!("svr_c must be positive, got {}", self.c)));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "svr_epsilon must be nonnegative, got {}",
                self.epsilon
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!(
                "svr_gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "svr_tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SvrModel {
    rows: Vec<Vec<f64>>,
    /// Dual coefficients, length 2n.
    alpha: Vec<f64>,
    /// Net coefficient per training row: `alpha[i] − alpha[n+i]`.
    beta: Vec<f64>,
    bias: f64,
    params: SvrParams,
    iterations: usize,
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let dist2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * dist2).exp()
}

/// Bounded memo of kernel rows `K(x_i, ·)` with FIFO eviction.
struct KernelCache {
    rows: Vec<Option<Box<[f64]>>>,
    order: VecDeque<usize>,
    capacity: usize,
}

impl KernelCache {
    fn new(n: usize) -> Self {
        let capacity = if n <= FULL_CACHE_LIMIT {
            n
        } else {
            (CACHE_BYTES / (8 * n)).max(2)
        };
        KernelCache {
            rows: vec![None; n],
            order: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// Row of kernel values for training point `i`; `pinned` is never
    /// evicted to make room (the active pair needs both its rows live).
    fn row(&mut self, data: &[Vec<f64>], gamma: f64, i: usize, pinned: usize) -> &[f64] {
        if self.rows[i].is_none() {
            if self.order.len() >= self.capacity {
                // Evict the oldest non-pinned entry.
                let pos = self
                    .order
                    .iter()
                    .position(|&r| r != pinned)
                    .expect("capacity >= 2 leaves an evictable row");
                let victim = self.order.remove(pos).expect("position is in range");
                self.rows[victim] = None;
            }
            let xi = &data[i];
            let row: Box<[f64]> = data.iter().map(|xj| rbf(gamma, xi, xj)).collect();
            self.rows[i] = Some(row);
            self.order.push_back(i);
        }
        self.rows[i].as_deref().expect("row just inserted")
    }
}

impl SvrModel {
    pub fn fit(rows: Vec<Vec<f64>>, targets: &[f64], params: SvrParams) -> Result<Self> {
        params.validate()?;
        if rows.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let n = rows.len();
        let c = params.c;

        // Gradient of the dual at a = 0: eps - y for the +1 group,
        // eps + y for the -1 group.
        let mut alpha = vec![0.0; 2 * n];
        let mut grad = vec![0.0; 2 * n];
        for i in 0..n {
            grad[i] = params.epsilon - targets[i];
            grad[n + i] = params.epsilon + targets[i];
        }
        let z = |t: usize| if t < n { 1.0 } else { -1.0 };

        let mut cache = KernelCache::new(n);
        let mut iterations = 0usize;
        let bias;
        loop {
            // Maximal-violating-pair selection: largest -z*g over the
            // raisable set vs. smallest over the lowerable set.
            let mut up_val = f64::NEG_INFINITY;
            let mut up_idx = usize::MAX;
            let mut low_val = f64::INFINITY;
            let mut low_idx = usize::MAX;
            for t in 0..2 * n {
                let zt = z(t);
                let v = -zt * grad[t];
                let raisable = (zt > 0.0 && alpha[t] < c) || (zt < 0.0 && alpha[t] > 0.0);
                let lowerable = (zt < 0.0 && alpha[t] < c) || (zt > 0.0 && alpha[t] > 0.0);
                if raisable && v > up_val {
                    up_val = v;
                    up_idx = t;
                }
                if lowerable && v < low_val {
                    low_val = v;
                    low_idx = t;
                }
            }
            if up_val - low_val <= params.tolerance {
                bias = (up_val + low_val) / 2.0;
                break;
            }
            if iterations >= params.max_iter {
                return Err(Error::Numerical("svr optimizer failed to converge"));
            }
            iterations += 1;

            let (i, j) = (up_idx, low_idx);
            let (zi, zj) = (z(i), z(j));
            let (pi, pj) = (i % n, j % n);
            let kij = cache.row(&rows, params.gamma, pi, pj)[pj];
            // RBF diagonal is 1, so the pair curvature is 2 - 2*K_ij.
            let eta = (2.0 - 2.0 * kij).max(1e-12);

            // Step moves alpha[i] by +zi*delta and alpha[j] by -zj*delta;
            // clip to whichever box edge is hit first.
            let cap_i = if zi > 0.0 { c - alpha[i] } else { alpha[i] };
            let cap_j = if zj > 0.0 { alpha[j] } else { c - alpha[j] };
            let delta = ((up_val - low_val) / eta).min(cap_i).min(cap_j);

            if delta == cap_i {
                alpha[i] = if zi > 0.0 { c } else { 0.0 };
            } else {
                alpha[i] += zi * delta;
            }
            if delta == cap_j {
                alpha[j] = if zj > 0.0 { 0.0 } else { c };
            } else {
                alpha[j] -= zj * delta;
            }

            let row_i = cache.row(&rows, params.gamma, pi, pj).to_vec();
            let row_j = cache.row(&rows, params.gamma, pj, pi);
            for t in 0..2 * n {
                grad[t] += z(t) * delta * (row_i[t % n] - row_j[t % n]);
            }
        }

        let beta: Vec<f64> = (0..n).map(|i| alpha[i] - alpha[n + i]).collect();
        Ok(SvrModel {
            rows,
            alpha,
            beta,
            bias,
            params,
            iterations,
        })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut sum = self.bias;
        for (row, &b) in self.rows.iter().zip(&self.beta) {
            if b != 0.0 {
                sum += b * rbf(self.params.gamma, row, x);
            }
        }
        sum
    }

    /// Dual coefficients (length 2n), each in [0, C].
    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn n_features(&self) -> usize {
        self.rows[0].len()
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn params(&self) -> &SvrParams {
        &self.params
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn support_vector_count(&self) -> usize {
        self.beta.iter().filter(|&&b| b != 0.0).count()
    }

    /// Largest first-order KKT violation over the training set, recomputed
    /// from scratch (independent of the optimizer's incremental gradient).
    /// At convergence this is at most the stopping tolerance.
    pub fn max_kkt_violation(&self, targets: &[f64]) -> f64 {
        let n = self.rows.len();
        let c = self.params.c;
        let mut up_val = f64::NEG_INFINITY;
        let mut low_val = f64::INFINITY;
        for t in 0..2 * n {
            let i = t % n;
            let zt = if t < n { 1.0 } else { -1.0 };
            let raw: f64 = self
                .rows
                .iter()
                .zip(&self.beta)
                .filter(|(_, &b)| b != 0.0)
                .map(|(row, &b)| b * rbf(self.params.gamma, row, &self.rows[i]))
                .sum();
            let grad = if t < n {
                raw + self.params.epsilon - targets[i]
            } else {
                -raw + self.params.epsilon + targets[i]
            };
            let v = -zt * grad;
            if (zt > 0.0 && self.alpha[t] < c) || (zt < 0.0 && self.alpha[t] > 0.0) {
                up_val = up_val.max(v);
            }
            if (zt < 0.0 && self.alpha[t] < c) || (zt > 0.0 && self.alpha[t] > 0.0) {
                low_val = low_val.min(v);
            }
        }
        (up_val - low_val).max(0.0)
    }
}
