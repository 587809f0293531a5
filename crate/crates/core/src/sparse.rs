//! Compressed sparse row matrix and spectral-radius numerics.
//!
//! The reservoir adjacency matrix is the only sparse object in the crate, so
//! this stays deliberately small: construction from triplets, matrix-vector
//! products, uniform scaling, and a power-iteration spectral radius estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square sparse matrix in CSR layout. Column indices within a row are
/// strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Below this nonzero count a parallel matvec costs more than it saves.
const PARALLEL_NNZ_THRESHOLD: usize = 1 << 16;
const ROW_CHUNK: usize = 64;

impl CsrMatrix {
    /// Builds an `n x n` matrix from (row, col, value) triplets. Triplets may
    /// arrive in any order; duplicates are rejected.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(r, c, v) in triplets {
            if r >= n || c >= n {
                return Err(Error::Contract(format!(
                    "triplet ({r}, {c}) out of range for n = {n}"
                )));
            }
            sorted.push((r, c, v));
        }
        sorted.sort_unstable_by_key(|&(r, c, _)| (r, c));
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::Contract(format!(
                    "duplicate triplet at ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }

        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        for &(r, c, v) in &sorted {
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Fraction of structurally nonzero entries.
    pub fn density(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.nnz() as f64 / (self.n * self.n) as f64
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.push((r, self.col_idx[k], self.values[k]));
            }
        }
        out
    }

    /// Multiplies every stored value by `c`. The sparsity pattern is kept as
    /// is even when `c == 0`.
    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    #[inline]
    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for k in self.row_ptr[r]..self.row_ptr[r + 1] {
            acc += self.values[k] * x[self.col_idx[k]];
        }
        acc
    }

    /// `out = self * x`. Parallelizes over row chunks for large matrices;
    /// the row partition is fixed, so results are deterministic.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n, "matvec input length");
        assert_eq!(out.len(), self.n, "matvec output length");
        if self.nnz() >= PARALLEL_NNZ_THRESHOLD {
            out.par_chunks_mut(ROW_CHUNK)
                .enumerate()
                .for_each(|(chunk, slot)| {
                    let base = chunk * ROW_CHUNK;
                    for (j, o) in slot.iter_mut().enumerate() {
                        *o = self.row_dot(base + j, x);
                    }
                });
        } else {
            for (r, o) in out.iter_mut().enumerate() {
                *o = self.row_dot(r, x);
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.matvec_into(x, &mut out);
        out
    }
}

/// Spectral radius |lambda_max| by power iteration with a Krylov recurrence
/// fit.
///
/// The trailing window of iterates x, Ax, ..., A^k x is fitted to a k-term
/// linear recurrence (k = 1, 2, 4, lowest order that explains the window);
/// the largest root magnitude of the recurrence polynomial tracks the
/// leading eigenvalue magnitude even when several dominant eigenvalues tie
/// in magnitude (complex pairs, +/- pairs), where a plain Rayleigh quotient
/// oscillates. An estimate is accepted only once the recurrence residual is
/// negligible and the value has stabilized. Deterministic: the start vector
/// comes from a fixed internal seed.
///
/// Accuracy: 1e-8 relative for matrices with a dominant eigenvalue; degraded
/// to about 1e-6 when more than four leading magnitudes are
/// (near-)degenerate.
pub fn estimate_spectral_radius(m: &CsrMatrix) -> f64 {
    const MAX_ITERS: usize = 10_000;
    const TOL: f64 = 1e-10;
    const RESIDUAL_TOL: f64 = 1e-9;
    const CONSECUTIVE_HITS: usize = 4;
    const RESTARTS: usize = 4;
    const WINDOW: usize = 5;

    let n = m.n();
    if n == 0 {
        return 0.0;
    }

    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);

    for _ in 0..RESTARTS {
        let mut x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        normalize(&mut x0);
        // Window of consecutive iterates, oldest first.
        let mut window: Vec<Vec<f64>> = vec![x0.clone()];
        let mut degenerate_start = false;
        while window.len() < WINDOW {
            let next = m.matvec(window.last().unwrap());
            let s = norm(&next);
            if s < 1e-300 {
                if window.len() == 1 {
                    degenerate_start = true;
                }
                break;
            }
            window.push(next);
            // Rescale the whole window together to avoid overflow without
            // disturbing the recurrence coefficients.
            if s > 1e100 {
                for v in window.iter_mut().flatten() {
                    *v /= s;
                }
            }
        }
        if degenerate_start {
            // Start vector annihilated immediately; try another.
            continue;
        }
        if window.len() < WINDOW {
            // The Krylov space collapsed to zero: nilpotent directions only.
            return 0.0;
        }

        let mut estimate = f64::NAN;
        let mut hits = 0usize;
        let mut best = (f64::INFINITY, 0.0); // (residual, estimate)
        for _ in 0..MAX_ITERS {
            let (new_est, residual) = dominant_root(&window);
            if residual < best.0 {
                best = (residual, new_est);
            }
            let stable = (new_est - estimate).abs() <= TOL * estimate.abs().max(1e-300);
            if stable && residual <= RESIDUAL_TOL {
                hits += 1;
                if hits >= CONSECUTIVE_HITS {
                    return new_est;
                }
            } else {
                hits = 0;
            }
            estimate = new_est;

            let next = m.matvec(window.last().unwrap());
            let s = norm(&next);
            if s < 1e-300 {
                return 0.0;
            }
            window.remove(0);
            window.push(next);
            let inv = 1.0 / s;
            for v in window.iter_mut().flatten() {
                *v *= inv;
            }
        }
        // Did not reach the residual tolerance; return the best-explained
        // estimate seen (documented degraded accuracy).
        return best.1;
    }
    0.0
}

/// Rescales `m` so the measured spectral radius equals `rho`:
/// `m * (rho / estimate_spectral_radius(m))`, refined once if the first
/// scaling leaves a measurable residual. Sparsity pattern unchanged.
pub fn rescale_spectral_radius(m: &CsrMatrix, rho: f64) -> Result<CsrMatrix> {
    let current = estimate_spectral_radius(m);
    if current <= 1e-12 {
        return Err(Error::Contract(
            "cannot rescale: spectral radius is (numerically) zero".into(),
        ));
    }
    let mut out = m.clone();
    out.scale(rho / current);
    for _ in 0..4 {
        let measured = estimate_spectral_radius(&out);
        if measured <= 1e-12 {
            return Err(Error::Contract(
                "cannot rescale: spectral radius is (numerically) zero".into(),
            ));
        }
        if (measured - rho).abs() <= 1e-9 * rho {
            break;
        }
        out.scale(rho / measured);
    }
    Ok(out)
}

/// Largest root magnitude of the lowest-order recurrence that explains the
/// iterate window, with that fit's relative residual.
///
/// For order k, solves the normal equations of
/// `x_last = c_1 x_{last-1} + ... + c_k x_{last-k}` and takes the dominant
/// root of `z^k - c_1 z^{k-1} - ... - c_k` from the companion matrix.
fn dominant_root(window: &[Vec<f64>]) -> (f64, f64) {
    let last = window.len() - 1;
    let target = &window[last];
    let t_norm = norm(target).max(1e-300);

    let mut best = (f64::INFINITY, 0.0);
    for k in [1usize, 2, 4] {
        if k > last {
            break;
        }
        // Basis vectors x_{last-1}, ..., x_{last-k}.
        let basis: Vec<&Vec<f64>> = (1..=k).map(|i| &window[last - i]).collect();
        let mut gram = nalgebra::DMatrix::zeros(k, k);
        let mut rhs = nalgebra::DVector::zeros(k);
        for i in 0..k {
            for j in 0..k {
                gram[(i, j)] = dot(basis[i], basis[j]);
            }
            rhs[i] = dot(basis[i], target);
        }
        // Tiny ridge keeps collapsed (converged) windows solvable; it only
        // matters when the basis is numerically dependent, where a
        // lower-order fit has already won.
        for i in 0..k {
            gram[(i, i)] += 1e-14 * gram[(i, i)].abs().max(1e-300);
        }
        let Some(coeffs) = gram.lu().solve(&rhs) else {
            continue;
        };
        // Residual of the fit.
        let mut res2 = 0.0;
        for idx in 0..target.len() {
            let mut r = target[idx];
            for (i, b) in basis.iter().enumerate() {
                r -= coeffs[i] * b[idx];
            }
            res2 += r * r;
        }
        let residual = res2.sqrt() / t_norm;
        if residual < best.0 {
            best = (residual, companion_radius(coeffs.as_slice()));
        }
        if residual <= 1e-12 {
            break;
        }
    }
    (best.1, best.0)
}

/// Largest root magnitude of z^k - c_1 z^{k-1} - ... - c_k.
fn companion_radius(coeffs: &[f64]) -> f64 {
    let k = coeffs.len();
    if k == 1 {
        return coeffs[0].abs();
    }
    let mut companion = nalgebra::DMatrix::zeros(k, k);
    for (j, &c) in coeffs.iter().enumerate() {
        companion[(0, j)] = c;
    }
    for i in 1..k {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) {
    let n = norm(a);
    if n > 0.0 {
        for v in a.iter_mut() {
            *v /= n;
        }
    }
}
