//! Scalar/vector/matrix primitives shared by every other module.
//!
//! Every sum that feeds a test tolerance goes through [`pairwise_sum_by`],
//! a fixed left-to-right pairwise tree, so results do not depend on thread
//! count or platform summation order.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// Norms at or below this are treated as degenerate for cosine similarity.
pub const MIN_NORM: f64 = 1e-12;

const PAIRWISE_LEAF: usize = 8;

/// Sums `f(0) + ... + f(n-1)` over a fixed pairwise tree whose leaves
/// (at most eight terms) are summed left to right.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= PAIRWISE_LEAF {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, &f)
}

pub fn pairwise_sum(values: &[f64]) -> f64 {
    pairwise_sum_by(values.len(), |i| values[i])
}

/// Inner product `Σ u_i v_i`.
pub fn dot(u: &[f64], v: &[f64]) -> Result<f64> {
    ensure_dim("dot", u.len(), v.len())?;
    Ok(dot_unchecked(u, v))
}

#[inline]
pub(crate) fn dot_unchecked(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    pairwise_sum_by(u.len(), |i| u[i] * v[i])
}

pub fn norm2(v: &[f64]) -> f64 {
    dot_unchecked(v, v).sqrt()
}

pub fn l1_norm(v: &[f64]) -> f64 {
    pairwise_sum_by(v.len(), |i| v[i].abs())
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    ensure_dim("cosine_similarity", u.len(), v.len())?;
    let nu = norm2(u);
    if nu <= MIN_NORM {
        return Err(Error::DegenerateVector { index: 0, norm: nu });
    }
    let nv = norm2(v);
    if nv <= MIN_NORM {
        return Err(Error::DegenerateVector { index: 1, norm: nv });
    }
    Ok((dot_unchecked(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x) = -softplus(-x)`, stable for large `|x|`.
pub fn log_sigmoid(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("log_sigmoid of non-finite {x}")));
    }
    Ok(log_sigmoid_unchecked(x))
}

#[inline]
pub(crate) fn log_sigmoid_unchecked(x: f64) -> f64 {
    -softplus(-x)
}

/// Max-subtracted `ln Σ e^{x_i}`. Empty input yields `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + pairwise_sum_by(xs.len(), |i| (xs[i] - m).exp()).ln()
}

/// Denominator floor of [`relative_error`]. Central differences at step
/// 1e-5 carry about 1e-11 of rounding noise per unit of function value,
/// so components below this are compared on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-4;

/// `|a − b| / max(|a|, |b|, REL_ERR_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// [`relative_error`] for a finite-difference gradient of a function whose
/// value has magnitude `value`: the floor grows with `|value|`, since the
/// difference quotient's rounding noise does.
pub fn fd_relative_error(analytic: f64, numeric: f64, value: f64) -> f64 {
    let floor = REL_ERR_FLOOR * value.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat64 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat64 {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::domain(format!(
                "matrix shape {rows}x{cols} has a zero extent"
            )));
        }
        ensure_dim("Mat64::new", rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            ensure_dim("Mat64::from_rows", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn select_rows(&self, indices: &[usize]) -> Mat64 {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Mat64 {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Mat64) -> Result<Mat64> {
        ensure_dim("Mat64::matmul", self.cols, other.rows)?;
        let t = other.transpose();
        Ok(Mat64::from_fn(self.rows, other.cols, |r, c| {
            dot_unchecked(self.row(r), t.row(c))
        }))
    }

    pub fn transpose(&self) -> Mat64 {
        Mat64::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        norm2(&self.data)
    }
}

/// Counter-based, stream-splittable random number generator.
///
/// A ChaCha8 keystream keyed by `seed` with the 64-bit ChaCha stream id set
/// to `stream`. Two generators with the same `(seed, stream)` produce the
/// same sequence on every platform; distinct streams are independent.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

/// SplitMix64 finalizer, used to fold stream path components.
#[inline]
fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds a path such as `[tag, epoch, sample]` into one stream id.
pub fn stream_id(path: &[u64]) -> u64 {
    path.iter()
        .fold(0x6D69_6F6C_6162_u64, |acc, &p| mix64(acc ^ mix64(p)))
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Generator for the substream addressed by `path` under `seed`.
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        Self::new(seed, stream_id(path))
    }

    /// Child generator; independent of how far `self` has advanced.
    pub fn split(&self, sub: u64) -> Self {
        Self::new(self.seed, stream_id(&[self.stream, sub]))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[lo, hi)`; returns `lo` when the interval is empty.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        let u = self.uniform();
        if hi > lo {
            lo + (hi - lo) * u
        } else {
            lo
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform index in `0..n` (`n > 0`).
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Normal draw with the given mean and standard deviation.
    pub fn gaussian(&mut self, mean: f64, sigma: f64) -> Result<f64> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::domain(format!(
                "gaussian sigma must be finite and >= 0, got {sigma}"
            )));
        }
        if sigma == 0.0 {
            return Ok(mean);
        }
        Ok(mean + sigma * self.standard_normal())
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}
