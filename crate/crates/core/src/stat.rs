//! Empirical-CDF statistics for distributional change monitoring.
//!
//! The detector compares the ECDF of the first `m` observations with the
//! ECDF of everything observed after them, evaluated on a fixed grid of
//! quantile points `x_1 < .. < x_d`:
//!
//! ```text
//! D_m(k/m, x_i) = ((k - m) / sqrt(m)) * (F_{m+1:k}(x_i) - F_{1:m}(x_i))
//! ```
//!
//! and is scored through the weighted quadratic form
//! `rho(s, gamma)^2 * D^T A D`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Default floor of the weight function.
pub const DEFAULT_DELTA: f64 = 1e-4;
/// Default truncation lag of the long-run covariance sum.
pub const DEFAULT_T_STAR: usize = 50;

/// Fraction of `sample` values `<= x`.
pub fn ecdf(sample: &[f64], x: f64) -> f64 {
    if sample.is_empty() {
        return f64::NAN;
    }
    sample.iter().filter(|v| **v <= x).count() as f64 / sample.len() as f64
}

/// Sampled probabilities `u` and the matching empirical quantiles `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileGrid {
    pub u: Vec<f64>,
    pub x: Vec<f64>,
}

impl QuantileGrid {
    /// Grid from explicit points; both vectors must be strictly increasing.
    pub fn new(u: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        let grid = Self { u, x };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() || self.u.len() != self.x.len() {
            return Err(Error::InvalidParameter("grid must be non-empty with |u| = |x|".into()));
        }
        if self.u.iter().any(|u| !(*u > 0.0 && *u < 1.0)) {
            return Err(Error::InvalidParameter("grid percentages must lie in (0, 1)".into()));
        }
        if self.x.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidParameter("grid points must lie in [0, 1]".into()));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&self.u) || !increasing(&self.x) {
            return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Number of grid points strictly below `v`; `v <= x_i` iff the result
    /// is at most `i`.
    #[inline]
    pub fn bucket(&self, v: f64) -> usize {
        self.x.partition_point(|g| *g < v)
    }

    /// `F_hat(x_i)` for every grid point.
    pub fn ecdf_values(&self, sample: &[f64]) -> Vec<f64> {
        let counts = self.indicator_counts(sample);
        let n = sample.len() as f64;
        counts.iter().map(|c| *c as f64 / n).collect()
    }

    /// `sum_t 1(X_t <= x_i)` for every grid point.
    pub fn indicator_counts(&self, sample: &[f64]) -> Vec<usize> {
        let d = self.dim();
        let mut hist = vec![0usize; d + 1];
        for v in sample {
            hist[self.bucket(*v)] += 1;
        }
        let mut acc = 0;
        hist[..d]
            .iter()
            .map(|h| {
                acc += h;
                acc
            })
            .collect()
    }
}

/// `u_i = i / (d + 1)` for `i = 1..=d`.
pub fn equally_spaced_percentages(d: usize) -> Vec<f64> {
    (1..=d).map(|i| i as f64 / (d + 1) as f64).collect()
}

/// Picks `d` equally spaced percentages and the matching order statistics
/// of `training` (rank `round(n * u_i)`, clamped to `[1, n]`). Ties are
/// broken by moving a repeated point up to the next distinct sample value.
pub fn make_quantile_grid(training: &[f64], d: usize) -> Result<QuantileGrid> {
    if d == 0 {
        return Err(Error::InvalidParameter("grid dimension must be positive".into()));
    }
    if let Some(v) = training.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("training value {v} outside [0, 1]")));
    }
    let mut sorted = training.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let distinct = sorted.windows(2).filter(|w| w[0] != w[1]).count() + usize::from(n > 0);
    if distinct < d {
        return Err(Error::InsufficientData(format!(
            "need {d} distinct training values for the grid, found {distinct}"
        )));
    }
    if n < 10 * d {
        log::warn!("quantile grid of dimension {d} built from only {n} values");
    }
    let u = equally_spaced_percentages(d);
    let mut x = Vec::with_capacity(d);
    for ui in &u {
        let rank = ((n as f64) * ui).round().clamp(1.0, n as f64) as usize;
        let mut v = sorted[rank - 1];
        if let Some(&prev) = x.last() {
            if v <= prev {
                let next = sorted.partition_point(|s| *s <= prev);
                v = *sorted.get(next).ok_or_else(|| {
                    Error::InsufficientData("cannot resolve tied quantiles".into())
                })?;
            }
        }
        x.push(v);
    }
    QuantileGrid::new(u, x)
}

/// Truncated long-run covariance of the grid indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovKernel {
    #[serde(with = "linalg::rows")]
    pub gamma: DMatrix<f64>,
    pub t_star: usize,
    pub psd_adjusted: bool,
    /// Largest eigenvalue magnitude removed by the PSD repair.
    #[serde(default)]
    pub clip_magnitude: f64,
}

impl CovKernel {
    /// Wraps an externally supplied covariance, repairing it if needed.
    pub fn from_matrix(gamma: DMatrix<f64>, t_star: usize) -> Result<Self> {
        if !gamma.is_square() || gamma.nrows() == 0 {
            return Err(Error::InvalidParameter("kernel must be square and non-empty".into()));
        }
        let repair = linalg::psd_repair(&gamma);
        Ok(Self {
            gamma: repair.matrix,
            t_star,
            psd_adjusted: repair.clipped > 0.0,
            clip_magnitude: repair.clipped,
        })
    }

    pub fn dim(&self) -> usize {
        self.gamma.nrows()
    }
}

/// Estimates `Gamma(x_i, x_j) = sum_{|h| <= t_star} Cov(1(X_t <= x_i), 1(X_{t+h} <= x_j))`
/// with per-lag sample covariances (denominator `n - |h|`, overall means).
///
/// The estimate is symmetrized and projected onto the PSD cone.
pub fn estimate_gamma(sample: &[f64], grid: &QuantileGrid, t_star: usize) -> Result<CovKernel> {
    grid.validate()?;
    if t_star == 0 {
        return Err(Error::InvalidParameter("t_star must be positive".into()));
    }
    let n = sample.len();
    if n < 20 * t_star {
        return Err(Error::InsufficientData(format!(
            "sample of {n} is too short for t_star = {t_star} (need at least {})",
            20 * t_star
        )));
    }
    let d = grid.dim();
    let buckets: Vec<usize> = sample.iter().map(|v| grid.bucket(*v)).collect();

    // prefix[t][i] = #{s < t : X_s <= x_i}
    let mut prefix = vec![vec![0usize; d]; n + 1];
    for (t, b) in buckets.iter().enumerate() {
        let (head, tail) = prefix.split_at_mut(t + 1);
        let next = &mut tail[0];
        next.copy_from_slice(&head[t]);
        for c in next.iter_mut().skip(*b) {
            *c += 1;
        }
    }
    let mean: Vec<f64> = prefix[n].iter().map(|c| *c as f64 / n as f64).collect();

    let mut gamma = DMatrix::<f64>::zeros(d, d);
    let mut joint = vec![vec![0usize; d + 1]; d + 1];
    for h in 0..=t_star {
        for row in joint.iter_mut() {
            row.fill(0);
        }
        for t in 0..n - h {
            joint[buckets[t]][buckets[t + h]] += 1;
        }
        // Two-dimensional cumulative sums over bucket indices.
        for a in 0..=d {
            for b in 1..=d {
                joint[a][b] += joint[a][b - 1];
            }
        }
        for a in 1..=d {
            for b in 0..=d {
                joint[a][b] += joint[a - 1][b];
            }
        }
        let len = (n - h) as f64;
        for i in 0..d {
            let head_i = prefix[n - h][i] as f64;
            for j in 0..d {
                let tail_j = (prefix[n][j] - prefix[h][j]) as f64;
                let cross = joint[i][j] as f64;
                let cov = (cross - mean[j] * head_i - mean[i] * tail_j + len * mean[i] * mean[j]) / len;
                gamma[(i, j)] += cov;
                if h > 0 {
                    gamma[(j, i)] += cov;
                }
            }
        }
    }
    let repair = linalg::psd_repair(&gamma);
    if repair.clipped > 1e-6 {
        log::warn!(
            "long-run covariance estimate was not PSD; clipped eigenvalues of magnitude up to {:.3e}",
            repair.clipped
        );
    }
    Ok(CovKernel {
        gamma: repair.matrix,
        t_star,
        psd_adjusted: repair.clipped > 0.0,
        clip_magnitude: repair.clipped,
    })
}

/// `floor(m * s)`, tolerant to `s = k / m` landing a hair below `k`.
pub fn floor_ms(m: usize, s: f64) -> usize {
    let v = m as f64 * s;
    (v + 1e-9 * v.abs().max(1.0)).floor().max(0.0) as usize
}

/// Last monitored index `floor((N + 1) m)` of a close-end procedure.
pub fn horizon_end(m: usize, n_ratio: f64) -> usize {
    floor_ms(m, n_ratio + 1.0)
}

/// `(1 / sqrt(m)) * sum_{t <= floor(m s)} (1(X_t <= x) - F0(x))`.
pub fn b_m(sample: &[f64], m: usize, s: f64, x: f64, f0: impl Fn(f64) -> f64) -> Result<f64> {
    if m == 0 || s < 0.0 || !s.is_finite() {
        return Err(Error::InvalidParameter(format!("invalid (m, s) = ({m}, {s})")));
    }
    let k = floor_ms(m, s);
    if k > sample.len() {
        return Err(Error::InsufficientData(format!(
            "floor(m s) = {k} exceeds sample length {}",
            sample.len()
        )));
    }
    let f = f0(x);
    let sum: f64 = sample[..k].iter().map(|v| f64::from(u8::from(*v <= x)) - f).sum();
    Ok(sum / (m as f64).sqrt())
}

/// One detector component from the post-baseline indicator count.
///
/// Both the batch detector and the streaming monitor go through this
/// function so that they agree bit for bit.
#[inline]
pub(crate) fn detector_component(post_count: usize, base_ecdf: f64, m: usize, k: usize) -> f64 {
    (post_count as f64 - (k - m) as f64 * base_ecdf) / (m as f64).sqrt()
}

/// `D(m, k, x_i)` for every grid point, using observations `1..=k`
/// (1-based) of `sample`.
pub fn detector(sample: &[f64], m: usize, k: usize, grid: &QuantileGrid) -> Result<Vec<f64>> {
    if m == 0 || k <= m {
        return Err(Error::InvalidParameter(format!("detector needs 0 < m < k, got m = {m}, k = {k}")));
    }
    if k > sample.len() {
        return Err(Error::InsufficientData(format!(
            "k = {k} exceeds sample length {}",
            sample.len()
        )));
    }
    let base = grid.ecdf_values(&sample[..m]);
    let post = grid.indicator_counts(&sample[m..k]);
    Ok(post
        .iter()
        .zip(&base)
        .map(|(c, b)| detector_component(*c, *b, m, k))
        .collect())
}

/// Weight `rho(s, gamma) = max{(s - 1)^(-gamma) * s^(gamma - 1), delta}`.
///
/// At `s = 1` the first term is `+inf` for `gamma > 0` and the result
/// saturates at `+inf`; monitoring never evaluates it there since the
/// first monitored ratio is `(m + 1) / m`. Returns NaN for `s < 1`.
pub fn weight(s: f64, gamma: f64, delta: f64) -> f64 {
    if !(s >= 1.0) {
        return f64::NAN;
    }
    let term = (s - 1.0).powf(-gamma) * s.powf(gamma - 1.0);
    term.max(delta)
}

/// `d^T A d` without validation.
#[inline]
pub(crate) fn quad_form(d: &[f64], a: &DMatrix<f64>) -> f64 {
    let n = d.len();
    let mut acc = 0.0;
    for j in 0..n {
        let col = a.column(j);
        let mut inner = 0.0;
        for i in 0..n {
            inner += col[i] * d[i];
        }
        acc += inner * d[j];
    }
    acc
}

#[inline]
pub(crate) fn weighted_quad(d: &[f64], s: f64, gamma: f64, delta: f64, a: &DMatrix<f64>) -> f64 {
    let rho = weight(s, gamma, delta);
    rho * rho * quad_form(d, a)
}

/// `rho(s, gamma)^2 * d^T A d`; rejects non-symmetric or mis-sized `a`.
pub fn quad_stat(d_m: &[f64], s: f64, gamma: f64, delta: f64, a: &DMatrix<f64>) -> Result<f64> {
    check_weight_matrix(a, d_m.len())?;
    Ok(weighted_quad(d_m, s, gamma, delta, a))
}

pub(crate) fn check_weight_matrix(a: &DMatrix<f64>, d: usize) -> Result<()> {
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::InvalidParameter(format!(
            "weight matrix is {}x{}, expected {d}x{d}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !linalg::is_symmetric(a, 1e-12) {
        return Err(Error::InvalidParameter("weight matrix must be symmetric".into()));
    }
    Ok(())
}

/// Checks that `a` is symmetric positive definite.
pub fn check_spd(a: &DMatrix<f64>, d: usize) -> Result<()> {
    check_weight_matrix(a, d)?;
    if linalg::min_eigenvalue(a) <= 0.0 {
        return Err(Error::InvalidParameter("weight matrix must be positive definite".into()));
    }
    Ok(())
}

/// Detector value and score at one monitoring step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorVector {
    pub s: f64,
    pub d_m: Vec<f64>,
    pub quad: f64,
}

/// Detector and weighted score at index `k` (batch evaluation).
pub fn detector_vector(
    sample: &[f64],
    m: usize,
    k: usize,
    grid: &QuantileGrid,
    gamma: f64,
    delta: f64,
    a: &DMatrix<f64>,
) -> Result<DetectorVector> {
    let d_m = detector(sample, m, k, grid)?;
    let s = k as f64 / m as f64;
    let quad = quad_stat(&d_m, s, gamma, delta, a)?;
    Ok(DetectorVector { s, d_m, quad })
}

/// Sup over `k = m+1..=horizon` of the weighted score, for several
/// `gamma` at once, computed with running counts in `O(n d)`.
pub fn sup_statistic(
    sample: &[f64],
    m: usize,
    horizon: usize,
    grid: &QuantileGrid,
    a: &DMatrix<f64>,
    gammas: &[f64],
    delta: f64,
) -> Result<Vec<f64>> {
    if m == 0 || horizon <= m || horizon > sample.len() {
        return Err(Error::InvalidParameter(format!(
            "need 0 < m < horizon <= len, got m = {m}, horizon = {horizon}, len = {}",
            sample.len()
        )));
    }
    check_weight_matrix(a, grid.dim())?;
    let base = grid.ecdf_values(&sample[..m]);
    let d = grid.dim();
    let mut counts = vec![0usize; d];
    let mut dm = vec![0.0; d];
    let mut sups = vec![f64::NEG_INFINITY; gammas.len()];
    for k in (m + 1)..=horizon {
        let b = grid.bucket(sample[k - 1]);
        for c in counts.iter_mut().skip(b) {
            *c += 1;
        }
        for i in 0..d {
            dm[i] = detector_component(counts[i], base[i], m, k);
        }
        let q = quad_form(&dm, a);
        let s = k as f64 / m as f64;
        for (sup, g) in sups.iter_mut().zip(gammas) {
            let rho = weight(s, *g, delta);
            *sup = sup.max(rho * rho * q);
        }
    }
    Ok(sups)
}
