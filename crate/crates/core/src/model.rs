//! Generalized Beta AR(p) model with a scalar exogenous input.
//!
//! The observation at time `t` is drawn as
//!
//! ```text
//! X_t | past ~ Beta(tau * mu_t, tau * (1 - mu_t))
//! logit(mu_t) = phi0 + sum_{i=1..p} phi_i * logit(clamp_x(X_{t-i}))
//!                    + sum_{j=0..q} psi_j * clamp_w(W_{t-j})
//! ```
//!
//! The exogenous series enters contemporaneously (lag 0) and is generated
//! before the output at every step.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Default clamp for outputs before the logit x-link.
pub const DEFAULT_X_CLAMP: Clamp = Clamp { lo: 0.001, hi: 0.999 };
/// Default clamp for exogenous values.
pub const DEFAULT_W_CLAMP: Clamp = Clamp { lo: -10.0, hi: 10.0 };
/// Burn-in used by [`simulate_process`] when the caller has no opinion.
pub const DEFAULT_BURN_IN: usize = 500;

/// Closed interval `[lo, hi]` used to clamp values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct Clamp {
    pub lo: f64,
    pub hi: f64,
}

impl Clamp {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "clamp bounds must satisfy lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        v.max(self.lo).min(self.hi)
    }

    fn check_unit_interior(&self) -> Result<()> {
        if self.lo > 0.0 && self.hi < 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "x clamp must lie strictly inside (0, 1), got ({}, {})",
                self.lo, self.hi
            )))
        }
    }
}

impl TryFrom<(f64, f64)> for Clamp {
    type Error = Error;

    fn try_from((lo, hi): (f64, f64)) -> Result<Self> {
        Clamp::new(lo, hi)
    }
}

impl From<Clamp> for (f64, f64) {
    fn from(c: Clamp) -> Self {
        (c.lo, c.hi)
    }
}

/// `log(u / (1 - u))` for `u` in the open unit interval.
pub fn logit(u: f64) -> Result<f64> {
    if u > 0.0 && u < 1.0 {
        Ok((u / (1.0 - u)).ln())
    } else {
        Err(Error::Domain(format!("logit undefined at {u}")))
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn inverse_logit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Clamp-then-logit transform applied to lagged outputs.
#[inline]
pub fn x_link(u: f64, clamp: Clamp) -> f64 {
    let c = clamp.apply(u);
    (c / (1.0 - c)).ln()
}

#[inline]
pub fn w_transform(w: f64, clamp: Clamp) -> f64 {
    clamp.apply(w)
}

/// Full parameterization of a generalized Beta AR(p) model.
///
/// `psi` holds the coefficients on `W_t, W_{t-1}, .., W_{t-q}`. An empty
/// `psi` means the model has no exogenous term at all, which is distinct
/// from `q = 0` (contemporaneous term only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GBetaArModel {
    pub phi0: f64,
    #[serde(default)]
    pub phi: Vec<f64>,
    #[serde(default)]
    pub psi: Vec<f64>,
    pub tau: f64,
    #[serde(default = "default_x_clamp")]
    pub x_clamp: Clamp,
    #[serde(default = "default_w_clamp")]
    pub w_clamp: Clamp,
}

fn default_x_clamp() -> Clamp {
    DEFAULT_X_CLAMP
}

fn default_w_clamp() -> Clamp {
    DEFAULT_W_CLAMP
}

/// Exogenous lag structure requested from a fit.
///
/// Serialized as the string `"none"` or the integer `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "ExogOrderRepr", into = "ExogOrderRepr")]
pub enum ExogOrder {
    /// No exogenous regressor.
    None,
    /// Lags `0..=q` of the exogenous series.
    Lags(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ExogOrderRepr {
    Lags(usize),
    Name(String),
}

impl TryFrom<ExogOrderRepr> for ExogOrder {
    type Error = Error;

    fn try_from(r: ExogOrderRepr) -> Result<Self> {
        match r {
            ExogOrderRepr::Lags(q) => Ok(ExogOrder::Lags(q)),
            ExogOrderRepr::Name(s) => s.parse(),
        }
    }
}

impl From<ExogOrder> for ExogOrderRepr {
    fn from(o: ExogOrder) -> Self {
        match o {
            ExogOrder::None => ExogOrderRepr::Name("none".into()),
            ExogOrder::Lags(q) => ExogOrderRepr::Lags(q),
        }
    }
}

impl ExogOrder {
    pub fn n_coefficients(self) -> usize {
        match self {
            ExogOrder::None => 0,
            ExogOrder::Lags(q) => q + 1,
        }
    }

    /// Largest exogenous lag, counting "no exogenous" as 0.
    pub fn max_lag(self) -> usize {
        match self {
            ExogOrder::None => 0,
            ExogOrder::Lags(q) => q,
        }
    }
}

impl std::fmt::Display for ExogOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExogOrder::None => f.write_str("none"),
            ExogOrder::Lags(q) => write!(f, "{q}"),
        }
    }
}

impl std::str::FromStr for ExogOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") {
            return Ok(ExogOrder::None);
        }
        s.parse::<usize>()
            .map(ExogOrder::Lags)
            .map_err(|_| Error::Config(format!("exogenous order must be 'none' or an integer, got '{s}'")))
    }
}

impl GBetaArModel {
    /// Model with default clamps.
    pub fn new(phi0: f64, phi: Vec<f64>, psi: Vec<f64>, tau: f64) -> Result<Self> {
        let model = Self {
            phi0,
            phi,
            psi,
            tau,
            x_clamp: DEFAULT_X_CLAMP,
            w_clamp: DEFAULT_W_CLAMP,
        };
        model.validate()?;
        Ok(model)
    }

    /// All-zero coefficients with the given orders; `tau` defaults to 1.
    pub fn zeros(p: usize, exog: ExogOrder) -> Self {
        Self {
            phi0: 0.0,
            phi: vec![0.0; p],
            psi: vec![0.0; exog.n_coefficients()],
            tau: 1.0,
            x_clamp: DEFAULT_X_CLAMP,
            w_clamp: DEFAULT_W_CLAMP,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        self.x_clamp.check_unit_interior()?;
        Clamp::new(self.w_clamp.lo, self.w_clamp.hi)?;
        let finite = std::iter::once(self.phi0)
            .chain(self.phi.iter().copied())
            .chain(self.psi.iter().copied())
            .all(f64::is_finite);
        if !finite {
            return Err(Error::InvalidParameter("coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn p(&self) -> usize {
        self.phi.len()
    }

    pub fn exog_order(&self) -> ExogOrder {
        match self.psi.len() {
            0 => ExogOrder::None,
            n => ExogOrder::Lags(n - 1),
        }
    }

    /// Number of leading observations the conditional likelihood holds fixed.
    pub fn lag_depth(&self) -> usize {
        self.p().max(self.exog_order().max_lag())
    }

    /// Parameter count used by the AIC: `phi0`, `phi`, `psi` and `tau`.
    pub fn n_params(&self) -> usize {
        1 + self.phi.len() + self.psi.len() + 1
    }

    /// Linear predictor at index `t` of aligned `x` and `w`.
    ///
    /// Requires `t >= p` and, when exogenous terms are present, `t >= q`.
    #[inline]
    pub fn eta_at(&self, x: &[f64], w: &[f64], t: usize) -> f64 {
        let mut eta = self.phi0;
        for (i, phi) in self.phi.iter().enumerate() {
            eta += phi * x_link(x[t - 1 - i], self.x_clamp);
        }
        for (j, psi) in self.psi.iter().enumerate() {
            eta += psi * w_transform(w[t - j], self.w_clamp);
        }
        eta
    }
}

/// Generative description of the exogenous ARMA process.
///
/// `W_t = sum ar_i W_{t-i} + sd * (e_t + sum ma_j e_{t-j})` with
/// `e_t` i.i.d. standard normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousSpec {
    #[serde(default)]
    pub ar: Vec<f64>,
    #[serde(default)]
    pub ma: Vec<f64>,
    pub innovation_sd: f64,
    #[serde(default)]
    pub burn_in: usize,
}

impl ExogenousSpec {
    pub fn new(ar: Vec<f64>, ma: Vec<f64>, innovation_sd: f64, burn_in: usize) -> Result<Self> {
        let spec = Self { ar, ma, innovation_sd, burn_in };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.innovation_sd > 0.0 && self.innovation_sd.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "innovation_sd must be positive, got {}",
                self.innovation_sd
            )));
        }
        if !is_stationary(&self.ar) {
            return Err(Error::InvalidParameter(format!(
                "AR polynomial {:?} is not stationary",
                self.ar
            )));
        }
        Ok(())
    }
}

/// All roots of `1 - a_1 z - .. - a_p z^p` outside the unit disk, checked
/// through the companion-matrix eigenvalues.
pub fn is_stationary(ar: &[f64]) -> bool {
    let p = ar.len();
    if p == 0 {
        return true;
    }
    if ar.iter().any(|a| !a.is_finite()) {
        return false;
    }
    let mut companion = DMatrix::<f64>::zeros(p, p);
    for (j, a) in ar.iter().enumerate() {
        companion[(0, j)] = *a;
    }
    for i in 1..p {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .all(|z| z.norm() < 1.0 - 1e-12)
}

/// Aligned output/exogenous observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPair {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl SeriesPair {
    pub fn new(x: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if x.len() != w.len() {
            return Err(Error::InvalidParameter(format!(
                "x and w lengths differ ({} vs {})",
                x.len(),
                w.len()
            )));
        }
        if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("x[{i}] = {v} outside [0, 1]")));
        }
        Ok(Self { x, w })
    }

    /// Series without an exogenous input; `w` is filled with zeros.
    pub fn without_exog(x: Vec<f64>) -> Result<Self> {
        let w = vec![0.0; x.len()];
        Self::new(x, w)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Sub-range `[start, end)` of both series.
    pub fn slice(&self, start: usize, end: usize) -> SeriesPair {
        SeriesPair { x: self.x[start..end].to_vec(), w: self.w[start..end].to_vec() }
    }
}

/// One regime of a piecewise exogenous path.
#[derive(Debug, Clone, Copy)]
pub struct Regime<'a> {
    /// First recorded index (0-based, after burn-in) governed by `spec`.
    pub start: usize,
    pub spec: &'a ExogenousSpec,
}

/// ARMA path of `n` values after discarding `spec.burn_in` samples.
pub fn simulate_exogenous(spec: &ExogenousSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    simulate_exogenous_regimes(&[Regime { start: 0, spec }], n, seed)
}

/// Exogenous path whose dynamics switch between regimes.
///
/// The first regime must start at 0 and provides the burn-in. Later regimes
/// continue from the realised history: lagged `W` values and lagged
/// standardized innovations carry across the switch.
pub fn simulate_exogenous_regimes(regimes: &[Regime<'_>], n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let first = regimes
        .first()
        .ok_or_else(|| Error::InvalidParameter("at least one regime is required".into()))?;
    if first.start != 0 {
        return Err(Error::InvalidParameter("first regime must start at index 0".into()));
    }
    for pair in regimes.windows(2) {
        if pair[1].start <= pair[0].start {
            return Err(Error::InvalidParameter("regime starts must increase".into()));
        }
    }
    for r in regimes {
        r.spec.validate()?;
    }
    let burn_in = first.spec.burn_in;
    let total = burn_in + n;
    let mut rng = rng::substream(seed, rng::stream::EXOGENOUS);
    let mut w = Vec::with_capacity(total);
    let mut eps = Vec::with_capacity(total);
    let mut regime = 0;
    for t in 0..total {
        while regime + 1 < regimes.len() && t >= burn_in + regimes[regime + 1].start {
            regime += 1;
        }
        let spec = regimes[regime].spec;
        let e: f64 = rng.sample(StandardNormal);
        let mut value = 0.0;
        for (i, a) in spec.ar.iter().enumerate() {
            if t > i {
                value += a * w[t - 1 - i];
            }
        }
        let mut shock = e;
        for (j, b) in spec.ma.iter().enumerate() {
            if t > j {
                shock += b * eps[t - 1 - j];
            }
        }
        value += spec.innovation_sd * shock;
        w.push(value);
        eps.push(e);
    }
    Ok(w.split_off(burn_in))
}

/// Exact Beta draw as a ratio of two gamma variates.
fn sample_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> Result<f64> {
    let ga = Gamma::new(a, 1.0).map_err(|e| Error::Numerical(format!("gamma({a}): {e}")))?;
    let gb = Gamma::new(b, 1.0).map_err(|e| Error::Numerical(format!("gamma({b}): {e}")))?;
    for _ in 0..64 {
        let x: f64 = ga.sample(rng);
        let y: f64 = gb.sample(rng);
        let v = x / (x + y);
        if v > 0.0 && v < 1.0 {
            return Ok(v);
        }
    }
    Err(Error::Numerical(format!("Beta({a}, {b}) draws kept hitting the boundary")))
}

/// Simulates `n` outputs driven by the exogenous path `w`.
///
/// `w[q + t]` is the contemporaneous exogenous value for output `t`, so
/// `w` must hold at least `n + q` values. Missing `init_x` defaults to
/// `p` values of 0.5. The returned pair carries `w[q..q + n]`.
pub fn simulate_gbeta_ar(
    model: &GBetaArModel,
    w: &[f64],
    n: usize,
    seed: u64,
    init_x: Option<&[f64]>,
) -> Result<SeriesPair> {
    model.validate()?;
    let p = model.p();
    let q = model.exog_order().max_lag();
    if w.len() < n + q {
        return Err(Error::InsufficientData(format!(
            "exogenous path has {} values, need n + q = {}",
            w.len(),
            n + q
        )));
    }
    let mut xs = match init_x {
        Some(init) => {
            if init.len() != p {
                return Err(Error::InvalidParameter(format!(
                    "init_x has {} values, model order is {p}",
                    init.len()
                )));
            }
            if init.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                return Err(Error::Domain("init_x values must lie in (0, 1)".into()));
            }
            init.to_vec()
        }
        None => vec![0.5; p],
    };
    xs.reserve(n);

    let mut rng = rng::substream(seed, rng::stream::OUTPUT);
    let tau = model.tau;
    for t in 0..n {
        // xs index p + t is the output being drawn; w index q + t is W_t.
        let mut eta = model.phi0;
        for (i, phi) in model.phi.iter().enumerate() {
            eta += phi * x_link(xs[p + t - 1 - i], model.x_clamp);
        }
        for (j, psi) in model.psi.iter().enumerate() {
            eta += psi * w_transform(w[q + t - j], model.w_clamp);
        }
        let mu = inverse_logit(eta);
        let (a, b) = (tau * mu, tau * (1.0 - mu));
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Numerical(format!("degenerate mean {mu} at step {t}")));
        }
        xs.push(sample_beta(&mut rng, a, b)?);
    }
    let x = xs.split_off(p);
    Ok(SeriesPair { x, w: w[q..q + n].to_vec() })
}

/// Simulates the exogenous path and the outputs together, discarding
/// `burn_in` initial steps of the joint process.
pub fn simulate_process(
    model: &GBetaArModel,
    exog: &ExogenousSpec,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SeriesPair> {
    simulate_process_regimes(model, &[Regime { start: 0, spec: exog }], n, burn_in, seed)
}

/// Joint simulation with a piecewise exogenous path. Regime starts are
/// indices into the recorded (post burn-in) output.
pub fn simulate_process_regimes(
    model: &GBetaArModel,
    regimes: &[Regime<'_>],
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SeriesPair> {
    let q = model.exog_order().max_lag();
    let lead = burn_in + q;
    let shifted: Vec<Regime<'_>> = regimes
        .iter()
        .enumerate()
        .map(|(i, r)| Regime { start: if i == 0 { 0 } else { r.start + lead }, spec: r.spec })
        .collect();
    let w = simulate_exogenous_regimes(&shifted, lead + n, seed)?;
    let full = simulate_gbeta_ar(model, &w, burn_in + n, seed, None)?;
    Ok(full.slice(burn_in, burn_in + n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn benchmark_null_model() -> GBetaArModel {
        GBetaArModel::new(0.5, vec![0.1, 0.2, 0.2], vec![0.5], 100.0).unwrap()
    }

    #[test]
    fn logit_examples() {
        assert_eq!(logit(0.5).unwrap(), 0.0);
        assert!((logit(0.999).unwrap() - 999f64.ln()).abs() < 1e-12);
        assert!((logit(0.999).unwrap() - 6.90675).abs() < 1e-5);
        assert_eq!(inverse_logit(0.0), 0.5);
        assert!(logit(0.0).is_err());
        assert!(logit(1.0).is_err());
        assert!(logit(-0.2).is_err());
    }

    #[test]
    fn x_link_examples() {
        assert!((x_link(0.0, DEFAULT_X_CLAMP) + 6.90675).abs() < 1e-5);
        assert_eq!(x_link(0.5, DEFAULT_X_CLAMP), 0.0);
        let c = Clamp::new(0.01, 0.99).unwrap();
        assert!((x_link(1.0, c) - 4.59512).abs() < 1e-5);
    }

    #[test]
    fn w_transform_examples() {
        assert_eq!(w_transform(3.2, DEFAULT_W_CLAMP), 3.2);
        assert_eq!(w_transform(-15.0, DEFAULT_W_CLAMP), -10.0);
        assert_eq!(w_transform(10.0, DEFAULT_W_CLAMP), 10.0);
    }

    #[test]
    fn clamps_are_idempotent() {
        for v in [-20.0, -10.0, -0.3, 0.0, 4.0, 10.0, 99.0] {
            let once = w_transform(v, DEFAULT_W_CLAMP);
            assert_eq!(w_transform(once, DEFAULT_W_CLAMP), once);
        }
        for u in [0.0, 0.0005, 0.3, 0.999, 1.0] {
            let once = DEFAULT_X_CLAMP.apply(u);
            assert_eq!(DEFAULT_X_CLAMP.apply(once), once);
            assert_eq!(x_link(once, DEFAULT_X_CLAMP), x_link(u, DEFAULT_X_CLAMP));
        }
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(GBetaArModel::new(0.0, vec![], vec![], 0.0).is_err());
        let mut m = benchmark_null_model();
        m.x_clamp = Clamp { lo: 0.0, hi: 0.9 };
        assert!(m.validate().is_err());
        assert!(Clamp::new(1.0, 1.0).is_err());
    }

    #[test]
    fn stationarity_check() {
        assert!(is_stationary(&[]));
        assert!(is_stationary(&[-0.1]));
        assert!(is_stationary(&[-0.2, -0.3]));
        assert!(!is_stationary(&[1.0]));
        assert!(!is_stationary(&[0.5, 0.6]));
        assert!(ExogenousSpec::new(vec![1.2], vec![], 1.0, 0).is_err());
        assert!(ExogenousSpec::new(vec![], vec![], 0.0, 0).is_err());
    }

    #[test]
    fn white_noise_exogenous_is_standard_normal() {
        let spec = ExogenousSpec::new(vec![], vec![], 1.0, 0).unwrap();
        let w = simulate_exogenous(&spec, 3, 11).unwrap();
        assert_eq!(w.len(), 3);
        // Same draws as the raw stream: ARMA(0,0) is the innovation sequence.
        let mut rng = rng::substream(11, rng::stream::EXOGENOUS);
        for v in &w {
            let e: f64 = rng.sample(StandardNormal);
            assert_eq!(*v, e);
        }
    }

    #[test]
    fn ar1_lag_one_autocorrelation() {
        let spec = ExogenousSpec::new(vec![-0.1], vec![], 1.0, 100).unwrap();
        let w = simulate_exogenous(&spec, 100_000, 3).unwrap();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let cov = w.windows(2).map(|p| (p[0] - mean) * (p[1] - mean)).sum::<f64>() / n;
        assert!((cov / var + 0.1).abs() < 0.01, "rho1 = {}", cov / var);
    }

    /// Variance of an ARMA process from its MA(inf) weights.
    fn arma_variance_oracle(ar: &[f64], ma: &[f64], sd: f64) -> f64 {
        let mut psi = vec![1.0];
        for k in 1..2000 {
            let mut v = if k <= ma.len() { ma[k - 1] } else { 0.0 };
            for (i, a) in ar.iter().enumerate() {
                if k > i {
                    v += a * psi[k - 1 - i];
                }
            }
            psi.push(v);
        }
        sd * sd * psi.iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn arma21_variance_matches_closed_form() {
        let spec = ExogenousSpec::new(vec![-0.2, -0.3], vec![0.5], 0.1, 200).unwrap();
        let w = simulate_exogenous(&spec, 200_000, 5).unwrap();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let expected = arma_variance_oracle(&[-0.2, -0.3], &[0.5], 0.1);
        assert!((var / expected - 1.0).abs() < 0.03, "var {var} vs {expected}");
    }

    #[test]
    fn iid_case_moments() {
        let model = GBetaArModel::new(0.0, vec![], vec![], 100.0).unwrap();
        let n = 50_000;
        let w = vec![0.0; n];
        let s = simulate_gbeta_ar(&model, &w, n, 1, None).unwrap();
        let mean = s.x.iter().sum::<f64>() / n as f64;
        let var = s.x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((mean - 0.5).abs() < 0.003, "mean {mean}");
        // Beta(50, 50): variance 0.25 / 101; fourth central moment for the SE.
        let true_var = 0.25 / 101.0;
        // Excess kurtosis of Beta(a, a) is -6 / (2a + 3).
        let m4 = true_var * true_var * (3.0 - 6.0 / 103.0);
        let se_var = ((m4 - true_var * true_var) / n as f64).sqrt();
        assert!((var - true_var).abs() < 4.0 * se_var, "var {var} vs {true_var}");
        let se_mean = (true_var / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 4.0 * se_mean);
    }

    #[test]
    fn outputs_strictly_inside_unit_interval_and_seeded() {
        let model = benchmark_null_model();
        let exog = ExogenousSpec::new(vec![-0.1], vec![], 1.0, 0).unwrap();
        let a = simulate_process(&model, &exog, 2000, 100, 42).unwrap();
        let b = simulate_process(&model, &exog, 2000, 100, 42).unwrap();
        let c = simulate_process(&model, &exog, 2000, 100, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.x.iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn conditional_mean_matches_direct_evaluation() {
        // Straight-line recomputation of the link on 20 points.
        let model = GBetaArModel::new(0.3, vec![0.4, -0.2], vec![0.5, 0.25], 50.0).unwrap();
        let w: Vec<f64> = (0..22).map(|i| ((i as f64) * 0.7).sin() * 3.0).collect();
        let s = simulate_gbeta_ar(&model, &w, 20, 8, Some(&[0.3, 0.6])).unwrap();
        let mut hist = vec![0.3, 0.6];
        hist.extend_from_slice(&s.x);
        let l = |v: f64| {
            let c = v.clamp(0.001, 0.999);
            (c / (1.0 - c)).ln()
        };
        for t in 2..20 {
            // Output t has history hist[t+1], hist[t]; W_t = w[t+1].
            let direct = 0.3 + 0.4 * l(hist[t + 1]) - 0.2 * l(hist[t]) + 0.5 * w[t + 1] + 0.25 * w[t];
            let via_model = model.eta_at(&s.x, &s.w, t);
            assert!((direct - via_model).abs() < 1e-12);
        }
    }

    #[test]
    fn null_model_marginal_is_stable() {
        let model = benchmark_null_model();
        let exog = ExogenousSpec::new(vec![-0.1], vec![], 1.0, 0).unwrap();
        let s = simulate_process(&model, &exog, 10_000, DEFAULT_BURN_IN, 17).unwrap();
        let (a, b) = s.x.split_at(5000);
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        // Two-sample Kolmogorov distance by merging the sorted halves.
        let (mut i, mut j, mut dist) = (0usize, 0usize, 0f64);
        while i < a.len() && j < b.len() {
            let v = a[i].min(b[j]);
            while i < a.len() && a[i] <= v {
                i += 1;
            }
            while j < b.len() && b[j] <= v {
                j += 1;
            }
            dist = dist.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        assert!(dist < 0.03, "Kolmogorov distance {dist}");
    }

    #[test]
    fn rejects_short_exogenous_path() {
        let model = GBetaArModel::new(0.0, vec![], vec![0.1, 0.1, 0.1], 10.0).unwrap();
        assert!(simulate_gbeta_ar(&model, &[0.0; 10], 9, 0, None).is_err());
        assert!(simulate_gbeta_ar(&model, &[0.0; 11], 9, 0, None).is_ok());
    }

    #[test]
    fn regime_switch_changes_dynamics() {
        let pre = ExogenousSpec::new(vec![-0.1], vec![], 1.0, 50).unwrap();
        let post = ExogenousSpec::new(vec![-0.2, -0.3], vec![0.5], 0.1, 0).unwrap();
        let w = simulate_exogenous_regimes(
            &[Regime { start: 0, spec: &pre }, Regime { start: 5000, spec: &post }],
            10_000,
            1,
        )
        .unwrap();
        let var = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64;
        assert!(var(&w[..5000]) > 0.8);
        assert!(var(&w[5001..]) < 0.05);
        // Identical prefix to the single-regime path.
        let single = simulate_exogenous(&pre, 5000, 1).unwrap();
        assert_eq!(&w[..5000], &single[..]);
    }
}
