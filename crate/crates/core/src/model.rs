//! The two-branch equilibrium income distribution.
//!
//! Below the high-income border `m1` the density follows
//!
//! ```text
//! f_low(m)  = exp(-(m0/T)  atan(m/m0)) / (1 + (m/m0)^2)^((alpha  + 1)/2)
//! ```
//!
//! and from `m1` upwards
//!
//! ```text
//! f_high(m) = exp(-(m0/T1) atan(m/m0)) / (1 + (m/m0)^2)^((alpha1 + 1)/2)
//! ```
//!
//! The branches are only defined up to proportionality. [`EyfModel`] fixes the
//! high-branch constant by continuity at `m1` and then scales both to unit
//! mass. The CCDF is tabulated once on a log-spaced grid and interpolated with
//! a monotone cubic in log-log coordinates; above `100 * m1` it is evaluated
//! from an exact change of variables that isolates the power-law tail.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::empirical::IncomeSample;
use crate::error::{Error, Result};
use crate::interp::MonotoneCubic;
use crate::quad::{self, DEFAULT_MAX_INTERVALS};

pub const DEFAULT_QUAD_TOL: f64 = 1e-9;

/// Separation ratio `m1/m0` below which a model carries [`EyfModel::small_separation`].
pub const SMALL_SEPARATION_RATIO: f64 = 1.5;

const NODES_PER_DECADE: f64 = 64.0;
const MIN_GRID_NODES: f64 = 400.0;
const GRID_LOW_FACTOR: f64 = 1e-3;
const GRID_HIGH_DECADES: f64 = 4.0;
const QUADRATURE_SPLIT: f64 = 100.0;

fn default_currency() -> String {
    "USD".to_string()
}

/// The six shape parameters of the distribution plus a currency tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyfParams {
    pub m0: f64,
    pub m1: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
    pub alpha: f64,
    pub alpha1: f64,
    #[serde(default = "default_currency")]
    pub currency: String,
}

impl EyfParams {
    pub fn new(m0: f64, m1: f64, t: f64, t1: f64, alpha: f64, alpha1: f64) -> Self {
        Self {
            m0,
            m1,
            t,
            t1,
            alpha,
            alpha1,
            currency: default_currency(),
        }
    }

    /// Parameters with the high-branch temperature tied to the border, `T1 = m1`.
    pub fn with_t1_at_m1(m0: f64, m1: f64, t: f64, alpha: f64, alpha1: f64) -> Self {
        Self::new(m0, m1, t, m1, alpha, alpha1)
    }

    pub fn with_currency(mut self, currency: impl Into<String>) -> Self {
        self.currency = currency.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.m0, self.m1, self.t, self.t1, self.alpha, self.alpha1]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if !(self.alpha1 > 0.0) {
            return Err(Error::NotNormalizable(format!(
                "alpha1 = {} gives a divergent tail integral",
                self.alpha1
            )));
        }
        if !(self.m0 > 0.0) {
            return Err(Error::InvalidParams(format!("m0 = {} must be positive", self.m0)));
        }
        if !(self.m1 > self.m0) {
            return Err(Error::InvalidParams(format!(
                "m1 = {} must exceed m0 = {}",
                self.m1, self.m0
            )));
        }
        if !(self.t > 0.0 && self.t1 > 0.0) {
            return Err(Error::InvalidParams("temperatures must be positive".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidParams(format!("alpha = {} must be positive", self.alpha)));
        }
        Ok(())
    }

    /// Rescales every income-valued parameter by `factor`; exponents are unchanged.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            m0: self.m0 * factor,
            m1: self.m1 * factor,
            t: self.t * factor,
            t1: self.t1 * factor,
            ..self.clone()
        }
    }
}

/// ln(1 + x^2) without overflow for huge x.
fn ln1p_sq(x: f64) -> f64 {
    if x < 1e8 {
        (x * x).ln_1p()
    } else {
        2.0 * x.ln() + (1.0 / (x * x)).ln_1p()
    }
}

/// Unnormalized log-density of one branch: `-k atan(m/m0) - (a+1)/2 ln(1 + (m/m0)^2)`.
#[derive(Debug, Clone, Copy)]
struct Branch {
    m0: f64,
    k: f64,
    half_power: f64,
}

impl Branch {
    fn new(m0: f64, temperature: f64, exponent: f64) -> Self {
        Self {
            m0,
            k: m0 / temperature,
            half_power: 0.5 * (exponent + 1.0),
        }
    }

    fn ln_f(&self, m: f64) -> f64 {
        let x = m / self.m0;
        -self.k * x.atan() - self.half_power * ln1p_sq(x)
    }
}

/// Normalized distribution with a tabulated CCDF.
#[derive(Debug, Clone)]
pub struct EyfModel {
    params: EyfParams,
    c_low: f64,
    c_high: f64,
    ln_c_low: f64,
    ln_c_high: f64,
    low: Branch,
    high: Branch,
    quad_tol: f64,
    grid_lo: f64,
    grid_hi: f64,
    /// (ln m, ln ccdf) on log-spaced nodes.
    grid: MonotoneCubic,
    mass_error: f64,
}

impl EyfModel {
    /// Fixes the piece constants (continuity at `m1`, unit mass) and tabulates the CCDF.
    pub fn normalize(params: EyfParams, quad_tol: f64) -> Result<Self> {
        params.validate()?;
        if !(quad_tol > 0.0 && quad_tol < 1e-2) {
            return Err(Error::Domain(format!("quad_tol = {quad_tol} outside (0, 1e-2)")));
        }
        let low = Branch::new(params.m0, params.t, params.alpha);
        let high = Branch::new(params.m0, params.t1, params.alpha1);
        let m1 = params.m1;
        let ln_ratio = low.ln_f(m1) - high.ln_f(m1);

        let grid_lo = params.m0.min(params.t) * GRID_LOW_FACTOR;
        let split = QUADRATURE_SPLIT * m1;
        let grid_hi = m1 * 10f64.powf(GRID_HIGH_DECADES);
        let low_decades = (m1 / grid_lo).log10();
        let per_decade = NODES_PER_DECADE.max((MIN_GRID_NODES / (low_decades + GRID_HIGH_DECADES)).ceil());

        let n_low = ((low_decades * per_decade).ceil() as usize).max(1);
        let mut nodes: Vec<f64> = (0..n_low)
            .map(|i| grid_lo * (m1 / grid_lo).powf(i as f64 / n_low as f64))
            .collect();
        let split_index = nodes.len() + 2 * per_decade as usize;
        let n_high = (GRID_HIGH_DECADES * per_decade) as usize;
        nodes.extend((0..=n_high).map(|i| m1 * 10f64.powf(i as f64 / per_decade)));
        nodes[n_low] = m1;
        nodes[split_index] = split;
        let last = nodes.len() - 1;
        nodes[last] = grid_hi;

        let rel = 0.5 * quad_tol;
        let unnormalized = |m: f64| {
            if m < m1 {
                low.ln_f(m).exp()
            } else {
                (ln_ratio + high.ln_f(m)).exp()
            }
        };
        let integrate = |a: f64, b: f64| quad::integrate(unnormalized, a, b, 0.0, rel, DEFAULT_MAX_INTERVALS);

        let head = integrate(0.0, grid_lo)?;
        let mut panels = Vec::with_capacity(split_index);
        let mut err = head.error;
        for w in nodes[..=split_index].windows(2) {
            let p = integrate(w[0], w[1])?;
            err += p.error;
            panels.push(p.value);
        }
        let ln_tail_split = ln_ratio + ln_tail_integral(&params, split, rel)?;
        let tail_split = ln_tail_split.exp();
        let body: f64 = panels.iter().sum();
        let total = head.value + body + tail_split;
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::Numeric(format!("normalization integral is {total}")));
        }
        let ln_total = total.ln();

        let mut ln_ccdf = vec![0.0; nodes.len()];
        let mut suffix = tail_split;
        ln_ccdf[split_index] = ln_tail_split - ln_total;
        for k in (0..split_index).rev() {
            suffix += panels[k];
            ln_ccdf[k] = suffix.ln() - ln_total;
        }
        for k in split_index + 1..nodes.len() {
            ln_ccdf[k] = ln_ratio + ln_tail_integral(&params, nodes[k], rel)? - ln_total;
        }
        if !ln_ccdf.iter().all(|v| v.is_finite()) || !ln_ccdf.windows(2).all(|w| w[1] < w[0]) {
            return Err(Error::Numeric(
                "tabulated CCDF is not finite and strictly decreasing".into(),
            ));
        }
        let ln_nodes: Vec<f64> = nodes.iter().map(|m| m.ln()).collect();

        Ok(Self {
            low,
            high,
            c_low: (-ln_total).exp(),
            c_high: (ln_ratio - ln_total).exp(),
            ln_c_low: -ln_total,
            ln_c_high: ln_ratio - ln_total,
            quad_tol,
            grid_lo,
            grid_hi,
            grid: MonotoneCubic::new(ln_nodes, ln_ccdf),
            mass_error: err / total,
            params,
        })
    }

    pub fn new(params: EyfParams) -> Result<Self> {
        Self::normalize(params, DEFAULT_QUAD_TOL)
    }

    pub fn params(&self) -> &EyfParams {
        &self.params
    }

    /// Multiplicative constant of the `m < m1` piece.
    pub fn c_low(&self) -> f64 {
        self.c_low
    }

    /// Multiplicative constant of the `m >= m1` piece.
    pub fn c_high(&self) -> f64 {
        self.c_high
    }

    pub fn quad_tol(&self) -> f64 {
        self.quad_tol
    }

    /// Quadrature error estimate of the total mass, relative.
    pub fn mass_error(&self) -> f64 {
        self.mass_error
    }

    /// Set when `m1 < 1.5 m0`: the medium class is barely resolved.
    pub fn small_separation(&self) -> bool {
        self.params.m1 < SMALL_SEPARATION_RATIO * self.params.m0
    }

    /// Income range covered by the interpolation table.
    pub fn grid_range(&self) -> (f64, f64) {
        (self.grid_lo, self.grid_hi)
    }

    /// `(income, ccdf)` at the table nodes.
    pub fn grid_nodes(&self) -> Vec<(f64, f64)> {
        self.grid
            .x()
            .iter()
            .zip(self.grid.y())
            .map(|(x, y)| (x.exp(), y.exp()))
            .collect()
    }

    fn check_income(m: f64) -> Result<()> {
        if m >= 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!("income {m} must be non-negative")))
        }
    }

    pub(crate) fn ln_pdf_unchecked(&self, m: f64) -> f64 {
        if m < self.params.m1 {
            self.ln_c_low + self.low.ln_f(m)
        } else {
            self.ln_c_high + self.high.ln_f(m)
        }
    }

    pub fn pdf(&self, m: f64) -> Result<f64> {
        Self::check_income(m)?;
        Ok(self.ln_pdf_unchecked(m).exp())
    }

    /// Left and right limits of the density at `m1`.
    pub fn pdf_limits_at_m1(&self) -> (f64, f64) {
        let m1 = self.params.m1;
        (
            (self.ln_c_low + self.low.ln_f(m1)).exp(),
            (self.ln_c_high + self.high.ln_f(m1)).exp(),
        )
    }

    fn low_head_mass(&self, m: f64) -> Result<f64> {
        let low = self.low;
        let r = quad::integrate(
            |x| low.ln_f(x).exp(),
            0.0,
            m,
            0.0,
            0.5 * self.quad_tol,
            DEFAULT_MAX_INTERVALS,
        )?;
        Ok(self.c_low * r.value)
    }

    fn ln_tail(&self, m: f64) -> Result<f64> {
        Ok(self.ln_c_high + ln_tail_integral(&self.params, m, 0.5 * self.quad_tol)?)
    }

    /// Log-survival from the table; `m` must lie inside the grid range.
    pub(crate) fn ln_ccdf_tabulated(&self, m: f64) -> f64 {
        self.grid.eval(m.ln())
    }

    /// Survival probability `P(income > m)`.
    pub fn ccdf(&self, m: f64) -> Result<f64> {
        Self::check_income(m)?;
        if m == 0.0 {
            Ok(1.0)
        } else if m < self.grid_lo {
            Ok(1.0 - self.low_head_mass(m)?)
        } else if m <= self.grid_hi {
            Ok(self.ln_ccdf_tabulated(m).exp())
        } else if m.is_finite() {
            Ok(self.ln_tail(m)?.exp())
        } else {
            Ok(0.0)
        }
    }

    /// `ln ccdf(m)` for `m > 0`, accurate in the far tail.
    pub fn ln_ccdf(&self, m: f64) -> Result<f64> {
        Self::check_income(m)?;
        if m < self.grid_lo {
            Ok((-self.low_head_mass(m)?).ln_1p())
        } else if m <= self.grid_hi {
            Ok(self.ln_ccdf_tabulated(m))
        } else if m.is_finite() {
            self.ln_tail(m)
        } else {
            Ok(f64::NEG_INFINITY)
        }
    }

    /// Survival probability by direct quadrature, bypassing the table.
    pub fn ccdf_exact(&self, m: f64) -> Result<f64> {
        Self::check_income(m)?;
        let m1 = self.params.m1;
        if m >= m1 {
            return if m.is_finite() {
                Ok(self.ln_tail(m)?.exp())
            } else {
                Ok(0.0)
            };
        }
        let low = self.low;
        let mut mass = 0.0;
        let mut a = m;
        if a < self.grid_lo {
            mass += self.c_low
                * quad::integrate(
                    |x| low.ln_f(x).exp(),
                    a,
                    self.grid_lo,
                    0.0,
                    0.5 * self.quad_tol,
                    DEFAULT_MAX_INTERVALS,
                )?
                .value;
            a = self.grid_lo;
        }
        while a < m1 {
            let b = (a * 10.0).min(m1);
            mass += self.c_low
                * quad::integrate(
                    |x| low.ln_f(x).exp(),
                    a,
                    b,
                    0.0,
                    0.5 * self.quad_tol,
                    DEFAULT_MAX_INTERVALS,
                )?
                .value;
            a = b;
        }
        Ok(mass + self.ln_tail(m1)?.exp())
    }

    /// Income `m` with `ccdf(m) = p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Domain(format!("probability {p} outside (0, 1]")));
        }
        if p == 1.0 {
            return Ok(0.0);
        }
        let ys = self.grid.y();
        let ln_p = p.ln();
        if ln_p > ys[0] {
            // head below the table: 1 - ccdf is a smooth increasing function of m
            let target = 1.0 - p;
            return bisect(0.0, self.grid_lo, |m| self.low_head_mass(m).map(|v| v - target));
        }
        if ln_p >= ys[ys.len() - 1] {
            let k = ys.partition_point(|&y| y > ln_p).saturating_sub(1).min(ys.len() - 2);
            let xs = self.grid.x();
            let t = bisect(xs[k], xs[k + 1], |t| Ok(ln_p - self.grid.eval_segment(k, t)))?;
            return Ok(t.exp());
        }
        // beyond the table: bracket with the power-law asymptote, then bisect in ln m
        let ln_top = ys[ys.len() - 1];
        let guess = self.grid_hi * ((ln_top - ln_p) / self.params.alpha1).exp();
        let mut hi = 2.0 * guess;
        while self.ln_tail(hi)? > ln_p {
            hi *= 4.0;
        }
        let t = bisect(self.grid_hi.ln(), hi.ln(), |t| Ok(ln_p - self.ln_tail(t.exp())?))?;
        Ok(t.exp())
    }

    /// One inverse-transform draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        // 1 - U with U in [0, 1) lies in (0, 1]
        let p = 1.0 - rng.random::<f64>();
        self.quantile(p)
    }

    /// `n` independent draws, reproducible for a fixed `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<IncomeSample> {
        if n == 0 {
            return Err(Error::Domain("sample size must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..n).map(|_| self.draw(&mut rng)).collect::<Result<Vec<_>>>()?;
        IncomeSample::new(values, None, "synthetic")
    }
}

/// `ln ∫_M^∞ f_high(m) dm` for the unnormalized high branch, any `M > 0`.
///
/// With `m = m0 tan(pi/2 - v)` the integral becomes
/// `m0 e^{-k pi/2} ∫_0^{v_M} e^{k v} sin(v)^{a-1} dv`, `v_M = atan(m0/M)`, and the
/// substitution `w = v^a` removes the integrable endpoint singularity:
/// `(m0 e^{-k pi/2} / a) [ v_M^a + ∫_0^{v_M^a} (h(w^{1/a}) - 1) dw ]` with
/// `h(v) = e^{k v} (sin v / v)^{a-1}`. The first term is the pure power-law
/// asymptote; the quadrature only has to resolve the small correction.
fn ln_tail_integral(params: &EyfParams, m: f64, rel_tol: f64) -> Result<f64> {
    let a = params.alpha1;
    let k = params.m0 / params.t1;
    let v_max = (params.m0 / m).atan();
    let w_max = v_max.powf(a);
    let inv_a = 1.0 / a;
    let correction = |w: f64| {
        if w <= 0.0 {
            return 0.0;
        }
        let v = w.powf(inv_a);
        let ln_sinc = if v < 1e-4 {
            let v2 = v * v;
            -v2 / 6.0 - v2 * v2 / 180.0
        } else {
            (v.sin() / v).ln()
        };
        (k * v + (a - 1.0) * ln_sinc).exp_m1()
    };
    let r = quad::integrate(correction, 0.0, w_max, rel_tol * w_max, 0.0, DEFAULT_MAX_INTERVALS)?;
    let bracket = w_max + r.value;
    if !(bracket > 0.0) {
        return Err(Error::Numeric(format!("tail integral at {m} is not positive")));
    }
    Ok(params.m0.ln() - k * FRAC_PI_2 - a.ln() + bracket.ln())
}

/// Bisection for a root of an increasing-through-zero or decreasing-through-zero
/// function on `[lo, hi]`, run until the bracket stops shrinking.
fn bisect<F: Fn(f64) -> Result<f64>>(mut lo: f64, mut hi: f64, f: F) -> Result<f64> {
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Numeric(format!("root not bracketed on [{lo}, {hi}]")));
    }
    let lo_sign = f_lo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid)?;
        if v == 0.0 {
            return Ok(mid);
        }
        if v.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
