//! Least-squares fit of the model CCDF to an empirical rank CCDF.
//!
//! The loss is `sum_i w_i (ln ccdf_model(m_i) - ln p_i)^2` over the
//! log-downsampled empirical points. Downsampling keeps the point count per
//! decade even; the default weights `r_i / (1 - p_i)` then discount the noisy
//! top ranks, whose `ln p` has variance close to `1 / r`. Parameters are searched in log space inside a box with Nelder–Mead, from
//! the heuristic initial guess plus jittered restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::{log_downsample, rank_ccdf, EmpiricalCcdf, IncomeSample};
use crate::error::{Error, Result};
use crate::model::{EyfModel, EyfParams, DEFAULT_QUAD_TOL};
use crate::optim::NelderMead;

/// Loss assigned to parameter vectors the model rejects.
const INFEASIBLE_LOSS: f64 = 1e12;
const MIN_SPAN_DECADES: f64 = 2.0;
const JITTER: f64 = 0.2;
const MIN_EXPONENT: f64 = 0.05;
const MAX_EXPONENT: f64 = 20.0;

/// Per-parameter box constraints `(low, high)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub m0: (f64, f64),
    pub m1: (f64, f64),
    #[serde(rename = "T")]
    pub t: (f64, f64),
    #[serde(rename = "T1")]
    pub t1: (f64, f64),
    pub alpha: (f64, f64),
    pub alpha1: (f64, f64),
}

impl Bounds {
    /// Incomes anywhere within the observed range (T1 up to ten times its top),
    /// exponents in `[0.05, 20]`.
    pub fn for_data(ccdf: &EmpiricalCcdf) -> Self {
        let lo = ccdf.incomes().iter().copied().find(|m| *m > 0.0).unwrap_or(1.0);
        let hi = ccdf.incomes()[ccdf.len() - 1].max(lo * 10.0);
        Self {
            m0: (lo, hi),
            m1: (lo, hi),
            t: (lo, hi),
            t1: (lo, 10.0 * hi),
            alpha: (MIN_EXPONENT, MAX_EXPONENT),
            alpha1: (MIN_EXPONENT, MAX_EXPONENT),
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("m0", self.m0),
            ("m1", self.m1),
            ("T", self.t),
            ("T1", self.t1),
            ("alpha", self.alpha),
            ("alpha1", self.alpha1),
        ] {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::Domain(format!("bounds for {name} must satisfy 0 < low < high")));
            }
        }
        Ok(())
    }
}

/// Per-point weights of the squared log residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Every retained point counts the same.
    Uniform,
    /// `r / (1 - p)`: the inverse binomial variance of `ln p` at rank `r`.
    InverseVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Tie `T1` to `m1`.
    pub constrain_t1_eq_m1: bool,
    pub points_per_decade: usize,
    pub weighting: Weighting,
    /// Box constraints; derived from the data when absent.
    pub bounds: Option<Bounds>,
    /// Nelder–Mead iterations per start.
    pub max_iterations: usize,
    pub loss_tol: f64,
    pub seed: u64,
    /// Number of starts: the initial guess plus `starts - 1` jittered copies.
    pub starts: usize,
    pub quad_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            constrain_t1_eq_m1: true,
            points_per_decade: 20,
            weighting: Weighting::InverseVariance,
            bounds: None,
            max_iterations: 2000,
            loss_tol: 1e-10,
            seed: 0,
            starts: 5,
            quad_tol: DEFAULT_QUAD_TOL,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.points_per_decade == 0 || self.max_iterations == 0 || self.starts == 0 {
            return Err(Error::Domain(
                "points_per_decade, max_iterations and starts must be positive".into(),
            ));
        }
        if !(self.loss_tol > 0.0 && self.quad_tol > 0.0) {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        if let Some(b) = &self.bounds {
            b.validate()?;
        }
        Ok(())
    }
}

/// Signed log residual `ln ccdf_model(m) - ln p` at one empirical point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residual {
    pub income: f64,
    pub prob: f64,
    pub residual: f64,
}

/// Per-parameter bootstrap standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamErrors {
    pub m0: f64,
    pub m1: f64,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
    pub alpha: f64,
    pub alpha1: f64,
}

impl ParamErrors {
    /// Standard errors divided by the corresponding parameter values.
    pub fn relative_to(&self, p: &EyfParams) -> ParamErrors {
        ParamErrors {
            m0: self.m0 / p.m0,
            m1: self.m1 / p.m1,
            t: self.t / p.t,
            t1: self.t1 / p.t1,
            alpha: self.alpha / p.alpha,
            alpha1: self.alpha1 / p.alpha1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub params: EyfParams,
    /// Plain sum of squared log residuals over the fitted points.
    pub rss: f64,
    /// Minimized objective (the weighted sum).
    pub loss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub errors: Option<ParamErrors>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub residuals: Vec<Residual>,
}

/// Parameter vector in log space: (m0, T, m1, alpha, alpha1[, T1]).
#[derive(Debug, Clone, Copy)]
struct Encoding {
    tied: bool,
}

impl Encoding {
    fn encode(&self, p: &EyfParams) -> Vec<f64> {
        let mut v = vec![p.m0.ln(), p.t.ln(), p.m1.ln(), p.alpha.ln(), p.alpha1.ln()];
        if !self.tied {
            v.push(p.t1.ln());
        }
        v
    }

    fn decode(&self, v: &[f64], currency: &str) -> EyfParams {
        let m1 = v[2].exp();
        let t1 = if self.tied { m1 } else { v[5].exp() };
        EyfParams::new(v[0].exp(), m1, v[1].exp(), t1, v[3].exp(), v[4].exp()).with_currency(currency)
    }

    fn box_of(&self, b: &Bounds) -> (Vec<f64>, Vec<f64>) {
        let mut pairs = vec![b.m0, b.t, b.m1, b.alpha, b.alpha1];
        if !self.tied {
            pairs.push(b.t1);
        }
        (
            pairs.iter().map(|p| p.0.ln()).collect(),
            pairs.iter().map(|p| p.1.ln()).collect(),
        )
    }
}

fn log_points(ccdf: &EmpiricalCcdf) -> Vec<(f64, f64)> {
    ccdf.points()
        .filter(|(m, _)| *m > 0.0)
        .map(|(m, p)| (m.ln(), p.ln()))
        .collect()
}

/// Residuals of `model` against every positive-income point of `ccdf`.
pub fn residuals(model: &EyfModel, ccdf: &EmpiricalCcdf) -> Result<Vec<Residual>> {
    ccdf.points()
        .filter(|(m, _)| *m > 0.0)
        .map(|(m, p)| {
            Ok(Residual {
                income: m,
                prob: p,
                residual: model.ln_ccdf(m)? - p.ln(),
            })
        })
        .collect()
}

/// `points` hold `(m, ln p, weight)`.
fn weighted_rss(model: &EyfModel, points: &[(f64, f64, f64)]) -> Result<f64> {
    let mut sum = 0.0;
    for &(m, ln_p, w) in points {
        let r = model.ln_ccdf(m)? - ln_p;
        sum += w * r * r;
    }
    Ok(sum)
}

/// Ordinary least squares line through `(x, y)`: returns (slope, intercept, sse).
fn line_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let sse = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    (slope, intercept, sse)
}

/// Linear interpolation of ln p at `x` (ln m) on ascending points.
fn interp(pts: &[(f64, f64)], x: f64) -> f64 {
    let k = pts.partition_point(|p| p.0 <= x);
    if k == 0 {
        return pts[0].1;
    }
    if k == pts.len() {
        return pts[k - 1].1;
    }
    let (a, b) = (pts[k - 1], pts[k]);
    a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
}

/// Heuristic starting point read off the shape of the empirical curve.
///
/// `T` is where the curve crosses `1/e`. Above `T` a two-segment line fit in
/// log-log coordinates locates `m1` at the break that minimizes the summed
/// squared error; the upper segment's slope gives `alpha1`. `m0` sits at the
/// strongest downward curvature between `T` and `m1`, and `alpha` is the slope
/// between `m0` and `m1`. Data without a flatter upper segment (for example a
/// pure exponential) has no high-income regime and is rejected as degenerate.
pub fn init_guess(ccdf: &EmpiricalCcdf) -> Result<EyfParams> {
    if ccdf.decades() < MIN_SPAN_DECADES {
        return Err(Error::Degenerate(format!(
            "curve spans {:.2} decades of income, need at least {MIN_SPAN_DECADES}",
            ccdf.decades()
        )));
    }
    let pts = log_points(ccdf);
    let target = -1.0;
    let t_ln = match pts.iter().position(|p| p.1 <= target) {
        Some(0) | None => pts[0].0,
        Some(k) => {
            let (a, b) = (pts[k - 1], pts[k]);
            a.0 + (b.0 - a.0) * (target - a.1) / (b.1 - a.1)
        }
    };
    let upper: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.0 > t_ln).collect();
    const MIN_SEGMENT: usize = 4;
    if upper.len() < 2 * MIN_SEGMENT {
        return Err(Error::Degenerate("too few points above the bulk".into()));
    }
    let (mut best_sse, mut split) = (f64::INFINITY, MIN_SEGMENT);
    for b in MIN_SEGMENT..=upper.len() - MIN_SEGMENT {
        let sse = line_fit(&upper[..b]).2 + line_fit(&upper[b..]).2;
        if sse < best_sse {
            best_sse = sse;
            split = b;
        }
    }
    let lower_slope = -line_fit(&upper[..split]).0;
    let alpha1 = -line_fit(&upper[split..]).0;
    if !(alpha1 > 0.0) || alpha1 >= lower_slope {
        return Err(Error::Degenerate(format!(
            "no flattening slope break (slopes {lower_slope:.3} then {alpha1:.3})"
        )));
    }
    let m1_ln = upper[split].0;

    // strongest downward curvature on a uniform ln m grid between T and m1
    let step = std::f64::consts::LN_10 / 10.0;
    let nodes: Vec<f64> = (0..)
        .map(|i| t_ln + step * i as f64)
        .take_while(|x| *x <= m1_ln)
        .collect();
    let mut m0_ln = 0.5 * (t_ln + m1_ln);
    if nodes.len() >= 3 {
        let ys: Vec<f64> = nodes.iter().map(|&x| interp(&pts, x)).collect();
        let mut most = f64::INFINITY;
        for i in 1..nodes.len() - 1 {
            let curv = ys[i + 1] - 2.0 * ys[i] + ys[i - 1];
            if curv < most {
                most = curv;
                m0_ln = nodes[i];
            }
        }
    }
    let gap = 0.05f64.ln_1p();
    m0_ln = m0_ln.min(m1_ln - gap).max(t_ln);

    let medium: Vec<(f64, f64)> = pts.iter().copied().filter(|p| p.0 >= m0_ln && p.0 <= m1_ln).collect();
    let alpha = if medium.len() >= 3 {
        -line_fit(&medium).0
    } else {
        lower_slope
    };
    let alpha = if alpha > alpha1 { alpha } else { lower_slope };
    let m1 = m1_ln.exp();
    Ok(EyfParams::with_t1_at_m1(m0_ln.exp(), m1, t_ln.exp(), alpha, alpha1))
}

/// Fits the model to `ccdf`. Deterministic for a given config.
pub fn fit(ccdf: &EmpiricalCcdf, config: &FitConfig) -> Result<FitResult> {
    fit_with_currency(ccdf, config, "USD")
}

pub fn fit_with_currency(ccdf: &EmpiricalCcdf, config: &FitConfig, currency: &str) -> Result<FitResult> {
    config.validate()?;
    let reduced = log_downsample(ccdf, config.points_per_decade)?;
    let guess = init_guess(&reduced)?;
    let bounds = config.bounds.unwrap_or_else(|| Bounds::for_data(&reduced));
    let enc = Encoding {
        tied: config.constrain_t1_eq_m1,
    };
    let (lower, upper) = enc.box_of(&bounds);
    let points: Vec<(f64, f64, f64)> = reduced
        .points()
        .zip(reduced.counts())
        .filter(|((m, _), _)| *m > 0.0)
        .map(|((m, p), r)| {
            let w = match config.weighting {
                Weighting::Uniform => 1.0,
                Weighting::InverseVariance => r / (1.0 - p),
            };
            (m, p.ln(), w)
        })
        .collect();
    let quad_tol = config.quad_tol;

    let loss = |v: &[f64]| -> f64 {
        let p = enc.decode(v, currency);
        if p.m1 <= p.m0 * (1.0 + 1e-6) {
            return INFEASIBLE_LOSS * (1.0 + (p.m0 / p.m1).ln());
        }
        EyfModel::normalize(p, quad_tol)
            .and_then(|m| weighted_rss(&m, &points))
            .unwrap_or(INFEASIBLE_LOSS)
    };

    let base = enc.encode(&guess);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let jitter = JITTER.ln_1p();
    let starts: Vec<Vec<f64>> = (0..config.starts)
        .map(|i| {
            base.iter()
                .map(|x| {
                    if i == 0 {
                        *x
                    } else {
                        x + rng.random_range(-jitter..=jitter)
                    }
                })
                .collect()
        })
        .collect();

    let optimizer = NelderMead {
        max_iterations: config.max_iterations,
        f_tol: config.loss_tol,
        x_tol: 1e-6,
        initial_step: 0.1,
    };
    let mut best: Option<(Vec<f64>, f64, usize, bool)> = None;
    for start in &starts {
        let first = optimizer.minimize(&loss, start, &lower, &upper);
        // a second pass from the optimum guards against a collapsed simplex
        let polish = NelderMead {
            max_iterations: config.max_iterations.saturating_sub(first.iterations).max(1),
            initial_step: 0.02,
            ..optimizer
        };
        let second = polish.minimize(&loss, &first.x, &lower, &upper);
        let iterations = first.iterations + second.iterations;
        let (x, value) = if second.value <= first.value {
            (second.x, second.value)
        } else {
            (first.x, first.value)
        };
        let converged = first.converged && second.converged;
        let better = match &best {
            None => true,
            Some((_, v, it, _)) => value < *v || (value == *v && iterations < *it),
        };
        if better {
            best = Some((x, value, iterations, converged));
        }
    }
    let (x, loss_value, iterations, converged) = best.expect("at least one start");
    if loss_value >= INFEASIBLE_LOSS {
        return Err(Error::Numeric("no feasible parameters found".into()));
    }
    let params = enc.decode(&x, currency);
    let model = EyfModel::normalize(params.clone(), quad_tol)?;
    let residuals = residuals(&model, &reduced)?;
    let rss = residuals.iter().map(|r| r.residual * r.residual).sum();
    let mut warnings = Vec::new();
    if model.small_separation() {
        warnings.push(format!("small class separation: m1/m0 = {:.3}", params.m1 / params.m0));
    }
    if !converged {
        warnings.push(format!("optimizer stopped after {iterations} iterations"));
    }
    Ok(FitResult {
        params,
        rss,
        loss: loss_value,
        converged,
        iterations,
        errors: None,
        warnings,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSummary {
    pub errors: ParamErrors,
    pub replicates: usize,
    pub failed: usize,
}

/// Nonparametric bootstrap: resample records with replacement, rebuild the
/// rank CCDF and refit. Replicate `i` draws from stream `i` of the seeded
/// generator, so results do not depend on scheduling.
pub fn bootstrap_errors(
    sample: &IncomeSample,
    config: &FitConfig,
    replicates: usize,
    seed: u64,
) -> Result<BootstrapSummary> {
    bootstrap_errors_with(sample, config, replicates, seed, resample, |s| Ok(rank_ccdf(s)))
}

/// `n` indices drawn uniformly with replacement.
pub fn resample(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Bootstrap with a custom resampling rule and curve builder (for example
/// re-merging a fixed rich list onto each resampled survey).
pub fn bootstrap_errors_with<R, B>(
    sample: &IncomeSample,
    config: &FitConfig,
    replicates: usize,
    seed: u64,
    resample: R,
    build: B,
) -> Result<BootstrapSummary>
where
    R: Fn(usize, &mut ChaCha8Rng) -> Vec<usize> + Sync,
    B: Fn(&IncomeSample) -> Result<EmpiricalCcdf> + Sync,
{
    if replicates < 2 {
        return Err(Error::Domain("bootstrap needs at least 2 replicates".into()));
    }
    let fits: Vec<Option<EyfParams>> = (0..replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let indices = resample(sample.len(), &mut rng);
            let result = sample
                .select(&indices)
                .and_then(|s| build(&s))
                .and_then(|c| fit(&c, config));
            match result {
                Ok(r) => Some(r.params),
                Err(e) => {
                    log::warn!("bootstrap replicate {i} failed: {e}");
                    None
                }
            }
        })
        .collect();
    let ok: Vec<EyfParams> = fits.into_iter().flatten().collect();
    let failed = replicates - ok.len();
    if 2 * failed > replicates || ok.len() < 2 {
        return Err(Error::Bootstrap {
            failed,
            total: replicates,
        });
    }
    let sd = |get: fn(&EyfParams) -> f64| {
        let n = ok.len() as f64;
        let mean = ok.iter().map(get).sum::<f64>() / n;
        (ok.iter().map(|p| (get(p) - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(BootstrapSummary {
        errors: ParamErrors {
            m0: sd(|p| p.m0),
            m1: sd(|p| p.m1),
            t: sd(|p| p.t),
            t1: sd(|p| p.t1),
            alpha: sd(|p| p.alpha),
            alpha1: sd(|p| p.alpha1),
        },
        replicates: ok.len(),
        failed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecadeResidual {
    /// `floor(log10(income))`
    pub decade: i32,
    pub mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Goodness {
    pub rss: f64,
    pub max_abs_residual: f64,
    pub per_decade: Vec<DecadeResidual>,
}

/// Residual summary of a fit against the full (not downsampled) curve.
pub fn goodness(result: &FitResult, ccdf: &EmpiricalCcdf, quad_tol: f64) -> Result<Goodness> {
    let model = EyfModel::normalize(result.params.clone(), quad_tol)?;
    let res = residuals(&model, ccdf)?;
    let rss = res.iter().map(|r| r.residual * r.residual).sum();
    let max_abs_residual = res.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
    let mut per_decade: Vec<DecadeResidual> = Vec::new();
    for r in &res {
        let decade = r.income.log10().floor() as i32;
        match per_decade.last_mut() {
            Some(d) if d.decade == decade => {
                d.mean += r.residual;
                d.count += 1;
            }
            _ => per_decade.push(DecadeResidual {
                decade,
                mean: r.residual,
                count: 1,
            }),
        }
    }
    for d in &mut per_decade {
        d.mean /= d.count as f64;
    }
    Ok(Goodness {
        rss,
        max_abs_residual,
        per_decade,
    })
}
