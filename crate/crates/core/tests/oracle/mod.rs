//! Brute-force reference for the two-branch income density.
//!
//! Composite trapezoid in ln m over 2·10^6 nodes from 1e-8·m0 to 1e8·m1, the
//! flat head below and the leading power-law term above. Written from the
//! formula directly; shares no code with the library.

#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

pub const NODES: usize = 2_000_000;

#[derive(Debug, Clone, Copy)]
pub struct Raw {
    pub m0: f64,
    pub m1: f64,
    pub t: f64,
    pub t1: f64,
    pub alpha: f64,
    pub alpha1: f64,
}

impl Raw {
    pub fn tied(m0: f64, t: f64, m1: f64, alpha: f64, alpha1: f64) -> Self {
        Self {
            m0,
            m1,
            t,
            t1: m1,
            alpha,
            alpha1,
        }
    }

    fn f_low(&self, m: f64) -> f64 {
        let x = m / self.m0;
        (-(self.m0 / self.t) * x.atan()).exp() / (1.0 + x * x).powf((self.alpha + 1.0) / 2.0)
    }

    fn f_high(&self, m: f64) -> f64 {
        let x = m / self.m0;
        (-(self.m0 / self.t1) * x.atan()).exp() / (1.0 + x * x).powf((self.alpha1 + 1.0) / 2.0)
    }

    /// Continuous, unnormalized density.
    pub fn density(&self, m: f64) -> f64 {
        if m < self.m1 {
            self.f_low(m)
        } else {
            self.f_low(self.m1) / self.f_high(self.m1) * self.f_high(m)
        }
    }
}

/// Tabulated survival function built by the trapezoid rule.
pub struct Oracle {
    pub raw: Raw,
    ln_m: Vec<f64>,
    ccdf: Vec<f64>,
    pub total: f64,
    pub c_low: f64,
}

impl Oracle {
    pub fn new(raw: Raw) -> Self {
        let lo = raw.m0 * 1e-8;
        let hi = raw.m1 * 1e8;
        let (a, b) = (lo.ln(), hi.ln());
        let h = (b - a) / (NODES - 1) as f64;
        let ln_m: Vec<f64> = (0..NODES).map(|i| a + h * i as f64).collect();
        let g: Vec<f64> = ln_m.iter().map(|s| raw.density(s.exp()) * s.exp()).collect();
        // leading power-law behaviour above hi
        let ratio = raw.f_low(raw.m1) / raw.f_high(raw.m1);
        let tail =
            ratio * (-(raw.m0 / raw.t1) * FRAC_PI_2).exp() * raw.m0 / raw.alpha1 * (raw.m0 / hi).powf(raw.alpha1);
        let mut upper = vec![0.0; NODES];
        upper[NODES - 1] = tail;
        for i in (0..NODES - 1).rev() {
            upper[i] = upper[i + 1] + 0.5 * h * (g[i] + g[i + 1]);
        }
        let head = lo * raw.density(0.5 * lo);
        let total = head + upper[0];
        let ccdf = upper.iter().map(|u| u / total).collect();
        Self {
            raw,
            ln_m,
            ccdf,
            total,
            c_low: 1.0 / total,
        }
    }

    pub fn pdf(&self, m: f64) -> f64 {
        self.raw.density(m) / self.total
    }

    /// Linear interpolation of ln ccdf in ln m.
    pub fn ccdf(&self, m: f64) -> f64 {
        let s = m.ln();
        let a = self.ln_m[0];
        let h = self.ln_m[1] - a;
        let pos = (s - a) / h;
        if pos <= 0.0 {
            return 1.0 - (1.0 - self.ccdf[0]) * m / a.exp();
        }
        let i = (pos.floor() as usize).min(NODES - 2);
        let t = pos - i as f64;
        ((1.0 - t) * self.ccdf[i].ln() + t * self.ccdf[i + 1].ln()).exp()
    }

    /// Root of `ccdf(m) = p` by bisection in ln m.
    pub fn quantile(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = (self.ln_m[0], self.ln_m[NODES - 1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.ccdf(mid.exp()) > p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi)).exp()
    }
}

/// Trapezoid of an arbitrary density in ln m (plus the head interval) on the same node layout.
pub fn log_trapezoid<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, nodes: usize) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    let h = (b - a) / (nodes - 1) as f64;
    let mut sum = 0.0;
    let mut prev = f(lo) * lo;
    for i in 1..nodes {
        let m = (a + h * i as f64).exp();
        let cur = f(m) * m;
        sum += 0.5 * h * (prev + cur);
        prev = cur;
    }
    sum + lo * f(0.5 * lo)
}

/// Kolmogorov–Smirnov distance between a sample and a survival function.
pub fn ks_distance<F: Fn(f64) -> f64>(values: &[f64], survival: F) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in v.iter().enumerate() {
        let cdf = 1.0 - survival(*x);
        d = d.max((cdf - i as f64 / n).abs()).max(((i + 1) as f64 / n - cdf).abs());
    }
    d
}

/// Reference parameter sets, (year, m0, T, T1 = m1, alpha, alpha1).
pub const EU: [(i32, f64, f64, f64, f64, f64); 6] = [
    (2005, 199_254.0, 46_278.0, 552_770.0, 2.907, 0.795),
    (2006, 172_373.0, 43_985.0, 529_006.0, 2.892, 0.86),
    (2007, 208_116.0, 48_127.0, 624_350.0, 2.735, 0.79),
    (2008, 174_495.0, 55_257.0, 654_355.0, 2.965, 0.890),
    (2009, 185_945.0, 47_448.0, 371_890.0, 2.974, 2.608),
    (2010, 183_225.0, 51_574.0, 610_749.0, 3.153, 0.77),
];

pub const US: [(i32, f64, f64, f64, f64, f64); 6] = [
    (2005, 135_000.0, 45_520.0, 380_000.0, 1.93, 1.354),
    (2006, 150_000.0, 47_220.0, 350_000.0, 1.88, 1.346),
    (2007, 135_000.0, 48_430.0, 450_000.0, 1.83, 1.336),
    (2008, 135_000.0, 48_740.0, 460_000.0, 1.85, 1.381),
    (2009, 135_000.0, 48_050.0, 500_000.0, 1.90, 1.451),
    (2010, 135_000.0, 48_680.0, 420_000.0, 1.86, 1.395),
];

pub fn raw_of(row: &(i32, f64, f64, f64, f64, f64)) -> Raw {
    Raw::tied(row.1, row.2, row.3, row.4, row.5)
}

pub fn eu_2007() -> Raw {
    raw_of(&EU[2])
}

pub fn us_2009() -> Raw {
    raw_of(&US[4])
}
