//! Peak detection, windowed moving averages, exponential envelope fits and
//! the averaged-system constants.

use crate::error::{Error, Result};
use crate::normal_form::{NFState, NormalFormCoeffs};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Tolerance of the decreasing-prefix comparison.
pub const PREFIX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSequence {
    /// peak times of the decreasing prefix
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// number of local maxima found before truncation
    pub total_found: usize,
}

impl PeakSequence {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Mean gap between the first `n` peaks.
    pub fn mean_period(&self, n: usize) -> Result<f64> {
        let n = n.min(self.times.len());
        if n < 2 {
            return Err(Error::InsufficientData("a period needs at least two peaks".into()));
        }
        Ok((self.times[n - 1] - self.times[0]) / (n - 1) as f64)
    }

    pub fn period(&self) -> Result<f64> {
        self.mean_period(self.times.len())
    }
}

/// Local maxima of `u` on the grid `t`, optionally refined by the parabola
/// through the three bracketing samples, truncated at the longest
/// (non-strictly, within [`PREFIX_TOL`]) decreasing prefix.
pub fn detect_peaks(t: &[f64], u: &[f64], refine: bool) -> Result<PeakSequence> {
    if t.len() != u.len() {
        return Err(Error::InvalidParameter("time and value lengths differ".into()));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for i in 1..u.len().saturating_sub(1) {
        let (y0, y1, y2) = (u[i - 1], u[i], u[i + 1]);
        if !(y1 > y0 && y1 >= y2) {
            continue;
        }
        let den = y0 - 2.0 * y1 + y2;
        if refine && den != 0.0 {
            let off = 0.5 * (y0 - y2) / den;
            let dt = if off >= 0.0 { t[i + 1] - t[i] } else { t[i] - t[i - 1] };
            times.push(t[i] + off * dt);
            values.push(y1 - 0.25 * (y0 - y2) * off);
        } else {
            times.push(t[i]);
            values.push(y1);
        }
    }
    let total_found = times.len();
    let mut n = usize::from(total_found > 0);
    while n < total_found && values[n] < values[n - 1] + PREFIX_TOL {
        n += 1;
    }
    times.truncate(n);
    values.truncate(n);
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} peak(s) in the decreasing prefix")));
    }
    Ok(PeakSequence { times, values, total_found })
}

/// `ḡ(τ) = (1/l)∫_τ^{τ+l} g` sampled on the source grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovingAverage {
    pub window: f64,
    pub channel: String,
    pub tau: Vec<f64>,
    pub values: Vec<f64>,
}

impl MovingAverage {
    /// Linear interpolation between grid samples.
    pub fn at(&self, tau: f64) -> Option<f64> {
        let n = self.tau.len();
        if n == 0 || tau < self.tau[0] || tau > self.tau[n - 1] {
            return None;
        }
        let k = self.tau.partition_point(|&t| t < tau);
        if k == 0 {
            return Some(self.values[0]);
        }
        let (t0, t1) = (self.tau[k - 1], self.tau[k]);
        let th = (tau - t0) / (t1 - t0);
        Some(self.values[k - 1] + th * (self.values[k] - self.values[k - 1]))
    }

    /// Samples with `lo ≤ τ ≤ hi`.
    pub fn restrict(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        self.tau
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .map(|(t, v)| (*t, *v))
            .unzip()
    }
}

fn cumulative_trapezoid(t: &[f64], g: &[f64]) -> Vec<f64> {
    let mut c = Vec::with_capacity(t.len());
    c.push(0.0);
    for i in 1..t.len() {
        c.push(c[i - 1] + 0.5 * (t[i] - t[i - 1]) * (g[i] + g[i - 1]));
    }
    c
}

/// Integral of the piecewise-linear interpolant from `t[0]` to `x`, using
/// cell `j` with `t[j] ≤ x ≤ t[j+1]`.
fn partial_integral(t: &[f64], g: &[f64], c: &[f64], j: usize, x: f64) -> f64 {
    if j + 1 >= t.len() {
        return c[t.len() - 1];
    }
    let dt = t[j + 1] - t[j];
    let th = (x - t[j]) / dt;
    c[j] + dt * (th * g[j] + 0.5 * th * th * (g[j + 1] - g[j]))
}

/// Moving average by trapezoidal quadrature over `[τ, τ + l]`, restricted to
/// grid points with `τ + l ≤ t_end` and `lo ≤ τ ≤ hi`.
pub fn moving_average_range(t: &[f64], g: &[f64], l: f64, channel: &str, lo: f64, hi: f64) -> Result<MovingAverage> {
    if t.len() != g.len() || t.len() < 2 {
        return Err(Error::InvalidParameter("need at least two matched samples".into()));
    }
    if !(l > 0.0) {
        return Err(Error::InvalidParameter("window must be positive".into()));
    }
    let t_end = t[t.len() - 1];
    if l > t_end - t[0] {
        return Err(Error::InsufficientData(format!("window {l} exceeds span {}", t_end - t[0])));
    }
    let c = cumulative_trapezoid(t, g);
    let mut tau = Vec::new();
    let mut values = Vec::new();
    let mut j = 0usize;
    for i in 0..t.len() {
        let a = t[i];
        if a < lo {
            continue;
        }
        if a > hi || a + l > t_end * (1.0 + 1e-15) {
            break;
        }
        let b = (a + l).min(t_end);
        while j + 1 < t.len() - 1 && t[j + 1] <= b {
            j += 1;
        }
        let ib = partial_integral(t, g, &c, j, b);
        tau.push(a);
        values.push((ib - c[i]) / l);
    }
    Ok(MovingAverage { window: l, channel: channel.into(), tau, values })
}

pub fn moving_average(t: &[f64], g: &[f64], l: f64, channel: &str) -> Result<MovingAverage> {
    moving_average_range(t, g, l, channel, f64::NEG_INFINITY, f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Tau,
    S,
}

/// `g(τ) ≈ k1 e^{k2 (τ − t0)}` on `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub interval: [f64; 2],
    pub k1: f64,
    pub k2: f64,
    /// RMS of the raw-scale residuals of the returned model
    pub residual: f64,
    pub time_unit: TimeUnit,
    #[serde(skip)]
    pub refined: bool,
}

impl ExpFit {
    pub fn eval(&self, tau: f64) -> f64 {
        self.k1 * (self.k2 * (tau - self.interval[0])).exp()
    }

    /// Same fit expressed in slow time `s = δτ`.
    pub fn to_slow_time(&self, delta: f64) -> ExpFit {
        ExpFit {
            interval: [self.interval[0] * delta, self.interval[1] * delta],
            k2: self.k2 / delta,
            time_unit: TimeUnit::S,
            ..*self
        }
    }
}

fn raw_rms(t: &[f64], y: &[f64], t0: f64, k1: f64, k2: f64) -> f64 {
    let s: f64 = t.iter().zip(y).map(|(t, y)| (y - k1 * (k2 * (t - t0)).exp()).powi(2)).sum();
    (s / t.len() as f64).sqrt()
}

/// Ordinary least squares of `ln y` against `t − t0`.
pub fn fit_exponential_loglinear(t: &[f64], y: &[f64], t0: f64) -> Result<(f64, f64, f64)> {
    if t.len() != y.len() || t.len() < 2 {
        return Err(Error::InsufficientData("fit needs at least two samples".into()));
    }
    if let Some(v) = y.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("nonpositive sample {v} in exponential fit")));
    }
    let n = t.len() as f64;
    let xm = t.iter().map(|t| t - t0).sum::<f64>() / n;
    let lm = y.iter().map(|y| y.ln()).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (t, y) in t.iter().zip(y) {
        let dx = t - t0 - xm;
        sxx += dx * dx;
        sxy += dx * (y.ln() - lm);
    }
    if !(sxx > 1e-300) {
        return Err(Error::Singular("fit interval has no spread".into()));
    }
    let k2 = sxy / sxx;
    let b = lm - k2 * xm;
    let lres: f64 = t.iter().zip(y).map(|(t, y)| (y.ln() - b - k2 * (t - t0)).powi(2)).sum();
    Ok((b.exp(), k2, (lres / n).sqrt()))
}

/// Gauss–Newton on the raw scale from a starting pair.
fn gauss_newton(t: &[f64], y: &[f64], t0: f64, mut k1: f64, mut k2: f64) -> (f64, f64) {
    let mut best = raw_rms(t, y, t0, k1, k2);
    for _ in 0..20 {
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (t, y) in t.iter().zip(y) {
            let dt = t - t0;
            let e = (k2 * dt).exp();
            let r = y - k1 * e;
            let (j1, j2) = (e, k1 * dt * e);
            a11 += j1 * j1;
            a12 += j1 * j2;
            a22 += j2 * j2;
            g1 += j1 * r;
            g2 += j2 * r;
        }
        let det = a11 * a22 - a12 * a12;
        if det.abs() <= 1e-300 {
            break;
        }
        let d1 = (a22 * g1 - a12 * g2) / det;
        let d2 = (a11 * g2 - a12 * g1) / det;
        let mut lam = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let (c1, c2) = (k1 + lam * d1, k2 + lam * d2);
            let r = raw_rms(t, y, t0, c1, c2);
            if r < best {
                k1 = c1;
                k2 = c2;
                best = r;
                improved = true;
                break;
            }
            lam *= 0.5;
        }
        if !improved || (d1.abs() <= 1e-15 * k1.abs() && d2.abs() <= 1e-15 * k2.abs().max(1e-300)) {
            break;
        }
    }
    (k1, k2)
}

/// Log-linear fit followed by a Gauss–Newton pass kept only when it lowers
/// the raw-scale RMS.
pub fn fit_exponential_samples(t: &[f64], y: &[f64], interval: (f64, f64), refine: bool) -> Result<ExpFit> {
    let (k1, k2, _) = fit_exponential_loglinear(t, y, interval.0)?;
    let base = raw_rms(t, y, interval.0, k1, k2);
    let mut fit = ExpFit { interval: [interval.0, interval.1], k1, k2, residual: base, time_unit: TimeUnit::Tau, refined: false };
    if refine {
        let (r1, r2) = gauss_newton(t, y, interval.0, k1, k2);
        let rr = raw_rms(t, y, interval.0, r1, r2);
        if rr < base && r1 > 0.0 {
            fit.k1 = r1;
            fit.k2 = r2;
            fit.residual = rr;
            fit.refined = true;
        }
    }
    Ok(fit)
}

/// Fits a moving average on `[t0, t1]`.
pub fn fit_exponential(ma: &MovingAverage, interval: (f64, f64)) -> Result<ExpFit> {
    let (t, y) = ma.restrict(interval.0, interval.1);
    fit_exponential_samples(&t, &y, interval, true)
}

/// Oscillatory correction `e^{k2(τ−t0)}(γ1 sin 2ϑ(τ−t0) + γ2 cos 2ϑ(τ−t0))`
/// of a fit, by linear least squares on the fit residual.
pub fn fit_oscillation(ma: &MovingAverage, fit: &ExpFit, theta: f64) -> Result<(f64, f64)> {
    let (t, y) = ma.restrict(fit.interval[0], fit.interval[1]);
    let (mut a11, mut a12, mut a22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, y) in t.iter().zip(&y) {
        let dt = t - fit.interval[0];
        let e = (fit.k2 * dt).exp();
        let (s, c) = ((2.0 * theta * dt).sin() * e, (2.0 * theta * dt).cos() * e);
        let r = y - fit.k1 * e;
        a11 += s * s;
        a12 += s * c;
        a22 += c * c;
        r1 += s * r;
        r2 += c * r;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() <= 1e-300 {
        return Err(Error::Singular("oscillation design".into()));
    }
    Ok(((a22 * r1 - a12 * r2) / det, (a11 * r2 - a12 * r1) / det))
}

/// Constants of the averaged system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BCoefficients {
    pub a: f64,
    pub theta: f64,
    pub b1: f64,
    pub b2: f64,
    /// amplitude of the `v` envelope
    pub b: f64,
    pub c2: f64,
}

/// `b1 = A²(1 − e^{−p b2})/(2 p b2)` for a window of length `p`.
pub fn b1_from_amplitude(a: f64, b2: f64, period: f64) -> f64 {
    let x = period * b2;
    if x == 0.0 {
        a * a / 2.0
    } else {
        a * a * (-(-x).exp_m1()) / (2.0 * x)
    }
}

/// Averaged-system constants from the initial point and the peak sequence;
/// `fit` overrides `(b1, b2)` with empirical values.
pub fn b_coefficients(initial: &NFState, coeffs: &NormalFormCoeffs, alpha: f64, peaks: &PeakSequence, fit: Option<&ExpFit>) -> Result<BCoefficients> {
    let ad = alpha * coeffs.delta;
    let t2 = 1.0 - ad * ad / 4.0;
    if !(t2 > 0.0) {
        return Err(Error::ConditionViolated("outside the oscillatory regime".into()));
    }
    let theta = t2.sqrt();
    let b2 = fit.map_or(ad, |f| f.k2);
    if !(b2 < 0.0) {
        return Err(Error::ConditionViolated(format!("b2 = {b2} is not a decay rate")));
    }
    let (u0, v0) = (initial.u, initial.v);
    let a = (u0 * u0 + u0 * v0 * b2 + v0 * v0).max(0.0).sqrt() / theta;
    let b1 = match fit {
        Some(f) => f.k1,
        None => b1_from_amplitude(a, b2, peaks.period()?),
    };
    let c2 = b2 / 2.0;
    Ok(BCoefficients { a, theta, b1, b2, b: a / (c2 * c2 + theta * theta), c2 })
}

/// `w̄_base(τ) = (w̄(τ1) − C)e^{δH3(τ−τ1)} + C e^{b2(τ−τ1)}` with
/// `C = δH11 b1 / (2(b2 − δH3))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WbarBase {
    pub wbar_tau1: f64,
    pub b1: f64,
    pub b2: f64,
    pub delta_h3: f64,
    pub delta_h11: f64,
    pub tau1: f64,
}

impl WbarBase {
    pub fn new(wbar_tau1: f64, b1: f64, b2: f64, coeffs: &NormalFormCoeffs, tau1: f64) -> Result<Self> {
        let dh3 = coeffs.delta * coeffs.h3;
        if (b2 - dh3).abs() <= 1e-14 * dh3.abs().max(1e-300) {
            return Err(Error::ConditionViolated("resonant denominator b2 = δH3".into()));
        }
        Ok(WbarBase { wbar_tau1, b1, b2, delta_h3: dh3, delta_h11: coeffs.delta * coeffs.h11, tau1 })
    }

    pub fn from_fit(wbar_tau1: f64, fit: &ExpFit, coeffs: &NormalFormCoeffs, tau1: f64) -> Result<Self> {
        Self::new(wbar_tau1, fit.k1, fit.k2, coeffs, tau1)
    }

    /// The particular-solution amplitude `C`.
    pub fn forcing_amplitude(&self) -> f64 {
        self.delta_h11 * self.b1 / (2.0 * (self.b2 - self.delta_h3))
    }

    pub fn eval(&self, tau: f64) -> f64 {
        let c = self.forcing_amplitude();
        let d = tau - self.tau1;
        (self.wbar_tau1 - c) * (self.delta_h3 * d).exp() + c * (self.b2 * d).exp()
    }

    pub fn derivative(&self, tau: f64) -> f64 {
        let c = self.forcing_amplitude();
        let d = tau - self.tau1;
        self.delta_h3 * (self.wbar_tau1 - c) * (self.delta_h3 * d).exp() + self.b2 * c * (self.b2 * d).exp()
    }

    /// Residual of `w̄' = δH3 w̄ + (δ/2) H11 ū²_base`.
    pub fn ode_residual(&self, tau: f64) -> f64 {
        let u2 = self.b1 * (self.b2 * (tau - self.tau1)).exp();
        self.derivative(tau) - (self.delta_h3 * self.eval(tau) + 0.5 * self.delta_h11 * u2)
    }
}

/// Angular frequency estimate `2π/p`.
pub fn angular_frequency(period: f64) -> f64 {
    2.0 * PI / period
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(a: f64, b: f64, dt: f64) -> Vec<f64> {
        let n = ((b - a) / dt).round() as usize;
        (0..=n).map(|k| a + k as f64 * dt).collect()
    }

    #[test]
    fn sine_peaks_constant_sequence_kept() {
        let t = grid(0.0, 20.0 * PI, 1e-3);
        let u: Vec<f64> = t.iter().map(|t| t.sin()).collect();
        let p = detect_peaks(&t, &u, true).unwrap();
        assert_eq!(p.len(), 10);
        for (k, tk) in p.times.iter().enumerate() {
            assert!((tk - (PI / 2.0 + 2.0 * PI * k as f64)).abs() < 1e-6);
        }
        assert!(p.values.iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn decaying_sine_period() {
        let t = grid(0.0, 200.0, 1e-2);
        let u: Vec<f64> = t.iter().map(|t| (-0.01 * t).exp() * t.sin()).collect();
        let p = detect_peaks(&t, &u, true).unwrap();
        assert!(p.values.windows(2).all(|w| w[1] < w[0]));
        assert!((p.period().unwrap() - 2.0 * PI).abs() < 1e-3);
    }

    #[test]
    fn too_few_peaks() {
        let t = grid(0.0, 3.0, 1e-2);
        let u: Vec<f64> = t.iter().map(|t| t.sin()).collect();
        assert!(matches!(detect_peaks(&t, &u, true), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn moving_average_constant_and_full_period() {
        let t = grid(0.0, 30.0, 1e-3);
        let c = vec![0.7; t.len()];
        let ma = moving_average(&t, &c, 2.345, "c").unwrap();
        assert!(ma.values.iter().all(|v| (v - 0.7).abs() <= 1e-10));
        assert!(*ma.tau.last().unwrap() <= 30.0 - 2.345 + 1e-12);
        let s: Vec<f64> = t.iter().map(|t| t.sin()).collect();
        let ma = moving_average(&t, &s, 2.0 * PI, "sin").unwrap();
        let worst = ma.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-8, "{worst}");
        assert!(moving_average(&t, &s, 31.0, "sin").is_err());
    }

    #[test]
    fn exact_exponential_recovery() {
        let t = grid(0.0, 100.0, 0.1);
        let y: Vec<f64> = t.iter().map(|t| 0.3 * (-0.02 * t).exp()).collect();
        let f = fit_exponential_samples(&t, &y, (0.0, 100.0), true).unwrap();
        assert!((f.k1 - 0.3).abs() <= 1e-10 && (f.k2 + 0.02).abs() <= 1e-10);
    }

    #[test]
    fn oscillation_perturbation_is_small() {
        let t = grid(0.0, 100.0, 0.01);
        let y: Vec<f64> = t.iter().map(|t| 0.3 * (-0.02 * t).exp() + 1e-4 * (2.0 * t).sin()).collect();
        let f = fit_exponential_samples(&t, &y, (0.0, 100.0), true).unwrap();
        assert!(((f.k1 - 0.3) / 0.3).abs() <= 1e-3);
        assert!(((f.k2 + 0.02) / 0.02).abs() <= 1e-3);
    }

    #[test]
    fn fit_errors() {
        let t = [0.0, 1.0, 2.0];
        assert!(fit_exponential_samples(&t, &[1.0, -1.0, 1.0], (0.0, 2.0), true).is_err());
        assert!(fit_exponential_samples(&[1.0, 1.0], &[1.0, 2.0], (1.0, 1.0), true).is_err());
    }

    #[test]
    fn b1_limit_and_relations() {
        let a = 0.6;
        assert!((b1_from_amplitude(a, -1e-12, 6.3) - a * a / 2.0).abs() < 1e-10);
        let ic = NFState::new(0.452, 0.432, 0.3);
        let coeffs = NormalFormCoeffs {
            omega: 0.4,
            delta: 0.25,
            f13: 0.117,
            f111: -0.866,
            h3: 0.0377,
            h11: -0.169,
            alpha_slope: -145.8,
            alpha_intercept: 38.6,
            h_fsn: 0.2656,
            x_fsn: 0.3,
            y_fsn: 0.12,
            z_fsn: 0.42,
        };
        let peaks = PeakSequence { times: vec![1.0, 7.3, 13.6], values: vec![0.6, 0.59, 0.58], total_found: 3 };
        let b = b_coefficients(&ic, &coeffs, -0.04, &peaks, None).unwrap();
        assert!((b.b2 + 0.01).abs() < 1e-15);
        assert_eq!(b.c2, b.b2 / 2.0);
        assert_eq!(b.b, b.a / (b.c2 * b.c2 + b.theta * b.theta));
        assert!(b_coefficients(&ic, &coeffs, 0.04, &peaks, None).is_err());
    }
}
