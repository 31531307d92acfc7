//! Bistability classifier and the nested-interval early-warning scan.

use crate::error::{Error, Result};
use crate::integrator::{integrate_model, IntegratorConfig, Trajectory};
use crate::model::{SlowFastModel, State};
use crate::normal_form::{funnel_threshold, NormalFormCoeffs, NormalFormTransform, TransformMode};
use crate::signal::{detect_peaks, fit_exponential_samples, moving_average_range, BCoefficients, ExpFit, PeakSequence, WbarBase};
use serde::{Deserialize, Serialize};

/// Rate convention in the critical-curve denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CritCurveUnits {
    /// fitted rate converted to slow time, `k2/δ − δH3`
    #[default]
    Published,
    /// `k2 − δH3`, everything in normal-form time
    Tau,
}

/// Threshold used by the extinction clause of the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ExtinctionForm {
    /// `w̄(τ1) < δH11b1/(2(b2 − δH3))`
    #[default]
    Anchored,
    /// the same threshold multiplied by `e^{b2 τ1}`
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremOptions {
    /// multiple of `δ²` added to the lower bound
    pub cushion: f64,
    pub extinction: ExtinctionForm,
}

impl Default for TheoremOptions {
    fn default() -> Self {
        TheoremOptions { cushion: 0.0, extinction: ExtinctionForm::Anchored }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EWSConfig {
    /// minimum oscillations per interval
    pub k: usize,
    /// peaks to use; all available when `None`
    pub n: Option<usize>,
    pub crit_units: CritCurveUnits,
    /// `w̄ − w̄_crit` must be below `−tol` to count as a crossing
    pub crossing_tolerance: f64,
    pub refine_fit: bool,
    pub theorem: TheoremOptions,
}

impl Default for EWSConfig {
    fn default() -> Self {
        EWSConfig {
            k: 5,
            n: None,
            crit_units: CritCurveUnits::Published,
            crossing_tolerance: 0.0,
            refine_fit: true,
            theorem: TheoremOptions::default(),
        }
    }
}

impl EWSConfig {
    pub fn with_n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k <= 4 {
            return Err(Error::InvalidParameter(format!("k = {} must exceed 4", self.k)));
        }
        if let Some(n) = self.n {
            if n <= self.k {
                return Err(Error::InvalidParameter(format!("N = {n} must exceed k = {}", self.k)));
            }
        }
        if !(self.crossing_tolerance >= 0.0) {
            return Err(Error::InvalidParameter("crossing tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremClass {
    LimitCycle,
    Extinction,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremBounds {
    pub lower: f64,
    pub upper: f64,
    pub wbar_tau1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremVerdict {
    pub class: TheoremClass,
    pub bounds: TheoremBounds,
    pub extinction_threshold: f64,
}

fn bounds_for(wbar_tau1: f64, b1: f64, b2: f64, coeffs: &NormalFormCoeffs, tau1: f64, opts: &TheoremOptions) -> (TheoremBounds, f64) {
    let d = coeffs.delta;
    let c = d * coeffs.h11 * b1 / (2.0 * (b2 - d * coeffs.h3));
    let lower = c + opts.cushion * d * d;
    let upper = -coeffs.h11 * b1 / (2.0 * coeffs.h3);
    let ext = match opts.extinction {
        ExtinctionForm::Anchored => c,
        ExtinctionForm::Literal => c * (b2 * tau1).exp(),
    };
    (TheoremBounds { lower, upper, wbar_tau1 }, ext)
}

/// Classifies the fate of the averaged trajectory from `w̄(τ1)` and the
/// averaged-system constants.
pub fn classify_theorem(wbar_tau1: f64, bcoef: &BCoefficients, coeffs: &NormalFormCoeffs, tau1: f64, opts: &TheoremOptions) -> Result<TheoremVerdict> {
    coeffs.check_sign_regime()?;
    if !(bcoef.b2 < 0.0 && bcoef.b1 > 0.0) {
        return Err(Error::ConditionViolated(format!("need b2 < 0 < b1, got b1 = {}, b2 = {}", bcoef.b1, bcoef.b2)));
    }
    let (bounds, ext) = bounds_for(wbar_tau1, bcoef.b1, bcoef.b2, coeffs, tau1, opts);
    let class = if bounds.lower < wbar_tau1 && wbar_tau1 < bounds.upper {
        TheoremClass::LimitCycle
    } else if wbar_tau1 < ext {
        TheoremClass::Extinction
    } else {
        TheoremClass::Inconclusive
    };
    Ok(TheoremVerdict { class, bounds, extinction_threshold: ext })
}

/// Location of the interior minimum of `w̄_base`.
pub fn predict_min_time(wbar_tau1: f64, b1: f64, b2: f64, coeffs: &NormalFormCoeffs, tau1: f64) -> Result<f64> {
    let d = coeffs.delta;
    let r = d * coeffs.h3 - b2;
    let arg = coeffs.h11 * b1 * b2 / (coeffs.h3 * (2.0 * wbar_tau1 * r + d * coeffs.h11 * b1));
    if !(arg > 0.0) || !arg.is_finite() || r == 0.0 {
        return Err(Error::ConditionViolated(format!("minimum-time log argument {arg} is not positive")));
    }
    Ok(tau1 + arg.ln() / r)
}

/// Time at which `w̄_base` built from a fit reaches zero.
pub fn predict_crossing_time(wbar_tau1: f64, fit: &ExpFit, coeffs: &NormalFormCoeffs, tau1: f64) -> Result<f64> {
    let d = coeffs.delta;
    let r = d * coeffs.h3 - fit.k2;
    let num = d * coeffs.h11 * fit.k1;
    let den = num + 2.0 * wbar_tau1 * r;
    let arg = num / den;
    if !(arg > 0.0) || !arg.is_finite() || r == 0.0 {
        return Err(Error::ConditionViolated(format!("crossing-time log argument {arg} is not positive")));
    }
    Ok(tau1 + arg.ln() / r)
}

/// `w̄_crit(τ) = δH11 k1 e^{k2(τ−τ1)} / (2(rate − δH3))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalCurve {
    pub index: usize,
    pub k1: f64,
    pub k2: f64,
    pub tau1: f64,
    pub units: CritCurveUnits,
    delta: f64,
    h3: f64,
    h11: f64,
}

impl CriticalCurve {
    pub fn new(index: usize, fit: &ExpFit, coeffs: &NormalFormCoeffs, tau1: f64, units: CritCurveUnits) -> Self {
        CriticalCurve { index, k1: fit.k1, k2: fit.k2, tau1, units, delta: coeffs.delta, h3: coeffs.h3, h11: coeffs.h11 }
    }

    pub fn denominator_rate(&self) -> f64 {
        match self.units {
            CritCurveUnits::Published => self.k2 / self.delta,
            CritCurveUnits::Tau => self.k2,
        }
    }

    pub fn eval(&self, tau: f64) -> f64 {
        self.delta * self.h11 * self.k1 * (self.k2 * (tau - self.tau1)).exp() / (2.0 * (self.denominator_rate() - self.delta * self.h3))
    }
}

pub fn critical_curve(index: usize, fit: &ExpFit, coeffs: &NormalFormCoeffs, tau1: f64, units: CritCurveUnits) -> CriticalCurve {
    CriticalCurve::new(index, fit, coeffs, tau1, units)
}

/// Uniformly sampled normal-form coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UvwSeries {
    pub tau: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    /// share of samples outside the transform's validity box
    pub extrapolated_fraction: f64,
}

impl UvwSeries {
    /// Resamples a trajectory integrated in normal-form coordinates.
    pub fn from_nf_trajectory(traj: &Trajectory, dt: f64) -> Self {
        let (tau, ys) = traj.resample(dt);
        UvwSeries {
            u: ys.iter().map(|y| y[0]).collect(),
            v: ys.iter().map(|y| y[1]).collect(),
            w: ys.iter().map(|y| y[2]).collect(),
            tau,
            extrapolated_fraction: 0.0,
        }
    }

    /// Maps a model trajectory in slow time through the transform, with
    /// `τ = s/δ`.
    pub fn from_model_trajectory(traj: &Trajectory, transform: &NormalFormTransform, delta: f64, ds: f64) -> Self {
        let (s, ys) = traj.resample(ds);
        let mut out = UvwSeries { tau: Vec::with_capacity(s.len()), u: vec![], v: vec![], w: vec![], extrapolated_fraction: 0.0 };
        let mut extra = 0usize;
        for (s, y) in s.iter().zip(&ys) {
            let m = transform.apply(&State::from_array(*y));
            extra += usize::from(m.extrapolated);
            out.tau.push(s / delta);
            out.u.push(m.nf.u);
            out.v.push(m.nf.v);
            out.w.push(m.nf.w);
        }
        out.extrapolated_fraction = extra as f64 / s.len().max(1) as f64;
        out
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn u_squared(&self) -> Vec<f64> {
        self.u.iter().map(|u| u * u).collect()
    }

    pub fn peaks(&self) -> Result<PeakSequence> {
        detect_peaks(&self.tau, &self.u, true)
    }
}

/// One nested interval of the scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalFit {
    pub index: usize,
    pub tau_end: f64,
    pub window: f64,
    pub fit: ExpFit,
    /// largest `w̄ − w̄_crit` on the newly revealed part
    pub max_gap_new: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    CoexistenceMinimum,
    ExtinctionWarning,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EWSReport {
    pub verdict: Verdict,
    pub warning_time_s: Option<f64>,
    pub warning_time_tau: Option<f64>,
    pub i0: Option<usize>,
    pub tau_min_pred: Option<f64>,
    pub tau_cross_pred: Option<f64>,
    pub theorem_bounds: TheoremBounds,
    pub monotonic_k1: bool,
    pub monotonic_k2: bool,
    /// pointwise ordering of consecutive critical curves where the fits are monotone
    pub critical_monotone: bool,
    pub n_intervals: usize,
    pub config: ReportConfig,
    pub n_delta_over_k: f64,
    pub tau1: f64,
    #[serde(skip)]
    pub intervals: Vec<IntervalFit>,
    /// `(τ, w̄, w̄_crit)` on the triggering interval
    #[serde(skip)]
    pub curve: Vec<[f64; 3]>,
}

impl EWSReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn critical_curve_csv(&self) -> String {
        let mut s = String::from("tau,wbar,wcrit_i0\n");
        for [t, w, c] in &self.curve {
            s.push_str(&format!("{t:.12e},{w:.12e},{c:.12e}\n"));
        }
        s
    }
}

fn mean_gap(times: &[f64]) -> f64 {
    (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64
}

/// Walks the nested intervals `[τ1, τ_{k+i}]`, fitting the `u²` envelope on
/// each and testing `w̄` against the critical curve on the newly revealed part.
pub fn nested_interval_scan(series: &UvwSeries, coeffs: &NormalFormCoeffs, cfg: &EWSConfig) -> Result<EWSReport> {
    cfg.validate()?;
    let peaks = series.peaks()?;
    let available = peaks.len();
    let n = cfg.n.unwrap_or(available);
    if available < cfg.k + 1 || n > available {
        return Err(Error::InsufficientData(format!("{available} peaks available, need {}", n.max(cfg.k + 1))));
    }
    let tp = &peaks.times[..n];
    let tau1 = tp[0];
    let d = coeffs.delta;
    let u2 = series.u_squared();
    let k = cfg.k;

    let l1 = mean_gap(&tp[..=k]);
    let wma1 = moving_average_range(&series.tau, &series.w, l1, "w", tau1 - l1, tau1 + l1)?;
    let wbar_tau1 = wma1.at(tau1).ok_or_else(|| Error::InsufficientData("w average undefined at the first peak".into()))?;

    let mut intervals = Vec::with_capacity(n - k);
    let mut curves = Vec::with_capacity(n - k);
    let mut trigger: Option<(usize, f64, Vec<[f64; 3]>)> = None;
    let mut critical_monotone = true;
    for i in 1..=n - k {
        let te = tp[k + i - 1];
        let li = mean_gap(&tp[..k + i]);
        let ma_u = moving_average_range(&series.tau, &u2, li, "u2", tau1, te).map_err(|e| Error::Fit { interval: i, reason: e.to_string() })?;
        let fit = fit_exponential_samples(&ma_u.tau, &ma_u.values, (tau1, te), cfg.refine_fit).map_err(|e| Error::Fit { interval: i, reason: e.to_string() })?;
        let curve = CriticalCurve::new(i, &fit, coeffs, tau1, cfg.crit_units);
        let ma_w = moving_average_range(&series.tau, &series.w, li, "w", tau1, te).map_err(|e| Error::Fit { interval: i, reason: e.to_string() })?;
        let new_start = if i > 1 { tp[k + i - 2] } else { tau1 };
        let gaps: Vec<f64> = ma_w.tau.iter().zip(&ma_w.values).map(|(t, w)| w - curve.eval(*t)).collect();
        let max_gap_new = ma_w
            .tau
            .iter()
            .zip(&gaps)
            .filter(|(t, _)| **t >= new_start)
            .map(|(_, g)| *g)
            .fold(f64::NEG_INFINITY, f64::max);
        if trigger.is_none() && max_gap_new.is_finite() && max_gap_new < -cfg.crossing_tolerance {
            let mut j = gaps.len();
            while j > 0 && gaps[j - 1] < -cfg.crossing_tolerance {
                j -= 1;
            }
            let start = ma_w.tau[j.min(gaps.len() - 1)];
            let samples = ma_w.tau.iter().zip(&ma_w.values).map(|(t, w)| [*t, *w, curve.eval(*t)]).collect();
            trigger = Some((i, start, samples));
        }
        if let Some(prev) = curves.last() {
            let prev: &CriticalCurve = prev;
            let prev_fit: &IntervalFit = intervals.last().unwrap();
            if fit.k1 <= prev.k1 && fit.k2 >= prev.k2 {
                let ok = ma_w.tau.iter().filter(|t| **t <= prev_fit.tau_end).all(|t| prev.eval(*t) < curve.eval(*t));
                critical_monotone &= ok;
            }
        }
        curves.push(curve);
        intervals.push(IntervalFit { index: i, tau_end: te, window: li, fit, max_gap_new });
    }

    let monotonic_k1 = intervals.windows(2).all(|w| w[1].fit.k1 <= w[0].fit.k1);
    let monotonic_k2 = intervals.windows(2).all(|w| w[1].fit.k2 >= w[0].fit.k2);
    let last = intervals.last().expect("at least one interval").fit;
    let (theorem_bounds, _) = bounds_for(wbar_tau1, last.k1, last.k2, coeffs, tau1, &cfg.theorem);

    let mut report = EWSReport {
        verdict: Verdict::Inconclusive,
        warning_time_s: None,
        warning_time_tau: None,
        i0: None,
        tau_min_pred: None,
        tau_cross_pred: None,
        theorem_bounds,
        monotonic_k1,
        monotonic_k2,
        critical_monotone,
        n_intervals: n - k,
        config: ReportConfig { k, n },
        n_delta_over_k: n as f64 * d / k as f64,
        tau1,
        intervals,
        curve: Vec::new(),
    };
    match trigger {
        Some((i0, start, samples)) => {
            report.verdict = Verdict::ExtinctionWarning;
            report.i0 = Some(i0);
            report.warning_time_tau = Some(start);
            report.warning_time_s = Some(start * d);
            report.tau_cross_pred = predict_crossing_time(wbar_tau1, &report.intervals[i0 - 1].fit, coeffs, tau1).ok();
            report.curve = samples;
        }
        None => {
            if let Ok(tm) = predict_min_time(wbar_tau1, last.k1, last.k2, coeffs, tau1) {
                report.verdict = Verdict::CoexistenceMinimum;
                report.tau_min_pred = Some(tm);
            }
        }
    }
    Ok(report)
}

/// Envelope fit over the first `n_peaks` peaks with window equal to their
/// mean gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedFit {
    pub tau1: f64,
    pub tau_n: f64,
    pub period: f64,
    pub fit: ExpFit,
    pub wbar_tau1: f64,
}

impl AveragedFit {
    pub fn wbar_base(&self, coeffs: &NormalFormCoeffs) -> Result<WbarBase> {
        WbarBase::from_fit(self.wbar_tau1, &self.fit, coeffs, self.tau1)
    }

    /// Constants with the fitted `(b1, b2)`.
    pub fn b_coefficients(&self) -> BCoefficients {
        let c2 = self.fit.k2 / 2.0;
        BCoefficients { a: 0.0, theta: 0.0, b1: self.fit.k1, b2: self.fit.k2, b: 0.0, c2 }
    }
}

pub fn averaged_fit(series: &UvwSeries, n_peaks: usize, refine: bool) -> Result<AveragedFit> {
    let peaks = series.peaks()?;
    if peaks.len() < n_peaks || n_peaks < 2 {
        return Err(Error::InsufficientData(format!("{} peaks in the decreasing prefix, need {n_peaks}", peaks.len())));
    }
    let tp = &peaks.times[..n_peaks];
    let (tau1, tau_n) = (tp[0], tp[n_peaks - 1]);
    let p = mean_gap(tp);
    let ma_u = moving_average_range(&series.tau, &series.u_squared(), p, "u2", tau1, tau_n)?;
    let fit = fit_exponential_samples(&ma_u.tau, &ma_u.values, (tau1, tau_n), refine)?;
    let ma_w = moving_average_range(&series.tau, &series.w, p, "w", tau1 - p, tau1 + p)?;
    let wbar_tau1 = ma_w.at(tau1).ok_or_else(|| Error::InsufficientData("w average undefined at the first peak".into()))?;
    Ok(AveragedFit { tau1, tau_n, period: p, fit, wbar_tau1 })
}

/// Standing hypotheses of the classifier along a sampled trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TheoremHypotheses {
    pub w0_below_hopf: bool,
    pub w_positive_at_tau_n: bool,
    pub outside_funnel: bool,
}

impl TheoremHypotheses {
    pub fn hold(&self) -> bool {
        self.w0_below_hopf && self.w_positive_at_tau_n && self.outside_funnel
    }
}

pub fn check_theorem_hypotheses(series: &UvwSeries, coeffs: &NormalFormCoeffs, alpha: f64, avg: &AveragedFit) -> TheoremHypotheses {
    let w0 = series.w.first().copied().unwrap_or(f64::NAN);
    let k = series.tau.partition_point(|t| *t < avg.tau_n).min(series.len().saturating_sub(1));
    let outside = (0..=k).all(|i| series.w[i] < funnel_threshold(coeffs, series.u[i], series.v[i]));
    TheoremHypotheses { w0_below_hopf: w0 < -alpha / coeffs.f13, w_positive_at_tau_n: series.w[k] > 0.0, outside_funnel: outside }
}

/// Model trajectory to report: integrate in slow time, map to normal-form
/// coordinates and scan.
#[derive(Debug, Clone)]
pub struct ModelPipeline {
    pub s_final: f64,
    pub ds: f64,
    pub mode: TransformMode,
    pub integrator: IntegratorConfig,
}

impl Default for ModelPipeline {
    fn default() -> Self {
        ModelPipeline { s_final: 140.0, ds: 0.002, mode: TransformMode::Full, integrator: IntegratorConfig::default().with_t_final(140.0) }
    }
}

impl ModelPipeline {
    pub fn series<M: SlowFastModel>(&self, initial: &State, model: &M, coeffs: &NormalFormCoeffs) -> Result<UvwSeries> {
        let cfg = self.integrator.with_t_final(self.s_final);
        let traj = integrate_model(initial, model, &cfg)?;
        let transform = NormalFormTransform::new(model, coeffs, self.mode)?;
        Ok(UvwSeries::from_model_trajectory(&traj, &transform, coeffs.delta, self.ds))
    }

    pub fn run<M: SlowFastModel>(&self, initial: &State, model: &M, coeffs: &NormalFormCoeffs, cfg: &EWSConfig) -> Result<EWSReport> {
        let series = self.series(initial, model, coeffs)?;
        nested_interval_scan(&series, coeffs, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::TimeUnit;

    fn coeffs() -> NormalFormCoeffs {
        NormalFormCoeffs {
            omega: 0.3,
            delta: 0.250383899,
            f13: 0.117279314,
            f111: -0.866373208,
            h3: 0.0376680256,
            h11: -0.169146281,
            alpha_slope: -145.826482,
            alpha_intercept: 38.5893179,
            h_fsn: 0.2656,
            x_fsn: 0.2987,
            y_fsn: 0.1167,
            z_fsn: 0.4167,
        }
    }

    fn fit(k1: f64, k2: f64) -> ExpFit {
        ExpFit { interval: [1.09, 100.0], k1, k2, residual: 0.0, time_unit: TimeUnit::Tau, refined: false }
    }

    #[test]
    fn config_validation() {
        assert!(EWSConfig { k: 3, ..Default::default() }.validate().is_err());
        assert!(EWSConfig::default().with_n(5).validate().is_err());
        assert!(EWSConfig::default().with_n(41).validate().is_ok());
    }

    #[test]
    fn classifier_regions() {
        let c = coeffs();
        let b = BCoefficients { a: 0.0, theta: 1.0, b1: 0.2799, b2: -0.0128, b: 0.0, c2: -0.0064 };
        let v = classify_theorem(0.329, &b, &c, 1.09, &TheoremOptions::default()).unwrap();
        assert!(v.bounds.lower < v.bounds.upper);
        let hi = classify_theorem(v.bounds.upper + 0.1, &b, &c, 1.09, &TheoremOptions::default()).unwrap();
        assert_eq!(hi.class, TheoremClass::Inconclusive);
        let lo = classify_theorem(v.bounds.lower - 0.05, &b, &c, 1.09, &TheoremOptions::default()).unwrap();
        assert_eq!(lo.class, TheoremClass::Extinction);
        let mut bad = c;
        bad.h3 = -1.0;
        assert!(matches!(classify_theorem(0.3, &b, &bad, 1.09, &TheoremOptions::default()), Err(Error::SignRegime(_))));
    }

    #[test]
    fn crossing_time_is_root() {
        let c = coeffs();
        let f = fit(0.2799, -0.0156);
        let t = predict_crossing_time(0.2, &f, &c, 1.09).unwrap();
        let wb = WbarBase::from_fit(0.2, &f, &c, 1.09).unwrap();
        assert!(wb.eval(t).abs() < 1e-8);
        let boundary = wb.forcing_amplitude();
        assert!(predict_crossing_time(boundary, &f, &c, 1.09).is_err());
    }

    #[test]
    fn critical_curve_positive() {
        let c = coeffs();
        for units in [CritCurveUnits::Published, CritCurveUnits::Tau] {
            let cc = critical_curve(1, &fit(0.3, -0.01), &c, 1.0, units);
            assert!(cc.eval(1.0) > 0.0 && cc.eval(200.0) > 0.0);
        }
    }

    #[test]
    fn constant_w_never_crosses() {
        let c = coeffs();
        let dt = 0.01;
        let tau: Vec<f64> = (0..60000).map(|i| i as f64 * dt).collect();
        let u: Vec<f64> = tau.iter().map(|t| 0.5 * (-0.005 * t).exp() * t.sin()).collect();
        let series = UvwSeries { v: vec![0.0; tau.len()], w: vec![10.0; tau.len()], u, tau, extrapolated_fraction: 0.0 };
        let r = nested_interval_scan(&series, &c, &EWSConfig::default().with_n(41)).unwrap();
        assert_eq!(r.verdict, Verdict::CoexistenceMinimum);
        assert!(r.i0.is_none() && r.tau_min_pred.is_some());
        assert_eq!(r.n_intervals, 36);
        let js: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["verdict", "warning_time_s", "warning_time_tau", "i0", "tau_min_pred", "tau_cross_pred", "theorem_bounds", "monotonic_k1", "monotonic_k2", "n_intervals", "config"] {
            assert!(js.get(key).is_some(), "{key}");
        }
        assert_eq!(js["config"]["N"], 41);
        assert_eq!(js["verdict"], "coexistence-minimum");
    }
}
