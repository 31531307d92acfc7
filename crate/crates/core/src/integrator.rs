//! Adaptive Dormand–Prince 5(4) integration with dense output and event
//! location, plus long-time attractor classification.

use crate::error::{Error, Result};
use crate::model::{eval_rhs, find_equilibrium, EquilibriumKind, SlowFastModel, State, Timescale};
use crate::normal_form::{funnel_threshold, nf_rhs, NFState, NormalFormCoeffs};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub t_final: f64,
    pub dense_output: bool,
    pub max_steps: usize,
    /// terminate once `w ≤ cap` (normal form only)
    pub divergence_cap: Option<f64>,
    /// terminate once `y ≤ cap` (model only)
    pub extinction_cap: Option<f64>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-8,
            atol: 1e-10,
            max_step: f64::INFINITY,
            t_final: 100.0,
            dense_output: true,
            max_steps: 20_000_000,
            divergence_cap: Some(-5.0),
            extinction_cap: Some(1e-6),
        }
    }
}

impl IntegratorConfig {
    pub fn with_t_final(mut self, t: f64) -> Self {
        self.t_final = t;
        self
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidParameter("t_final must be positive".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidParameter("max_step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coords {
    Xyz,
    Uvw,
}

impl Coords {
    pub fn header(self) -> &'static str {
        match self {
            Coords::Xyz => "t,x,y,z",
            Coords::Uvw => "tau,u,v,w",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Rising,
    Falling,
    Either,
}

/// Zero-crossing detector `g(t, y) = 0`.
pub struct Event {
    pub name: String,
    pub g: Box<dyn Fn(f64, &[f64; 3]) -> f64 + Send + Sync>,
    pub direction: Direction,
    pub terminal: bool,
}

impl Event {
    pub fn new(
        name: &str,
        direction: Direction,
        terminal: bool,
        g: impl Fn(f64, &[f64; 3]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Event { name: name.into(), g: Box::new(g), direction, terminal }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventHit {
    pub name: String,
    pub t: f64,
    pub state: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Termination {
    FinalTime,
    Event(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Continuous extension of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    t0: f64,
    h: f64,
    rc: [[f64; 3]; 5],
}

impl Segment {
    fn eval(&self, t: f64) -> [f64; 3] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let mut y = [0.0; 3];
        for i in 0..3 {
            let r = &self.rc;
            y[i] = r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i])));
        }
        y
    }
}

/// Time-stamped states with their continuous extension.
#[derive(Debug, Clone)]
pub struct Trajectory {
    coords: Coords,
    pub t: Vec<f64>,
    pub y: Vec<[f64; 3]>,
    segments: Vec<Segment>,
    pub stats: StepStats,
    pub events: Vec<EventHit>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn coords(&self) -> Coords {
        self.coords
    }

    pub fn t_start(&self) -> f64 {
        self.t[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn last(&self) -> [f64; 3] {
        *self.y.last().unwrap()
    }

    pub fn has_dense(&self) -> bool {
        !self.segments.is_empty() || self.t.len() == 1
    }

    /// State at time `t` from the dense interpolant (clamped to the span).
    pub fn eval(&self, t: f64) -> [f64; 3] {
        if self.segments.is_empty() || t <= self.t_start() {
            return self.y[0];
        }
        if t >= self.t_end() {
            return self.last();
        }
        let k = self.segments.partition_point(|s| s.t0 + s.h < t);
        self.segments[k.min(self.segments.len() - 1)].eval(t)
    }

    /// Uniform resampling from the dense interpolant.
    pub fn resample(&self, dt: f64) -> (Vec<f64>, Vec<[f64; 3]>) {
        let (a, b) = (self.t_start(), self.t_end());
        let n = ((b - a) / dt).floor() as usize;
        let ts: Vec<f64> = (0..=n).map(|k| a + k as f64 * dt).collect();
        let mut ys = Vec::with_capacity(ts.len());
        let mut seg = 0usize;
        for &t in &ts {
            if self.segments.is_empty() {
                ys.push(self.y[0]);
                continue;
            }
            while seg + 1 < self.segments.len() && self.segments[seg].t0 + self.segments[seg].h < t {
                seg += 1;
            }
            ys.push(self.segments[seg].eval(t));
        }
        (ts, ys)
    }

    /// First recorded hit of the named event.
    pub fn event(&self, name: &str) -> Option<&EventHit> {
        self.events.iter().find(|e| e.name == name)
    }

    /// CSV text with a header and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.t.len() * 80);
        s.push_str(self.coords.header());
        s.push('\n');
        for (t, y) in self.t.iter().zip(&self.y) {
            s.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e}\n", t, y[0], y[1], y[2]));
        }
        s
    }
}

// Dormand–Prince 5(4) tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn axpy(y: &[f64; 3], h: f64, terms: &[(f64, &[f64; 3])]) -> [f64; 3] {
    let mut out = *y;
    for i in 0..3 {
        let s: f64 = terms.iter().map(|(c, k)| c * k[i]).sum();
        out[i] += h * s;
    }
    out
}

/// Integrates `y' = f(t, y)` from `t0` to `config.t_final`.
pub fn integrate<F>(f: F, t0: f64, y0: [f64; 3], config: &IntegratorConfig, events: &[Event], coords: Coords) -> Result<Trajectory>
where
    F: Fn(f64, &[f64; 3]) -> Result<[f64; 3]>,
{
    config.validate()?;
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite initial state".into()));
    }
    let t_end = config.t_final;
    let mut traj = Trajectory {
        coords,
        t: vec![t0],
        y: vec![y0],
        segments: Vec::new(),
        stats: StepStats::default(),
        events: Vec::new(),
        termination: Termination::FinalTime,
    };
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y)?;
    traj.stats.rhs_evals += 1;
    let scale = |a: &[f64; 3], b: &[f64; 3], i: usize| config.atol + config.rtol * a[i].abs().max(b[i].abs());

    // initial step (Hairer's heuristic)
    let mut h = {
        let d0 = (0..3).map(|i| (y[i] / scale(&y, &y, i)).powi(2)).sum::<f64>().sqrt() / 3f64.sqrt();
        let d1 = (0..3).map(|i| (k1[i] / scale(&y, &y, i)).powi(2)).sum::<f64>().sqrt() / 3f64.sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1 = axpy(&y, h0, &[(1.0, &k1)]);
        let f1 = f(t + h0, &y1)?;
        traj.stats.rhs_evals += 1;
        let d2 = (0..3).map(|i| ((f1[i] - k1[i]) / scale(&y, &y, i)).powi(2)).sum::<f64>().sqrt() / 3f64.sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        (100.0 * h0).min(h1).min(config.max_step).min(t_end - t0)
    };
    let mut g_prev: Vec<f64> = events.iter().map(|e| (e.g)(t, &y)).collect();
    let mut last_rejected = false;

    while t < t_end {
        if traj.stats.accepted + traj.stats.rejected >= config.max_steps {
            return Err(Error::StepUnderflow { t, h });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }
        let h_step = h.min(t_end - t);
        let k2 = f(t + C2 * h_step, &axpy(&y, h_step, &[(A21, &k1)]))?;
        let k3 = f(t + C3 * h_step, &axpy(&y, h_step, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = f(t + C4 * h_step, &axpy(&y, h_step, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = f(t + C5 * h_step, &axpy(&y, h_step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
        let y6 = axpy(&y, h_step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let k6 = f(t + h_step, &y6)?;
        let y_new = axpy(&y, h_step, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + h_step, &y_new)?;
        traj.stats.rhs_evals += 6;
        let mut err = 0.0;
        for i in 0..3 {
            let e = h_step * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            err += (e / scale(&y, &y_new, i)).powi(2);
        }
        let err = (err / 3.0).sqrt();
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            traj.stats.rejected += 1;
            h = h_step * 0.2;
            last_rejected = true;
            continue;
        }
        if err > 1.0 {
            traj.stats.rejected += 1;
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h = h_step * fac;
            last_rejected = true;
            continue;
        }
        // accepted
        let mut rc = [[0.0; 3]; 5];
        for i in 0..3 {
            rc[0][i] = y[i];
            rc[1][i] = y_new[i] - y[i];
            rc[2][i] = h_step * k1[i] - rc[1][i];
            rc[3][i] = rc[1][i] - h_step * k7[i] - rc[2][i];
            rc[4][i] = h_step * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        let seg = Segment { t0: t, h: h_step, rc };
        let t_new = t + h_step;

        // event detection on this step
        let mut stop: Option<(f64, [f64; 3], String)> = None;
        for (ei, ev) in events.iter().enumerate() {
            let g1 = (ev.g)(t_new, &y_new);
            let g0 = g_prev[ei];
            let crossed = match ev.direction {
                Direction::Rising => g0 < 0.0 && g1 >= 0.0,
                Direction::Falling => g0 > 0.0 && g1 <= 0.0,
                Direction::Either => (g0 < 0.0 && g1 >= 0.0) || (g0 > 0.0 && g1 <= 0.0),
            };
            g_prev[ei] = g1;
            if !crossed {
                continue;
            }
            let (mut a, mut b) = (t, t_new);
            let ga = g0;
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let gm = (ev.g)(m, &seg.eval(m));
                if (gm < 0.0) == (ga < 0.0) && gm != 0.0 {
                    a = m;
                } else {
                    b = m;
                }
                if b - a <= 1e-13 * b.abs().max(1.0) {
                    break;
                }
            }
            let ys = seg.eval(b);
            traj.events.push(EventHit { name: ev.name.clone(), t: b, state: ys });
            if ev.terminal && stop.as_ref().map_or(true, |s| b < s.0) {
                stop = Some((b, ys, ev.name.clone()));
            }
        }
        traj.stats.accepted += 1;
        if let Some((ts, ys, name)) = stop {
            if config.dense_output {
                traj.segments.push(Segment { t0: seg.t0, h: seg.h, rc: seg.rc });
            }
            traj.t.push(ts);
            traj.y.push(ys);
            traj.events.retain(|e| e.t <= ts);
            traj.termination = Termination::Event(name);
            return Ok(traj);
        }
        if config.dense_output {
            traj.segments.push(seg);
        }
        t = t_new;
        y = y_new;
        k1 = k7;
        traj.t.push(t);
        traj.y.push(y);
        let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
        let fac = if last_rejected { fac.min(1.0) } else { fac };
        last_rejected = false;
        h = (h_step * fac).min(config.max_step);
    }
    Ok(traj)
}

/// Integrates the model in slow time.
pub fn integrate_model<M: SlowFastModel>(initial: &State, model: &M, config: &IntegratorConfig) -> Result<Trajectory> {
    if initial.x < 0.0 || initial.y < 0.0 || initial.z < 0.0 {
        return Err(Error::Domain("initial state outside the positive octant".into()));
    }
    let mut events = Vec::new();
    if let Some(cap) = config.extinction_cap {
        if initial.y > cap {
            events.push(Event::new("extinction", Direction::Falling, true, move |_, s| s[1] - cap));
        }
    }
    for (i, name) in [(0, "x-negative"), (1, "y-negative"), (2, "z-negative")] {
        if initial.to_array()[i] > 0.0 {
            events.push(Event::new(name, Direction::Falling, true, move |_, s| s[i]));
        }
    }
    integrate(
        |_, s| eval_rhs(model, &State::from_array(*s), Timescale::Slow),
        0.0,
        initial.to_array(),
        config,
        &events,
        Coords::Xyz,
    )
}

/// Integrates the truncated normal form; records `w = 0` descending
/// crossings and funnel entries.
pub fn integrate_nf(initial: &NFState, coeffs: &NormalFormCoeffs, alpha: f64, config: &IntegratorConfig) -> Result<Trajectory> {
    let c = *coeffs;
    let mut events = vec![
        Event::new("w-zero", Direction::Falling, false, |_, s| s[2]),
        Event::new("funnel-entry", Direction::Rising, false, move |_, s| s[2] - funnel_threshold(&c, s[0], s[1])),
    ];
    if let Some(cap) = config.divergence_cap {
        events.push(Event::new("divergence", Direction::Falling, true, move |_, s| s[2] - cap));
    }
    integrate(|_, s| Ok(nf_rhs(&c, alpha, s)), initial.tau, initial.to_array(), config, &events, Coords::Uvw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttractorKind {
    LimitCycle,
    BoundaryXz,
    WDivergence,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorVerdict {
    pub kind: AttractorKind,
    pub decision_time: f64,
    pub evidence: Vec<(String, f64)>,
}

/// Reference boundary equilibrium for xyz classification.
pub fn boundary_xz_reference<M: SlowFastModel>(model: &M) -> Result<State> {
    Ok(find_equilibrium(model, EquilibriumKind::BoundaryXz, model.default_guess(EquilibriumKind::BoundaryXz))?.state)
}

fn oscillation_evidence(traj: &Trajectory, channel: usize) -> Option<(f64, f64, usize, usize)> {
    let (a, b) = (traj.t_start(), traj.t_end());
    let start = b - 0.2 * (b - a);
    let n = 4000;
    let dt = (b - start) / n as f64;
    let samples: Vec<f64> = (0..=n).map(|k| traj.eval(start + k as f64 * dt)[channel]).collect();
    let half = n / 2;
    let stats = |v: &[f64]| {
        let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mn = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let peaks = (1..v.len() - 1).filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1]).count();
        (mx - mn, peaks)
    };
    let (a1, p1) = stats(&samples[..=half]);
    let (a2, p2) = stats(&samples[half..]);
    Some((a1, a2, p1, p2))
}

/// Long-time fate of a trajectory. `exz` is the boundary equilibrium used in
/// xyz mode.
pub fn classify_attractor(traj: &Trajectory, exz: Option<&State>) -> AttractorVerdict {
    let last = traj.last();
    let t_end = traj.t_end();
    match traj.coords() {
        Coords::Uvw => {
            if last[2] <= -5.0 + 1e-9 {
                return AttractorVerdict {
                    kind: AttractorKind::WDivergence,
                    decision_time: t_end,
                    evidence: vec![("w".into(), last[2])],
                };
            }
        }
        Coords::Xyz => {
            if let Some(e) = exz {
                let dist = (last[0] - e.x).abs().max((last[2] - e.z).abs());
                if last[1] < 1e-4 && dist <= 1e-3 {
                    return AttractorVerdict {
                        kind: AttractorKind::BoundaryXz,
                        decision_time: t_end,
                        evidence: vec![("y".into(), last[1]), ("distance to E_xz".into(), dist)],
                    };
                }
            }
        }
    }
    let channel = 0;
    if traj.has_dense() && traj.t.len() > 10 {
        if let Some((a1, a2, p1, p2)) = oscillation_evidence(traj, channel) {
            let amax = a1.max(a2);
            if amax > 1e-6 && (a1 - a2).abs() <= 0.05 * amax && p1 >= 3 && p2 >= 3 {
                return AttractorVerdict {
                    kind: AttractorKind::LimitCycle,
                    decision_time: t_end,
                    evidence: vec![
                        ("amplitude first half".into(), a1),
                        ("amplitude second half".into(), a2),
                        ("peaks".into(), (p1 + p2) as f64),
                    ],
                };
            }
        }
    }
    AttractorVerdict { kind: AttractorKind::Undecided, decision_time: t_end, evidence: Vec::new() }
}
