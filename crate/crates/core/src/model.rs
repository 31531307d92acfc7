//! The slow-fast three-species predator-prey vector field
//!
//! ```text
//! x' = x φ(x,y,z)/ζ,   y' = y χ(x,y,z),   z' = z ψ(x,y,z)
//! ```
//!
//! together with analytic derivative tables, equilibria, eigenstructure and
//! the structural sign conditions of the general model class.

use crate::error::{Error, Result};
use crate::linalg::{det3, eigenvalues3, solve_n, Mat3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Index of a differentiation variable in a [`Jet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X = 0,
    Y = 1,
    Z = 2,
    /// the bifurcation parameter
    P = 3,
}

/// Value and partial derivatives (up to third order) of a scalar function of
/// `(x, y, z, p)`. Higher-order tables are stored fully symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub v: f64,
    pub d1: [f64; 4],
    pub d2: [[f64; 4]; 4],
    pub d3: [[[f64; 4]; 4]; 4],
}

impl Jet {
    fn constant(v: f64) -> Self {
        Jet { v, ..Default::default() }
    }

    fn set2(&mut self, a: Var, b: Var, v: f64) {
        let (a, b) = (a as usize, b as usize);
        self.d2[a][b] = v;
        self.d2[b][a] = v;
    }

    fn set3(&mut self, a: Var, b: Var, c: Var, v: f64) {
        let (a, b, c) = (a as usize, b as usize, c as usize);
        for (i, j, k) in [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)] {
            self.d3[i][j][k] = v;
        }
    }

    /// Partial derivative with respect to the listed variables (empty slice
    /// returns the value).
    pub fn d(&self, vars: &[Var]) -> f64 {
        match vars {
            [] => self.v,
            [a] => self.d1[*a as usize],
            [a, b] => self.d2[*a as usize][*b as usize],
            [a, b, c] => self.d3[*a as usize][*b as usize][*c as usize],
            _ => panic!("jets carry derivatives up to third order"),
        }
    }

    /// Jet of `q · g` where `q` is the coordinate with index `coord`.
    fn times_coordinate(&self, coord: usize, q: f64) -> Jet {
        let kd = |a: usize| if a == coord { 1.0 } else { 0.0 };
        let mut out = Jet { v: q * self.v, ..Default::default() };
        for a in 0..4 {
            out.d1[a] = kd(a) * self.v + q * self.d1[a];
            for b in 0..4 {
                out.d2[a][b] = kd(a) * self.d1[b] + kd(b) * self.d1[a] + q * self.d2[a][b];
                for c in 0..4 {
                    out.d3[a][b][c] = kd(a) * self.d2[b][c]
                        + kd(b) * self.d2[a][c]
                        + kd(c) * self.d2[a][b]
                        + q * self.d3[a][b][c];
                }
            }
        }
        out
    }
}

/// Derivative tables of the three per-capita growth factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub state: State,
    pub phi: Jet,
    pub chi: Jet,
    pub psi: Jet,
}

impl Partials {
    /// Jet of the right-hand side component `f_i` (i = 1, 2, 3), i.e.
    /// `x φ`, `y χ` or `z ψ`.
    pub fn f(&self, i: usize) -> Jet {
        let s = self.state;
        match i {
            1 => self.phi.times_coordinate(0, s.x),
            2 => self.chi.times_coordinate(1, s.y),
            3 => self.psi.times_coordinate(2, s.z),
            _ => panic!("component index must be 1, 2 or 3"),
        }
    }

    /// Jacobian `∂f_i/∂(x,y,z)` of the unscaled components.
    pub fn jacobian_unscaled(&self) -> Mat3 {
        let f = [self.f(1), self.f(2), self.f(3)];
        let mut j = [[0.0; 3]; 3];
        for i in 0..3 {
            for k in 0..3 {
                j[i][k] = f[i].d1[k];
            }
        }
        j
    }
}

/// A point in the population octant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl State {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        State { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        State { x: a[0], y: a[1], z: a[2] }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Which time variable the right-hand side is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Timescale {
    /// slow time `s`: `(xφ/ζ, yχ, zψ)`
    Slow,
    /// fast time `t = s/ζ`: `(xφ, ζyχ, ζzψ)`
    Fast,
}

/// Interface of the general slow-fast model class
/// `x' = xφ/ζ, y' = yχ, z' = zψ` with a scalar bifurcation parameter.
pub trait SlowFastModel: Clone + Send + Sync {
    fn zeta(&self) -> f64;

    /// Current value of the bifurcation parameter.
    fn param(&self) -> f64;

    /// Copy of the model with the bifurcation parameter replaced.
    fn with_param(&self, p: f64) -> Self;

    /// Derivative tables of `φ, χ, ψ` up to `order` (0..=3).
    fn partials(&self, s: &State, order: u8) -> Result<Partials>;

    /// Values `(φ, χ, ψ)`.
    fn factors(&self, s: &State) -> Result<[f64; 3]> {
        let p = self.partials(s, 0)?;
        Ok([p.phi.v, p.chi.v, p.psi.v])
    }

    /// Starting guess for Newton on a given equilibrium kind.
    fn default_guess(&self, kind: EquilibriumKind) -> State;
}

/// Dimensionless parameters of the predator-prey model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta1: f64,
    pub beta2: f64,
    pub c: f64,
    pub d: f64,
    pub a12: f64,
    pub a21: f64,
    pub h: f64,
    pub zeta: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            beta1: 0.1923,
            beta2: 0.6,
            c: 0.4,
            d: 0.21,
            a12: 0.5,
            a21: 0.1,
            h: 0.2649,
            zeta: 0.01,
        }
    }
}

impl ModelParams {
    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    /// Checks the standing assumptions on the rates.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("c", self.c),
            ("d", self.d),
            ("a12", self.a12),
            ("a21", self.a21),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must lie in (0, 1)")));
            }
        }
        if !(self.h >= 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidParameter(format!("h = {} must be nonnegative", self.h)));
        }
        if !(self.zeta > 0.0 && self.zeta.is_finite()) {
            return Err(Error::InvalidParameter(format!("zeta = {} must be positive", self.zeta)));
        }
        Ok(())
    }

    fn holling(&self, x: f64) -> Result<(f64, f64)> {
        let (d1, d2) = (self.beta1 + x, self.beta2 + x);
        if d1 == 0.0 || d2 == 0.0 || !d1.is_finite() || !d2.is_finite() {
            return Err(Error::Domain(format!("Holling pole at x = {x}")));
        }
        Ok((1.0 / d1, 1.0 / d2))
    }
}

impl SlowFastModel for ModelParams {
    fn zeta(&self) -> f64 {
        self.zeta
    }

    fn param(&self) -> f64 {
        self.h
    }

    fn with_param(&self, p: f64) -> Self {
        self.with_h(p)
    }

    fn factors(&self, s: &State) -> Result<[f64; 3]> {
        let (r1, r2) = self.holling(s.x)?;
        Ok([
            1.0 - s.x - s.y * r1 - s.z * r2,
            1.0 - self.beta1 * r1 - self.c - self.a12 * s.z,
            1.0 - self.beta2 * r2 - self.d - self.a21 * s.y - self.h * s.z,
        ])
    }

    fn partials(&self, s: &State, order: u8) -> Result<Partials> {
        use Var::*;
        if !s.is_finite() {
            return Err(Error::Domain("non-finite state".into()));
        }
        let (r1, r2) = self.holling(s.x)?;
        let [fv, cv, pv] = self.factors(s)?;
        let (b1, b2) = (self.beta1, self.beta2);
        let (y, z) = (s.y, s.z);
        let mut phi = Jet::constant(fv);
        let mut chi = Jet::constant(cv);
        let mut psi = Jet::constant(pv);
        if order >= 1 {
            phi.d1 = [-1.0 + y * r1 * r1 + z * r2 * r2, -r1, -r2, 0.0];
            chi.d1 = [b1 * r1 * r1, 0.0, -self.a12, 0.0];
            psi.d1 = [b2 * r2 * r2, -self.a21, -self.h, -z];
        }
        if order >= 2 {
            phi.set2(X, X, -2.0 * (y * r1.powi(3) + z * r2.powi(3)));
            phi.set2(X, Y, r1 * r1);
            phi.set2(X, Z, r2 * r2);
            chi.set2(X, X, -2.0 * b1 * r1.powi(3));
            psi.set2(X, X, -2.0 * b2 * r2.powi(3));
            psi.set2(Z, P, -1.0);
        }
        if order >= 3 {
            phi.set3(X, X, X, 6.0 * (y * r1.powi(4) + z * r2.powi(4)));
            phi.set3(X, X, Y, -2.0 * r1.powi(3));
            phi.set3(X, X, Z, -2.0 * r2.powi(3));
            chi.set3(X, X, X, 6.0 * b1 * r1.powi(4));
            psi.set3(X, X, X, 6.0 * b2 * r2.powi(4));
        }
        Ok(Partials { state: *s, phi, chi, psi })
    }

    fn default_guess(&self, kind: EquilibriumKind) -> State {
        match kind {
            EquilibriumKind::Origin => State::new(0.0, 0.0, 0.0),
            EquilibriumKind::Axial => State::new(1.0, 0.0, 0.0),
            EquilibriumKind::BoundaryXy => {
                let x = self.c * self.beta1 / (1.0 - self.c);
                State::new(x, (1.0 - x) * (self.beta1 + x), 0.0)
            }
            EquilibriumKind::BoundaryXz => State::new(0.35, 0.0, 0.6),
            EquilibriumKind::Coexistence => State::new(0.3, 0.12, 0.42),
        }
    }
}

/// Right-hand side in slow or fast time.
pub fn eval_rhs<M: SlowFastModel>(model: &M, s: &State, timescale: Timescale) -> Result<[f64; 3]> {
    if !s.is_finite() {
        return Err(Error::Domain("non-finite state".into()));
    }
    let [f, c, p] = model.factors(s)?;
    let zeta = model.zeta();
    Ok(match timescale {
        Timescale::Slow => [s.x * f / zeta, s.y * c, s.z * p],
        Timescale::Fast => [s.x * f, zeta * s.y * c, zeta * s.z * p],
    })
}

/// Jacobian of the slow-time right-hand side.
pub fn jacobian<M: SlowFastModel>(model: &M, s: &State) -> Result<Mat3> {
    let mut j = model.partials(s, 1)?.jacobian_unscaled();
    for v in j[0].iter_mut() {
        *v /= model.zeta();
    }
    Ok(j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumKind {
    Origin,
    Axial,
    BoundaryXy,
    BoundaryXz,
    Coexistence,
}

impl EquilibriumKind {
    /// Coordinates that are nonzero for this kind.
    pub fn free_coordinates(self) -> &'static [usize] {
        match self {
            EquilibriumKind::Origin => &[],
            EquilibriumKind::Axial => &[0],
            EquilibriumKind::BoundaryXy => &[0, 1],
            EquilibriumKind::BoundaryXz => &[0, 2],
            EquilibriumKind::Coexistence => &[0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stability {
    /// all real parts negative (node or focus)
    Stable,
    /// all real parts positive (node or focus)
    Unstable,
    /// mixed signs, real spectrum
    Saddle,
    /// mixed signs with a complex pair
    SaddleFocus,
    NonHyperbolic,
}

impl Stability {
    pub fn from_eigenvalues(ev: &[Complex64; 3]) -> Stability {
        let scale = ev.iter().fold(1e-300_f64, |m, e| m.max(e.norm()));
        if ev.iter().any(|e| e.re.abs() <= 1e-12 * scale) {
            return Stability::NonHyperbolic;
        }
        let neg = ev.iter().filter(|e| e.re < 0.0).count();
        let complex = ev.iter().any(|e| e.im.abs() > 1e-12 * scale);
        match (neg, complex) {
            (3, _) => Stability::Stable,
            (0, _) => Stability::Unstable,
            (_, true) => Stability::SaddleFocus,
            (_, false) => Stability::Saddle,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Saddle => "saddle",
            Stability::SaddleFocus => "saddle-focus",
            Stability::NonHyperbolic => "non-hyperbolic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub state: State,
    pub kind: EquilibriumKind,
    /// eigenvalues of the slow-time Jacobian, sorted by descending real part
    pub eigenvalues: [Complex64; 3],
    pub stability: Stability,
    /// max-norm residual of the slow-time right-hand side
    pub residual: f64,
}

impl Equilibrium {
    pub fn from_state<M: SlowFastModel>(model: &M, state: State, kind: EquilibriumKind) -> Result<Self> {
        let eigenvalues = eigenvalues3(&jacobian(model, &state)?);
        let f = eval_rhs(model, &state, Timescale::Slow)?;
        Ok(Equilibrium {
            state,
            kind,
            eigenvalues,
            stability: Stability::from_eigenvalues(&eigenvalues),
            residual: f.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        })
    }
}

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-10;

/// Damped Newton on the reduced equilibrium system of `kind` without any
/// positivity check. Used by continuation, which follows branches through
/// transcritical points.
pub fn solve_equilibrium<M: SlowFastModel>(model: &M, kind: EquilibriumKind, guess: State) -> Result<State> {
    let free = kind.free_coordinates();
    let mut s = guess;
    let mut arr = s.to_array();
    for &i in [0usize, 1, 2].iter().filter(|i| !free.contains(i)) {
        arr[i] = 0.0;
    }
    s = State::from_array(arr);
    if free.is_empty() {
        return Ok(s);
    }
    let residual = |s: &State| -> Result<(Vec<f64>, f64)> {
        let g = model.factors(s)?;
        let r: Vec<f64> = free.iter().map(|&i| g[i]).collect();
        let n = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok((r, n))
    };
    let (mut r, mut norm) = residual(&s)?;
    for _ in 0..NEWTON_MAX_ITER {
        if norm <= 1e-14 {
            break;
        }
        let p = model.partials(&s, 1)?;
        let jets = [p.phi, p.chi, p.psi];
        let step = match free.len() {
            1 => {
                let (i, k) = (free[0], free[0]);
                let d = jets[i].d1[k];
                if d == 0.0 {
                    return Err(Error::Singular("reduced Jacobian".into()));
                }
                vec![r[0] / d]
            }
            2 => {
                let m = [
                    [jets[free[0]].d1[free[0]], jets[free[0]].d1[free[1]]],
                    [jets[free[1]].d1[free[0]], jets[free[1]].d1[free[1]]],
                ];
                solve_n(&m, &[r[0], r[1]])?.to_vec()
            }
            _ => {
                let mut m = [[0.0; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        m[a][b] = jets[a].d1[b];
                    }
                }
                solve_n(&m, &[r[0], r[1], r[2]])?.to_vec()
            }
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = s.to_array();
            for (k, &i) in free.iter().enumerate() {
                a[i] -= lambda * step[k];
            }
            let trial = State::from_array(a);
            if let Ok((rt, nt)) = residual(&trial) {
                if nt < norm || nt <= 1e-14 {
                    s = trial;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
        let step_norm = step.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * lambda;
        if step_norm <= 1e-15 && norm <= NEWTON_TOL {
            break;
        }
    }
    let full = eval_rhs(model, &s, Timescale::Slow)?;
    let full_norm = full.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if norm > NEWTON_TOL || full_norm > NEWTON_TOL {
        return Err(Error::Convergence { iterations: NEWTON_MAX_ITER, residual: norm.max(full_norm) });
    }
    Ok(s)
}

/// Equilibrium of the given kind, with eigenvalues and stability attached.
pub fn find_equilibrium<M: SlowFastModel>(model: &M, kind: EquilibriumKind, guess: State) -> Result<Equilibrium> {
    let s = solve_equilibrium(model, kind, guess)?;
    let a = s.to_array();
    for &i in kind.free_coordinates() {
        if a[i] <= 0.0 {
            return Err(Error::KindMismatch(format!(
                "{kind:?} requires coordinate {i} > 0, got {}",
                a[i]
            )));
        }
    }
    Equilibrium::from_state(model, s, kind)
}

/// A folded saddle-node of type II: a coexistence equilibrium on the fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsnPoint {
    /// parameter value at the fold
    pub p: f64,
    pub state: State,
}

fn fold_function<M: SlowFastModel>(model: &M, p: f64, guess: State) -> Result<(State, f64)> {
    let m = model.with_param(p);
    let s = solve_equilibrium(&m, EquilibriumKind::Coexistence, guess)?;
    Ok((s, m.partials(&s, 1)?.phi.d1[0]))
}

/// Locates the FSN II point by bisection on `φ_x` along the coexistence
/// branch inside `bracket`.
pub fn find_fsn2<M: SlowFastModel>(model: &M, bracket: (f64, f64)) -> Result<(FsnPoint, Equilibrium)> {
    let (lo, hi) = (bracket.0.min(bracket.1), bracket.0.max(bracket.1));
    const SAMPLES: usize = 40;
    let not_found = |why: String| Error::NotFound(format!("no FSN II in [{lo}, {hi}]: {why}"));
    let mut guess = model.default_guess(EquilibriumKind::Coexistence);
    let mut prev: Option<(f64, State, f64)> = None;
    let mut pair = None;
    for k in 0..=SAMPLES {
        let p = lo + (hi - lo) * k as f64 / SAMPLES as f64;
        let (s, fx) = fold_function(model, p, guess).map_err(|e| not_found(e.to_string()))?;
        guess = s;
        if let Some((pp, ps, pf)) = prev {
            if pf == 0.0 || pf.signum() != fx.signum() {
                pair = Some(((pp, ps, pf), (p, s, fx)));
                break;
            }
        }
        prev = Some((p, s, fx));
    }
    let ((mut a, mut sa, mut fa), (mut b, _, _)) =
        pair.ok_or_else(|| not_found("phi_x keeps one sign along the coexistence branch".into()))?;
    let mut best = (a, sa, fa);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let (sm, fm) = fold_function(model, m, sa)?;
        if fm.abs() < best.2.abs() {
            best = (m, sm, fm);
        }
        if fm == 0.0 || (b - a) <= 1e-15 * m.abs().max(1.0) {
            break;
        }
        if fm.signum() == fa.signum() {
            a = m;
            sa = sm;
            fa = fm;
        } else {
            b = m;
        }
    }
    let (p, s, fx) = best;
    if fx.abs() > 1e-10 {
        return Err(Error::Convergence { iterations: 200, residual: fx.abs() });
    }
    let m = model.with_param(p);
    let eq = Equilibrium::from_state(&m, s, EquilibriumKind::Coexistence)?;
    Ok((FsnPoint { p, state: s }, eq))
}

/// One evaluated sign condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub holds: bool,
    /// evaluated quantities used to decide `holds`
    pub evidence: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub checks: Vec<ConditionCheck>,
    /// conditions that concern global objects and are only checked by simulation
    pub empirical: Vec<String>,
}

impl ConditionReport {
    pub fn get(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

fn check(name: &str, evidence: Vec<(&str, f64)>, holds: bool) -> ConditionCheck {
    ConditionCheck {
        name: name.into(),
        holds,
        evidence: evidence.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    }
}

/// Transversality quantity of the fold:
/// `−(f1xx, f1xy, f1xz) J⁻¹ (f1p, f2p, f3p) + f1xp`.
pub fn fold_transversality<M: SlowFastModel>(model: &M, fsn: &FsnPoint) -> Result<f64> {
    let m = model.with_param(fsn.p);
    let pt = m.partials(&fsn.state, 2)?;
    let f1 = pt.f(1);
    let (f2, f3) = (pt.f(2), pt.f(3));
    let j = pt.jacobian_unscaled();
    let rhs = [f1.d1[3], f2.d1[3], f3.d1[3]];
    let sol = solve_n(&j, &rhs)?;
    let row = [f1.d2[0][0], f1.d2[0][1], f1.d2[0][2]];
    Ok(-(row[0] * sol[0] + row[1] * sol[1] + row[2] * sol[2]) + f1.d2[0][3])
}

/// Evaluates the structural sign conditions of the model class.
pub fn check_conditions<M: SlowFastModel>(model: &M, fsn: &FsnPoint, exz: &Equilibrium) -> Result<ConditionReport> {
    use Var::*;
    let mut checks = Vec::new();

    let o = model.partials(&State::new(0.0, 0.0, 0.0), 1)?;
    let a = model.partials(&State::new(1.0, 0.0, 0.0), 1)?;
    checks.push(check(
        "H1",
        vec![
            ("phi(0,0,0)", o.phi.v),
            ("chi(0,0,0)", o.chi.v),
            ("psi(0,0,0)", o.psi.v),
            ("phi(1,0,0)", a.phi.v),
            ("chi(1,0,0)", a.chi.v),
            ("psi(1,0,0)", a.psi.v),
            ("phi_x(1,0,0)", a.phi.d(&[X])),
        ],
        o.phi.v > 0.0
            && o.chi.v < 0.0
            && o.psi.v < 0.0
            && a.phi.v.abs() <= 1e-12
            && a.chi.v > 0.0
            && a.psi.v > 0.0
            && a.phi.d(&[X]) < 0.0,
    ));

    // (H2): φ(0,y,z) takes both signs on a first-quadrant grid of Π
    let (mut pos, mut neg) = (0usize, 0usize);
    for i in 1..=20 {
        for k in 1..=20 {
            let v = model.factors(&State::new(0.0, i as f64 * 0.1, k as f64 * 0.1))?[0];
            if v > 0.0 {
                pos += 1;
            } else if v < 0.0 {
                neg += 1;
            }
        }
    }
    checks.push(check(
        "H2",
        vec![("grid points phi>0", pos as f64), ("grid points phi<0", neg as f64)],
        pos > 0 && neg > 0,
    ));

    // (H3): φ_x takes both signs on the surface φ = 0 (z solved per (x, y))
    let (mut att, mut rep) = (0usize, 0usize);
    for i in 1..=15 {
        for k in 1..=15 {
            let (x, y) = (i as f64 * 0.05, k as f64 * 0.02);
            let mut z = 0.5;
            let mut ok = false;
            for _ in 0..50 {
                let p = model.partials(&State::new(x, y, z), 1)?;
                let dz = p.phi.d1[2];
                if dz == 0.0 {
                    break;
                }
                let step = p.phi.v / dz;
                z -= step;
                if step.abs() < 1e-13 {
                    ok = true;
                    break;
                }
            }
            if !ok || z <= 0.0 {
                continue;
            }
            let px = model.partials(&State::new(x, y, z), 1)?.phi.d1[0];
            if px < 0.0 {
                att += 1;
            } else if px > 0.0 {
                rep += 1;
            }
        }
    }
    checks.push(check(
        "H3",
        vec![("surface samples phi_x<0", att as f64), ("surface samples phi_x>0", rep as f64)],
        att > 0 && rep > 0,
    ));

    let m = model.with_param(fsn.p);
    let pt = m.partials(&fsn.state, 2)?;
    checks.push(check(
        "P1",
        vec![("phi", pt.phi.v), ("chi", pt.chi.v), ("psi", pt.psi.v)],
        pt.phi.v.abs().max(pt.chi.v.abs()).max(pt.psi.v.abs()) <= 1e-10,
    ));
    let j = pt.jacobian_unscaled();
    let det = det3(&j);
    checks.push(check("P2", vec![("det J", det)], det.abs() > 1e-12));
    let pxx = pt.phi.d(&[X, X]);
    checks.push(check(
        "P3",
        vec![("phi_x", pt.phi.d(&[X])), ("phi_xx", pxx)],
        pt.phi.d(&[X]).abs() <= 1e-10 && pxx.abs() > 1e-12,
    ));
    let p4 = j[0][1] * j[1][0] + j[0][2] * j[2][0];
    checks.push(check("P4", vec![("(f1y, f1z).(f2x, f3x)", p4)], p4 < 0.0));
    let p5 = fold_transversality(model, fsn)?;
    checks.push(check("P5", vec![("transversality", p5)], p5.abs() > 1e-12));

    let q = model.with_param(fsn.p).partials(&exz.state, 1)?;
    checks.push(check(
        "Q1",
        vec![
            ("chi", q.chi.v),
            ("phi_x", q.phi.d(&[X])),
            ("psi_x", q.psi.d(&[X])),
            ("psi_z", q.psi.d(&[Z])),
            ("phi_z", q.phi.d(&[Z])),
        ],
        q.chi.v < 0.0 && q.phi.d(&[X]) < 0.0 && q.psi.d(&[X]) > 0.0 && q.psi.d(&[Z]) < 0.0 && q.phi.d(&[Z]) < 0.0,
    ));

    Ok(ConditionReport {
        checks,
        empirical: ["Q2", "Q3", "Q4", "Q5"].iter().map(|s| s.to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(p: &ModelParams, s: State) {
        let eps = 1e-5;
        let pt = p.partials(&s, 3).unwrap();
        let jets = |q: &ModelParams, st: State| {
            let t = q.partials(&st, 3).unwrap();
            [t.phi, t.chi, t.psi]
        };
        let shift = |k: usize, e: f64| -> (ModelParams, State) {
            let mut a = s.to_array();
            let mut q = *p;
            if k < 3 {
                a[k] += e;
            } else {
                q.h += e;
            }
            (q, State::from_array(a))
        };
        let base = [pt.phi, pt.chi, pt.psi];
        for k in 0..4 {
            let (qp, sp) = shift(k, eps);
            let (qm, sm) = shift(k, -eps);
            let (jp, jm) = (jets(&qp, sp), jets(&qm, sm));
            for g in 0..3 {
                let close = |an: f64, fd: f64| (an - fd).abs() <= 1e-6 * an.abs().max(1.0);
                let fd1 = (jp[g].v - jm[g].v) / (2.0 * eps);
                assert!(close(base[g].d1[k], fd1), "d1 g{g} k{k}: {} vs {fd1}", base[g].d1[k]);
                for a in 0..4 {
                    let fd2 = (jp[g].d1[a] - jm[g].d1[a]) / (2.0 * eps);
                    assert!(close(base[g].d2[a][k], fd2), "d2 g{g} {a}{k}");
                    for b in 0..4 {
                        let fd3 = (jp[g].d2[a][b] - jm[g].d2[a][b]) / (2.0 * eps);
                        assert!(close(base[g].d3[a][b][k], fd3), "d3 g{g} {a}{b}{k}");
                    }
                }
            }
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let p = ModelParams::default();
        fd_check(&p, State::new(0.3, 0.12, 0.42));
    }

    #[test]
    fn trivial_partials() {
        let p = ModelParams::default();
        let s = State::new(0.4, 0.2, 0.3);
        let t = p.partials(&s, 1).unwrap();
        assert_eq!(t.phi.d(&[Var::Y]), -1.0 / (p.beta1 + s.x));
        assert_eq!(t.psi.d(&[Var::Z]), -p.h);
    }

    #[test]
    fn pole_is_domain_error() {
        let p = ModelParams::default();
        let s = State::new(-p.beta1, 0.1, 0.1);
        assert!(matches!(p.partials(&s, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn rhs_trivial_points() {
        let p = ModelParams::default();
        assert_eq!(eval_rhs(&p, &State::new(0.0, 0.0, 0.0), Timescale::Slow).unwrap(), [0.0; 3]);
        let f = eval_rhs(&p, &State::new(1.0, 0.0, 0.0), Timescale::Slow).unwrap();
        assert!(f.iter().all(|v| v.abs() < 1e-15));
        assert!(eval_rhs(&p, &State::new(f64::NAN, 0.0, 0.0), Timescale::Slow).is_err());
    }

    #[test]
    fn fsn_point_residual_small() {
        let p = ModelParams::default().with_h(0.2656);
        let f = eval_rhs(&p, &State::new(0.2987, 0.1167, 0.4167), Timescale::Fast).unwrap();
        assert!(f.iter().all(|v| v.abs() <= 1e-4), "{f:?}");
    }

    #[test]
    fn axial_is_saddle() {
        let p = ModelParams::default();
        let e = find_equilibrium(&p, EquilibriumKind::Axial, State::new(0.9, 0.0, 0.0)).unwrap();
        assert!((e.state.x - 1.0).abs() < 1e-12);
        assert_eq!(e.stability, Stability::Saddle);
    }

    #[test]
    fn boundary_xz_at_bistable_h() {
        let p = ModelParams::default().with_h(0.2649);
        let e = find_equilibrium(&p, EquilibriumKind::BoundaryXz, p.default_guess(EquilibriumKind::BoundaryXz)).unwrap();
        assert!((e.state.x - 0.357).abs() < 1e-3 && (e.state.z - 0.615).abs() < 1e-3);
        assert_eq!(e.state.y, 0.0);
        assert_eq!(e.stability, Stability::Stable);
        assert!(e.residual <= 1e-10);
    }

    #[test]
    fn coexistence_near_fold() {
        let p = ModelParams::default().with_h(0.2656);
        let e = find_equilibrium(&p, EquilibriumKind::Coexistence, p.default_guess(EquilibriumKind::Coexistence)).unwrap();
        assert!((e.state.x - 0.2987).abs() < 1e-3);
        assert!((e.state.y - 0.1167).abs() < 1e-3);
        assert!((e.state.z - 0.4167).abs() < 1e-3);
        // conjugate-closed spectrum
        let ev = e.eigenvalues;
        assert!(ev.iter().all(|l| ev.iter().any(|m| (l.conj() - m).norm() < 1e-12)), "{ev:?}");
    }

    #[test]
    fn kind_mismatch_past_transcritical() {
        let p = ModelParams::default().with_h(0.40);
        let r = find_equilibrium(&p, EquilibriumKind::Coexistence, p.default_guess(EquilibriumKind::Coexistence));
        assert!(matches!(r, Err(Error::KindMismatch(_))), "{r:?}");
    }

    #[test]
    fn fsn2_located() {
        let p = ModelParams::default();
        let (fsn, _) = find_fsn2(&p, (0.2, 0.3)).unwrap();
        assert!((fsn.p - 0.2656).abs() < 5e-4);
        let px = p.with_h(fsn.p).partials(&fsn.state, 1).unwrap().phi.d1[0];
        assert!(px.abs() <= 1e-10);
        assert!(matches!(find_fsn2(&p, (0.5, 0.6)), Err(Error::NotFound(_))));
    }

    #[test]
    fn conditions_hold_for_default_params() {
        let p = ModelParams::default();
        let (fsn, _) = find_fsn2(&p, (0.2, 0.3)).unwrap();
        let q = p.with_h(fsn.p);
        let exz = find_equilibrium(&q, EquilibriumKind::BoundaryXz, q.default_guess(EquilibriumKind::BoundaryXz)).unwrap();
        let r = check_conditions(&p, &fsn, &exz).unwrap();
        assert!(r.all_hold(), "{r:#?}");
        assert_eq!(r.get("H1").unwrap().evidence[0].1, 1.0);
        let p4 = r.get("P4").unwrap().evidence[0].1;
        assert!((p4 + 0.1595).abs() < 1e-3, "{p4}");
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = ModelParams::default();
        p.c = 1.2;
        assert!(p.validate().is_err());
        p = ModelParams::default();
        p.zeta = 0.0;
        assert!(p.validate().is_err());
    }
}
