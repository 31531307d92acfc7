//! Reduction to the singular-Hopf normal form
//!
//! ```text
//! u' = v + u²/2 + δ(α u + F13 u w + F111 u³/6)
//! v' = −u
//! w' = δ(H3 w + H11 u²/2)
//! ```
//!
//! Coefficients are evaluated at the FSN II point from the derivative tables
//! of [`SlowFastModel`]; `α` is affine in the bifurcation parameter.

use crate::error::{Error, Result};
use crate::linalg::det3;
use crate::model::{fold_transversality, solve_equilibrium, EquilibriumKind, FsnPoint, SlowFastModel, State, Var};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFormCoeffs {
    pub omega: f64,
    pub delta: f64,
    #[serde(rename = "F13")]
    pub f13: f64,
    #[serde(rename = "F111")]
    pub f111: f64,
    #[serde(rename = "H3")]
    pub h3: f64,
    #[serde(rename = "H11")]
    pub h11: f64,
    pub alpha_slope: f64,
    pub alpha_intercept: f64,
    pub h_fsn: f64,
    pub x_fsn: f64,
    pub y_fsn: f64,
    pub z_fsn: f64,
}

impl NormalFormCoeffs {
    /// `α(h) = slope·h + intercept`.
    pub fn alpha(&self, h: f64) -> f64 {
        self.alpha_slope * h + self.alpha_intercept
    }

    pub fn fsn(&self) -> FsnPoint {
        FsnPoint { p: self.h_fsn, state: State::new(self.x_fsn, self.y_fsn, self.z_fsn) }
    }

    /// Checks `F13 > 0, F111 < 0, H3 > 0, H11 < 0`.
    pub fn check_sign_regime(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.f13 > 0.0) {
            bad.push(format!("F13 = {}", self.f13));
        }
        if !(self.f111 < 0.0) {
            bad.push(format!("F111 = {}", self.f111));
        }
        if !(self.h3 > 0.0) {
            bad.push(format!("H3 = {}", self.h3));
        }
        if !(self.h11 < 0.0) {
            bad.push(format!("H11 = {}", self.h11));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::SignRegime(bad.join(", ")))
        }
    }
}

/// Bar-quantities at the fold shared by the coefficient formulas and the
/// coordinate transform.
#[derive(Debug, Clone, Copy)]
struct FoldData {
    x: f64,
    y: f64,
    z: f64,
    om2: f64,
    // φ, χ, ψ partials
    py: f64,
    pz: f64,
    pxx: f64,
    pxxx: f64,
    pxy: f64,
    pxz: f64,
    cx: f64,
    cy: f64,
    cz: f64,
    cxx: f64,
    sx: f64,
    sy: f64,
    sz: f64,
    sxx: f64,
    // f_i partials
    j: [[f64; 3]; 3],
    f1xx: f64,
    f1xy: f64,
    f1xz: f64,
    f2xx: f64,
    f3xx: f64,
}

fn fold_data<M: SlowFastModel>(model: &M, fsn: &FsnPoint) -> Result<FoldData> {
    use Var::*;
    let m = model.with_param(fsn.p);
    let pt = m.partials(&fsn.state, 3)?;
    let (phi, chi, psi) = (pt.phi, pt.chi, pt.psi);
    let s = fsn.state;
    let om2 = -s.x * (s.y * phi.d(&[Y]) * chi.d(&[X]) + s.z * phi.d(&[Z]) * psi.d(&[X]));
    let (f1, f2, f3) = (pt.f(1), pt.f(2), pt.f(3));
    Ok(FoldData {
        x: s.x,
        y: s.y,
        z: s.z,
        om2,
        py: phi.d(&[Y]),
        pz: phi.d(&[Z]),
        pxx: phi.d(&[X, X]),
        pxxx: phi.d(&[X, X, X]),
        pxy: phi.d(&[X, Y]),
        pxz: phi.d(&[X, Z]),
        cx: chi.d(&[X]),
        cy: chi.d(&[Y]),
        cz: chi.d(&[Z]),
        cxx: chi.d(&[X, X]),
        sx: psi.d(&[X]),
        sy: psi.d(&[Y]),
        sz: psi.d(&[Z]),
        sxx: psi.d(&[X, X]),
        j: pt.jacobian_unscaled(),
        f1xx: f1.d(&[X, X]),
        f1xy: f1.d(&[X, Y]),
        f1xz: f1.d(&[X, Z]),
        f2xx: f2.d(&[X, X]),
        f3xx: f3.d(&[X, X]),
    })
}

/// Evaluates every normal-form coefficient at the FSN II point.
pub fn compute_coeffs<M: SlowFastModel>(fsn: &FsnPoint, model: &M) -> Result<NormalFormCoeffs> {
    let fd = fold_data(model, fsn)?;
    let FoldData { x, y, z, om2, py, pz, pxx, pxxx, pxy, pxz, cx, cy, cz, cxx, sx, sy, sz, sxx, j, .. } = fd;
    if !(om2 > 0.0) {
        return Err(Error::ConditionViolated(format!(
            "frequency product must be negative, got {}",
            -om2
        )));
    }
    if det3(&j).abs() <= 1e-14 {
        return Err(Error::Singular("Jacobian at the fold".into()));
    }
    let omega = om2.sqrt();
    let zeta = model.zeta();
    let delta = zeta.sqrt() / omega;

    let f13 = x * pz * (z * sz - y * cy)
        + x / py * (y * py * py * cz - z * pz * pz * sy)
        + om2 / (pxx * py) * (pxz * py - pxy * pz);
    let f111 = om2 / (x * x * pxx * pxx) * (3.0 * pxx + x * pxxx)
        + x / om2 * (y * cx * (y * py * cy + z * pz * sy) + z * sx * (y * py * cz + z * pz * sz))
        + 1.0 / (x * pxx)
            * (y * cx * (py + x * pxy) + z * sx * (pz + x * pxz) + x * (y * py * cxx + z * pz * sxx));
    let h3 = x * y * z / om2 * (sx * (py * cz - pz * cy) - cx * (py * sz - pz * sy));
    let h11 = x * y * z / (om2 * om2) * py * (y * cx * (cy * sx - cx * sy) + z * sx * (cz * sx - cx * sz))
        + y * z / (om2 * pxx) * py * (sx * cxx - cx * sxx);

    let k = fold_transversality(model, fsn)?;
    let (f1y, f1z) = (j[0][1], j[0][2]);
    let (f2x, f2y, f2z) = (j[1][0], j[1][1], j[1][2]);
    let (f3x, f3y, f3z) = (j[2][0], j[2][1], j[2][2]);
    let shift = (f1y * (f2y * f2x + f2z * f3x) + f1z * (f3y * f2x + f3z * f3x)) / om2;
    let alpha_slope = k / zeta;
    let alpha_intercept = -alpha_slope * fsn.p - shift;

    Ok(NormalFormCoeffs {
        omega,
        delta,
        f13,
        f111,
        h3,
        h11,
        alpha_slope,
        alpha_intercept,
        h_fsn: fsn.p,
        x_fsn: x,
        y_fsn: y,
        z_fsn: z,
    })
}

/// Root of `α(h) = 0`.
pub fn hopf_location(coeffs: &NormalFormCoeffs) -> Result<f64> {
    if coeffs.alpha_slope == 0.0 {
        return Err(Error::ConditionViolated("alpha slope vanishes".into()));
    }
    Ok(-coeffs.alpha_intercept / coeffs.alpha_slope)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lyapunov {
    pub l1: f64,
    pub bracket: f64,
    pub subcritical: bool,
}

/// First Lyapunov coefficient `l1 = (δ/4)(F111/2 − F13 H11/H3)`.
pub fn lyapunov_l1(coeffs: &NormalFormCoeffs) -> Result<Lyapunov> {
    if coeffs.h3 == 0.0 {
        return Err(Error::ConditionViolated("H3 vanishes".into()));
    }
    let bracket = coeffs.f111 / 2.0 - coeffs.f13 * coeffs.h11 / coeffs.h3;
    let l1 = coeffs.delta / 4.0 * bracket;
    Ok(Lyapunov { l1, bracket, subcritical: l1 > 0.0 })
}

/// A point in normal-form coordinates at normal-form time `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NFState {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub tau: f64,
}

impl NFState {
    pub fn new(u: f64, v: f64, w: f64) -> Self {
        NFState { u, v, w, tau: 0.0 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.u, self.v, self.w]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TransformMode {
    /// includes the δ-order corrections
    #[default]
    Full,
    /// `u ∝ X`, `v` and `w` linear in `(Y, Z)`
    LeadingOrder,
}

/// Precomputed map `(x, y, z) ↦ (u, v, w)` around the coexistence
/// equilibrium at a fixed parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalFormTransform {
    pub mode: TransformMode,
    /// equilibrium mapped to the origin
    pub center: State,
    sqrt_zeta: f64,
    zeta: f64,
    delta: f64,
    omega: f64,
    om2: f64,
    f1xx: f64,
    f1y: f64,
    f1z: f64,
    f2y: f64,
    f2z: f64,
    f3y: f64,
    f3z: f64,
    f2xx: f64,
    f3xx: f64,
    a: f64,
    b: f64,
    a2: f64,
    b2: f64,
    a1: f64,
    a2c: f64,
    r2: f64,
    r3: f64,
    c_uv: f64,
    w_scale: f64,
    /// half-width of the validity box in scaled coordinates
    pub box_half_width: f64,
}

/// Result of mapping one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mapped {
    pub nf: NFState,
    /// outside the box where the expansion is asymptotically valid
    pub extrapolated: bool,
}

impl NormalFormTransform {
    pub fn new<M: SlowFastModel>(model: &M, coeffs: &NormalFormCoeffs, mode: TransformMode) -> Result<Self> {
        let fsn = coeffs.fsn();
        let fd = fold_data(model, &fsn)?;
        let center = solve_equilibrium(model, EquilibriumKind::Coexistence, fsn.state)?;
        let j = fd.j;
        let om2 = fd.om2;
        let (f1y, f1z) = (j[0][1], j[0][2]);
        let (f2x, f2y, f2z) = (j[1][0], j[1][1], j[1][2]);
        let (f3x, f3y, f3z) = (j[2][0], j[2][1], j[2][2]);
        let f1xx = fd.f1xx;
        let a = 1.0 + f2x * f1y / om2;
        let b = f2x * f1z / om2;
        let a2 = f3x * f1y / om2;
        let b2 = 1.0 + f3x * f1z / om2;
        let r2 = f2y * f2x + f2z * f3x;
        let r3 = f3y * f2x + f3z * f3x;
        let g = f1xx / om2;
        // X-coefficient that removes the O(δ) v-term from w'
        let a1 = (coeffs.h3 * a - a * f2y - b * f3y) / (g * f1y);
        let a2c = a2 * r2 + b2 * r3;
        let c_uv = -(f1y * r2 + f1z * r3) / om2 - (fd.f1xy * f2x + fd.f1xz * f3x + f1y * fd.f2xx + f1z * fd.f3xx) / f1xx;
        Ok(NormalFormTransform {
            mode,
            center,
            sqrt_zeta: model.zeta().sqrt(),
            zeta: model.zeta(),
            delta: coeffs.delta,
            omega: coeffs.omega,
            om2,
            f1xx,
            f1y,
            f1z,
            f2y,
            f2z,
            f3y,
            f3z,
            f2xx: fd.f2xx,
            f3xx: fd.f3xx,
            a,
            b,
            a2,
            b2,
            a1,
            a2c,
            r2,
            r3,
            c_uv,
            w_scale: -f1xx * f1y / (om2 * f1z),
            box_half_width: 10.0,
        })
    }

    /// Scaled deviations `(X, Y, Z)` from the center.
    pub fn scaled(&self, s: &State) -> [f64; 3] {
        [
            (s.x - self.center.x) / self.sqrt_zeta,
            (s.y - self.center.y) / self.zeta,
            (s.z - self.center.z) / self.zeta,
        ]
    }

    pub fn apply(&self, s: &State) -> Mapped {
        let [xs, ys, zs] = self.scaled(s);
        let (dl, om, om2) = (self.delta, self.omega, self.om2);
        let lin = self.f1y * ys + self.f1z * zs;
        let v = self.f1xx / om2 * lin;
        let (u, w) = match self.mode {
            TransformMode::LeadingOrder => (self.f1xx / om * xs, self.w_scale * (self.a * ys + self.b * zs)),
            TransformMode::Full => {
                let q1 = self.a * ys + self.b * zs + dl * self.a1 * xs / om;
                let q2 = self.a2 * ys + self.b2 * zs + dl * self.a2c * xs / om;
                let g = self.f1xx / om2;
                let b1 = lin * self.r2 / om2
                    + self.f1xx * self.f2xx / (2.0 * om2) * xs * xs
                    + self.f2y * g * q1
                    + self.f2z * g * q2;
                let b2 = lin * self.r3 / om2
                    + self.f1xx * self.f3xx / (2.0 * om2) * xs * xs
                    + self.f3y * g * q1
                    + self.f3z * g * q2;
                let ul = self.f1xx / om * xs - dl * (self.f1y * b1 + self.f1z * b2);
                let u = ul + dl / 3.0 * self.c_uv * (ul * ul * (-1.0 + v / 2.0) + v * v);
                let w = self.w_scale * (self.a * ys + self.b * zs + dl / om * self.f1xx * self.a1 * xs);
                (u, w)
            }
        };
        let extrapolated = [xs, ys, zs].iter().any(|c| c.abs() > self.box_half_width);
        Mapped { nf: NFState { u, v, w, tau: 0.0 }, extrapolated }
    }
}

/// One-shot transform of a state. Builds the transform each call; use
/// [`NormalFormTransform`] for trajectories.
pub fn to_normal_form<M: SlowFastModel>(state: &State, coeffs: &NormalFormCoeffs, model: &M) -> Result<Mapped> {
    Ok(NormalFormTransform::new(model, coeffs, TransformMode::Full)?.apply(state))
}

/// Leading-order eigenvalues of the origin: `δH3` and `(αδ ± √(α²δ²−4))/2`.
pub fn eigenvalues_qe(coeffs: &NormalFormCoeffs, alpha: f64) -> [Complex64; 3] {
    let ad = alpha * coeffs.delta;
    let disc = Complex64::new(ad * ad - 4.0, 0.0).sqrt();
    [
        Complex64::new(coeffs.delta * coeffs.h3, 0.0),
        (Complex64::new(ad, 0.0) + disc) / 2.0,
        (Complex64::new(ad, 0.0) - disc) / 2.0,
    ]
}

/// Closed-form solution of the normal form linearized in `(u, v)` with the
/// `u²` forcing of `w` retained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFlowModel {
    pub a: f64,
    pub theta: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub cc: f64,
    pub dd: f64,
    pub alpha: f64,
    pub delta: f64,
    pub h3: f64,
    pub h11: f64,
    pub u0: f64,
    pub v0: f64,
    pub w0: f64,
}

impl LinearFlowModel {
    fn mean_term(&self) -> f64 {
        self.a * self.a / (2.0 * self.delta * (self.alpha - self.h3))
    }

    pub fn eval(&self, tau: f64) -> NFState {
        let env = self.a * (self.alpha * self.delta * tau / 2.0).exp();
        let u = env * (self.theta * tau + self.phi1).sin();
        let v = env * (self.theta * tau + self.phi2).sin();
        let k = self.delta * self.h11 / 2.0;
        let m = self.mean_term();
        let two = 2.0 * self.theta * tau;
        let w = (self.delta * self.h3 * tau).exp() * (self.w0 - k * (self.cc + m))
            + k * (self.alpha * self.delta * tau).exp() * (self.cc * two.cos() + self.dd * two.sin() + m);
        NFState { u, v, w, tau }
    }

    /// Upper envelope of `u`.
    pub fn u_envelope(&self, tau: f64) -> f64 {
        self.a * (self.alpha * self.delta * tau / 2.0).exp()
    }
}

pub fn linear_flow(initial: &NFState, coeffs: &NormalFormCoeffs, alpha: f64) -> Result<LinearFlowModel> {
    let d = coeffs.delta;
    let t2 = 1.0 - alpha * alpha * d * d / 4.0;
    if !(t2 > 0.0) {
        return Err(Error::ConditionViolated("outside the oscillatory regime".into()));
    }
    let theta = t2.sqrt();
    let (u0, v0, w0) = (initial.u, initial.v, initial.w);
    let ad = alpha * d;
    let a = (u0 * u0 + ad * u0 * v0 + v0 * v0).max(0.0).sqrt() / theta;
    let phi1 = (theta * u0).atan2(v0 + ad * u0 / 2.0);
    let phi2 = (theta * v0).atan2(-(u0 + ad * v0 / 2.0));
    // u² = A² e^{αδτ}(1 − Re e^{2i(ϑτ+φ1)})/2 drives w
    let kfac = Complex64::new(0.0, 2.0 * phi1).exp() / Complex64::new(d * (alpha - coeffs.h3), 2.0 * theta);
    let s = a * a / 2.0;
    Ok(LinearFlowModel {
        a,
        theta,
        phi1,
        phi2,
        cc: -s * kfac.re,
        dd: s * kfac.im,
        alpha,
        delta: d,
        h3: coeffs.h3,
        h11: coeffs.h11,
        u0,
        v0,
        w0,
    })
}

/// Quadratic graph approximating the local stable manifold of the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableManifoldGraph {
    pub theta_uu: f64,
    pub theta_vv: f64,
    pub theta_uv: f64,
    pub alpha: f64,
    pub delta: f64,
}

impl StableManifoldGraph {
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        0.5 * self.theta_uu * u * u + self.theta_uv * u * v + 0.5 * self.theta_vv * v * v
    }
}

pub fn stable_manifold(coeffs: &NormalFormCoeffs, alpha: f64) -> Result<StableManifoldGraph> {
    let den = alpha - coeffs.h3;
    if den == 0.0 {
        return Err(Error::ConditionViolated("alpha equals H3".into()));
    }
    Ok(StableManifoldGraph {
        theta_uu: coeffs.h11 / (2.0 * den),
        theta_vv: coeffs.h11 / (2.0 * den),
        theta_uv: coeffs.delta * coeffs.h3 * coeffs.h11 / (4.0 * den),
        alpha,
        delta: coeffs.delta,
    })
}

/// Lower boundary of the funnel: `−H11/(2H3)·(u² + v²)`.
pub fn funnel_threshold(coeffs: &NormalFormCoeffs, u: f64, v: f64) -> f64 {
    -coeffs.h11 / (2.0 * coeffs.h3) * (u * u + v * v)
}

pub fn in_funnel(nf: &NFState, coeffs: &NormalFormCoeffs) -> bool {
    nf.w >= funnel_threshold(coeffs, nf.u, nf.v)
}

/// Hopf point `λ_H = −α/F13` of the fast subsystem with `w` frozen at `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenHopf {
    pub lambda_h: f64,
    delta: f64,
    alpha: f64,
    f13: f64,
}

impl FrozenHopf {
    /// Eigenvalues `σ1,2(λ)` of the frozen subsystem at the origin.
    pub fn sigma(&self, lambda: f64) -> [Complex64; 2] {
        let tr = self.delta * (self.alpha + self.f13 * lambda);
        let disc = Complex64::new(tr * tr - 4.0, 0.0).sqrt();
        [(Complex64::new(tr, 0.0) + disc) / 2.0, (Complex64::new(tr, 0.0) - disc) / 2.0]
    }

    pub fn origin_stable(&self, lambda: f64) -> bool {
        self.sigma(lambda)[0].re < 0.0
    }
}

pub fn lambda_hopf(coeffs: &NormalFormCoeffs, alpha: f64) -> Result<FrozenHopf> {
    if coeffs.f13 == 0.0 {
        return Err(Error::ConditionViolated("F13 vanishes".into()));
    }
    Ok(FrozenHopf { lambda_h: -alpha / coeffs.f13, delta: coeffs.delta, alpha, f13: coeffs.f13 })
}

/// Right-hand side of the truncated normal form.
pub fn nf_rhs(coeffs: &NormalFormCoeffs, alpha: f64, s: &[f64; 3]) -> [f64; 3] {
    let [u, v, w] = *s;
    let d = coeffs.delta;
    [
        v + u * u / 2.0 + d * (alpha * u + coeffs.f13 * u * w + coeffs.f111 * u * u * u / 6.0),
        -u,
        d * (coeffs.h3 * w + coeffs.h11 * u * u / 2.0),
    ]
}

/// Period of the linear rotation, `2π/ϑ`.
pub fn linear_period(coeffs: &NormalFormCoeffs, alpha: f64) -> f64 {
    let ad = alpha * coeffs.delta;
    2.0 * PI / (1.0 - ad * ad / 4.0).sqrt()
}
