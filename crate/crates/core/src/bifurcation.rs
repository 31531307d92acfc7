//! Natural-parameter continuation of equilibrium branches with Hopf and
//! transcritical detection.

use crate::error::{Error, Result};
use crate::linalg::det3;
use crate::model::{jacobian, solve_equilibrium, Equilibrium, EquilibriumKind, SlowFastModel, State};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const MIN_STEP: f64 = 1e-6;
const RESIDUAL_TOL: f64 = 1e-10;
const COMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub h: f64,
    pub equilibrium: Equilibrium,
    /// all free coordinates nonnegative
    pub physical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub kind: EquilibriumKind,
    /// ascending in `h`
    pub points: Vec<BranchPoint>,
    /// why continuation stopped short of the range, if it did
    pub termination: Option<String>,
}

impl Branch {
    pub fn name(&self) -> &'static str {
        match self.kind {
            EquilibriumKind::Origin => "origin",
            EquilibriumKind::Axial => "axial",
            EquilibriumKind::BoundaryXy => "boundary-xy",
            EquilibriumKind::BoundaryXz => "boundary-xz",
            EquilibriumKind::Coexistence => "coexistence",
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,x,y,z,re1,im1,re2,im2,re3,im3,stability\n");
        for p in &self.points {
            let e = &p.equilibrium;
            s.push_str(&format!("{:.10},{:.12e},{:.12e},{:.12e}", p.h, e.state.x, e.state.y, e.state.z));
            for l in &e.eigenvalues {
                s.push_str(&format!(",{:.12e},{:.12e}", l.re, l.im));
            }
            s.push_str(&format!(",{}\n", e.stability.as_str()));
        }
        s
    }

    /// Largest distance between matched eigenvalues of successive points.
    pub fn max_eigenvalue_jump(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                let m = match_eigenvalues(&w[0].equilibrium.eigenvalues, &w[1].equilibrium.eigenvalues);
                (0..3).map(|i| (m[i] - w[0].equilibrium.eigenvalues[i]).norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// Reorders `next` to minimize the total distance to `prev`.
pub fn match_eigenvalues(prev: &[Complex64; 3], next: &[Complex64; 3]) -> [Complex64; 3] {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let cost = |p: &[usize; 3]| (0..3).map(|i| (prev[i] - next[p[i]]).norm()).sum::<f64>();
    let best = PERMS.iter().min_by(|a, b| cost(a).total_cmp(&cost(b))).unwrap();
    [next[best[0]], next[best[1]], next[best[2]]]
}

fn point_at<M: SlowFastModel>(model: &M, kind: EquilibriumKind, h: f64, guess: State) -> Result<BranchPoint> {
    let m = model.with_param(h);
    let s = solve_equilibrium(&m, kind, guess)?;
    let equilibrium = Equilibrium::from_state(&m, s, kind)?;
    if !(equilibrium.residual <= RESIDUAL_TOL) {
        return Err(Error::Convergence { iterations: 0, residual: equilibrium.residual });
    }
    let a = s.to_array();
    let physical = kind.free_coordinates().iter().all(|&i| a[i] >= -1e-12);
    Ok(BranchPoint { h, equilibrium, physical })
}

/// Walks from `start` toward `end`, halving the step on Newton failure.
fn walk<M: SlowFastModel>(model: &M, kind: EquilibriumKind, first: BranchPoint, end: f64, step: f64) -> (Vec<BranchPoint>, Option<String>) {
    let dir = (end - first.h).signum();
    let h0 = first.h;
    let mut out = vec![first];
    let mut h_step = step.abs();
    let mut prev: Option<BranchPoint> = None;
    loop {
        let cur = *out.last().unwrap();
        if (end - cur.h) * dir <= 1e-14 {
            return (out, None);
        }
        // next point of the seed-anchored grid, or a halved step after a failure
        let grid = h0 + dir * (((cur.h - h0).abs() / step + 1e-9).floor() + 1.0) * step;
        let trial = if (grid - cur.h).abs() <= h_step * (1.0 + 1e-9) { grid } else { cur.h + dir * h_step };
        let target = if (end - trial) * dir <= 0.0 { end } else { trial };
        // secant predictor from the two latest points
        let guess = match prev {
            Some(p) if (cur.h - p.h).abs() > 0.0 => {
                let r = (target - cur.h) / (cur.h - p.h);
                let (a, b) = (cur.equilibrium.state.to_array(), p.equilibrium.state.to_array());
                State::from_array([a[0] + r * (a[0] - b[0]), a[1] + r * (a[1] - b[1]), a[2] + r * (a[2] - b[2])])
            }
            _ => cur.equilibrium.state,
        };
        match point_at(model, kind, target, guess).or_else(|_| point_at(model, kind, target, cur.equilibrium.state)) {
            Ok(p) => {
                prev = Some(cur);
                out.push(p);
                h_step = step.abs();
            }
            Err(e) => {
                h_step /= 2.0;
                if h_step < MIN_STEP {
                    return (out, Some(format!("stopped at h = {}: {e}", cur.h)));
                }
            }
        }
    }
}

/// Continues the `kind` branch over `range` from a seed `(h, guess)`; the
/// seed may lie inside the range, in which case both directions are walked.
pub fn continue_branch<M: SlowFastModel>(model: &M, kind: EquilibriumKind, range: (f64, f64), step: f64, seed: (f64, State)) -> Result<Branch> {
    let (lo, hi) = (range.0.min(range.1), range.0.max(range.1));
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("continuation step must be positive".into()));
    }
    if !(hi > lo) {
        return Ok(Branch { kind, points: Vec::new(), termination: None });
    }
    let h0 = seed.0.clamp(lo, hi);
    let first = point_at(model, kind, h0, seed.1)?;
    let (mut down, t_down) = walk(model, kind, first, lo, step);
    let (up, t_up) = walk(model, kind, first, hi, step);
    down.reverse();
    down.extend_from_slice(&up[1..]);
    let termination = match (t_down, t_up) {
        (None, None) => None,
        (a, b) => Some([a, b].into_iter().flatten().collect::<Vec<_>>().join("; ")),
    };
    Ok(Branch { kind, points: down, termination })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Hopf,
    Transcritical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationEvent {
    pub kind: EventKind,
    pub h: f64,
    pub branch: String,
    /// `[h_lo, h_hi]` of the branch points that bracket the event
    pub bracket: [f64; 2],
    pub evidence: Vec<(String, f64)>,
}

fn complex_pair_re(e: &Equilibrium) -> Option<f64> {
    e.eigenvalues.iter().filter(|l| l.im.abs() > COMPLEX_TOL).map(|l| l.re).reduce(f64::max)
}

fn det_at<M: SlowFastModel>(model: &M, p: &BranchPoint) -> Result<f64> {
    Ok(det3(&jacobian(&model.with_param(p.h), &p.equilibrium.state)?))
}

/// Bisection on a branch-point indicator between two bracketing points.
fn bisect<M, G>(model: &M, kind: EquilibriumKind, a: BranchPoint, b: BranchPoint, g: G, tol: f64) -> Result<BranchPoint>
where
    M: SlowFastModel,
    G: Fn(&BranchPoint) -> Result<Option<f64>>,
{
    let (mut a, mut b) = (a, b);
    let ga = g(&a)?.ok_or_else(|| Error::NotFound("indicator undefined at bracket".into()))?;
    let mut best = a;
    for _ in 0..200 {
        let h = 0.5 * (a.h + b.h);
        let m = point_at(model, kind, h, a.equilibrium.state)?;
        let gm = match g(&m)? {
            Some(v) => v,
            None => break,
        };
        best = m;
        if gm.abs() <= tol || (b.h - a.h).abs() < 1e-14 {
            break;
        }
        if gm.signum() == ga.signum() {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(best)
}

/// Hopf points: a complex pair whose real part changes sign; transcritical
/// points: a real eigenvalue through zero (sign change of the Jacobian
/// determinant) or a free coordinate through zero.
pub fn detect_events<M: SlowFastModel>(model: &M, branch: &Branch) -> Vec<BifurcationEvent> {
    let mut events = Vec::new();
    if branch.points.len() < 3 {
        return events;
    }
    let kind = branch.kind;
    for w in branch.points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if let (Some(ra), Some(rb)) = (complex_pair_re(&a.equilibrium), complex_pair_re(&b.equilibrium)) {
            if ra.signum() != rb.signum() {
                let g = |p: &BranchPoint| Ok(complex_pair_re(&p.equilibrium));
                if let Ok(p) = bisect(model, kind, a, b, g, 1e-8) {
                    let re = complex_pair_re(&p.equilibrium).unwrap_or(f64::NAN);
                    let im = p.equilibrium.eigenvalues.iter().map(|l| l.im.abs()).fold(0.0, f64::max);
                    events.push(BifurcationEvent {
                        kind: EventKind::Hopf,
                        h: p.h,
                        branch: branch.name().into(),
                        bracket: [a.h, b.h],
                        evidence: vec![("re".into(), re), ("im".into(), im)],
                    });
                }
            }
        }
        let (Ok(da), Ok(db)) = (det_at(model, &a), det_at(model, &b)) else { continue };
        if da.signum() != db.signum() && da != 0.0 && db != 0.0 {
            let g = |p: &BranchPoint| det_at(model, p).map(Some);
            if let Ok(p) = bisect(model, kind, a, b, g, 0.0) {
                let s = p.equilibrium.state.to_array();
                let min_coord = kind.free_coordinates().iter().map(|&i| s[i].abs()).fold(f64::INFINITY, f64::min);
                let zero = p.equilibrium.eigenvalues.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min);
                events.push(BifurcationEvent {
                    kind: EventKind::Transcritical,
                    h: p.h,
                    branch: branch.name().into(),
                    bracket: [a.h, b.h],
                    evidence: vec![("min |eigenvalue|".into(), zero), ("min |free coordinate|".into(), min_coord)],
                });
            }
        } else {
            // coordinate through zero with no determinant change
            let (sa, sb) = (a.equilibrium.state.to_array(), b.equilibrium.state.to_array());
            for &i in kind.free_coordinates() {
                if sa[i].signum() != sb[i].signum() && sa[i] != 0.0 {
                    let g = move |p: &BranchPoint| Ok(Some(p.equilibrium.state.to_array()[i]));
                    if let Ok(p) = bisect(model, kind, a, b, g, 1e-13) {
                        events.push(BifurcationEvent {
                            kind: EventKind::Transcritical,
                            h: p.h,
                            branch: branch.name().into(),
                            bracket: [a.h, b.h],
                            evidence: vec![(format!("coordinate {i}"), p.equilibrium.state.to_array()[i])],
                        });
                    }
                }
            }
        }
    }
    events
}

/// Branches traced by a default sweep together with their seeds.
pub fn default_seeds<M: SlowFastModel>(model: &M) -> Vec<(EquilibriumKind, (f64, State))> {
    vec![
        (EquilibriumKind::Coexistence, (0.2656, model.default_guess(EquilibriumKind::Coexistence))),
        (EquilibriumKind::BoundaryXz, (0.2649, model.default_guess(EquilibriumKind::BoundaryXz))),
        (EquilibriumKind::BoundaryXy, (0.2649, model.default_guess(EquilibriumKind::BoundaryXy))),
    ]
}
