use ewsdyn::bifurcation::{continue_branch, detect_events, EventKind};
use ewsdyn::ews::{averaged_fit, nested_interval_scan, EWSConfig, ModelPipeline, UvwSeries, Verdict};
use ewsdyn::integrator::{classify_attractor, integrate, integrate_model, integrate_nf, AttractorKind, Coords, Direction, Event, IntegratorConfig};
use ewsdyn::model::{find_fsn2, EquilibriumKind, ModelParams, SlowFastModel, State};
use ewsdyn::normal_form::{compute_coeffs, linear_flow, nf_rhs, NFState, NormalFormCoeffs, NormalFormTransform, TransformMode};
use std::sync::OnceLock;

fn setup() -> &'static (ModelParams, NormalFormCoeffs) {
    static CELL: OnceLock<(ModelParams, NormalFormCoeffs)> = OnceLock::new();
    CELL.get_or_init(|| {
        let m = ModelParams::default();
        let (fsn, _) = find_fsn2(&m, (0.2, 0.3)).unwrap();
        let c = compute_coeffs(&fsn, &m).unwrap();
        (m, c)
    })
}

#[test]
fn tolerance_halving_converges() {
    let m = ModelParams::default().with_h(0.2649);
    for k in 0..10 {
        let ic = State::new(0.25 + 0.01 * k as f64, 0.1 + 0.005 * k as f64, 0.4);
        let coarse = IntegratorConfig::default().with_t_final(20.0).with_tolerances(1e-8, 1e-10);
        let fine = coarse.with_tolerances(5e-9, 5e-11);
        let a = integrate_model(&ic, &m, &coarse).unwrap().last();
        let b = integrate_model(&ic, &m, &fine).unwrap().last();
        let diff = (0..3).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
        assert!(diff < 10.0 * 1e-8 * 10.0, "run {k}: {diff:e}");
    }
}

#[test]
fn invariant_plane_kept() {
    let m = ModelParams::default().with_h(0.2649);
    let cfg = IntegratorConfig::default().with_t_final(200.0);
    let tr = integrate_model(&State::new(0.3, 0.0, 0.5), &m, &cfg).unwrap();
    assert!(tr.y.iter().all(|y| y[1].abs() <= cfg.atol));
}

#[test]
fn event_time_located() {
    let cfg = IntegratorConfig::default().with_t_final(10.0);
    let ev = [Event::new("zero", Direction::Falling, false, |_, s| s[2])];
    let tr = integrate(|_, _| Ok([0.0, 0.0, -1.0]), 0.0, [0.0, 0.0, std::f64::consts::E], &cfg, &ev, Coords::Uvw).unwrap();
    assert!((tr.event("zero").unwrap().t - std::f64::consts::E).abs() <= 1e-8);
}

#[test]
fn energy_identity_without_unfolding() {
    let (_, c) = setup();
    let mut c0 = *c;
    c0.delta = 0.0;
    let cfg = IntegratorConfig::default().with_t_final(30.0).with_tolerances(1e-12, 1e-14);
    let tr = integrate_nf(&NFState::new(0.3, -0.2, 0.1), &c0, -0.04, &cfg).unwrap();
    let (tau, ys) = tr.resample(1e-3);
    let mut cube = 0.0;
    let e0 = 0.3f64.powi(2) + 0.2f64.powi(2);
    let mut worst = 0.0_f64;
    for i in 1..tau.len() {
        cube += 0.5 * (tau[i] - tau[i - 1]) * (ys[i][0].powi(3) + ys[i - 1][0].powi(3));
        let e = ys[i][0].powi(2) + ys[i][1].powi(2) - cube;
        worst = worst.max((e - e0).abs());
    }
    assert!(worst <= 1e-8, "{worst:e}");
}

#[test]
fn linear_flow_matches_linearized_integration() {
    let (_, c) = setup();
    let alpha = -0.04;
    let ic = NFState::new(0.3, -0.2, 0.1);
    let lf = linear_flow(&ic, c, alpha).unwrap();
    let (d, h3, h11) = (c.delta, c.h3, c.h11);
    let cfg = IntegratorConfig::default().with_t_final(60.0).with_tolerances(1e-12, 1e-14);
    let tr = integrate(
        move |_, s| Ok([s[1] + alpha * d * s[0], -s[0], d * (h3 * s[2] + h11 * s[0] * s[0] / 2.0)]),
        0.0,
        ic.to_array(),
        &cfg,
        &[],
        Coords::Uvw,
    )
    .unwrap();
    for tau in [5.0, 17.3, 42.0, 60.0] {
        let a = tr.eval(tau);
        let b = lf.eval(tau);
        assert!((a[0] - b.u).abs() < 1e-8 && (a[1] - b.v).abs() < 1e-8 && (a[2] - b.w).abs() < 1e-8, "{tau}: {a:?} vs {b:?}");
    }
}

#[test]
fn transform_commutes_with_flow() {
    let (m, c) = setup();
    let mh = m.with_h(0.2649);
    let ic = State::new(0.2785, 0.1181, 0.4164);
    let tf = NormalFormTransform::new(&mh, c, TransformMode::Full).unwrap();
    let period = 2.0 * std::f64::consts::PI * c.delta;
    let tr = integrate_model(&ic, &mh, &IntegratorConfig::default().with_t_final(period)).unwrap();
    let nf0 = tf.apply(&ic).nf;
    let alpha = c.alpha(0.2649);
    let nt = integrate_nf(&nf0, c, alpha, &IntegratorConfig::default().with_t_final(period / c.delta).with_tolerances(1e-10, 1e-12)).unwrap();
    let mut worst = 0.0_f64;
    for k in 0..=100 {
        let s = period * k as f64 / 100.0;
        let a = tf.apply(&State::from_array(tr.eval(s))).nf;
        let b = nt.eval(s / c.delta);
        worst = worst.max((a.u - b[0]).abs()).max((a.v - b[1]).abs()).max((a.w - b[2]).abs());
    }
    assert!(worst <= c.delta * c.delta, "sup error {worst} over one period");
}

#[test]
fn hopf_refined_and_eigenvalues_continuous() {
    let (m, _) = setup();
    let seed = (0.2656, m.default_guess(EquilibriumKind::Coexistence));
    let b = continue_branch(m, EquilibriumKind::Coexistence, (0.2, 0.34), 0.005, seed).unwrap();
    let half = continue_branch(m, EquilibriumKind::Coexistence, (0.2, 0.34), 0.0025, seed).unwrap();
    let hopf = detect_events(m, &b).into_iter().find(|e| e.kind == EventKind::Hopf).unwrap();
    let re = hopf.evidence.iter().find(|(n, _)| n == "re").unwrap().1;
    assert!(re.abs() <= 1e-8);
    assert!(hopf.bracket[0] <= hopf.h && hopf.h <= hopf.bracket[1]);
    assert!(half.max_eigenvalue_jump() <= 0.75 * b.max_eigenvalue_jump());
    assert!(b.points.iter().all(|p| p.equilibrium.residual <= 1e-10));
}

#[test]
fn coexistence_branch_exits_octant_at_transcritical() {
    let (m, _) = setup();
    let b = continue_branch(m, EquilibriumKind::Coexistence, (0.2, 0.36), 0.005, (0.2656, m.default_guess(EquilibriumKind::Coexistence))).unwrap();
    let last_physical = b.points.iter().filter(|p| p.physical).map(|p| p.h).fold(0.0, f64::max);
    assert!((0.355..0.36).contains(&last_physical));
    let xz = continue_branch(m, EquilibriumKind::BoundaryXz, (0.2, 0.36), 0.005, (0.2649, m.default_guess(EquilibriumKind::BoundaryXz))).unwrap();
    for p in &xz.points {
        let stable = p.equilibrium.eigenvalues.iter().all(|l| l.re < 0.0);
        assert_eq!(stable, p.h < 0.3577, "h = {}", p.h);
    }
}

#[test]
fn scan_agrees_with_integrator_on_grid() {
    let (_, c) = setup();
    let alpha = -0.04;
    let (mut conclusive, mut agree, mut warnings_early) = (0, 0, true);
    for k in 0..50 {
        let w0 = 0.22 + 0.14 * k as f64 / 49.0;
        let cfg = IntegratorConfig::default().with_t_final(2500.0).with_tolerances(1e-10, 1e-12);
        let tr = integrate_nf(&NFState::new(0.452, 0.432, w0), c, alpha, &cfg).unwrap();
        let fate = classify_attractor(&tr, None).kind;
        let series = UvwSeries::from_nf_trajectory(&tr, 0.005);
        let n = series.peaks().map(|p| p.len().min(41)).unwrap_or(0);
        if n <= 5 {
            continue;
        }
        let Ok(r) = nested_interval_scan(&series, c, &EWSConfig::default().with_n(n)) else { continue };
        if r.verdict == Verdict::Inconclusive {
            continue;
        }
        conclusive += 1;
        let predicted = if r.verdict == Verdict::ExtinctionWarning { AttractorKind::WDivergence } else { AttractorKind::LimitCycle };
        agree += usize::from(predicted == fate);
        if let (Some(t), Some(e)) = (r.warning_time_tau, tr.event("w-zero")) {
            warnings_early &= t < e.t;
        }
        let _ = averaged_fit(&series, 18, true);
    }
    assert!(conclusive >= 25, "{conclusive}");
    assert!(agree as f64 >= 0.9 * conclusive as f64, "{agree}/{conclusive}");
    assert!(warnings_early);
}

#[test]
fn fig1_warning_precedes_sign_change() {
    let (m, c) = setup();
    let mh = m.with_h(0.2649);
    let pipe = ModelPipeline { s_final: 400.0, ..Default::default() };
    let ic = State::new(0.278, 0.1181, 0.4165);
    let series = pipe.series(&ic, &mh, c).unwrap();
    let r = nested_interval_scan(&series, c, &EWSConfig::default().with_n(41)).unwrap();
    assert_eq!(r.verdict, Verdict::ExtinctionWarning);
    let crossing = series.tau.iter().zip(&series.w).skip(1).find(|(_, w)| **w < 0.0).map(|(t, _)| *t).unwrap();
    assert!(r.warning_time_tau.unwrap() < crossing);
    let window = r.intervals[r.i0.unwrap() - 1].window;
    let csv = r.critical_curve_csv();
    assert!(csv.starts_with("tau,wbar,wcrit_i0\n"));
    assert!(r.curve.last().unwrap()[1] < r.curve.last().unwrap()[2]);
    assert!(window > 6.0 && window < 6.6);
}

#[test]
fn nf_rhs_is_deterministic() {
    let (_, c) = setup();
    let s = [0.1, 0.2, 0.3];
    assert_eq!(nf_rhs(c, -0.04, &s), nf_rhs(c, -0.04, &s));
}
