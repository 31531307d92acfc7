use crate::config::{Format, RunConfig};
use crate::error::CliError;
use ewsdyn::bifurcation::{continue_branch, default_seeds, detect_events, Branch};
use ewsdyn::ews::{averaged_fit, check_theorem_hypotheses, classify_theorem, nested_interval_scan, ModelPipeline, UvwSeries};
use ewsdyn::integrator::{boundary_xz_reference, classify_attractor, integrate_model, integrate_nf, Trajectory};
use ewsdyn::model::find_fsn2;
use ewsdyn::normal_form::{compute_coeffs, hopf_location, lyapunov_l1, NFState, NormalFormCoeffs};
use ewsdyn::State;
use rayon::prelude::*;
use serde_json::{json, Value};

/// Named artifacts, written only once a command has fully succeeded.
pub type Outputs = Vec<(String, String)>;

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable output");
    s.push('\n');
    s
}

fn trajectory_artifact(traj: &Trajectory, format: Format) -> (String, String) {
    match format {
        Format::Csv => ("trajectory.csv".into(), traj.to_csv()),
        Format::Json => {
            let v = json!({
                "coords": traj.coords(),
                "t": traj.t,
                "y": traj.y,
                "stats": traj.stats,
                "termination": traj.termination,
            });
            ("trajectory.json".into(), pretty(&v))
        }
    }
}

fn coefficients(cfg: &RunConfig) -> Result<NormalFormCoeffs, CliError> {
    let (fsn, _) = find_fsn2(&cfg.params, cfg.fsn_bracket)?;
    Ok(compute_coeffs(&fsn, &cfg.params)?)
}

pub fn simulate(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let ic = cfg.require_ic()?;
    let traj = integrate_model(&State::from_array(ic), &cfg.params, &cfg.integrator(cfg.t_final.unwrap_or(1000.0)))?;
    let exz = boundary_xz_reference(&cfg.params).ok();
    let verdict = classify_attractor(&traj, exz.as_ref());
    Ok(vec![trajectory_artifact(&traj, cfg.format), ("verdict.json".into(), pretty(&verdict))])
}

pub fn normalform(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let c = coefficients(cfg)?;
    let lyap = lyapunov_l1(&c)?;
    let mut v = serde_json::to_value(c).expect("coefficients serialize");
    let map = v.as_object_mut().expect("object");
    map.insert("h_hopf".into(), Value::from(hopf_location(&c)?));
    map.insert("lyapunov_bracket".into(), Value::from(lyap.bracket));
    map.insert("l1".into(), Value::from(lyap.l1));
    map.insert("subcritical".into(), Value::from(lyap.subcritical));
    Ok(vec![("coefficients.json".into(), pretty(&v))])
}

pub fn ews(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let ic = cfg.require_ic()?;
    let c = coefficients(cfg)?;
    let s_final = cfg.t_final.unwrap_or(140.0);
    let pipe = ModelPipeline { s_final, ds: cfg.ds, mode: cfg.transform, integrator: cfg.integrator(s_final) };
    let report = pipe.run(&State::from_array(ic), &cfg.params, &c, &cfg.ews())?;
    let mut out = vec![("ews_report.json".into(), pretty(&report))];
    if report.i0.is_some() {
        out.push(("critical_curve.csv".into(), report.critical_curve_csv()));
    }
    Ok(out)
}

/// Averaged-criterion and simulated fate of a normal-form initial point.
pub fn classify(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let [u, v, w] = cfg.require_ic()?;
    let c = coefficients(cfg)?;
    let traj = integrate_nf(&NFState::new(u, v, w), &c, cfg.alpha, &cfg.integrator(cfg.t_final.unwrap_or(2500.0)))?;
    let attractor = classify_attractor(&traj, None);
    let series = UvwSeries::from_nf_trajectory(&traj, 0.005);
    let avg = averaged_fit(&series, cfg.n_fit, true)?;
    let hypotheses = check_theorem_hypotheses(&series, &c, cfg.alpha, &avg);
    let theorem = classify_theorem(avg.wbar_tau1, &avg.b_coefficients(), &c, avg.tau1, &cfg.ews().theorem)?;
    let scan = nested_interval_scan(&series, &c, &cfg.ews()).ok();
    let v = json!({
        "alpha": cfg.alpha,
        "theorem": theorem,
        "hypotheses": hypotheses,
        "hypotheses_hold": hypotheses.hold(),
        "fit": avg,
        "attractor": attractor,
        "scan": scan,
    });
    let mut out = vec![("classify.json".into(), pretty(&v))];
    if cfg.format == Format::Csv {
        out.push(("trajectory.csv".into(), traj.to_csv()));
    }
    Ok(out)
}

pub fn sweep(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let seeds = default_seeds(&cfg.params);
    let p = cfg.params;
    let branches: Vec<Result<Branch, ewsdyn::Error>> =
        seeds.par_iter().map(|(kind, seed)| continue_branch(&p, *kind, cfg.h_range, cfg.h_step, *seed)).collect();
    let branches = branches.into_iter().collect::<Result<Vec<_>, _>>()?;
    let events: Vec<_> = branches.par_iter().map(|b| detect_events(&p, b)).collect::<Vec<_>>().into_iter().flatten().collect();
    let mut out: Outputs = branches.iter().map(|b| (format!("branch_{}.csv", b.name()), b.to_csv())).collect();
    out.push(("events.json".into(), pretty(&events)));
    Ok(out)
}
