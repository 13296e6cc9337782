//! Acceptance suite. Runs every criterion, prints one line each and exits nonzero if
//! any fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use lognls::analysis::{certify_concavity, certify_subadditivity, decay_fit, interaction_scaling_fit, Subadditivity};
use lognls::multipeak::{interaction_deficit, rho1_from_template, run_multipeak, MultiBumpSpec, MultipeakConfig};
use lognls::solver::{run_groundstate, sweep_e_alpha, FlowConfig, GroundState, Init};
use lognls::verify::{run_verify, VerifyConfig};
use lognls::{Field, Grid, NonlinearityModel, PenalizationParams, PotentialKind, PotentialSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn log2() -> NonlinearityModel {
    NonlinearityModel::pure_log(2.0, 1).unwrap()
}

fn grid12() -> Grid {
    Grid::new(1, 12.0, 0.05).unwrap()
}

/// α(1 + ¼ln π − ½ln α)
fn closed_form_energy(alpha: f64) -> f64 {
    alpha * (1.0 + 0.25 * PI.ln() - 0.5 * alpha.ln())
}

fn ground(model: &NonlinearityModel, alpha: f64, grid: Grid) -> GroundState {
    run_groundstate(model, alpha, grid, Init::Gaussian { width: 1.5 }, &FlowConfig::default()).unwrap()
}

fn gausson_oracle() -> Outcome {
    let gs = ground(&log2(), 1.0, grid12());
    // π^{−1/4} e^{−x²/2}
    let exact = Field::from_fn(grid12(), |x| PI.powf(-0.25) * (-0.5 * x[0] * x[0]).exp());
    let l2 = gs.u.axpy(-1.0, &exact).unwrap().mass().sqrt() / exact.mass().sqrt();
    let e_ref = 1.0 + 0.25 * PI.ln();
    let lam_ref = 1.0 + 0.5 * PI.ln();
    let lam_literal = -1.0 - 0.5 * PI.ln();
    let pass = gs.converged && l2 < 1e-3 && (gs.energy - e_ref).abs() < 1e-3 && (gs.lambda - lam_ref).abs() < 2e-3;
    outcome(
        pass,
        format!(
            "L2 rel err {l2:.2e}, E = {:.6} (ref {e_ref:.6}), lambda = {:.6} (ref {lam_ref:.6}; sign-flipped reference {lam_literal:.6} is off by {:.4}), {} iterations",
            gs.energy,
            gs.lambda,
            (gs.lambda - lam_literal).abs(),
            gs.iterations
        ),
    )
}

fn concavity() -> Outcome {
    let cfg = FlowConfig::default();
    let alphas = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];
    let (curve, _) = sweep_e_alpha(&log2(), &alphas, grid12(), 1.5, false, &cfg).unwrap();
    let cert = certify_concavity(&curve, cfg.tol).unwrap();
    let worst = curve
        .points
        .iter()
        .map(|p| (p.energy - closed_form_energy(p.alpha)).abs() / closed_form_energy(p.alpha).abs())
        .fold(0.0, f64::max);
    let all = curve.points.iter().all(|p| p.converged);
    let d2: Vec<String> = cert.checks.iter().map(|c| format!("{:.4}", c.value)).collect();
    outcome(
        all && cert.pass() && worst < 1e-3,
        format!("second differences [{}], max rel err vs closed form {worst:.2e}", d2.join(", ")),
    )
}

fn unique_zero() -> Outcome {
    let model = log2();
    let cfg = FlowConfig::default();
    let grid = grid12();
    let (curve, _) = sweep_e_alpha(&model, &[8.0, 10.0, 12.0, 14.0, 16.0, 18.0], grid, 1.5, false, &cfg).unwrap();
    let Some((mut lo, mut hi, _)) = curve.zero_crossing() else {
        return outcome(false, "no sign change on the sweep".into());
    };
    let signs_ok = curve.points.iter().filter(|p| p.energy > 0.0).all(|p| p.alpha <= lo)
        && curve.points.iter().filter(|p| p.energy < 0.0).all(|p| p.alpha >= hi);
    let (lo0, hi0) = (lo, hi);
    while hi - lo > 1e-4 * hi {
        let mid = 0.5 * (lo + hi);
        if ground(&model, mid, grid).energy > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let target = 2f64.exp() * PI.sqrt();
    let rel = (root - target).abs() / target;
    outcome(
        signs_ok && rel < 0.02,
        format!("sweep bracket [{lo0}, {hi0}], bisection root {root:.4} vs {target:.4} (rel err {rel:.2e})"),
    )
}

fn subadditivity() -> Outcome {
    let model = log2();
    let oracle = |a: f64| Ok(ground(&model, a, grid12()).energy);
    let queries = [
        Subadditivity::Pair(0.25, 0.5),
        Subadditivity::Pair(0.5, 0.5),
        Subadditivity::Pair(1.0, 1.0),
        Subadditivity::Pair(0.5, 2.0),
        Subadditivity::Pair(1.5, 2.5),
        Subadditivity::Level(1.0, 1),
        Subadditivity::Level(1.0, 2),
    ];
    // energy accuracy of the discretization, from the Gausson oracle
    let tol = 1e-3;
    let cert = certify_subadditivity(&oracle, &queries, tol).unwrap();
    let margins: Vec<String> = cert.checks.iter().map(|c| format!("{:.4}", c.value)).collect();
    outcome(cert.pass(), format!("gaps [{}] all below -{tol:e}", margins.join(", ")))
}

fn decay() -> Outcome {
    let log = ground(&log2(), 1.0, grid12());
    let lpp = ground(&NonlinearityModel::log_plus_power(2.0, 1.0, 4.0, 1).unwrap(), 1.0, grid12());
    let a = decay_fit(&log.u, 2.0, (2.0, 5.0)).unwrap();
    let b = decay_fit(&lpp.u, 2.0, (2.0, 5.0)).unwrap();
    outcome(
        a.rel_err < 0.05 && b.rel_err < 0.10,
        format!(
            "PureLog plateau {:.5} (rel err {:.2e}), LogPlusPower plateau {:.5} (rel err {:.2e}), target 1",
            a.plateau, a.rel_err, b.plateau, b.rel_err
        ),
    )
}

fn interaction() -> Outcome {
    let grid = Grid::new(1, 20.0, 0.05).unwrap();
    // unit-mass Gausson for σ = 2
    let template = Field::from_fn(grid, |x| PI.powf(-0.25) * (-0.5 * x[0] * x[0]).exp());
    let model = log2();
    let samples: Vec<(f64, f64)> = (5..=9)
        .map(|k| {
            let xi = k as f64;
            let (d, x) = interaction_deficit(&model, &template, &[[-0.5 * xi, 0.0], [0.5 * xi, 0.0]], 0.0).unwrap();
            (x, d)
        })
        .collect();
    match interaction_scaling_fit(&samples, 2.0) {
        Ok(fit) => outcome(
            fit.rel_err < 0.10,
            format!("slope {:.5} vs {:.5} (rel err {:.2e})", fit.slope, fit.target, fit.rel_err),
        ),
        Err(e) => outcome(false, format!("fit failed: {e}")),
    }
}

struct MultipeakSample {
    eps: f64,
    start: Vec<f64>,
    end: Vec<f64>,
    phi: f64,
    lambda_gap: f64,
    terminated: bool,
    converged: bool,
    iterations: usize,
}

fn multipeak_runs() -> Vec<MultipeakSample> {
    let sigma = 20.0;
    let alpha = 1.0;
    let h = 0.02;
    let model = NonlinearityModel::pure_log(sigma, 1).unwrap();
    let spec = PotentialSpec::new(PotentialKind::NegQuadratic { peak: 2.0, floor: 1.0 }, 2.0, 1.0, 0.3, 0.5).unwrap();
    let v0 = spec.v0(1);
    let mut out = Vec::new();
    for eps in [0.4, 0.2, 0.1] {
        let p = 0.5 / eps;
        let grid = Grid::new(1, p + 4.0, h).unwrap();
        let template = ground(&model, 0.5 * alpha, grid);
        let r0 = 0.4 / sigma.sqrt();
        let rho1 = rho1_from_template(&template.u, r0, 0.3).unwrap();
        let params = PenalizationParams::new(eps, 2.0 * p, r0, rho1).unwrap();
        let bump = MultiBumpSpec::uniform(vec![[-p, 0.0], [p, 0.0]], eps, alpha, 1, 2.0 * p).unwrap();
        let mut cfg = MultipeakConfig::default();
        cfg.flow.max_iter = 20000;
        let run = run_multipeak(&model, &spec, &params, &bump, &template.u, grid, &cfg).unwrap();
        let first = &run.trajectory.rows[0];
        out.push(MultipeakSample {
            eps,
            start: first.positions.iter().map(|q| q[0].abs()).collect(),
            end: run.peaks.scaled(eps).iter().map(|q| q[0].abs()).collect(),
            phi: run.phi,
            lambda_gap: (run.lambda - (template.lambda + v0)).abs(),
            terminated: run.aborted.is_none() && !run.stalled,
            converged: run.converged,
            iterations: run.iterations,
        });
    }
    out
}

fn concentration(runs: &[MultipeakSample]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut prev: Option<f64> = None;
    for r in runs {
        let closer = r.end.len() == 2 && r.end.iter().zip(&r.start).all(|(e, s)| e < s);
        let far = r.end.iter().copied().fold(0.0, f64::max);
        let ordered = prev.is_none_or(|q| far <= q);
        pass &= r.terminated && closer && ordered && r.phi == 0.0;
        prev = Some(far);
        parts.push(format!(
            "eps {}: |eps Y| {:.4?} -> {:.4?}, Phi {:e}, {} iterations{}",
            r.eps,
            r.start,
            r.end,
            r.phi,
            r.iterations,
            if r.converged { "" } else { " (iteration cap)" }
        ));
    }
    outcome(pass, parts.join("; "))
}

fn multiplier_limit(runs: &[MultipeakSample]) -> Outcome {
    let gaps: Vec<f64> = runs.iter().map(|r| r.lambda_gap).collect();
    let pass = gaps.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = gaps.iter().map(|g| format!("{g:.5}")).collect();
    outcome(pass, format!("|lambda_eps - (lambda_auto + V0)| = [{}]", shown.join(", ")))
}

fn invariants() -> Outcome {
    let rep = run_verify(&VerifyConfig::new(log2(), 1.0)).unwrap();
    let n: usize = rep.certificates.iter().map(|c| c.checks.len()).sum();
    let failures = rep.failures();
    outcome(
        rep.pass(),
        if failures.is_empty() {
            format!("{n} checks in {} suites", rep.certificates.len())
        } else {
            format!("failing suites: {}", failures.join(", "))
        },
    )
}

fn report(n: usize, name: &str, budget: Duration, elapsed: Duration, o: Outcome) -> bool {
    let pass = o.pass && elapsed <= budget;
    println!(
        "criterion {n} {name}: {} [{:.1}s / {}s] {}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs(),
        o.detail
    );
    pass
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn main() {
    let mut all = true;
    let (o, t) = timed(gausson_oracle);
    all &= report(1, "Gausson oracle", Duration::from_secs(30), t, o);
    let (o, t) = timed(concavity);
    all &= report(2, "strict concavity", Duration::from_secs(180), t, o);
    let (o, t) = timed(unique_zero);
    all &= report(3, "unique zero", Duration::from_secs(120), t, o);
    let (o, t) = timed(subadditivity);
    all &= report(4, "strict subadditivity", Duration::from_secs(600), t, o);
    let (o, t) = timed(decay);
    all &= report(5, "Gaussian decay law", Duration::from_secs(600), t, o);
    let (o, t) = timed(interaction);
    all &= report(6, "interaction exponent", Duration::from_secs(600), t, o);
    let (runs, t) = timed(multipeak_runs);
    all &= report(7, "multi-peak concentration", Duration::from_secs(600), t, concentration(&runs));
    all &= report(8, "multiplier limit", Duration::from_secs(600), t, multiplier_limit(&runs));
    let (o, t) = timed(invariants);
    all &= report(9, "invariant suites", Duration::from_secs(300), t, o);
    if !all {
        std::process::exit(1);
    }
}
