use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lognls::analysis::{
    certify_concavity, certify_subadditivity, decay_fit, interaction_scaling_fit, Certificate, EnergyCurve, Report,
    Subadditivity,
};
use lognls::multipeak::{
    calibrate_r0, gamma0, interaction_deficit, rho1, rho1_from_template, run_multipeak, separation, MultiBumpSpec,
    MultipeakConfig,
};
use lognls::solver::{check_mass, run_groundstate, sweep_e_alpha, FlowConfig, GroundState, Init, Metric};
use lognls::verify::{run_verify, VerifyConfig};
use lognls::{Cutoff, Error, Field, Gausson, Grid, NonlinearityModel, PenalizationParams, PotentialKind, PotentialSpec};

use crate::config::RunConfig;
use crate::error::CliError;

/// Where artifacts go and what gets echoed into the manifest.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub command: String,
}

impl Context {
    fn write(&self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    fn snapshot(&self, name: &str, u: &Field) -> Result<(), CliError> {
        if self.config.flag("output", "snapshots")? {
            self.write(&format!("field_{name}.snap"), &u.to_snapshot_string())?;
        }
        Ok(())
    }

    fn reports(&self, reports: &[String]) -> Result<(), CliError> {
        self.write("report.txt", &reports.join("\n"))
    }

    pub fn manifest(&self) -> Result<(), CliError> {
        let mut s = String::new();
        let _ = writeln!(s, "# lognls {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# command = {}", self.command);
        let _ = writeln!(s, "# seed = {}", self.seed);
        let _ = writeln!(s, "# config = {}", self.config.source);
        s.push('\n');
        s.push_str(&self.config.manifest());
        self.write("manifest.txt", &s)
    }
}

pub fn prepare_output(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })
}

fn model(c: &RunConfig) -> Result<NonlinearityModel, CliError> {
    let dim = dim(c)?;
    let built = match c.raw("nonlinearity", "kind") {
        "pure_log" => NonlinearityModel::pure_log(c.get("nonlinearity", "sigma")?, dim),
        "log_plus_power" => NonlinearityModel::log_plus_power(
            c.get("nonlinearity", "sigma")?,
            c.get("nonlinearity", "mu")?,
            c.get("nonlinearity", "p")?,
            dim,
        ),
        "double_power" => NonlinearityModel::double_power(c.get("nonlinearity", "q")?, c.get("nonlinearity", "p")?, dim),
        other => {
            return Err(c.error(
                "nonlinearity",
                "kind",
                format!("unknown kind '{other}' (pure_log, log_plus_power, double_power)"),
            ))
        }
    };
    built.map_err(|e| c.error("nonlinearity", "kind", e.to_string()))
}

fn dim(c: &RunConfig) -> Result<usize, CliError> {
    match c.get::<usize>("grid", "dim")? {
        d @ (1 | 2) => Ok(d),
        d => Err(c.error("grid", "dim", format!("must be 1 or 2, got {d}"))),
    }
}

fn grid(c: &RunConfig) -> Result<Grid, CliError> {
    let extent = c.positive("grid", "extent")?;
    let h = c.positive("grid", "spacing")?;
    Grid::new(dim(c)?, extent, h).map_err(|e| c.error("grid", "spacing", e.to_string()))
}

fn flow(c: &RunConfig, tol_key: &str, iter_key: &str) -> Result<FlowConfig, CliError> {
    let metric = match c.raw("run", "metric") {
        "preconditioned" => Metric::Preconditioned { shift: 1.0 },
        "l2" => Metric::L2,
        other => return Err(c.error("run", "metric", format!("unknown metric '{other}' (preconditioned, l2)"))),
    };
    Ok(FlowConfig {
        metric,
        tol: c.positive("run", tol_key)?,
        max_iter: c.get("run", iter_key)?,
        ..FlowConfig::default()
    })
}

fn mass(c: &RunConfig, m: &NonlinearityModel, key: &str, alpha: f64) -> Result<(), CliError> {
    match check_mass(m, alpha) {
        Ok(()) => Ok(()),
        Err(Error::MassCeiling { alpha, ceiling }) => Err(c.error(
            "run",
            key,
            format!("mass {alpha} is not below the mass ceiling {ceiling} of this model"),
        )),
        Err(e) => Err(c.error("run", key, e.to_string())),
    }
}

/// For logarithmic models the ground state decays like e^{−σr²/4}; the box must
/// leave room for that decay.
fn box_check(c: &RunConfig, m: &NonlinearityModel, room: f64) -> Result<(), CliError> {
    if let Some(sigma) = m.sigma() {
        if sigma * room * room / 4.0 < 10.0 {
            return Err(c.error(
                "grid",
                "extent",
                format!(
                    "box too small: a profile with sigma = {sigma} needs {:.3} beyond the outermost centre, the box leaves {room:.3}",
                    (40.0 / sigma).sqrt()
                ),
            ));
        }
    }
    Ok(())
}

fn potential(c: &RunConfig) -> Result<PotentialSpec, CliError> {
    let kind = match c.raw("potential", "kind") {
        "const" => PotentialKind::Const {
            value: c.get("potential", "value")?,
        },
        "gauss_bump" => PotentialKind::GaussBump {
            base: c.get("potential", "base")?,
            amplitude: c.get("potential", "amplitude")?,
            width: c.get("potential", "width")?,
        },
        "neg_quadratic" => PotentialKind::NegQuadratic {
            peak: c.get("potential", "peak")?,
            floor: c.get("potential", "floor")?,
        },
        "table" => PotentialKind::Table {
            radii: c.list("potential", "radii")?,
            values: c.list("potential", "values")?,
        },
        other => {
            return Err(c.error(
                "potential",
                "kind",
                format!("unknown kind '{other}' (const, gauss_bump, neg_quadratic, table)"),
            ))
        }
    };
    PotentialSpec::new(
        kind,
        c.get("potential", "m0")?,
        c.get("potential", "omega_radius")?,
        c.get("potential", "o_radius")?,
        c.get("potential", "delta0")?,
    )
    .map_err(|e| c.error("potential", "kind", e.to_string()))
}

fn ground(c: &RunConfig, m: &NonlinearityModel, alpha: f64, g: Grid) -> Result<GroundState, CliError> {
    let init = Init::Gaussian {
        width: c.positive("run", "init_width")?,
    };
    Ok(run_groundstate(m, alpha, g, init, &flow(c, "tol", "max_iter")?)?)
}

fn state_report(title: &str, alpha: f64, gs: &GroundState) -> Report {
    let mut r = Report::new(title);
    r.add("alpha", alpha)
        .add("energy", gs.energy)
        .add("lambda", gs.lambda)
        .add("residual", format!("{:e}", gs.residual_norm))
        .add("converged", gs.converged)
        .add("stalled", gs.stalled)
        .add("iterations", gs.iterations)
        .add("mass_error", format!("{:e}", gs.mass_error))
        .add("boundary_ratio", format!("{:e}", gs.boundary_ratio));
    r
}

pub fn groundstate(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let m = model(c)?;
    let g = grid(c)?;
    let alpha = c.positive("run", "alpha")?;
    mass(c, &m, "alpha", alpha)?;
    box_check(c, &m, g.extent())?;
    let gs = ground(c, &m, alpha, g)?;
    ctx.snapshot("groundstate", &gs.u)?;
    let mut reports = vec![state_report("groundstate", alpha, &gs).to_string()];
    if let (Some(sigma), true) = (m.sigma(), matches!(m.kind(), lognls::NonlinearityKind::PureLog { .. })) {
        let exact = Gausson::new(sigma, alpha, m.dim())?;
        let origin = [0.0, 0.0];
        let u = Field::from_fn(g, |x| exact.at(x, &origin[..x.len()]));
        let err = gs.u.axpy(-1.0, &u)?.mass().sqrt() / u.mass().sqrt();
        let mut r = Report::new("gausson");
        r.add("energy", exact.energy)
            .add("lambda", exact.lambda)
            .add("relative_l2_error", format!("{err:e}"));
        reports.push(r.to_string());
    }
    ctx.reports(&reports)?;
    if gs.stalled {
        return Err(CliError::Numerical(format!(
            "ground-state flow stalled at residual {:e}",
            gs.residual_norm
        )));
    }
    Ok(())
}

/// Pair and level queries whose masses all lie on the curve.
fn sampled_queries(curve: &EnergyCurve) -> Vec<Subadditivity> {
    let alphas: Vec<f64> = curve.converged().map(|p| p.alpha).collect();
    let on = |a: f64| alphas.iter().any(|&b| (a - b).abs() <= 1e-12 * b);
    let mut q = Vec::new();
    for (i, &a) in alphas.iter().enumerate() {
        for &b in &alphas[i..] {
            if on(a + b) {
                q.push(Subadditivity::Pair(a, b));
            }
        }
        for l in 1..=4 {
            if on(a / l as f64) && on(a / (l + 1) as f64) {
                q.push(Subadditivity::Level(a, l));
            }
        }
    }
    q
}

fn certificate(cert: &Certificate) -> String {
    cert.to_string()
}

pub fn sweep(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let m = model(c)?;
    let g = grid(c)?;
    let alphas = c.list("run", "alphas")?;
    if alphas.is_empty() {
        return Err(c.error("run", "alphas", "needs at least one mass"));
    }
    for &a in &alphas {
        mass(c, &m, "alphas", a)?;
    }
    box_check(c, &m, g.extent())?;
    let fc = flow(c, "tol", "max_iter")?;
    let (curve, states) = sweep_e_alpha(
        &m,
        &alphas,
        g,
        c.positive("run", "init_width")?,
        c.flag("run", "warm_start")?,
        &fc,
    )?;
    ctx.write("curve.csv", &curve.to_csv())?;
    for (k, s) in states.iter().enumerate() {
        ctx.snapshot(&format!("sweep_{k}"), &s.u)?;
    }
    let mut reports = Vec::new();
    let mut summary = Report::new("sweep");
    summary
        .add("samples", curve.points.len())
        .add("converged", curve.converged().count());
    match curve.zero_crossing() {
        Some((lo, hi, root)) => summary.add("zero_bracket", format!("{lo}, {hi}")).add("zero_estimate", root),
        None => summary.add("zero_bracket", "none"),
    };
    reports.push(summary.to_string());
    match certify_concavity(&curve, fc.tol) {
        Ok(cert) => reports.push(certificate(&cert)),
        Err(e) => reports.push(format!("[concavity]\nskipped: {e}\n")),
    }
    let queries = sampled_queries(&curve);
    if queries.is_empty() {
        reports.push("[subadditivity]\nskipped: no pair of sampled masses sums to a sampled mass\n".into());
    } else {
        reports.push(certificate(&certify_subadditivity(&curve, &queries, fc.tol)?));
    }
    ctx.reports(&reports)?;
    if let Some(k) = states.iter().position(|s| s.stalled) {
        return Err(CliError::Numerical(format!("flow stalled at alpha = {}", curve.points[k].alpha)));
    }
    Ok(())
}

pub fn decay(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let m = model(c)?;
    let Some(sigma) = m.sigma() else {
        return Err(c.error("nonlinearity", "kind", "the decay law needs a logarithmic term"));
    };
    let g = grid(c)?;
    let alpha = c.positive("run", "alpha")?;
    mass(c, &m, "alpha", alpha)?;
    box_check(c, &m, g.extent())?;
    let w = c.list("run", "decay_window")?;
    if w.len() != 2 || !(w[0] > 0.0 && w[1] > w[0]) {
        return Err(c.error("run", "decay_window", "expected two radii 0 < r_lo < r_hi"));
    }
    if w[1] >= g.extent() {
        return Err(c.error("run", "decay_window", "window reaches the edge of the box"));
    }
    let gs = ground(c, &m, alpha, g)?;
    ctx.snapshot("groundstate", &gs.u)?;
    let fit = decay_fit(&gs.u, sigma, (w[0], w[1]));
    let mut reports = vec![state_report("groundstate", alpha, &gs).to_string()];
    let fit = match fit {
        Ok(f) => f,
        Err(e) => {
            ctx.reports(&reports)?;
            return Err(e.into());
        }
    };
    ctx.write("decay.csv", &fit.to_csv())?;
    let mut r = Report::new("decay");
    r.add("window", format!("{}, {}", w[0], w[1]))
        .add("plateau", fit.plateau)
        .add("target", fit.target)
        .add("relative_error", format!("{:e}", fit.rel_err))
        .add("samples", fit.samples.len());
    reports.push(r.to_string());
    ctx.reports(&reports)?;
    if gs.stalled {
        return Err(CliError::Numerical("ground-state flow stalled".into()));
    }
    Ok(())
}

pub fn interact(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let m = model(c)?;
    let Some(sigma) = m.sigma() else {
        return Err(c.error("nonlinearity", "kind", "the interaction law needs a logarithmic term"));
    };
    let g = grid(c)?;
    let alpha = c.positive("run", "alpha")?;
    mass(c, &m, "alpha", alpha)?;
    let xis = c.list("run", "xis")?;
    if xis.len() < 4 {
        return Err(c.error("run", "xis", "the scaling fit needs at least 4 separations"));
    }
    if xis.iter().any(|&x| !(x > 0.0)) {
        return Err(c.error("run", "xis", "separations must be positive"));
    }
    let widest = xis.iter().copied().fold(0.0, f64::max);
    box_check(c, &m, g.extent() - 0.5 * widest)?;
    let gs = ground(c, &m, alpha, g)?;
    ctx.snapshot("template", &gs.u)?;
    let mut samples = Vec::with_capacity(xis.len());
    let mut csv = String::from("xi,deficit\n");
    for &xi in &xis {
        let (d, x) = interaction_deficit(&m, &gs.u, &[[-0.5 * xi, 0.0], [0.5 * xi, 0.0]], 0.0)?;
        let _ = writeln!(csv, "{x},{d:e}");
        samples.push((x, d));
    }
    ctx.write("interact.csv", &csv)?;
    let mut reports = vec![state_report("template", alpha, &gs).to_string()];
    match interaction_scaling_fit(&samples, sigma) {
        Ok(fit) => {
            let mut r = Report::new("interaction");
            r.add("slope", fit.slope)
                .add("intercept", fit.intercept)
                .add("target", fit.target)
                .add("relative_error", format!("{:e}", fit.rel_err));
            reports.push(r.to_string());
            ctx.reports(&reports)
        }
        Err(e) => {
            ctx.reports(&reports)?;
            Err(e.into())
        }
    }
}

pub fn multipeak(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let m = model(c)?;
    let Some(sigma) = m.sigma().filter(|_| m.satisfies_f5()) else {
        return Err(c.error("nonlinearity", "kind", "the multi-peak flow needs a logarithmic term"));
    };
    let g = grid(c)?;
    let dim = g.dim();
    let spec = potential(c)?;
    spec.validate_local_max(dim)
        .map_err(|e| c.error("potential", "kind", e.to_string()))?;
    let eps = c.positive("penalization", "eps")?;
    let alpha = c.positive("run", "alpha")?;
    let scaled = c.points("run", "centers", dim)?;
    let ell = scaled.len();
    mass(c, &m, "alpha", alpha / ell as f64)?;
    let centers: Vec<[f64; 2]> = scaled.iter().map(|p| [p[0] / eps, p[1] / eps]).collect();
    let weights = match c.raw("run", "weights") {
        "uniform" => vec![1.0 / ell as f64; ell],
        _ => c.list("run", "weights")?,
    };
    if weights.len() != ell {
        return Err(c.error("run", "weights", format!("expected {ell} weights, one per centre")));
    }
    let reach = centers
        .iter()
        .map(|p| p[0].abs().max(p[1].abs()))
        .fold(0.0, f64::max);
    box_check(c, &m, g.extent() - reach)?;
    let (xi, _) = separation(&centers, dim, None);
    let l_sep = match c.auto_f64("penalization", "l_sep")? {
        Some(l) => l,
        None if xi.is_finite() => xi,
        None => g.extent(),
    };

    let template = ground(c, &m, alpha / ell as f64, g)?;
    let v0 = spec.v0(dim);
    let fraction = c.positive("penalization", "psi_fraction")?;
    if fraction >= 1.0 {
        return Err(c.error("penalization", "psi_fraction", "must lie in (0, 1)"));
    }
    let calibrated = |key: &str| c.raw("penalization", key) == "calibrated";
    let rho_cal = if calibrated("r0") || calibrated("rho1") {
        Some(rho1(&m, template.lambda.abs() + v0, alpha, ell)?)
    } else {
        None
    };
    let r0 = match (c.raw("penalization", "r0"), rho_cal) {
        ("auto", _) => 0.4 / sigma.sqrt(),
        ("calibrated", Some(r)) => calibrate_r0(&template.u, r, ell)?,
        _ => c.positive("penalization", "r0")?,
    };
    let rho = match (c.raw("penalization", "rho1"), rho_cal) {
        ("auto", _) => rho1_from_template(&template.u, r0, fraction)?,
        ("calibrated", Some(r)) => r,
        _ => c.positive("penalization", "rho1")?,
    };
    let params = PenalizationParams::new(eps, l_sep, r0, rho).map_err(|e| c.error("penalization", "eps", e.to_string()))?;
    let strict = c.flag("penalization", "strict")?;
    let asymptotic = eps < params.eps_limit(spec.delta0) && l_sep >= 100.0 * r0;
    if strict && !asymptotic {
        return Err(c.error(
            "penalization",
            "eps",
            format!(
                "outside the asymptotic regime: needs eps < {:e} and l_sep >= 100 r0 = {}",
                params.eps_limit(spec.delta0),
                100.0 * r0
            ),
        ));
    }
    let bump = MultiBumpSpec::new(centers, weights, eps, alpha, dim, l_sep)
        .map_err(|e| c.error("run", "centers", e.to_string()))?;
    if !bump.in_region(&spec) {
        return Err(c.error("run", "centers", "every centre must lie within delta0 of O"));
    }
    let mut mc = MultipeakConfig {
        flow: flow(c, "multipeak_tol", "multipeak_max_iter")?,
        upsilon_every: c.get("run", "upsilon_every")?,
        saddle: c.flag("run", "saddle")?,
        max_shift_cells: c.positive("run", "max_shift_cells")?,
        relax: c.positive("run", "relax")?,
        strict,
        ..MultipeakConfig::default()
    };
    mc.truncation = c.auto_f64("nonlinearity", "truncation")?;
    if mc.upsilon_every == 0 {
        return Err(c.error("run", "upsilon_every", "must be positive"));
    }
    let cutoff = Cutoff::semiclassical(spec.delta0, eps)?;
    ctx.snapshot("gamma0", &gamma0(&bump, &template.u, g, cutoff)?)?;
    let run = run_multipeak(&m, &spec, &params, &bump, &template.u, g, &mc)?;
    ctx.write("trajectory.csv", &run.trajectory.to_csv())?;
    ctx.snapshot("multipeak", &run.u)?;

    let mut r = Report::new("multipeak");
    let fmt_points = |pts: &[[f64; 2]]| -> String {
        pts.iter()
            .map(|p| p[..dim].iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
            .collect::<Vec<_>>()
            .join("; ")
    };
    let lambda_ref = template.lambda + v0;
    r.add("eps", eps)
        .add("ell", ell)
        .add("r0", r0)
        .add("rho1", rho)
        .add("l_sep", l_sep)
        .add("truncation", run.truncation)
        .add("asymptotic_regime", run.asymptotic_regime)
        .add("converged", run.converged)
        .add("stalled", run.stalled)
        .add("iterations", run.iterations)
        .add(
            "aborted",
            run.aborted.as_ref().map_or("no".to_string(), |e| e.to_string()),
        )
        .add("start_eps_upsilon", fmt_points(&run.trajectory.rows[0].positions))
        .add("eps_upsilon", fmt_points(&run.peaks.scaled(eps)))
        .add(
            "peak_masses",
            run.peak_masses.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "),
        )
        .add("gamma_eps", run.gamma)
        .add("phi", run.phi)
        .add("psi", run.psi)
        .add("lambda", run.lambda)
        .add("lambda_auto_plus_v0", lambda_ref)
        .add("lambda_gap", run.lambda - lambda_ref)
        .add("residual", format!("{:e}", run.residual))
        .add("soft_residual", format!("{:e}", run.soft_residual))
        .add("mass_error", format!("{:e}", run.mass_error));
    ctx.reports(&[r.to_string()])?;
    if let Some(e) = run.aborted {
        return Err(CliError::Numerical(format!("peaks unresolved after {} iterations: {e}", run.iterations)));
    }
    if run.stalled {
        return Err(CliError::Numerical(format!("multi-peak flow stalled after {} iterations", run.iterations)));
    }
    Ok(())
}

pub fn verify(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let m = model(c)?;
    let alpha = c.positive("run", "alpha")?;
    mass(c, &m, "alpha", alpha)?;
    let mut v = VerifyConfig::new(m, alpha);
    v.seed = ctx.seed;
    v.directions = c.get("run", "directions")?;
    v.sequences = c.get("run", "sequences")?;
    v.eps = c.positive("run", "verify_eps")?;
    v.flow = flow(c, "tol", "max_iter")?;
    if v.directions == 0 {
        return Err(c.error("run", "directions", "must be positive"));
    }
    let rep = run_verify(&v).map_err(|e| c.error("run", "alpha", e.to_string()))?;
    ctx.reports(&[format!("{rep}\n")])?;
    if !rep.pass() {
        return Err(CliError::Numerical(format!(
            "invariant suites failed: {}",
            rep.failures().join(", ")
        )));
    }
    Ok(())
}
