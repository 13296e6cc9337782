//! Invariant suite run by the `verify` command.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{random_admissible_sequence, recurrence_check, Certificate, Check};
use crate::energy::{phi_eps, psi_eps, Autonomous, Functional, PenalizationParams, PenalizedFunctional, PotentialKind, PotentialSpec};
use crate::error::{invalid, Result};
use crate::field::{Field, Grid};
use crate::model::NonlinearityModel;
use crate::multipeak::{
    mass_fractions, rho1_from_template, run_multipeak, upsilon, upsilon_with_order, MultiBumpSpec, MultipeakConfig,
    PeakSet, UpsilonConfig,
};
use crate::solver::{run_groundstate, FlowConfig, Init};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub model: NonlinearityModel,
    pub alpha: f64,
    pub seed: u64,
    /// Random directions per functional in the gradient check.
    pub directions: usize,
    pub fd_step: f64,
    pub fd_tol: f64,
    pub mass_tol: f64,
    /// Random admissible sequences for the tail recurrence.
    pub sequences: usize,
    /// ε of the short multi-peak run.
    pub eps: f64,
    pub multipeak_iters: usize,
    pub flow: FlowConfig,
}

impl VerifyConfig {
    pub fn new(model: NonlinearityModel, alpha: f64) -> Self {
        Self {
            model,
            alpha,
            seed: 0,
            directions: 20,
            fd_step: 1e-5,
            fd_tol: 1e-5,
            mass_tol: 1e-10,
            sequences: 1000,
            eps: 0.2,
            multipeak_iters: 300,
            flow: FlowConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub certificates: Vec<Certificate>,
}

impl VerifyReport {
    pub fn pass(&self) -> bool {
        self.certificates.iter().all(Certificate::pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.certificates
            .iter()
            .filter(|c| !c.pass())
            .map(|c| c.name.as_str())
            .collect()
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.certificates {
            writeln!(f, "{c}")?;
        }
        write!(f, "overall: {}", if self.pass() { "pass" } else { "FAIL" })
    }
}

fn at_most(label: impl Into<String>, value: f64, threshold: f64) -> Check {
    Check {
        label: label.into(),
        value,
        threshold,
        pass: Some(value <= threshold),
    }
}

fn holds(label: impl Into<String>, ok: bool) -> Check {
    Check {
        label: label.into(),
        value: if ok { 0.0 } else { 1.0 },
        threshold: 0.0,
        pass: Some(ok),
    }
}

fn failed(label: impl Into<String>, err: impl fmt::Display) -> Check {
    Check {
        label: format!("{}: {err}", label.into()),
        value: f64::NAN,
        threshold: f64::NAN,
        pass: Some(false),
    }
}

/// Largest relative mismatch between ⟨g, d⟩ and the central difference of `value`
/// over random directions d = u·r, r uniform in [−1, 1].
pub fn gradient_mismatch<R: Rng>(
    value_change: impl Fn(&Field, &Field) -> Result<f64>,
    grad: &Field,
    u: &Field,
    directions: usize,
    step: f64,
    rng: &mut R,
) -> Result<f64> {
    let gnorm = grad.mass().sqrt();
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let d = Field::from_values(
            *u.grid(),
            u.values().iter().map(|v| v * rng.gen_range(-1.0..=1.0)).collect(),
        )?;
        let exact = grad.inner(&d)?;
        let fd = value_change(&u.axpy(-step, &d)?, &u.axpy(step, &d)?)? / (2.0 * step);
        let scale = exact.abs().max(1e-3 * gnorm * d.mass().sqrt());
        if scale > 0.0 {
            worst = worst.max((fd - exact).abs() / scale);
        }
    }
    Ok(worst)
}

fn gradient_suite(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> Result<Certificate> {
    let dim = cfg.model.dim();
    let grid = Grid::new(dim, 6.0, if dim == 1 { 0.1 } else { 0.25 })?;
    let u = Field::from_fn(grid, |x| 4.0 * (-x.iter().map(|c| c * c).sum::<f64>() / 5.0).exp());
    let eps = 0.15;
    let spec = PotentialSpec::new(PotentialKind::Const { value: 0.2 }, 0.5, 0.5, 0.2, 0.1)?;
    let params = PenalizationParams::new(eps, 10.0, 0.5, 0.5)?;
    let peaks = PeakSet::new(vec![[0.0, 0.0]], dim, Some(eps), 0.5)?;
    let (n, step, tol) = (cfg.directions, cfg.fd_step, cfg.fd_tol);
    let mut checks = Vec::new();

    let raw = Autonomous::new(cfg.model.untruncated());
    let shifted = Autonomous::with_shift(cfg.model.truncate(3.0)?, 0.7);
    for (name, f) in [("J", &raw), ("J truncated + shift", &shifted)] {
        let (_, g) = f.value_grad(&u)?;
        let m = gradient_mismatch(|a, b| f.value_change(a, b), &g, &u, n, step, rng)?;
        checks.push(at_most(format!("{name} gradient"), m, tol));
    }

    let (psi, g) = psi_eps(&u, &spec, &params);
    let m = gradient_mismatch(|a, b| Ok(psi_eps(b, &spec, &params).0 - psi_eps(a, &spec, &params).0), &g, &u, n, step, rng)?;
    checks.push(at_most("Psi gradient", m, tol));
    checks.push(at_most("Psi <= 0", psi, 0.0));

    let (phi, g) = phi_eps(&u, Some(&peaks))?;
    let m = gradient_mismatch(
        |a, b| Ok(phi_eps(b, Some(&peaks))?.0 - phi_eps(a, Some(&peaks))?.0),
        &g,
        &u,
        n,
        step,
        rng,
    )?;
    checks.push(at_most("Phi gradient", m, tol));
    checks.push(at_most("-Phi <= 0", -phi, 0.0));

    let mut gamma = PenalizedFunctional::new(grid, cfg.model.truncate(3.0)?, spec, params);
    gamma.set_peaks(peaks);
    let (_, g) = gamma.value_grad(&u)?;
    let m = gradient_mismatch(|a, b| gamma.value_change(a, b), &g, &u, n, step, rng)?;
    checks.push(at_most("Gamma_eps gradient", m, tol));
    Ok(Certificate {
        name: "gradient vs finite differences".into(),
        checks,
    })
}

fn two_bumps(dim: usize, shift: [f64; 2]) -> Result<Field> {
    let grid = Grid::new(dim, 8.0, if dim == 1 { 0.05 } else { 0.2 })?;
    let c = [[-3.0 + shift[0], 0.5 * shift[1]], [2.5 + shift[0], 1.0 + 0.5 * shift[1]]];
    Ok(Field::from_fn(grid, |x| {
        c.iter()
            .zip([1.0, 0.7])
            .map(|(p, a)| a * (-(0..dim).map(|k| (x[k] - p[k]).powi(2)).sum::<f64>()).exp())
            .sum()
    }))
}

fn upsilon_suite(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> Result<Certificate> {
    let dim = cfg.model.dim();
    let u = two_bumps(dim, [0.0, 0.0])?;
    let grid = *u.grid();
    let h = grid.spacing();
    let r0 = 0.5;
    let rho1 = rho1_from_template(&u, r0, 0.3)?;
    let ucfg = UpsilonConfig::new(2, r0, rho1)?;
    let base = upsilon(&u, &ucfg)?;
    let mut checks = Vec::new();
    let mut worst: f64 = 0.0;
    for _ in 0..8 {
        let cells: Vec<isize> = (0..dim).map(|_| rng.gen_range(-10..=10)).collect();
        let moved = upsilon(&u.shift(&cells)?, &ucfg)?;
        for (p, q) in base.points.iter().zip(&moved.points) {
            for a in 0..dim {
                worst = worst.max((q[a] - p[a] - cells[a] as f64 * h).abs());
            }
        }
    }
    checks.push(at_most("Upsilon translation equivariance", worst, 1e-12));

    let mut probe: Vec<usize> = (0..grid.len()).collect();
    let mut order: Vec<usize> = (0..2).collect();
    let mut same = true;
    let mut sums: f64 = 0.0;
    let mut perm: f64 = 0.0;
    let fractions = mass_fractions(&u, &base, 2.0 * r0)?;
    for _ in 0..6 {
        probe.shuffle(rng);
        order.shuffle(rng);
        same &= upsilon_with_order(&u, &ucfg, &probe)? == base;
        let t = rng.gen_range(0.5 * r0..4.0 * r0);
        let nj = mass_fractions(&u, &base, t)?;
        sums = sums.max((nj.iter().sum::<f64>() - 1.0).abs());
        let swapped = PeakSet {
            points: order.iter().map(|&k| base.points[k]).collect(),
            ..base.clone()
        };
        let ns = mass_fractions(&u, &swapped, 2.0 * r0)?;
        for (k, &j) in order.iter().enumerate() {
            perm = perm.max((ns[k] - fractions[j]).abs());
        }
    }
    checks.push(holds("Upsilon permutation invariance", same));
    checks.push(at_most("N_j sum to one", sums, 1e-12));
    checks.push(at_most("N_j permutation invariance", perm, 1e-14));
    Ok(Certificate {
        name: "local centres of mass".into(),
        checks,
    })
}

fn recurrence_suite(cfg: &VerifyConfig, rng: &mut ChaCha8Rng) -> Result<Certificate> {
    let mut bad = 0usize;
    for _ in 0..cfg.sequences {
        let theta = rng.gen_range(1.05..4.0);
        let b = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..2.0) };
        let len = rng.gen_range(2..80);
        let r1 = rng.gen_range(0.0..10.0);
        let q = random_admissible_sequence(rng, len, theta, b);
        let rep = recurrence_check(&q, r1, theta, b)?;
        if !(rep.hypothesis_ok && rep.conclusion_ok) {
            bad += 1;
        }
    }
    Ok(Certificate {
        name: format!("tail recurrence ({} sequences)", cfg.sequences),
        checks: vec![at_most("sequences violating the bound", bad as f64, 0.0)],
    })
}

fn nonlinearity_suite(cfg: &VerifyConfig) -> Certificate {
    let m = cfg.model.untruncated();
    let t0 = m.t0();
    let samples: Vec<f64> = (0..=400)
        .map(|i| 10f64.powf(-6.0 + 9.0 * i as f64 / 400.0))
        .filter(|s| (s - t0).abs() > 1e-9 * t0.max(1.0))
        .collect();
    let mut euler = 0usize;
    let mut ratio = 0usize;
    let mut slope = 0usize;
    for w in samples.windows(2) {
        let (a, b) = (w[0], w[1]);
        if m.big_f(b) / (b * b) <= m.big_f(a) / (a * a) {
            ratio += 1;
        }
        if m.f(b) / b <= m.f(a) / a {
            slope += 1;
        }
    }
    for &s in &samples {
        if m.f(s) * s <= 2.0 * m.big_f(s) {
            euler += 1;
        }
    }
    let mut f4 = 0usize;
    for &s in samples.iter().step_by(8) {
        for k in 1..20 {
            let tau = k as f64 / 20.0;
            let lhs = m.big_f((1.0 - tau).sqrt() * s) + m.big_f((1.0 + tau).sqrt() * s);
            if lhs <= 2.0 * m.big_f(s) {
                f4 += 1;
            }
        }
    }
    Certificate {
        name: "nonlinearity structure".into(),
        checks: vec![
            at_most("f(s)s > 2F(s) violations", euler as f64, 0.0),
            at_most("F(t)/t^2 increasing violations", ratio as f64, 0.0),
            at_most("f(s)/s increasing violations", slope as f64, 0.0),
            at_most("F(sqrt(1-t)u) + F(sqrt(1+t)u) > 2F(u) violations", f4 as f64, 0.0),
        ],
    }
}

fn flow_suite(cfg: &VerifyConfig) -> Result<Certificate> {
    let dim = cfg.model.dim();
    let grid = Grid::new(dim, 10.0, if dim == 1 { 0.1 } else { 0.25 })?;
    let mut flow = cfg.flow;
    flow.max_iter = flow.max_iter.min(2000);
    let gs = run_groundstate(&cfg.model, cfg.alpha, grid, Init::Gaussian { width: 1.0 }, &flow)?;
    let mut checks = vec![
        at_most("ground-state flow mass error", gs.mass_error, cfg.mass_tol),
        holds(
            "ground-state energy history nonincreasing",
            gs.energy_history.windows(2).all(|w| w[1] <= w[0]),
        ),
    ];
    if gs.iterations == 0 {
        checks.push(Check::skipped("ground-state flow took no steps".into()));
    }
    checks.extend(multipeak_checks(cfg)?);
    Ok(Certificate {
        name: "flow invariants".into(),
        checks,
    })
}

fn multipeak_checks(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let sigma = match (cfg.model.satisfies_f5(), cfg.model.sigma()) {
        (true, Some(s)) => s,
        _ => return Ok(vec![Check::skipped("multi-peak invariants (model has no logarithmic term)".into())]),
    };
    let dim = cfg.model.dim();
    if dim != 1 {
        return Ok(vec![Check::skipped("multi-peak invariants (one-dimensional only)".into())]);
    }
    let eps = cfg.eps;
    if !(eps > 0.0) {
        return Err(invalid("verify epsilon must be positive"));
    }
    let w = 1.0 / sigma.sqrt();
    let h = 0.2 * w;
    let p = 0.5 / eps;
    let tgrid = Grid::new(1, (12.0 * w / h).ceil() * h, h)?;
    let template = run_groundstate(&cfg.model, 0.5 * cfg.alpha, tgrid, Init::Gaussian { width: w }, &cfg.flow)?;
    let r0 = 0.4 * w;
    let rho1 = rho1_from_template(&template.u, r0, 0.3)?;
    let spec = PotentialSpec::new(PotentialKind::NegQuadratic { peak: 2.0, floor: 1.0 }, 2.0, 1.0, 0.3, 0.5)?;
    let params = PenalizationParams::new(eps, 2.0 * p, r0, rho1)?;
    let bump = MultiBumpSpec::uniform(vec![[-p, 0.0], [p, 0.0]], eps, cfg.alpha, 1, 2.0 * p)?;
    let grid = Grid::new(1, ((p + 12.0 * w) / h).ceil() * h, h)?;
    let mut mcfg = MultipeakConfig::default();
    mcfg.flow.max_iter = cfg.multipeak_iters;
    let mut checks = Vec::new();
    for saddle in [false, true] {
        mcfg.saddle = saddle;
        let tag = if saddle { "saddle flow" } else { "descent flow" };
        let run = match run_multipeak(&cfg.model, &spec, &params, &bump, &template.u, grid, &mcfg) {
            Ok(r) => r,
            Err(e) => {
                checks.push(failed(format!("{tag} start"), e));
                continue;
            }
        };
        checks.push(at_most(format!("{tag} mass error"), run.mass_error, cfg.mass_tol));
        let rise = run
            .descent_log
            .iter()
            .map(|&(a, b)| (b - a) / a.abs().max(1.0))
            .fold(f64::NEG_INFINITY, f64::max);
        if run.descent_log.is_empty() {
            checks.push(Check::skipped(format!("{tag} took no descent steps")));
        } else {
            checks.push(at_most(format!("{tag} Gamma_eps rise on descent steps"), rise, 1e-13));
        }
        let mut persists = true;
        for pair in run.trajectory.rows.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let unscaled: Vec<[f64; 2]> = a.positions.iter().map(|q| [q[0] / eps, q[1] / eps]).collect();
            let xi1 = PeakSet::new(unscaled, 1, Some(eps), r0)?.xi1;
            if a.phi == 0.0 && xi1 * a.tail_mass <= 0.5 && b.phi != 0.0 {
                persists = false;
            }
        }
        checks.push(holds(format!("{tag} Phi_eps = 0 persists"), persists));
    }
    Ok(checks)
}

/// Runs every suite. Errors only on invalid configuration; failed invariants are
/// reported in the certificates.
pub fn run_verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if !(cfg.alpha > 0.0 && cfg.directions > 0 && cfg.fd_step > 0.0) {
        return Err(invalid("verify needs alpha > 0, directions > 0 and a positive step"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let certificates = vec![
        gradient_suite(cfg, &mut rng)?,
        flow_suite(cfg)?,
        upsilon_suite(cfg, &mut rng)?,
        recurrence_suite(cfg, &mut rng)?,
        nonlinearity_suite(cfg),
    ];
    Ok(VerifyReport { certificates })
}
