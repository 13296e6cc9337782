//! Projected gradient flow on the mass sphere {∫u² = α}.

use crate::analysis::{CurvePoint, EnergyCurve};
use crate::energy::{energy_j, lagrange_multiplier, Autonomous, Functional};
use crate::error::{invalid, Error, Result};
use crate::field::{Field, Grid};
use crate::model::NonlinearityModel;

/// Metric in which the gradient is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    /// Plain L² gradient.
    L2,
    /// Gradient in the metric c·I − Δ + diag(w(u)), w from the functional's diagonal weight.
    Preconditioned { shift: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub metric: Metric,
    /// Initial step; `None` picks 0.1·h² for L² and 1 for the preconditioned metric.
    pub dt0: Option<f64>,
    pub backtrack: f64,
    pub grow: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Replace u by |u| after each step.
    pub nonnegative: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            metric: Metric::Preconditioned { shift: 1.0 },
            dt0: None,
            backtrack: 0.5,
            grow: 1.5,
            dt_min: 1e-12,
            dt_max: 1e3,
            tol: 1e-8,
            max_iter: 20_000,
            nonnegative: true,
        }
    }
}

impl FlowConfig {
    pub fn initial_dt(&self, grid: &Grid) -> f64 {
        match (self.dt0, self.metric) {
            (Some(dt), _) => dt,
            (None, Metric::L2) => 0.1 * grid.spacing() * grid.spacing(),
            (None, Metric::Preconditioned { .. }) => 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(invalid("backtracking factor must lie in (0, 1)"));
        }
        if !(self.grow >= 1.0 && self.dt_min > 0.0 && self.dt_max >= self.dt_min && self.tol > 0.0) {
            return Err(invalid("inconsistent flow step-size settings"));
        }
        if let Metric::Preconditioned { shift } = self.metric {
            if !(shift > 0.0) {
                return Err(invalid("preconditioner shift must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub u: Field,
    pub alpha: f64,
    pub dt: f64,
    pub iter: usize,
    pub lambda: f64,
    /// Functional value, tracked as E0 plus accumulated accurate increments.
    pub energy: f64,
    pub residual: f64,
    pub energy_history: Vec<f64>,
    pub residual_history: Vec<f64>,
    /// Largest |mass − α|/α over all recorded iterates.
    pub mass_error: f64,
    pub stalled: bool,
    /// Number of step-size halvings in the last step.
    pub backtracks: usize,
}

impl FlowState {
    pub fn new(u: Field, alpha: f64, f: &dyn Functional, cfg: &FlowConfig) -> Result<Self> {
        let u = u.normalize(alpha)?;
        let (energy, g) = f.value_grad(&u)?;
        let (lambda, r) = lagrange_multiplier(&u, &g)?;
        let residual = r.mass().sqrt();
        let mass_error = (u.mass() - alpha).abs() / alpha;
        Ok(Self {
            dt: cfg.initial_dt(u.grid()),
            u,
            alpha,
            iter: 0,
            lambda,
            energy,
            residual,
            energy_history: vec![energy],
            residual_history: vec![residual],
            mass_error,
            stalled: false,
            backtracks: 0,
        })
    }

    pub fn converged(&self, tol: f64) -> bool {
        self.residual <= tol
    }
}

/// Solve (c − Δ + diag(w)) x = b.
pub fn solve_metric(b: &Field, w: &[f64], shift: f64) -> Result<Field> {
    let grid = *b.grid();
    let h2 = grid.spacing() * grid.spacing();
    if grid.dim() == 1 {
        let n = grid.n();
        let off = -1.0 / h2;
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        let rhs = b.values();
        let diag = |i: usize| shift + 2.0 / h2 + w[i];
        cp[0] = off / diag(0);
        dp[0] = rhs[0] / diag(0);
        for i in 1..n {
            let m = diag(i) - off * cp[i - 1];
            cp[i] = off / m;
            dp[i] = (rhs[i] - off * dp[i - 1]) / m;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = dp[i] - cp[i] * x[i + 1];
        }
        return Field::from_values(grid, x);
    }
    // Jacobi-preconditioned conjugate gradients
    let apply = |x: &Field| -> Field {
        let mut y = x.laplacian();
        for ((yv, &xv), &wv) in y.values_mut().iter_mut().zip(x.values()).zip(w) {
            *yv = (shift + wv) * xv - *yv;
        }
        y
    };
    let dinv: Vec<f64> = w.iter().map(|&wv| 1.0 / (shift + 4.0 / h2 + wv)).collect();
    let mut x = Field::zeros(grid);
    let mut r = b.clone();
    let mut z = Field::from_values(grid, r.values().iter().zip(&dinv).map(|(a, d)| a * d).collect())?;
    let mut p = z.clone();
    let mut rz = r.inner(&z)?;
    let bnorm = b.mass().sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    for _ in 0..2000 {
        let ap = apply(&p);
        let pap = p.inner(&ap)?;
        if pap <= 0.0 {
            break;
        }
        let a = rz / pap;
        x = x.axpy(a, &p)?;
        r = r.axpy(-a, &ap)?;
        if r.mass().sqrt() <= 1e-13 * bnorm {
            break;
        }
        z = Field::from_values(grid, r.values().iter().zip(&dinv).map(|(a, d)| a * d).collect())?;
        let rz_new = r.inner(&z)?;
        p = z.axpy(rz_new / rz, &p)?;
        rz = rz_new;
    }
    Ok(x)
}

/// Tangent descent direction at u for gradient g.
fn direction(u: &Field, g: &Field, residual: &Field, f: &dyn Functional, cfg: &FlowConfig) -> Result<Field> {
    match cfg.metric {
        Metric::L2 => Ok(residual.clone()),
        Metric::Preconditioned { shift } => {
            let w = f.diagonal(u);
            let a = solve_metric(g, &w, shift)?;
            let b = solve_metric(u, &w, shift)?;
            let bu = b.inner(u)?;
            if !(bu > 0.0) {
                return Ok(residual.clone());
            }
            a.axpy(-a.inner(u)? / bu, &b)
        }
    }
}

pub(crate) fn retract(u: &Field, d: &Field, dt: f64, alpha: f64, nonnegative: bool) -> Result<Field> {
    let mut v = u.axpy(-dt, d)?;
    if nonnegative {
        v = v.abs();
    }
    v.normalize(alpha)
}

pub(crate) fn mass_change(u: &Field, v: &Field) -> f64 {
    u.values()
        .iter()
        .zip(v.values())
        .map(|(&a, &b)| (b - a) * (b + a))
        .sum::<f64>()
        * u.grid().cell_volume()
}

/// One accepted step of the projected flow with backtracking; a no-op once the
/// residual is below tolerance, and flagged as stalled if no decrease is found.
pub fn descent_step(state: &FlowState, f: &dyn Functional, cfg: &FlowConfig) -> Result<FlowState> {
    cfg.validate()?;
    let (_, g) = f.value_grad(&state.u)?;
    let (lambda, r) = lagrange_multiplier(&state.u, &g)?;
    let residual = r.mass().sqrt();
    let mut next = state.clone();
    next.lambda = lambda;
    next.residual = residual;
    next.backtracks = 0;
    if residual <= cfg.tol {
        return Ok(next);
    }
    let d = direction(&state.u, &g, &r, f, cfg)?;
    let mut dt = state.dt.min(cfg.dt_max);
    loop {
        let v = retract(&state.u, &d, dt, state.alpha, cfg.nonnegative)?;
        // the Lagrangian increment cancels first-order effects of mass rounding
        let change = f.value_change(&state.u, &v)? - 0.5 * lambda * mass_change(&state.u, &v);
        if change < 0.0 {
            let (_, gv) = f.value_grad(&v)?;
            let (lv, rv) = lagrange_multiplier(&v, &gv)?;
            next.mass_error = next.mass_error.max((v.mass() - state.alpha).abs() / state.alpha);
            next.u = v;
            next.lambda = lv;
            next.residual = rv.mass().sqrt();
            next.energy = state.energy + change;
            next.energy_history.push(next.energy);
            next.residual_history.push(next.residual);
            next.iter += 1;
            next.dt = (dt * cfg.grow).min(cfg.dt_max);
            next.stalled = false;
            return Ok(next);
        }
        dt *= cfg.backtrack;
        next.backtracks += 1;
        if dt < cfg.dt_min {
            next.stalled = true;
            next.dt = cfg.dt_min;
            return Ok(next);
        }
    }
}

/// Iterate `descent_step` until convergence, stall or `max_iter`.
pub fn run_flow(f: &dyn Functional, u0: Field, alpha: f64, cfg: &FlowConfig) -> Result<FlowState> {
    cfg.validate()?;
    let mut state = FlowState::new(u0, alpha, f, cfg)?;
    while state.iter < cfg.max_iter && !state.converged(cfg.tol) {
        state = descent_step(&state, f, cfg)?;
        if state.stalled {
            break;
        }
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundState {
    pub u: Field,
    pub lambda: f64,
    pub energy: f64,
    pub residual_norm: f64,
    pub converged: bool,
    pub stalled: bool,
    pub iterations: usize,
    pub energy_history: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub mass_error: f64,
    /// max|u| on the box boundary divided by max|u|.
    pub boundary_ratio: f64,
}

/// Starting point of a ground-state run.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Field(Field),
    /// e^{−|x|²/(2 width²)}
    Gaussian { width: f64 },
}

/// Reject masses at or above the model's ceiling.
pub fn check_mass(model: &NonlinearityModel, alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(invalid(format!("mass must be positive, got {alpha}")));
    }
    let ceiling = model.mass_ceiling();
    if alpha >= ceiling {
        return Err(Error::MassCeiling { alpha, ceiling });
    }
    Ok(())
}

/// Global minimizer of J on {∫u² = α} by the projected flow with the raw nonlinearity.
pub fn run_groundstate(
    model: &NonlinearityModel,
    alpha: f64,
    grid: Grid,
    init: Init,
    cfg: &FlowConfig,
) -> Result<GroundState> {
    check_mass(model, alpha)?;
    if grid.dim() != model.dim() {
        return Err(invalid("grid and model dimensions differ"));
    }
    let u0 = match init {
        Init::Field(f) => {
            if *f.grid() != grid {
                return Err(Error::IncompatibleGrids);
            }
            f
        }
        Init::Gaussian { width } => {
            if !(width > 0.0) {
                return Err(invalid("initial width must be positive"));
            }
            Field::from_fn(grid, |x| {
                (-x.iter().map(|c| c * c).sum::<f64>() / (2.0 * width * width)).exp()
            })
        }
    };
    let f = Autonomous::new(model.untruncated());
    let st = run_flow(&f, u0, alpha, cfg)?;
    Ok(finish(st, model, cfg))
}

fn finish(st: FlowState, model: &NonlinearityModel, cfg: &FlowConfig) -> GroundState {
    let peak = st.u.max_abs();
    GroundState {
        energy: energy_j(&st.u, &model.untruncated()),
        lambda: st.lambda,
        residual_norm: st.residual,
        converged: st.residual <= cfg.tol,
        stalled: st.stalled,
        iterations: st.iter,
        boundary_ratio: if peak > 0.0 { st.u.boundary_max() / peak } else { 0.0 },
        energy_history: st.energy_history,
        residual_history: st.residual_history,
        mass_error: st.mass_error,
        u: st.u,
    }
}

/// Ground states over a list of masses, sorted by α. With `warm_start` each run starts
/// from the previous minimizer rescaled to the new mass; otherwise runs are independent
/// and execute on separate threads.
pub fn sweep_e_alpha(
    model: &NonlinearityModel,
    alphas: &[f64],
    grid: Grid,
    init_width: f64,
    warm_start: bool,
    cfg: &FlowConfig,
) -> Result<(EnergyCurve, Vec<GroundState>)> {
    let mut sorted: Vec<f64> = alphas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    for &a in &sorted {
        check_mass(model, a)?;
    }
    let states: Vec<GroundState> = if warm_start {
        let mut out: Vec<GroundState> = Vec::with_capacity(sorted.len());
        for &a in &sorted {
            let init = match out.last() {
                Some(prev) => Init::Field(prev.u.normalize(a)?),
                None => Init::Gaussian { width: init_width },
            };
            out.push(run_groundstate(model, a, grid, init, cfg)?);
        }
        out
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = sorted
                .iter()
                .map(|&a| {
                    s.spawn(move || {
                        run_groundstate(model, a, grid, Init::Gaussian { width: init_width }, cfg)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect::<Result<Vec<_>>>()
        })?
    };
    let curve = EnergyCurve::new(
        sorted
            .iter()
            .zip(&states)
            .map(|(&alpha, g)| CurvePoint {
                alpha,
                energy: g.energy,
                lambda: g.lambda,
                residual: g.residual_norm,
                converged: g.converged,
            })
            .collect(),
    )?;
    Ok((curve, states))
}
