//! ℓ-peak machinery: separations, local centres of mass, multi-bump data,
//! the penalized saddle flow and the two-bump interaction deficit.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::energy::{
    chi_weights, cutoff_psi, energy_j, lagrange_multiplier, Functional, PenalizationParams,
    PenalizedFunctional, PotentialSpec,
};
use crate::error::{invalid, Error, Result};
use crate::field::{place_bump, Cutoff, Field, Grid};
use crate::model::gn::gn_constant;
use crate::model::NonlinearityModel;
use crate::solver::{mass_change, solve_metric, FlowConfig, Metric};

/// Local centres of mass Υ_j with their separation data.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakSet {
    pub points: Vec<[f64; 2]>,
    pub dim: usize,
    /// Exact minimum pairwise distance (∞ for a single peak).
    pub xi: f64,
    /// Smoothed, capped separation.
    pub xi1: f64,
    pub r0: f64,
}

impl PeakSet {
    pub fn new(points: Vec<[f64; 2]>, dim: usize, eps: Option<f64>, r0: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("a peak set needs at least one point"));
        }
        let (xi, xi1) = separation(&points, dim, eps);
        Ok(Self {
            points,
            dim,
            xi,
            xi1,
            r0,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Physical positions εΥ_j.
    pub fn scaled(&self, eps: f64) -> Vec<[f64; 2]> {
        self.points.iter().map(|p| [eps * p[0], eps * p[1]]).collect()
    }
}

fn dist(a: &[f64; 2], b: &[f64; 2], dim: usize) -> f64 {
    (0..dim).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

fn dist_to(p: &[f64; 2], c: &[f64; 2], dim: usize) -> f64 {
    dist(p, c, dim)
}

/// (ξ, ξ₁): the minimum pairwise distance and its log-sum-exp soft-min, with the
/// cap ε^{−3/4} included as an extra term when `eps` is given.
pub fn separation(points: &[[f64; 2]], dim: usize, eps: Option<f64>) -> (f64, f64) {
    let mut terms = Vec::new();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            terms.push(dist(&points[i], &points[j], dim));
        }
    }
    let xi = terms.iter().copied().fold(f64::INFINITY, f64::min);
    if let Some(e) = eps {
        terms.push(e.powf(-0.75));
    }
    if terms.is_empty() {
        return (xi, f64::INFINITY);
    }
    let m = terms.iter().copied().fold(f64::INFINITY, f64::min);
    // T·ln(#terms) < 1 keeps the soft-min within one unit of the true min
    let t = 1.0 / ((terms.len() + 1) as f64).ln();
    let s: f64 = terms.iter().map(|d| (-(d - m) / t).exp()).sum();
    (xi, m - t * s.ln())
}

/// Parameters of the local-centre-of-mass map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpsilonConfig {
    pub ell: usize,
    pub r0: f64,
    pub rho1: f64,
    /// Minimum distance between accepted component centroids, in units of R0.
    pub gap: f64,
    pub eps: Option<f64>,
}

impl UpsilonConfig {
    pub fn new(ell: usize, r0: f64, rho1: f64) -> Result<Self> {
        if ell == 0 {
            return Err(invalid("number of peaks must be at least 1"));
        }
        if !(r0 > 0.0 && rho1 > 0.0) {
            return Err(invalid("R0 and rho1 must be positive"));
        }
        Ok(Self {
            ell,
            r0,
            rho1,
            gap: 5.0,
            eps: None,
        })
    }
}

/// ∫_{B(P,R0)} u² for every grid point P.
pub fn ball_masses(u: &Field, r0: f64) -> Vec<f64> {
    let grid = u.grid();
    let n = grid.n() as isize;
    let h = grid.spacing();
    let dv = grid.cell_volume();
    let k = (r0 / h + 1e-9).floor() as isize;
    let sq: Vec<f64> = u.values().iter().map(|v| v * v).collect();
    if grid.dim() == 1 {
        return (0..n)
            .map(|i| {
                let lo = (i - k).max(0);
                let hi = (i + k).min(n - 1);
                (lo..=hi).map(|j| sq[j as usize]).sum::<f64>() * dv
            })
            .collect();
    }
    let lim = (r0 / h) * (r0 / h) * (1.0 + 1e-12);
    let mut offs = Vec::new();
    for a in -k..=k {
        for b in -k..=k {
            if ((a * a + b * b) as f64) <= lim {
                offs.push((a, b));
            }
        }
    }
    (0..n * n)
        .map(|p| {
            let (i, j) = (p / n, p % n);
            offs.iter()
                .filter_map(|&(a, b)| {
                    let (x, y) = (i + a, j + b);
                    (x >= 0 && x < n && y >= 0 && y < n).then(|| sq[(x * n + y) as usize])
                })
                .sum::<f64>()
                * dv
        })
        .collect()
}

/// Υ(u) with the probe evaluated on every grid point.
pub fn upsilon(u: &Field, cfg: &UpsilonConfig) -> Result<PeakSet> {
    let order: Vec<usize> = (0..u.grid().len()).collect();
    upsilon_with_order(u, cfg, &order)
}

fn find(parent: &mut [usize], mut k: usize) -> usize {
    while parent[k] != k {
        parent[k] = parent[parent[k]];
        k = parent[k];
    }
    k
}

fn neighbours(grid: &Grid, k: usize) -> Vec<usize> {
    let n = grid.n();
    let [i, j] = grid.multi(k);
    let mut out = Vec::with_capacity(4);
    if grid.dim() == 1 {
        if i > 0 {
            out.push(k - 1);
        }
        if i + 1 < n {
            out.push(k + 1);
        }
    } else {
        if i > 0 {
            out.push(k - n);
        }
        if i + 1 < n {
            out.push(k + n);
        }
        if j > 0 {
            out.push(k - 1);
        }
        if j + 1 < n {
            out.push(k + 1);
        }
    }
    out
}

/// Υ(u) visiting probe points in the given order (a permutation of the grid indices).
/// The result does not depend on the order.
pub fn upsilon_with_order(u: &Field, cfg: &UpsilonConfig, order: &[usize]) -> Result<PeakSet> {
    let grid = *u.grid();
    let len = grid.len();
    if order.len() != len {
        return Err(invalid("probe order must be a permutation of the grid"));
    }
    let d: Vec<f64> = ball_masses(u, cfg.r0)
        .into_iter()
        .map(|m| cutoff_psi(m, cfg.rho1))
        .collect();
    let mut parent: Vec<usize> = (0..len).collect();
    for &k in order {
        if k >= len {
            return Err(invalid("probe order must be a permutation of the grid"));
        }
        if d[k] <= 0.0 {
            continue;
        }
        for nb in neighbours(&grid, k) {
            if d[nb] > 0.0 {
                let (a, b) = (find(&mut parent, k), find(&mut parent, nb));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for k in 0..len {
        if d[k] > 0.0 {
            let r = find(&mut parent, k);
            groups.entry(r).or_default().push(k);
        }
    }
    let h = grid.spacing();
    let dim = grid.dim();
    // (weight, first index, centroid)
    let mut comps: Vec<(f64, usize, [f64; 2])> = groups
        .into_values()
        .map(|mut members| {
            members.sort_unstable();
            let base = grid.multi(members[0]);
            let mut w = 0.0;
            let mut off = [0.0; 2];
            for &k in &members {
                let m = grid.multi(k);
                w += d[k];
                for a in 0..dim {
                    off[a] += d[k] * (m[a] as f64 - base[a] as f64);
                }
            }
            let p0 = grid.point(members[0]);
            let mut c = [0.0; 2];
            for a in 0..dim {
                c[a] = p0[a] + off[a] / w * h;
            }
            (w * grid.cell_volume(), members[0], c)
        })
        .collect();
    comps.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut accepted: Vec<[f64; 2]> = Vec::new();
    for (_, _, c) in comps {
        if accepted.iter().all(|q| dist(q, &c, dim) > cfg.gap * cfg.r0) {
            accepted.push(c);
        }
    }
    if accepted.len() != cfg.ell {
        return Err(Error::PeaksUnresolved {
            expected: cfg.ell,
            found: accepted.len(),
        });
    }
    accepted.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    PeakSet::new(accepted, dim, cfg.eps, cfg.r0)
}

/// Centres p_j, simplex weights s_j, ε and the total mass α of a multi-bump initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiBumpSpec {
    pub centers: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub eps: f64,
    pub alpha: f64,
    pub dim: usize,
}

impl MultiBumpSpec {
    /// Checks the simplex constraint and ξ(p) ≥ L.
    pub fn new(centers: Vec<[f64; 2]>, weights: Vec<f64>, eps: f64, alpha: f64, dim: usize, l_sep: f64) -> Result<Self> {
        if centers.is_empty() || centers.len() != weights.len() {
            return Err(invalid("need one weight per centre and at least one centre"));
        }
        if weights.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(invalid("weights must lie in [0, 1]"));
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(invalid("weights must sum to 1"));
        }
        if !(eps > 0.0 && alpha > 0.0) {
            return Err(invalid("epsilon and mass must be positive"));
        }
        if !(dim == 1 || dim == 2) {
            return Err(invalid("dimension must be 1 or 2"));
        }
        let (xi, _) = separation(&centers, dim, None);
        if centers.len() > 1 && !(xi >= l_sep) {
            return Err(invalid(format!("centre separation {xi} is below L = {l_sep}")));
        }
        Ok(Self {
            centers,
            weights,
            eps,
            alpha,
            dim,
        })
    }

    /// Equal weights 1/ℓ.
    pub fn uniform(centers: Vec<[f64; 2]>, eps: f64, alpha: f64, dim: usize, l_sep: f64) -> Result<Self> {
        let l = centers.len().max(1);
        Self::new(centers, vec![1.0 / l as f64; l], eps, alpha, dim, l_sep)
    }

    pub fn ell(&self) -> usize {
        self.centers.len()
    }

    /// Whether every εp_j lies in O^{δ0}.
    pub fn in_region(&self, spec: &PotentialSpec) -> bool {
        self.centers.iter().all(|c| {
            let r = (0..self.dim).map(|a| (self.eps * c[a]).powi(2)).sum::<f64>().sqrt();
            r < spec.o_radius + spec.delta0
        })
    }
}

/// γ₀ = B Σ_j √(ℓ s_j)(φ u0)(· − p_j) with B fixing the mass to α. `template` is
/// centred at the origin. Bumps are summed in a canonical order, so jointly permuting
/// centres and weights gives the identical field.
pub fn gamma0(bump: &MultiBumpSpec, template: &Field, grid: Grid, cutoff: Cutoff) -> Result<Field> {
    if template.grid().dim() != grid.dim() || grid.dim() != bump.dim {
        return Err(Error::IncompatibleGrids);
    }
    let l = bump.ell();
    let mut idx: Vec<usize> = (0..l).collect();
    idx.sort_by(|&a, &b| {
        let (p, q) = (bump.centers[a], bump.centers[b]);
        p[0].total_cmp(&q[0])
            .then(p[1].total_cmp(&q[1]))
            .then(bump.weights[a].total_cmp(&bump.weights[b]))
    });
    let d = grid.dim();
    let mut sum = Field::zeros(grid);
    for j in idx {
        let s = bump.weights[j];
        if s == 0.0 {
            continue;
        }
        let b = place_bump(grid, |x| template.sample(x), &bump.centers[j][..d], cutoff)?;
        sum = sum.axpy((l as f64 * s).sqrt(), &b)?;
    }
    sum.normalize(bump.alpha)
}

/// N_{j,t} = ∫_{B(Υ_j,t)} u² / Σ_k ∫_{B(Υ_k,t)} u².
pub fn mass_fractions(u: &Field, peaks: &PeakSet, t: f64) -> Result<Vec<f64>> {
    if !(t > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    if peaks.len() > 1 && t > 0.5 * peaks.xi * (1.0 + 1e-12) {
        return Err(invalid("balls overlap: radius exceeds half the separation"));
    }
    let grid = u.grid();
    let dim = grid.dim();
    let mut m = vec![0.0; peaks.len()];
    for (k, &v) in u.values().iter().enumerate() {
        let p = grid.point(k);
        for (j, c) in peaks.points.iter().enumerate() {
            if dist_to(&p, c, dim) <= t {
                m[j] += v * v;
                break;
            }
        }
    }
    let total: f64 = m.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateInput("no mass inside the peak balls".into()));
    }
    Ok(m.into_iter().map(|x| x / total).collect())
}

/// Q(r) = ∫ outside ∪_j B(Υ_j, r) of |∇u|² + u².
pub fn tail_mass(u: &Field, peaks: &PeakSet, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(invalid("radius must be positive"));
    }
    let grid = u.grid();
    let dim = grid.dim();
    let gs = u.grad_sq();
    let s: f64 = u
        .values()
        .iter()
        .zip(&gs)
        .enumerate()
        .filter(|(k, _)| {
            let p = grid.point(*k);
            peaks.points.iter().all(|c| dist_to(&p, c, dim) > r)
        })
        .map(|(_, (v, g))| g + v * v)
        .sum();
    Ok(s * grid.cell_volume())
}

/// Mass in the Voronoi cell of each peak; ties go to the lower index.
pub fn voronoi_masses(u: &Field, peaks: &PeakSet) -> Vec<f64> {
    let grid = u.grid();
    let owner = owners(grid, peaks);
    let mut m = vec![0.0; peaks.len()];
    for (v, &o) in u.values().iter().zip(&owner) {
        m[o] += v * v;
    }
    m.into_iter().map(|x| x * grid.cell_volume()).collect()
}

fn owners(grid: &Grid, peaks: &PeakSet) -> Vec<usize> {
    let dim = grid.dim();
    (0..grid.len())
        .map(|k| {
            let p = grid.point(k);
            let mut best = 0;
            let mut bd = f64::INFINITY;
            for (j, c) in peaks.points.iter().enumerate() {
                let dd = dist_to(&p, c, dim);
                if dd < bd {
                    bd = dd;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Deficit [ℓJ(u0) + ½V0α] − [J(w) + ½V0∫w²] for w = BΣ u0(· − p_j) at mass α = ℓ∫u0²,
/// together with ξ(p). Centres are rounded to grid nodes.
pub fn interaction_deficit(
    model: &NonlinearityModel,
    template: &Field,
    centers: &[[f64; 2]],
    v0: f64,
) -> Result<(f64, f64)> {
    if centers.is_empty() {
        return Err(invalid("need at least one centre"));
    }
    let grid = *template.grid();
    let dim = grid.dim();
    let h = grid.spacing();
    let l = centers.len() as f64;
    let alpha = l * template.mass();
    let mut rounded = Vec::with_capacity(centers.len());
    let mut sum = Field::zeros(grid);
    for c in centers {
        let cells: Vec<isize> = (0..dim).map(|a| (c[a] / h).round() as isize).collect();
        let mut r = [0.0; 2];
        for a in 0..dim {
            r[a] = cells[a] as f64 * h;
        }
        rounded.push(r);
        sum = sum.axpy(1.0, &template.shift(&cells)?)?;
    }
    let w = sum.normalize(alpha)?;
    let separate = l * energy_j(template, model) + 0.5 * v0 * alpha;
    let joint = energy_j(&w, model) + 0.5 * v0 * w.mass();
    let (xi, _) = separation(&rounded, dim, None);
    Ok((separate - joint, xi))
}

/// C_t = sup_s (f(s)/s + t)⁺ / s^{4/N}.
pub fn ct_constant(model: &NonlinearityModel, t: f64) -> f64 {
    let q = 4.0 / model.dim() as f64;
    let g = |ls: f64| {
        let s = ls.exp();
        (model.f(s) / s + t).max(0.0) / s.powf(q)
    };
    let (lo, hi, m) = (-20.0f64, 20.0f64, 4000);
    let mut best = (lo, g(lo));
    for i in 0..=m {
        let x = lo + (hi - lo) * i as f64 / m as f64;
        let v = g(x);
        if v > best.1 {
            best = (x, v);
        }
    }
    let step = (hi - lo) / m as f64;
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if g(c) > g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    g(0.5 * (a + b)).max(best.1)
}

/// ρ1 = ½ min{(C_t S(N))^{−N/2}, α/ℓ}.
pub fn rho1(model: &NonlinearityModel, t: f64, alpha: f64, ell: usize) -> Result<f64> {
    if ell == 0 || !(alpha > 0.0) {
        return Err(invalid("rho1 needs a positive mass and at least one peak"));
    }
    let n = model.dim() as f64;
    let c = ct_constant(model, t);
    let gn = if c > 0.0 {
        (c * gn_constant(model.dim())).powf(-0.5 * n)
    } else {
        f64::INFINITY
    };
    Ok(0.5 * gn.min(alpha / ell as f64))
}

/// Smallest R0 (a multiple of h) with ‖U‖_{L²(B(c,R0/2))} > ¾ρ1 and
/// ‖U‖_{L²(outside B(c,R0))} < ρ1/(8ℓ), c the maximum point of the template.
pub fn calibrate_r0(template: &Field, rho1: f64, ell: usize) -> Result<f64> {
    if ell == 0 || !(rho1 > 0.0) {
        return Err(invalid("calibration needs rho1 > 0 and at least one peak"));
    }
    let grid = template.grid();
    let dim = grid.dim();
    let vals = template.values();
    let kmax = (0..vals.len())
        .max_by(|&a, &b| vals[a].abs().total_cmp(&vals[b].abs()))
        .ok_or_else(|| Error::DegenerateInput("empty template".into()))?;
    let c = grid.point(kmax);
    let mut pts: Vec<(f64, f64)> = vals
        .iter()
        .enumerate()
        .map(|(k, v)| (dist_to(&grid.point(k), &c, dim), v * v))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let dv = grid.cell_volume();
    let total: f64 = pts.iter().map(|p| p.1).sum::<f64>() * dv;
    let within = |r: f64| -> f64 { pts.iter().take_while(|p| p.0 <= r).map(|p| p.1).sum::<f64>() * dv };
    let h = grid.spacing();
    let rmax = grid.extent() * (dim as f64).sqrt();
    let mut m = 1;
    loop {
        let r = m as f64 * h;
        if r > rmax {
            return Err(Error::DegenerateInput("no admissible R0 inside the box".into()));
        }
        let inner = within(0.5 * r).sqrt();
        let outer = (total - within(r)).max(0.0).sqrt();
        if inner > 0.75 * rho1 && outer < rho1 / (8.0 * ell as f64) {
            return Ok(r);
        }
        m += 1;
    }
}

/// ρ1 placing the lower ψ threshold ρ1²/16 at `fraction` of the template's largest
/// ball mass at radius R0.
pub fn rho1_from_template(template: &Field, r0: f64, fraction: f64) -> Result<f64> {
    if !(r0 > 0.0 && fraction > 0.0 && fraction < 1.0) {
        return Err(invalid("need R0 > 0 and a fraction in (0, 1)"));
    }
    let top = ball_masses(template, r0).into_iter().fold(0.0, f64::max);
    if top <= 0.0 {
        return Err(Error::DegenerateInput("template has no mass".into()));
    }
    Ok(4.0 * (fraction * top).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultipeakConfig {
    pub flow: FlowConfig,
    /// Υ, the soft modes and their Hessian are refreshed every this many iterations.
    pub upsilon_every: usize,
    /// Solve for the critical point along translation and mass-share modes instead of descending.
    pub saddle: bool,
    /// Cap on the soft-mode displacement per iteration, in grid cells.
    pub max_shift_cells: f64,
    /// Centroid gap for Υ, in units of R0.
    pub gap: f64,
    /// A soft-mode step is taken once the residual off the soft modes falls below
    /// this multiple of the soft-mode residual.
    pub relax: f64,
    /// Reject parameters outside ε < ε_L, L ≥ 100R0.
    pub strict: bool,
    /// Truncation level K0; `None` uses twice the sup norm of γ₀.
    pub truncation: Option<f64>,
}

impl Default for MultipeakConfig {
    fn default() -> Self {
        Self {
            flow: FlowConfig {
                tol: 1e-6,
                max_iter: 5000,
                ..FlowConfig::default()
            },
            upsilon_every: 10,
            saddle: true,
            max_shift_cells: 0.5,
            gap: 5.0,
            relax: 0.1,
            strict: false,
            truncation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub iter: usize,
    /// εΥ_j
    pub positions: Vec<[f64; 2]>,
    pub gamma: f64,
    pub residual: f64,
    pub phi: f64,
    pub lambda: f64,
    /// ∫χ_u u², the mass seen by Φ_ε.
    pub tail_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakTrajectory {
    pub dim: usize,
    pub rows: Vec<TrajectoryRow>,
}

impl PeakTrajectory {
    pub fn to_csv(&self) -> String {
        let l = self.rows.first().map_or(0, |r| r.positions.len());
        let mut s = String::from("iter,gamma_eps,residual,phi,lambda");
        for j in 1..=l {
            if self.dim == 1 {
                let _ = write!(s, ",eps_upsilon_{j}");
            } else {
                let _ = write!(s, ",eps_upsilon_{j}_x,eps_upsilon_{j}_y");
            }
        }
        s.push_str(",tail_mass\n");
        for r in &self.rows {
            let _ = write!(s, "{},{},{:e},{:e},{}", r.iter, r.gamma, r.residual, r.phi, r.lambda);
            for p in &r.positions {
                for v in &p[..self.dim] {
                    let _ = write!(s, ",{v}");
                }
            }
            let _ = writeln!(s, ",{:e}", r.tail_mass);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultipeakRun {
    pub u: Field,
    pub lambda: f64,
    /// Γ_ε at the final state.
    pub gamma: f64,
    pub phi: f64,
    pub psi: f64,
    pub residual: f64,
    /// Residual component along the soft modes.
    pub soft_residual: f64,
    pub converged: bool,
    pub stalled: bool,
    pub iterations: usize,
    pub peaks: PeakSet,
    pub peak_masses: Vec<f64>,
    pub trajectory: PeakTrajectory,
    pub asymptotic_regime: bool,
    pub truncation: f64,
    pub mass_error: f64,
    /// Set when Υ could not be resolved mid-flow; the trajectory ends there.
    pub aborted: Option<Error>,
    /// (Γ_ε before, Γ_ε after) for every descent step, with the peaks of that step.
    pub descent_log: Vec<(f64, f64)>,
}

/// Translation modes m_j∂_a u and mass-share modes m_j u (j < ℓ) on Voronoi cells,
/// orthonormalized in L² and orthogonal to u. Also returns the smallest norm of a
/// raw translation mode.
fn soft_modes(u: &Field, peaks: &PeakSet) -> Result<(Vec<Field>, f64)> {
    let grid = *u.grid();
    let n = grid.n();
    let h = grid.spacing();
    let dim = grid.dim();
    let owner = owners(&grid, peaks);
    let vals = u.values();
    let l = peaks.len();
    let mut raw = Vec::new();
    let mut tmin = f64::INFINITY;
    for j in 0..l {
        for a in 0..dim {
            let stride = if dim == 1 || a == 1 { 1 } else { n };
            let t: Vec<f64> = (0..grid.len())
                .map(|k| {
                    if owner[k] != j {
                        return 0.0;
                    }
                    let idx = grid.multi(k)[if dim == 1 { 0 } else { a }];
                    let prev = if idx > 0 { vals[k - stride] } else { 0.0 };
                    let next = if idx + 1 < n { vals[k + stride] } else { 0.0 };
                    (next - prev) / (2.0 * h)
                })
                .collect();
            let f = Field::from_values(grid, t)?;
            tmin = tmin.min(f.mass().sqrt());
            raw.push(f);
        }
    }
    for j in 0..l.saturating_sub(1) {
        let w: Vec<f64> = vals
            .iter()
            .zip(&owner)
            .map(|(&v, &o)| if o == j { v } else { 0.0 })
            .collect();
        raw.push(Field::from_values(grid, w)?);
    }
    let mut basis: Vec<Field> = vec![u.scaled(1.0 / u.mass().sqrt())];
    let mut modes = Vec::new();
    for mut x in raw {
        let norm0 = x.mass().sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                x = x.axpy(-x.inner(b)?, b)?;
            }
        }
        let norm = x.mass().sqrt();
        if norm > 1e-8 * norm0 {
            let q = x.scaled(1.0 / norm);
            basis.push(q.clone());
            modes.push(q);
        }
    }
    Ok((modes, tmin))
}

/// Descent direction in the flow metric orthogonal (in L²) to every constraint vector.
fn constrained_direction(g: &Field, constraints: &[Field], metric: Metric, w: &[f64]) -> Result<Field> {
    let apply = |x: &Field| -> Result<Field> {
        match metric {
            Metric::L2 => Ok(x.clone()),
            Metric::Preconditioned { shift } => solve_metric(x, w, shift),
        }
    };
    let y = apply(g)?;
    let z: Vec<Field> = constraints.iter().map(&apply).collect::<Result<_>>()?;
    let m = constraints.len();
    let mut gram = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for k in 0..m {
        rhs[k] = constraints[k].inner(&y)?;
        for l in 0..m {
            gram[(k, l)] = constraints[k].inner(&z[l])?;
        }
    }
    let c = gram
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::DegenerateInput("singular constraint Gram matrix".into()))?;
    let mut d = y;
    for l in 0..m {
        d = d.axpy(-c[l], &z[l])?;
    }
    Ok(d)
}

fn tangent_residual(f: &PenalizedFunctional, u: &Field) -> Result<(f64, f64, Field)> {
    let (val, g) = f.value_grad(u)?;
    let (lambda, r) = lagrange_multiplier(u, &g)?;
    Ok((val, lambda, r))
}

/// Symmetrized finite-difference Hessian of Γ_ε on the mass sphere along the modes.
fn soft_hessian(f: &PenalizedFunctional, u: &Field, alpha: f64, modes: &[Field], r0: &Field) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let m = modes.len();
    let delta = 1e-5 * alpha.sqrt();
    let mut hm = DMatrix::zeros(m, m);
    for l in 0..m {
        let v = u.axpy(delta, &modes[l])?.normalize(alpha)?;
        let (_, _, rv) = tangent_residual(f, &v)?;
        let dr = rv.axpy(-1.0, r0)?;
        for k in 0..m {
            hm[(k, l)] = modes[k].inner(&dr)? / delta;
        }
    }
    let sym = (&hm + hm.transpose()) * 0.5;
    Ok(SymmetricEigen::new(sym))
}

fn chi_mass(u: &Field, peaks: &PeakSet) -> f64 {
    let chi = chi_weights(u.grid(), peaks);
    u.values().iter().zip(&chi).map(|(v, c)| c * v * v).sum::<f64>() * u.grid().cell_volume()
}

/// Penalized multi-peak flow from γ₀.
///
/// Soft modes are the translations of each peak and transfers of mass between peaks.
/// While the residual off the soft modes dominates, an iteration is a backtracking step
/// of the projected flow on their complement, which lowers Γ_ε. Otherwise it is a
/// capped step toward the critical point along the soft modes: Newton on strongly
/// concave directions, adaptive gradient ascent on the rest. With `saddle = false`
/// every iteration is a plain descent step.
#[allow(clippy::too_many_arguments)]
pub fn run_multipeak(
    model: &NonlinearityModel,
    spec: &PotentialSpec,
    params: &PenalizationParams,
    bump: &MultiBumpSpec,
    template: &Field,
    grid: Grid,
    cfg: &MultipeakConfig,
) -> Result<MultipeakRun> {
    if !model.satisfies_f5() {
        return Err(invalid("the multi-peak flow needs a model with a logarithmic term"));
    }
    if grid.dim() != model.dim() || bump.dim != grid.dim() {
        return Err(Error::IncompatibleGrids);
    }
    if (bump.eps - params.eps).abs() > 1e-15 * params.eps {
        return Err(invalid("bump and penalization use different epsilon"));
    }
    if !bump.in_region(spec) {
        return Err(invalid("every eps*p_j must lie within delta0 of O"));
    }
    if cfg.upsilon_every == 0 {
        return Err(invalid("upsilon_every must be positive"));
    }
    let asymptotic = params.eps < params.eps_limit(spec.delta0) && params.l_sep >= 100.0 * params.r0;
    if cfg.strict && !asymptotic {
        return Err(invalid(format!(
            "epsilon {} is outside the asymptotic regime (eps_L = {:e}, L/R0 = {})",
            params.eps,
            params.eps_limit(spec.delta0),
            params.l_sep / params.r0
        )));
    }
    let ell = bump.ell();
    let alpha = bump.alpha;
    let eps = params.eps;
    let cutoff = Cutoff::semiclassical(spec.delta0, eps)?;
    let u0 = gamma0(bump, template, grid, cutoff)?;
    let k0 = cfg.truncation.unwrap_or(2.0 * u0.max_abs());
    let tm = model.truncate(k0)?;
    let mut f = PenalizedFunctional::new(grid, tm, spec.clone(), *params);
    let mut ucfg = UpsilonConfig::new(ell, params.r0, params.rho1)?;
    ucfg.gap = cfg.gap;
    ucfg.eps = Some(eps);
    let mut peaks = upsilon(&u0, &ucfg)?;
    f.set_peaks(peaks.clone());

    let flow = cfg.flow;
    let h = grid.spacing();
    let mut u = u0;
    let mut dt = flow.initial_dt(&grid);
    let mut trajectory = PeakTrajectory { dim: grid.dim(), rows: Vec::new() };
    let mut modes: Vec<Field> = Vec::new();
    let mut eig: Option<SymmetricEigen<f64, nalgebra::Dyn>> = None;
    let mut cap = 0.0;
    let mut tau = 1.0;
    let mut prev_flat: Option<f64> = None;
    let mut aborted = None;
    let mut stalled = false;
    let mut converged = false;
    let mut mass_error: f64 = 0.0;
    let mut iter = 0;
    let mut descent_log = Vec::new();
    let (mut gamma, mut lambda, mut r) = tangent_residual(&f, &u)?;
    loop {
        let refresh = iter % cfg.upsilon_every == 0;
        if refresh {
            if iter > 0 {
                match upsilon(&u, &ucfg) {
                    Ok(p) => {
                        peaks = p;
                        f.set_peaks(peaks.clone());
                        (gamma, lambda, r) = tangent_residual(&f, &u)?;
                    }
                    Err(e) => {
                        aborted = Some(e);
                        break;
                    }
                }
            }
            if cfg.saddle {
                let (m, tmin) = soft_modes(&u, &peaks)?;
                cap = cfg.max_shift_cells * h * tmin;
                eig = if m.is_empty() { None } else { Some(soft_hessian(&f, &u, alpha, &m, &r)?) };
                prev_flat = None;
                modes = m;
            }
            trajectory.rows.push(TrajectoryRow {
                iter,
                positions: peaks.scaled(eps),
                gamma,
                residual: r.mass().sqrt(),
                phi: f.phi(&u)?.0,
                lambda,
                tail_mass: chi_mass(&u, &peaks),
            });
        }
        let residual = r.mass().sqrt();
        if residual <= flow.tol {
            converged = true;
            break;
        }
        if iter >= flow.max_iter {
            break;
        }
        let a: Vec<f64> = modes.iter().map(|q| q.inner(&r)).collect::<Result<_>>()?;
        let soft_norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let hard_norm = (residual * residual - soft_norm * soft_norm).max(0.0).sqrt();
        let relaxed = hard_norm <= (0.5 * flow.tol).max(cfg.relax * soft_norm);
        let mut moved = false;
        let mut soft_moved = false;
        let mut v = u.clone();
        if !(relaxed && eig.is_some()) {
            // descent on the complement of the soft modes
            let (_, g) = f.value_grad(&u)?;
            let mut constraints = vec![u.clone()];
            constraints.extend(modes.iter().cloned());
            let d = constrained_direction(&g, &constraints, flow.metric, &f.diagonal(&u))?;
            let mut step = dt.min(flow.dt_max);
            while step >= flow.dt_min {
                let mut trial = u.axpy(-step, &d)?;
                if flow.nonnegative {
                    trial = trial.abs();
                }
                let trial = trial.normalize(alpha)?;
                let change = f.value_change(&u, &trial)? - 0.5 * lambda * mass_change(&u, &trial);
                if change < 0.0 {
                    v = trial;
                    moved = true;
                    dt = (step * flow.grow).min(flow.dt_max);
                    break;
                }
                step *= flow.backtrack;
            }
            if !moved {
                dt = flow.dt_min.max(dt * flow.backtrack);
            }
        }
        if let (Some(e), false) = (&eig, moved) {
            // Newton along strongly concave directions, bold-driver ascent along the rest
            let kmax = e.eigenvalues.iter().fold(0.0f64, |m, k| m.max(k.abs()));
            let mut c = vec![0.0; modes.len()];
            let mut flat = 0.0;
            for (i, &kappa) in e.eigenvalues.iter().enumerate() {
                let ev = e.eigenvectors.column(i);
                let proj: f64 = (0..modes.len()).map(|k| ev[k] * a[k]).sum();
                let coef = if kappa < -0.1 * kmax {
                    -proj / kappa
                } else {
                    flat += proj * proj;
                    tau * proj
                };
                for k in 0..modes.len() {
                    c[k] += coef * ev[k];
                }
            }
            let flat = flat.sqrt();
            if let Some(prev) = prev_flat {
                tau = if flat < prev { (tau * 1.2).min(1e6) } else { tau * 0.5 };
            }
            prev_flat = Some(flat);
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                let scale = if norm > cap { cap / norm } else { 1.0 };
                let mut w = u.clone();
                for (q, ck) in modes.iter().zip(&c) {
                    w = w.axpy(scale * ck, q)?;
                }
                if flow.nonnegative {
                    w = w.abs();
                }
                v = w.normalize(alpha)?;
                soft_moved = true;
            }
        }
        if !moved && !soft_moved {
            stalled = true;
            break;
        }
        u = v;
        mass_error = mass_error.max((u.mass() - alpha).abs() / alpha);
        iter += 1;
        let before = gamma;
        (gamma, lambda, r) = tangent_residual(&f, &u)?;
        if moved {
            descent_log.push((before, gamma));
        }
    }
    let (e, phi, psi) = f.parts(&u)?;
    let residual = r.mass().sqrt();
    let soft_residual = modes
        .iter()
        .map(|q| q.inner(&r).map(|x| x * x))
        .sum::<Result<f64>>()?
        .sqrt();
    if trajectory.rows.last().map(|row| row.iter) != Some(iter) {
        trajectory.rows.push(TrajectoryRow {
            iter,
            positions: peaks.scaled(eps),
            gamma,
            residual,
            phi,
            lambda,
            tail_mass: chi_mass(&u, &peaks),
        });
    }
    Ok(MultipeakRun {
        peak_masses: voronoi_masses(&u, &peaks),
        lambda,
        gamma: e + phi + psi,
        phi,
        psi,
        residual,
        soft_residual,
        converged,
        stalled,
        iterations: iter,
        peaks,
        trajectory,
        asymptotic_regime: asymptotic,
        truncation: k0,
        mass_error,
        aborted,
        descent_log,
        u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Gausson;
    use crate::solver::{run_groundstate, Init};

    fn gausson_field(grid: Grid, sigma: f64, alpha: f64, center: f64) -> Field {
        let g = Gausson::new(sigma, alpha, 1).unwrap();
        Field::from_fn(grid, |x| g.at(x, &[center]))
    }

    #[test]
    fn separation_examples() {
        let (xi, _) = separation(&[[0.0, 0.0], [3.0, 0.0]], 1, None);
        assert_eq!(xi, 3.0);
        let (xi2, _) = separation(&[[0.0, 0.0], [7.5, 0.0]], 1, None);
        assert_eq!(xi2, 2.5 * xi);
        let (xi, xi1) = separation(&[[0.0, 0.0], [5.0, 0.0], [11.0, 0.0]], 1, None);
        assert_eq!(xi, 5.0);
        assert!((4.0..=6.0).contains(&xi1), "{xi1}");
        let (_, capped) = separation(&[[0.0, 0.0], [50.0, 0.0]], 1, Some(0.01));
        assert!((capped - 0.01f64.powf(-0.75)).abs() <= 1.0);
    }

    #[test]
    fn xi1_window_for_up_to_four_points() {
        let pts = [[0.0, 0.0], [2.0, 1.0], [4.5, -3.0], [-1.0, 6.0]];
        for l in 2..=4 {
            for eps in [0.01, 0.1, 0.5] {
                let (xi, xi1) = separation(&pts[..l], 2, Some(eps));
                let target = xi.min(f64::powf(eps, -0.75));
                assert!((xi1 - target).abs() <= 1.0, "{l} {eps} {xi1} {target}");
            }
        }
    }

    #[test]
    fn upsilon_single_and_double() {
        let grid = Grid::new(1, 12.0, 0.05).unwrap();
        let u = gausson_field(grid, 2.0, 1.0, 0.0);
        let cfg = UpsilonConfig::new(1, 1.0, 0.5).unwrap();
        let p = upsilon(&u, &cfg).unwrap();
        assert!(p.points[0][0].abs() <= 0.05);
        let two = gausson_field(grid, 2.0, 1.0, -5.0).axpy(1.0, &gausson_field(grid, 2.0, 1.0, 5.0)).unwrap();
        let cfg2 = UpsilonConfig::new(2, 1.0, 0.5).unwrap();
        let p2 = upsilon(&two, &cfg2).unwrap();
        assert!((p2.points[0][0] + 5.0).abs() <= 2.0);
        assert!((p2.points[1][0] - 5.0).abs() <= 2.0);
        assert_eq!(p2.xi, p2.points[1][0] - p2.points[0][0]);
        let err = upsilon(&u, &cfg2).unwrap_err();
        assert_eq!(err, Error::PeaksUnresolved { expected: 2, found: 1 });
    }

    #[test]
    fn upsilon_translation_and_order() {
        let grid = Grid::new(1, 12.0, 0.05).unwrap();
        let two = gausson_field(grid, 2.0, 1.0, -4.0).axpy(0.7, &gausson_field(grid, 2.0, 1.0, 3.5)).unwrap();
        let cfg = UpsilonConfig::new(2, 1.0, 0.5).unwrap();
        let p = upsilon(&two, &cfg).unwrap();
        let shifted = two.shift(&[17]).unwrap();
        let q = upsilon(&shifted, &cfg).unwrap();
        for (a, b) in p.points.iter().zip(&q.points) {
            assert!((b[0] - a[0] - 17.0 * 0.05).abs() < 1e-12);
        }
        let rev: Vec<usize> = (0..grid.len()).rev().collect();
        assert_eq!(upsilon_with_order(&two, &cfg, &rev).unwrap(), p);
    }

    #[test]
    fn upsilon_2d() {
        let grid = Grid::new(2, 8.0, 0.2).unwrap();
        let g = Gausson::new(2.0, 1.0, 2).unwrap();
        let u = Field::from_fn(grid, |x| g.at(x, &[-3.0, 1.0]) + g.at(x, &[3.0, -1.0]));
        let cfg = UpsilonConfig::new(2, 1.0, 0.5).unwrap();
        let p = upsilon(&u, &cfg).unwrap();
        assert!((p.points[0][0] + 3.0).abs() < 0.2 && (p.points[0][1] - 1.0).abs() < 0.2);
        let q = upsilon(&u.shift(&[2, -3]).unwrap(), &cfg).unwrap();
        assert!((q.points[0][0] - p.points[0][0] - 0.4).abs() < 1e-12);
        assert!((q.points[0][1] - p.points[0][1] + 0.6).abs() < 1e-12);
    }

    fn template(grid: Grid, sigma: f64, mass: f64) -> Field {
        gausson_field(grid, sigma, mass, 0.0).normalize(mass).unwrap()
    }

    #[test]
    fn gamma0_mass_and_permutation() {
        let grid = Grid::new(1, 16.0, 0.05).unwrap();
        let t = template(grid, 2.0, 0.5);
        let a = MultiBumpSpec::new(vec![[-5.0, 0.0], [5.0, 0.0]], vec![0.6, 0.4], 0.1, 1.0, 1, 8.0).unwrap();
        let b = MultiBumpSpec::new(vec![[5.0, 0.0], [-5.0, 0.0]], vec![0.4, 0.6], 0.1, 1.0, 1, 8.0).unwrap();
        let cut = Cutoff::semiclassical(2.0, 0.1).unwrap();
        let ga = gamma0(&a, &t, grid, cut).unwrap();
        assert!((ga.mass() - 1.0).abs() < 1e-12);
        assert_eq!(ga, gamma0(&b, &t, grid, cut).unwrap());
        let one = MultiBumpSpec::uniform(vec![[0.0, 0.0]], 0.1, 0.5, 1, 1.0).unwrap();
        let g1 = gamma0(&one, &t, grid, cut).unwrap();
        let direct = place_bump(grid, |x| t.sample(x), &[0.0], cut).unwrap().normalize(0.5).unwrap();
        assert_eq!(g1, direct);
        assert!(MultiBumpSpec::new(vec![[0.0, 0.0], [3.0, 0.0]], vec![0.5, 0.5], 0.1, 1.0, 1, 8.0).is_err());
        assert!(MultiBumpSpec::new(vec![[0.0, 0.0], [9.0, 0.0]], vec![0.7, 0.5], 0.1, 1.0, 1, 8.0).is_err());
    }

    #[test]
    fn gamma0_energy_near_twice_template() {
        let model = NonlinearityModel::pure_log(2.0, 1).unwrap();
        let grid = Grid::new(1, 16.0, 0.05).unwrap();
        let t = template(grid, 2.0, 0.5);
        let bump = MultiBumpSpec::uniform(vec![[-5.0, 0.0], [5.0, 0.0]], 0.1, 1.0, 1, 8.0).unwrap();
        let g = gamma0(&bump, &t, grid, Cutoff::none()).unwrap();
        let e_t = energy_j(&t, &model);
        let xi: f64 = 10.0;
        assert!((energy_j(&g, &model) - 2.0 * e_t).abs() < 10.0 * (-2.0 * xi * xi / 8.0).exp() + 1e-10);
        // componentwise energy is maximal at equal weights
        for s in [0.2f64, 0.4, 0.6, 0.9] {
            let parts = energy_j(&t.scaled((2.0 * s).sqrt()), &model)
                + energy_j(&t.scaled((2.0 * (1.0 - s)).sqrt()), &model);
            assert!(parts < 2.0 * e_t);
        }
    }

    #[test]
    fn mass_fractions_examples() {
        let grid = Grid::new(1, 16.0, 0.05).unwrap();
        let t = template(grid, 2.0, 0.5);
        let sym = MultiBumpSpec::uniform(vec![[-5.0, 0.0], [5.0, 0.0]], 0.1, 1.0, 1, 8.0).unwrap();
        let g = gamma0(&sym, &t, grid, Cutoff::none()).unwrap();
        let peaks = PeakSet::new(vec![[-5.0, 0.0], [5.0, 0.0]], 1, None, 1.0).unwrap();
        let n = mass_fractions(&g, &peaks, 2.5).unwrap();
        assert!((n[0] - 0.5).abs() < 1e-6 && (n[1] - 0.5).abs() < 1e-6);
        assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let skew = MultiBumpSpec::new(vec![[-5.0, 0.0], [5.0, 0.0]], vec![0.6, 0.4], 0.1, 1.0, 1, 8.0).unwrap();
        let g = gamma0(&skew, &t, grid, Cutoff::none()).unwrap();
        let n = mass_fractions(&g, &peaks, 2.5).unwrap();
        assert!((n[0] - 0.6).abs() < 1e-3 && (n[1] - 0.4).abs() < 1e-3);
        let single = PeakSet::new(vec![[0.0, 0.0]], 1, None, 1.0).unwrap();
        assert_eq!(mass_fractions(&t, &single, 3.0).unwrap(), vec![1.0]);
        assert!(mass_fractions(&g, &peaks, 6.0).is_err());
    }

    #[test]
    fn tail_mass_examples() {
        let grid = Grid::new(1, 12.0, 0.01).unwrap();
        let u = gausson_field(grid, 2.0, 1.0, 0.0);
        let peaks = PeakSet::new(vec![[0.0, 0.0]], 1, None, 1.0).unwrap();
        assert_eq!(tail_mass(&u, &peaks, 30.0).unwrap(), 0.0);
        // u = π^{−1/4}e^{−x²/2}: ∫_{|x|>4} (x² + 1)u² = (3/2)erfc(4) + 4e^{−16}/√π
        let erfc4 = statrs::function::erf::erfc(4.0);
        let exact = 1.5 * erfc4 + 4.0 * (-16.0f64).exp() / std::f64::consts::PI.sqrt();
        assert!((tail_mass(&u, &peaks, 4.0).unwrap() - exact).abs() < 1e-6);
        let mut prev = f64::INFINITY;
        for k in 1..40 {
            let q = tail_mass(&u, &peaks, 0.25 * k as f64).unwrap();
            assert!(q <= prev);
            prev = q;
        }
    }

    #[test]
    fn interaction_deficit_examples() {
        let model = NonlinearityModel::pure_log(2.0, 1).unwrap();
        let grid = Grid::new(1, 20.0, 0.05).unwrap();
        let t = template(grid, 2.0, 1.0);
        let (d1, xi1) = interaction_deficit(&model, &t, &[[0.0, 0.0]], 1.0).unwrap();
        assert_eq!(d1, 0.0);
        assert!(xi1.is_infinite());
        let (d6, _) = interaction_deficit(&model, &t, &[[-3.0, 0.0], [3.0, 0.0]], 1.0).unwrap();
        let (d8, xi) = interaction_deficit(&model, &t, &[[-4.0, 0.0], [4.0, 0.0]], 1.0).unwrap();
        assert!((xi - 8.0).abs() < 1e-12);
        assert!(d6 > d8 && d8 > 0.0, "{d6} {d8}");
    }

    #[test]
    fn rho1_and_r0() {
        let model = NonlinearityModel::pure_log(2.0, 1).unwrap();
        // sup (2 ln s + t)/s⁴ at 2 ln s + t = 1/2
        let t: f64 = 1.5;
        let s = ((0.5 - t) / 2.0).exp();
        assert!((ct_constant(&model, t) - 0.5 / s.powi(4)).abs() < 1e-8);
        let r = rho1(&model, t, 1.0, 2).unwrap();
        assert!(r > 0.0 && r <= 0.25);
        let grid = Grid::new(1, 12.0, 0.05).unwrap();
        let tpl = template(grid, 2.0, 0.5);
        let r0 = calibrate_r0(&tpl, r, 2).unwrap();
        let inside: f64 = tpl
            .values()
            .iter()
            .enumerate()
            .filter(|(k, _)| grid.coord(*k).abs() <= 0.5 * r0)
            .map(|(_, v)| v * v)
            .sum::<f64>()
            * 0.05;
        assert!(inside.sqrt() > 0.75 * r);
        assert!(calibrate_r0(&tpl, 10.0, 2).is_err());
    }

    #[test]
    fn constant_potential_single_peak_matches_autonomous() {
        let model = NonlinearityModel::pure_log(2.0, 1).unwrap();
        let grid = Grid::new(1, 12.0, 0.05).unwrap();
        let v0 = 1.5;
        let spec = PotentialSpec::constant(v0, 100.0);
        let gs = run_groundstate(&model, 1.0, grid, Init::Gaussian { width: 1.0 }, &FlowConfig::default()).unwrap();
        let params = PenalizationParams::new(0.01, 10.0, 1.0, 0.4).unwrap();
        let bump = MultiBumpSpec::uniform(vec![[0.0, 0.0]], 0.01, 1.0, 1, 10.0).unwrap();
        let run = run_multipeak(&model, &spec, &params, &bump, &gs.u, grid, &MultipeakConfig::default()).unwrap();
        assert!(run.converged, "{}", run.residual);
        assert!((run.lambda - (gs.lambda + v0)).abs() < 1e-5, "{} {}", run.lambda, gs.lambda);
        assert!(run.u.axpy(-1.0, &gs.u).unwrap().mass().sqrt() < 1e-5);
        assert_eq!(run.phi, 0.0);
        assert!(run.mass_error < 1e-12);
        assert!(!run.asymptotic_regime);
        let strict = MultipeakConfig { strict: true, ..MultipeakConfig::default() };
        assert!(run_multipeak(&model, &spec, &params, &bump, &gs.u, grid, &strict).is_err());
    }
}
