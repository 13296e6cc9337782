//! Energy functionals and their L² gradients: the autonomous energy J, the
//! weighted potential data, the penalizations Ψ_ε and Φ_ε and the full Γ_ε.

use crate::error::{invalid, Error, Result};
use crate::field::{smoothstep, smoothstep_d, Field, Grid};
use crate::model::NonlinearityModel;
use crate::multipeak::PeakSet;

#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// V ≡ value
    Const { value: f64 },
    /// V = base + amplitude·e^{−|x|²/width²}
    GaussBump { base: f64, amplitude: f64, width: f64 },
    /// V = max(peak − |x|², floor)
    NegQuadratic { peak: f64, floor: f64 },
    /// Radial table r ↦ V(r), piecewise linear, constant beyond the ends.
    Table { radii: Vec<f64>, values: Vec<f64> },
}

/// Potential together with its local-maximum data.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    /// Radius of the ball on which V ≥ 1 is required and outside which Ṽ grows.
    pub m0: f64,
    /// Ω = B(0, omega_radius)
    pub omega_radius: f64,
    /// O = B(0, o_radius)
    pub o_radius: f64,
    pub delta0: f64,
}

impl PotentialSpec {
    pub fn constant(value: f64, m0: f64) -> Self {
        Self {
            kind: PotentialKind::Const { value },
            m0,
            omega_radius: 1.0,
            o_radius: 0.5,
            delta0: 0.1,
        }
    }

    pub fn new(kind: PotentialKind, m0: f64, omega_radius: f64, o_radius: f64, delta0: f64) -> Result<Self> {
        if !(m0 > 0.0 && omega_radius > 0.0 && o_radius > 0.0 && delta0 > 0.0) {
            return Err(invalid("potential radii and delta0 must be positive"));
        }
        if let PotentialKind::Table { radii, values } = &kind {
            if radii.len() != values.len() || radii.len() < 2 {
                return Err(invalid("potential table needs at least two (r, V) pairs"));
            }
            if radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] < 0.0 {
                return Err(invalid("potential table radii must be increasing and nonnegative"));
            }
        }
        if let PotentialKind::GaussBump { width, .. } = kind {
            if !(width > 0.0) {
                return Err(invalid("gauss_bump width must be positive"));
            }
        }
        Ok(Self {
            kind,
            m0,
            omega_radius,
            o_radius,
            delta0,
        })
    }

    /// V at physical point `x`.
    pub fn value(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        match &self.kind {
            PotentialKind::Const { value } => *value,
            PotentialKind::GaussBump {
                base,
                amplitude,
                width,
            } => base + amplitude * (-r2 / (width * width)).exp(),
            PotentialKind::NegQuadratic { peak, floor } => (peak - r2).max(*floor),
            PotentialKind::Table { radii, values } => {
                let r = r2.sqrt();
                if r <= radii[0] {
                    return values[0];
                }
                let last = radii.len() - 1;
                if r >= radii[last] {
                    return values[last];
                }
                let k = radii.partition_point(|&q| q <= r) - 1;
                let t = (r - radii[k]) / (radii[k + 1] - radii[k]);
                values[k] + t * (values[k + 1] - values[k])
            }
        }
    }

    /// Ṽ: V inside B(0, M0), max{V, |x|²} outside.
    pub fn tilde(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        let v = self.value(x);
        if r2.sqrt() < self.m0 {
            v
        } else {
            v.max(r2)
        }
    }

    /// V̄ = V − Ṽ ≤ 0.
    pub fn bar(&self, x: &[f64]) -> f64 {
        self.value(x) - self.tilde(x)
    }

    fn sample_ball(&self, dim: usize, radius: f64, f: impl FnMut(&[f64])) {
        let mut f = f;
        let m = 400;
        if dim == 1 {
            for i in 0..=m {
                let x = -radius + 2.0 * radius * i as f64 / m as f64;
                f(&[x]);
            }
        } else {
            let m2 = 120;
            for i in 0..=m2 {
                for j in 0..=m2 {
                    let x = -radius + 2.0 * radius * i as f64 / m2 as f64;
                    let y = -radius + 2.0 * radius * j as f64 / m2 as f64;
                    if x * x + y * y <= radius * radius * (1.0 + 1e-12) {
                        f(&[x, y]);
                    }
                }
            }
        }
    }

    fn sample_sphere(&self, dim: usize, radius: f64, mut f: impl FnMut(&[f64])) {
        if dim == 1 {
            f(&[radius]);
            f(&[-radius]);
        } else {
            for k in 0..720 {
                let t = k as f64 * std::f64::consts::PI / 360.0;
                f(&[radius * t.cos(), radius * t.sin()]);
            }
        }
    }

    /// V0 = max of V over the closure of Ω (sampled).
    pub fn v0(&self, dim: usize) -> f64 {
        let mut m = f64::NEG_INFINITY;
        self.sample_ball(dim, self.omega_radius, |x| m = m.max(self.value(x)));
        m
    }

    /// μ0 = min of V over O^{3δ0} (sampled).
    pub fn mu0(&self, dim: usize) -> f64 {
        let mut m = f64::INFINITY;
        self.sample_ball(dim, self.o_radius + 3.0 * self.delta0, |x| m = m.min(self.value(x)));
        m
    }

    /// Largest V on the sampled boundary of Ω.
    pub fn boundary_max(&self, dim: usize) -> f64 {
        let mut m = f64::NEG_INFINITY;
        self.sample_sphere(dim, self.omega_radius, |x| m = m.max(self.value(x)));
        m
    }

    /// Check the local-maximum structure required by the multi-peak problem.
    pub fn validate_local_max(&self, dim: usize) -> Result<()> {
        let v0 = self.v0(dim);
        let vb = self.boundary_max(dim);
        if !(v0 > vb) {
            return Err(invalid(format!(
                "potential has no strict interior maximum on Omega: max {v0} vs boundary {vb}"
            )));
        }
        let mut inf = f64::INFINITY;
        self.sample_ball(dim, self.m0, |x| inf = inf.min(self.value(x)));
        if inf < 1.0 - 1e-9 {
            return Err(invalid(format!(
                "potential must satisfy V >= 1 on B(0, M0), found {inf}"
            )));
        }
        if self.mu0(dim) < 1.0 - 1e-9 {
            return Err(invalid("potential minimum over the O neighbourhood is below 1"));
        }
        Ok(())
    }
}

/// H: 1 on |s| ≤ 1, 0 on |s| ≥ 3.
#[inline]
pub fn cutoff_h(s: f64) -> f64 {
    1.0 - smoothstep((s.abs() - 1.0) / 2.0)
}

#[inline]
pub fn cutoff_h_d(s: f64) -> f64 {
    -s.signum() * 0.5 * smoothstep_d((s.abs() - 1.0) / 2.0)
}

/// ψ on local masses: 0 below ρ1²/16, 1 above ρ1²/2.
#[inline]
pub fn cutoff_psi(m: f64, rho1: f64) -> f64 {
    let lo = rho1 * rho1 / 16.0;
    let hi = rho1 * rho1 / 2.0;
    smoothstep((m - lo) / (hi - lo))
}

/// χ as a function of |y|: 0 inside 1/10, 1 outside 1/5.
#[inline]
pub fn cutoff_chi(r: f64) -> f64 {
    smoothstep((r - 0.1) / 0.1)
}

#[inline]
pub fn cutoff_chi_d(r: f64) -> f64 {
    smoothstep_d((r - 0.1) / 0.1) / 0.1
}

/// ε, separation floor L, ball radius R0, mass floor ρ1, and which penalties are active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenalizationParams {
    pub eps: f64,
    pub l_sep: f64,
    pub r0: f64,
    pub rho1: f64,
    pub include_phi: bool,
    pub include_psi: bool,
}

impl PenalizationParams {
    pub fn new(eps: f64, l_sep: f64, r0: f64, rho1: f64) -> Result<Self> {
        if !(eps > 0.0 && l_sep > 0.0 && r0 > 0.0 && rho1 > 0.0) {
            return Err(invalid("epsilon, L, R0 and rho1 must be positive"));
        }
        Ok(Self {
            eps,
            l_sep,
            r0,
            rho1,
            include_phi: true,
            include_psi: true,
        })
    }

    /// ε_L = (δ0/(4L))⁴
    pub fn eps_limit(&self, delta0: f64) -> f64 {
        (delta0 / (4.0 * self.l_sep)).powi(4)
    }

    /// ε^{−3/4}
    pub fn xi_cap(&self) -> f64 {
        self.eps.powf(-0.75)
    }
}

/// Anything with a value and an L² gradient on fields.
pub trait Functional {
    fn value(&self, u: &Field) -> Result<f64>;

    fn value_grad(&self, u: &Field) -> Result<(f64, Field)>;

    /// value(v) − value(u), computed without cancellation for nearby fields.
    fn value_change(&self, u: &Field, v: &Field) -> Result<f64> {
        Ok(self.value(v)? - self.value(u)?)
    }

    /// Nonnegative pointwise weight approximating the zeroth-order part of the Hessian.
    fn diagonal(&self, u: &Field) -> Vec<f64>;
}

/// ½∫|∇u|² − ∫F(u)
pub fn energy_j(u: &Field, model: &NonlinearityModel) -> f64 {
    let pot: f64 = u.values().iter().map(|&v| model.big_f(v)).sum::<f64>() * u.grid().cell_volume();
    0.5 * u.dirichlet() - pot
}

/// −Δu − f(u)
pub fn grad_j(u: &Field, model: &NonlinearityModel) -> Field {
    let mut g = u.laplacian();
    for (gv, &uv) in g.values_mut().iter_mut().zip(u.values()) {
        *gv = -*gv - model.f(uv);
    }
    g
}

/// Σ_edges (d_v² − d_u²)/h² · h^N with each edge difference factored.
pub fn dirichlet_change(u: &Field, v: &Field) -> Result<f64> {
    u.check_grid(v)?;
    let grid = u.grid();
    let n = grid.n();
    let (a, b) = (u.values(), v.values());
    let mut acc = 0.0;
    let mut line = |idx: &dyn Fn(usize) -> usize| {
        let (mut pa, mut pb) = (0.0, 0.0);
        for k in 0..=n {
            let (ca, cb) = if k < n { (a[idx(k)], b[idx(k)]) } else { (0.0, 0.0) };
            let da = ca - pa;
            let db = cb - pb;
            acc += (db - da) * (db + da);
            pa = ca;
            pb = cb;
        }
    };
    if grid.dim() == 1 {
        line(&|k| k);
    } else {
        for i in 0..n {
            line(&|k| i * n + k);
            line(&|k| k * n + i);
        }
    }
    let h = grid.spacing();
    Ok(acc / (h * h) * grid.cell_volume())
}

fn potential_change(model: &NonlinearityModel, u: &Field, v: &Field) -> f64 {
    u.values()
        .iter()
        .zip(v.values())
        .map(|(&a, &b)| model.big_f_diff(a, b))
        .sum::<f64>()
        * u.grid().cell_volume()
}

/// J + ½c∫u², the energy with a constant potential c.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Autonomous {
    pub model: NonlinearityModel,
    pub shift: f64,
}

impl Autonomous {
    pub fn new(model: NonlinearityModel) -> Self {
        Self { model, shift: 0.0 }
    }

    pub fn with_shift(model: NonlinearityModel, shift: f64) -> Self {
        Self { model, shift }
    }
}

impl Functional for Autonomous {
    fn value(&self, u: &Field) -> Result<f64> {
        Ok(energy_j(u, &self.model) + 0.5 * self.shift * u.mass())
    }

    fn value_grad(&self, u: &Field) -> Result<(f64, Field)> {
        let mut g = grad_j(u, &self.model);
        if self.shift != 0.0 {
            for (gv, &uv) in g.values_mut().iter_mut().zip(u.values()) {
                *gv += self.shift * uv;
            }
        }
        Ok((self.value(u)?, g))
    }

    fn value_change(&self, u: &Field, v: &Field) -> Result<f64> {
        let d = dirichlet_change(u, v)?;
        let m: f64 = u
            .values()
            .iter()
            .zip(v.values())
            .map(|(&a, &b)| (b - a) * (b + a))
            .sum::<f64>()
            * u.grid().cell_volume();
        Ok(0.5 * d + 0.5 * self.shift * m - potential_change(&self.model, u, v))
    }

    fn diagonal(&self, u: &Field) -> Vec<f64> {
        u.values()
            .iter()
            .map(|&v| self.model.negative_slope(v) + self.shift.max(0.0))
            .collect()
    }
}

/// Ψ_ε = ½∫V̄(εx) H(e^{ε|x|²}u) u² and its gradient.
pub fn psi_eps(u: &Field, spec: &PotentialSpec, params: &PenalizationParams) -> (f64, Field) {
    let grid = *u.grid();
    let d = grid.dim();
    let eps = params.eps;
    let mut g = Field::zeros(grid);
    let mut val = 0.0;
    for (k, (&uv, gv)) in u.values().iter().zip(g.values_mut()).enumerate() {
        if uv == 0.0 {
            continue;
        }
        let p = grid.point(k);
        let scaled = [eps * p[0], eps * p[1]];
        let vb = spec.bar(&scaled[..d]);
        if vb == 0.0 {
            continue;
        }
        let (v, dv) = psi_point(uv, eps * (p[0] * p[0] + p[1] * p[1]), vb);
        val += v;
        *gv = dv;
    }
    (val * grid.cell_volume(), g)
}

#[inline]
fn psi_point(uv: f64, eps_r2: f64, vb: f64) -> (f64, f64) {
    let lw = eps_r2 + uv.abs().ln();
    if lw >= 3f64.ln() {
        return (0.0, 0.0);
    }
    let w = lw.exp() * uv.signum();
    let hv = cutoff_h(w);
    (
        0.5 * vb * hv * uv * uv,
        vb * (hv * uv + 0.5 * cutoff_h_d(w) * w * uv),
    )
}

/// Φ_ε = (ξ₁∫χ_u u² − 1)₊² with frozen peaks, and its gradient.
pub fn phi_eps(u: &Field, peaks: Option<&PeakSet>) -> Result<(f64, Field)> {
    let peaks = peaks.ok_or(Error::PeaksRequired)?;
    let grid = *u.grid();
    let chi = chi_weights(&grid, peaks);
    let xi1 = peaks.xi1;
    let integral: f64 = u
        .values()
        .iter()
        .zip(&chi)
        .map(|(v, c)| c * v * v)
        .sum::<f64>()
        * grid.cell_volume();
    let slack = xi1 * integral - 1.0;
    if slack <= 0.0 {
        return Ok((0.0, Field::zeros(grid)));
    }
    let coef = 4.0 * slack * xi1;
    let g: Vec<f64> = u.values().iter().zip(&chi).map(|(v, c)| coef * c * v).collect();
    Ok((slack * slack, Field::from_values(grid, g)?))
}

/// χ_u(x) = Π_j χ((x − Υ_j)/ξ₁) on the grid.
pub fn chi_weights(grid: &Grid, peaks: &PeakSet) -> Vec<f64> {
    let d = grid.dim();
    let xi1 = peaks.xi1;
    (0..grid.len())
        .map(|k| {
            let p = grid.point(k);
            peaks
                .points
                .iter()
                .map(|c| {
                    let r2: f64 = (0..d).map(|a| (p[a] - c[a]).powi(2)).sum();
                    cutoff_chi(r2.sqrt() / xi1)
                })
                .product()
        })
        .collect()
}

/// Γ_ε on a fixed grid in rescaled coordinates; Ṽ(εx) and V̄(εx) are cached.
#[derive(Debug, Clone)]
pub struct PenalizedFunctional {
    pub model: NonlinearityModel,
    pub spec: PotentialSpec,
    pub params: PenalizationParams,
    pub peaks: Option<PeakSet>,
    grid: Grid,
    vtilde: Vec<f64>,
    vbar: Vec<f64>,
    eps_r2: Vec<f64>,
}

impl PenalizedFunctional {
    pub fn new(
        grid: Grid,
        model: NonlinearityModel,
        spec: PotentialSpec,
        params: PenalizationParams,
    ) -> Self {
        let d = grid.dim();
        let eps = params.eps;
        let mut vtilde = Vec::with_capacity(grid.len());
        let mut vbar = Vec::with_capacity(grid.len());
        let mut eps_r2 = Vec::with_capacity(grid.len());
        for p in grid.points() {
            let s = [eps * p[0], eps * p[1]];
            vtilde.push(spec.tilde(&s[..d]));
            vbar.push(spec.bar(&s[..d]));
            eps_r2.push(eps * (p[0] * p[0] + p[1] * p[1]));
        }
        Self {
            model,
            spec,
            params,
            peaks: None,
            grid,
            vtilde,
            vbar,
            eps_r2,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn set_peaks(&mut self, peaks: PeakSet) {
        self.peaks = Some(peaks);
    }

    pub fn vtilde(&self) -> &[f64] {
        &self.vtilde
    }

    fn check(&self, u: &Field) -> Result<()> {
        if *u.grid() == self.grid {
            Ok(())
        } else {
            Err(Error::IncompatibleGrids)
        }
    }

    /// ½∫(|∇u|² + Ṽ(εx)u²) − ∫F̄(u)
    pub fn weighted_energy(&self, u: &Field) -> f64 {
        let dv = self.grid.cell_volume();
        let pot: f64 = u
            .values()
            .iter()
            .zip(&self.vtilde)
            .map(|(&v, &w)| 0.5 * w * v * v - self.model.big_f(v))
            .sum();
        0.5 * u.dirichlet() + pot * dv
    }

    pub fn psi(&self, u: &Field) -> (f64, Field) {
        let mut g = Field::zeros(self.grid);
        let mut val = 0.0;
        for (k, gv) in g.values_mut().iter_mut().enumerate() {
            let uv = u.values()[k];
            let vb = self.vbar[k];
            if uv == 0.0 || vb == 0.0 {
                continue;
            }
            let (v, dv) = psi_point(uv, self.eps_r2[k], vb);
            val += v;
            *gv = dv;
        }
        (val * self.grid.cell_volume(), g)
    }

    pub fn phi(&self, u: &Field) -> Result<(f64, Field)> {
        phi_eps(u, self.peaks.as_ref())
    }

    /// Parts of the value: (weighted energy, Φ, Ψ).
    pub fn parts(&self, u: &Field) -> Result<(f64, f64, f64)> {
        self.check(u)?;
        let phi = if self.params.include_phi {
            self.phi(u)?.0
        } else {
            0.0
        };
        let psi = if self.params.include_psi {
            self.psi(u).0
        } else {
            0.0
        };
        Ok((self.weighted_energy(u), phi, psi))
    }
}

impl Functional for PenalizedFunctional {
    fn value(&self, u: &Field) -> Result<f64> {
        let (e, phi, psi) = self.parts(u)?;
        Ok(e + phi + psi)
    }

    fn value_grad(&self, u: &Field) -> Result<(f64, Field)> {
        self.check(u)?;
        let mut g = u.laplacian();
        for ((gv, &uv), &w) in g.values_mut().iter_mut().zip(u.values()).zip(&self.vtilde) {
            *gv = -*gv + w * uv - self.model.f(uv);
        }
        let mut value = self.weighted_energy(u);
        if self.params.include_phi {
            let (p, pg) = self.phi(u)?;
            value += p;
            if p > 0.0 {
                g = g.axpy(1.0, &pg)?;
            }
        }
        if self.params.include_psi {
            let (p, pg) = self.psi(u);
            value += p;
            g = g.axpy(1.0, &pg)?;
        }
        Ok((value, g))
    }

    fn value_change(&self, u: &Field, v: &Field) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        let d = dirichlet_change(u, v)?;
        let m: f64 = u
            .values()
            .iter()
            .zip(v.values())
            .zip(&self.vtilde)
            .map(|((&a, &b), &w)| w * (b - a) * (b + a))
            .sum::<f64>()
            * self.grid.cell_volume();
        let mut change = 0.5 * d + 0.5 * m - potential_change(&self.model, u, v);
        if self.params.include_phi {
            change += self.phi(v)?.0 - self.phi(u)?.0;
        }
        if self.params.include_psi {
            change += self.psi(v).0 - self.psi(u).0;
        }
        Ok(change)
    }

    fn diagonal(&self, u: &Field) -> Vec<f64> {
        u.values()
            .iter()
            .zip(&self.vtilde)
            .map(|(&v, &w)| self.model.negative_slope(v) + w.max(0.0))
            .collect()
    }
}

/// λ = ⟨g, u⟩/∫u² and the tangential residual g − λu.
pub fn lagrange_multiplier(u: &Field, g: &Field) -> Result<(f64, Field)> {
    let m = u.mass();
    if !(m > 0.0) {
        return Err(Error::DegenerateInput("multiplier of a zero field".into()));
    }
    let lambda = g.inner(u)? / m;
    Ok((lambda, g.axpy(-lambda, u)?))
}

/// Multiplier estimates for −Δu = f(u) + λu: (projection, full Dirichlet, half Dirichlet).
pub fn multiplier_formulas(u: &Field, model: &NonlinearityModel) -> Result<(f64, f64, f64)> {
    let alpha = u.mass();
    if !(alpha > 0.0) {
        return Err(Error::DegenerateInput("multiplier of a zero field".into()));
    }
    let (proj, _) = lagrange_multiplier(u, &grad_j(u, model))?;
    let fu: f64 = u.values().iter().map(|&v| model.f(v) * v).sum::<f64>() * u.grid().cell_volume();
    let d = u.dirichlet();
    Ok((proj, (d - fu) / alpha, (0.5 * d - fu) / alpha))
}
