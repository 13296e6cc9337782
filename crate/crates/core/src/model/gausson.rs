use std::f64::consts::PI;

use crate::error::{invalid, Result};

/// Closed-form positive solution of −Δu = σ u log u + λu with ∫u² = α.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gausson {
    pub sigma: f64,
    pub alpha: f64,
    pub dim: usize,
    /// Peak value e^{−λ/σ + N/2}.
    pub amplitude: f64,
    pub lambda: f64,
    /// Energy ½∫|∇u|² − ∫F(u).
    pub energy: f64,
}

impl Gausson {
    pub fn new(sigma: f64, alpha: f64, dim: usize) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(invalid(format!("sigma must be positive, got {sigma}")));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid(format!("alpha must be positive, got {alpha}")));
        }
        if dim != 1 && dim != 2 {
            return Err(invalid(format!("dimension must be 1 or 2, got {dim}")));
        }
        let n = dim as f64;
        let lg = (2.0 * PI / sigma).ln();
        let lambda = 0.5 * sigma * (n + 0.5 * n * lg - alpha.ln());
        let energy = sigma * alpha * ((n + 1.0) / 4.0 - 0.25 * alpha.ln() + n / 8.0 * lg);
        let amplitude = (-lambda / sigma + 0.5 * n).exp();
        Ok(Self {
            sigma,
            alpha,
            dim,
            amplitude,
            lambda,
            energy,
        })
    }

    pub fn radial(&self, r: f64) -> f64 {
        self.amplitude * (-0.25 * self.sigma * r * r).exp()
    }

    pub fn radial_d1(&self, r: f64) -> f64 {
        -0.5 * self.sigma * r * self.radial(r)
    }

    pub fn radial_d2(&self, r: f64) -> f64 {
        let s = self.sigma;
        (0.25 * s * s * r * r - 0.5 * s) * self.radial(r)
    }

    /// Value at a point `x` (length = dim) for a Gausson centred at `center`.
    pub fn at(&self, x: &[f64], center: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        self.amplitude * (-0.25 * self.sigma * r2).exp()
    }

    /// Mass at which the energy vanishes.
    pub fn energy_zero(sigma: f64, dim: usize) -> f64 {
        let n = dim as f64;
        ((n + 1.0) + 0.5 * n * (2.0 * PI / sigma).ln()).exp()
    }

    /// Pointwise residual of the radial equation −u″ − (N−1)u′/r − σ u log u − λu.
    pub fn ode_residual(&self, r: f64) -> f64 {
        let u = self.radial(r);
        let lu = self.amplitude.ln() - 0.25 * self.sigma * r * r;
        let angular = match (self.dim, r == 0.0) {
            (1, _) => 0.0,
            // u′/r → −σu/2 at the origin
            (_, true) => 0.5 * self.sigma * u,
            _ => -(self.dim as f64 - 1.0) * self.radial_d1(r) / r,
        };
        -self.radial_d2(r) + angular - self.sigma * u * lu - self.lambda * u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn multiplier_and_energy_one_d() {
        let g = Gausson::new(2.0, 1.0, 1).unwrap();
        assert_relative_eq!(g.lambda, 1.0 + 0.5 * PI.ln(), epsilon = 1e-14);
        assert_relative_eq!(g.energy, 1.0 + 0.25 * PI.ln(), epsilon = 1e-14);
        assert!((g.lambda - 1.5724).abs() < 1e-4);
        assert!((g.energy - 1.2862).abs() < 1e-4);
    }

    #[test]
    fn energy_zero_location() {
        let a = Gausson::energy_zero(2.0, 1);
        assert_relative_eq!(a, (2.0f64).exp() * PI.sqrt(), epsilon = 1e-13);
        assert!(Gausson::new(2.0, a, 1).unwrap().energy.abs() < 1e-12);
        for d in 1..=2 {
            for &s in &[0.5, 3.0] {
                let z = Gausson::energy_zero(s, d);
                assert!(Gausson::new(s, z, d).unwrap().energy.abs() < 1e-10 * z);
            }
        }
    }

    #[test]
    fn ode_residual_vanishes() {
        for d in 1..=2 {
            for &(s, a) in &[(2.0, 1.0), (0.5, 3.0), (5.0, 0.2)] {
                let g = Gausson::new(s, a, d).unwrap();
                for i in 0..=600 {
                    let r = i as f64 * 0.01;
                    assert!(g.ode_residual(r).abs() < 1e-10, "d={d} s={s} r={r}");
                }
            }
        }
    }

    #[test]
    fn closed_form_mass_and_energy_by_quadrature() {
        // independent check of the formulas by direct radial quadrature
        for d in 1..=2 {
            let g = Gausson::new(1.3, 2.2, d).unwrap();
            let m = crate::model::NonlinearityModel::pure_log(1.3, d).unwrap();
            let (n, rmax) = (200_000, 30.0);
            let h = rmax / n as f64;
            let (mut mass, mut en) = (0.0, 0.0);
            for i in 0..n {
                let r = (i as f64 + 0.5) * h;
                let w = if d == 1 { 2.0 } else { 2.0 * PI * r } * h;
                let u = g.radial(r);
                mass += w * u * u;
                en += w * (0.5 * g.radial_d1(r).powi(2) - m.big_f(u));
            }
            assert_relative_eq!(mass, 2.2, epsilon = 1e-8);
            assert_relative_eq!(en, g.energy, epsilon = 1e-8);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Gausson::new(0.0, 1.0, 1).is_err());
        assert!(Gausson::new(1.0, -1.0, 1).is_err());
        assert!(Gausson::new(1.0, 1.0, 3).is_err());
    }
}
