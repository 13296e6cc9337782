//! Browser bindings: ground-state profiles, energy curves and two-bump interaction.

use lognls::analysis::interaction_scaling_fit;
use lognls::multipeak::interaction_deficit;
use lognls::solver::{run_groundstate, sweep_e_alpha, FlowConfig, GroundState, Init};
use lognls::{Gausson, Grid, NonlinearityModel, Result};
use wasm_bindgen::prelude::*;

/// Leaves room for the e^{−σx²/4} tail beyond `reach`.
fn box_grid(sigma: f64, reach: f64, h: f64) -> Result<Grid> {
    let extent = (reach + (40.0 / sigma).sqrt() + 1.0) / h;
    Grid::new(1, extent.ceil() * h, h)
}

fn solve(sigma: f64, alpha: f64, h: f64) -> Result<GroundState> {
    let m = NonlinearityModel::pure_log(sigma, 1)?;
    run_groundstate(&m, alpha, box_grid(sigma, 0.0, h)?, Init::Gaussian { width: 1.0 }, &FlowConfig::default())
}

fn js(e: lognls::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Profile {
    x: Vec<f64>,
    u: Vec<f64>,
    exact: Vec<f64>,
    pub energy: f64,
    pub lambda: f64,
    pub exact_energy: f64,
    pub exact_lambda: f64,
    pub iterations: usize,
}

#[wasm_bindgen]
impl Profile {
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    pub fn u(&self) -> Vec<f64> {
        self.u.clone()
    }

    /// The closed-form Gaussian on the same grid.
    pub fn exact(&self) -> Vec<f64> {
        self.exact.clone()
    }
}

pub fn profile_native(sigma: f64, alpha: f64, h: f64) -> Result<Profile> {
    let gs = solve(sigma, alpha, h)?;
    let g = Gausson::new(sigma, alpha, 1)?;
    let x: Vec<f64> = gs.u.grid().points().map(|p| p[0]).collect();
    Ok(Profile {
        exact: x.iter().map(|&t| g.at(&[t], &[0.0])).collect(),
        u: gs.u.values().to_vec(),
        x,
        energy: gs.energy,
        lambda: gs.lambda,
        exact_energy: g.energy,
        exact_lambda: g.lambda,
        iterations: gs.iterations,
    })
}

/// Ground state of −u″ = σ u ln u + λu with ∫u² = α.
#[wasm_bindgen]
pub fn ground_state(sigma: f64, alpha: f64, h: f64) -> std::result::Result<Profile, JsError> {
    profile_native(sigma, alpha, h).map_err(js)
}

pub fn energy_curve_native(sigma: f64, alphas: &[f64], h: f64) -> Result<Vec<f64>> {
    let m = NonlinearityModel::pure_log(sigma, 1)?;
    let (curve, _) = sweep_e_alpha(&m, alphas, box_grid(sigma, 0.0, h)?, 1.0, true, &FlowConfig::default())?;
    Ok(curve.points.iter().map(|p| p.energy).collect())
}

/// Minimal energies at each mass, in ascending order of mass.
#[wasm_bindgen]
pub fn energy_curve(sigma: f64, alphas: Vec<f64>, h: f64) -> std::result::Result<Vec<f64>, JsError> {
    energy_curve_native(sigma, &alphas, h).map_err(js)
}

pub fn interaction_native(sigma: f64, alpha: f64, xis: &[f64], h: f64) -> Result<Vec<f64>> {
    let m = NonlinearityModel::pure_log(sigma, 1)?;
    let widest = xis.iter().copied().fold(0.0, f64::max);
    let grid = box_grid(sigma, 0.5 * widest, h)?;
    let gs = run_groundstate(&m, alpha, grid, Init::Gaussian { width: 1.0 }, &FlowConfig::default())?;
    let mut out = Vec::with_capacity(xis.len() + 1);
    let mut samples = Vec::with_capacity(xis.len());
    for &xi in xis {
        let (d, x) = interaction_deficit(&m, &gs.u, &[[-0.5 * xi, 0.0], [0.5 * xi, 0.0]], 0.0)?;
        samples.push((x, d));
        out.push(d);
    }
    out.push(if samples.len() >= 4 {
        interaction_scaling_fit(&samples, sigma)?.slope
    } else {
        f64::NAN
    });
    Ok(out)
}

/// Interaction deficit of two bumps at each separation; the last entry is the
/// fitted slope of ln(deficit/ξ) against ξ², expected −σ/8 (NaN with fewer than four separations).
#[wasm_bindgen]
pub fn interaction(sigma: f64, alpha: f64, xis: Vec<f64>, h: f64) -> std::result::Result<Vec<f64>, JsError> {
    interaction_native(sigma, alpha, &xis, h).map_err(js)
}
