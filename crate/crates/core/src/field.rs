//! Uniform tensor grids on a symmetric box, grid functions, quadrature and
//! the Dirichlet finite-difference Laplacian.

use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    extent: f64,
    h: f64,
    n: usize,
}

impl Grid {
    /// Box [−extent, extent]^dim with spacing `h`; 2·extent/h must be an integer.
    pub fn new(dim: usize, extent: f64, h: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(invalid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if !(extent.is_finite() && extent > 0.0 && h.is_finite() && h > 0.0) {
            return Err(invalid("extent and spacing must be positive"));
        }
        let cells = 2.0 * extent / h;
        let rc = cells.round();
        if (cells - rc).abs() > 1e-6 * rc.max(1.0) {
            return Err(invalid(format!(
                "2·extent/spacing must be an integer, got {cells}"
            )));
        }
        let n = rc as usize + 1;
        if n < 8 {
            return Err(invalid(format!("grid needs at least 8 points per axis, got {n}")));
        }
        if dim == 2 && n > 513 {
            return Err(invalid(format!("2D grids are limited to 513 points per axis, got {n}")));
        }
        Ok(Self { dim, extent, h, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Coordinate of index `i` along any axis; exactly antisymmetric about the centre.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - 0.5 * (self.n as f64 - 1.0)) * self.h
    }

    /// Nearest index to coordinate `x` along an axis (may be out of range).
    pub fn index_of(&self, x: f64) -> isize {
        (x / self.h + 0.5 * (self.n as f64 - 1.0)).round() as isize
    }

    /// Physical point of flat index `k`; unused trailing coordinates are 0.
    #[inline]
    pub fn point(&self, k: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.coord(k), 0.0]
        } else {
            [self.coord(k / self.n), self.coord(k % self.n)]
        }
    }

    /// Multi-index of flat index `k`.
    #[inline]
    pub fn multi(&self, k: usize) -> [usize; 2] {
        if self.dim == 1 {
            [k, 0]
        } else {
            [k / self.n, k % self.n]
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|c| c.abs() <= self.extent + 1e-12)
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.len()).map(move |k| self.point(k))
    }
}

/// Smooth C¹ step: 0 for t ≤ 0, 1 for t ≥ 1, 3t² − 2t³ between.
#[inline]
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * (3.0 - 2.0 * t)
    }
}

#[inline]
pub fn smoothstep_d(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        0.0
    } else {
        6.0 * t * (1.0 - t)
    }
}

/// Radial cutoff equal to 1 on r ≤ inner and 0 on r ≥ outer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub inner: f64,
    pub outer: f64,
}

impl Cutoff {
    pub fn none() -> Self {
        Self {
            inner: f64::INFINITY,
            outer: f64::INFINITY,
        }
    }

    /// φ_ε: 1 for |εx| ≤ δ₀/2, 0 for |εx| ≥ δ₀ (in rescaled coordinates x).
    pub fn semiclassical(delta0: f64, eps: f64) -> Result<Self> {
        if !(delta0 > 0.0 && eps > 0.0) {
            return Err(invalid("cutoff needs positive delta0 and epsilon"));
        }
        Ok(Self {
            inner: 0.5 * delta0 / eps,
            outer: delta0 / eps,
        })
    }

    pub fn value(&self, r: f64) -> f64 {
        if r <= self.inner {
            1.0
        } else if r >= self.outer {
            0.0
        } else {
            1.0 - smoothstep((r - self.inner) / (self.outer - self.inner))
        }
    }

    /// Maximum slope of the profile.
    pub fn max_slope(&self) -> f64 {
        if self.inner.is_infinite() {
            0.0
        } else {
            1.5 / (self.outer - self.inner)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite field value {v}")));
        }
        Ok(Self { grid, values })
    }

    /// Sample `f` at every grid point (`f` receives a slice of length dim).
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let d = grid.dim();
        let values = (0..grid.len())
            .map(|k| f(&grid.point(k)[..d]))
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::IncompatibleGrids)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    /// self + c·other
    pub fn axpy(&self, c: f64, other: &Field) -> Result<Field> {
        self.check_grid(other)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        })
    }

    pub fn abs(&self) -> Field {
        self.map(f64::abs)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest |u| over the outermost layer of grid points.
    pub fn boundary_max(&self) -> f64 {
        let n = self.grid.n();
        let mut m: f64 = 0.0;
        for (k, v) in self.values.iter().enumerate() {
            let [i, j] = self.grid.multi(k);
            let edge = i == 0 || i == n - 1 || (self.grid.dim() == 2 && (j == 0 || j == n - 1));
            if edge {
                m = m.max(v.abs());
            }
        }
        m
    }

    /// Discrete +Δ with zero values outside the box.
    pub fn laplacian(&self) -> Field {
        let n = self.grid.n();
        let ih2 = 1.0 / (self.grid.spacing() * self.grid.spacing());
        let u = &self.values;
        let mut out = vec![0.0; u.len()];
        let at = |k: isize| -> f64 {
            if k < 0 || k as usize >= u.len() {
                0.0
            } else {
                u[k as usize]
            }
        };
        if self.grid.dim() == 1 {
            for k in 0..n {
                let ki = k as isize;
                out[k] = (at(ki - 1) - 2.0 * u[k] + at(ki + 1)) * ih2;
            }
        } else {
            for i in 0..n {
                for j in 0..n {
                    let k = i * n + j;
                    let left = if j > 0 { u[k - 1] } else { 0.0 };
                    let right = if j + 1 < n { u[k + 1] } else { 0.0 };
                    let up = if i > 0 { u[k - n] } else { 0.0 };
                    let down = if i + 1 < n { u[k + n] } else { 0.0 };
                    out[k] = (left + right + up + down - 4.0 * u[k]) * ih2;
                }
            }
        }
        Field {
            grid: self.grid,
            values: out,
        }
    }

    /// Rectangle-rule ∫u².
    pub fn mass(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.check_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume())
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        let s: f64 = self.values.iter().map(|v| v.abs().powf(p)).sum();
        (s * self.grid.cell_volume()).powf(1.0 / p)
    }

    /// Σ over all edges (including the two ghost edges per line) of squared forward differences.
    pub fn dirichlet(&self) -> f64 {
        let n = self.grid.n();
        let u = &self.values;
        let mut acc = 0.0;
        let line = |get: &dyn Fn(usize) -> f64, acc: &mut f64| {
            let mut prev = 0.0;
            for k in 0..n {
                let v = get(k);
                *acc += (v - prev) * (v - prev);
                prev = v;
            }
            *acc += prev * prev;
        };
        if self.grid.dim() == 1 {
            line(&|k| u[k], &mut acc);
        } else {
            for i in 0..n {
                line(&|k| u[i * n + k], &mut acc);
                line(&|k| u[k * n + i], &mut acc);
            }
        }
        let h = self.grid.spacing();
        acc / (h * h) * self.grid.cell_volume()
    }

    /// Pointwise |∇u|² as the mean of squared forward and backward differences.
    pub fn grad_sq(&self) -> Vec<f64> {
        let n = self.grid.n();
        let ih2 = 1.0 / (self.grid.spacing() * self.grid.spacing());
        let u = &self.values;
        let mut out = vec![0.0; u.len()];
        for (k, o) in out.iter_mut().enumerate() {
            let [i, j] = self.grid.multi(k);
            let mut s = 0.0;
            let axes: &[(usize, usize)] = if self.grid.dim() == 1 {
                &[(i, 1)]
            } else {
                &[(i, n), (j, 1)]
            };
            for &(idx, stride) in axes {
                let prev = if idx > 0 { u[k - stride] } else { 0.0 };
                let next = if idx + 1 < n { u[k + stride] } else { 0.0 };
                s += 0.5 * ((u[k] - prev).powi(2) + (next - u[k]).powi(2));
            }
            *o = s * ih2;
        }
        out
    }

    /// Rescale to mass `alpha`.
    pub fn normalize(&self, alpha: f64) -> Result<Field> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(invalid(format!("target mass must be positive, got {alpha}")));
        }
        let m = self.mass();
        if !(m > 0.0) {
            return Err(Error::DegenerateInput("cannot normalize a zero field".into()));
        }
        let c = (alpha / m).sqrt();
        Ok(if c == 1.0 { self.clone() } else { self.scaled(c) })
    }

    /// Shift by whole cells; values entering from outside are 0.
    pub fn shift(&self, cells: &[isize]) -> Result<Field> {
        if cells.len() != self.grid.dim() {
            return Err(invalid("shift vector has wrong dimension"));
        }
        let n = self.grid.n() as isize;
        let mut out = vec![0.0; self.values.len()];
        for (k, &v) in self.values.iter().enumerate() {
            let [i, j] = self.grid.multi(k);
            let ni = i as isize + cells[0];
            if ni < 0 || ni >= n {
                continue;
            }
            if self.grid.dim() == 1 {
                out[ni as usize] = v;
            } else {
                let nj = j as isize + cells[1];
                if nj < 0 || nj >= n {
                    continue;
                }
                out[(ni * n + nj) as usize] = v;
            }
        }
        Ok(Field {
            grid: self.grid,
            values: out,
        })
    }

    /// Mirror image x ↦ −x.
    pub fn mirrored(&self) -> Field {
        let mut values = self.values.clone();
        values.reverse();
        Field {
            grid: self.grid,
            values,
        }
    }

    /// Multilinear interpolation at a point; 0 outside the box.
    pub fn sample(&self, x: &[f64]) -> f64 {
        let n = self.grid.n();
        let h = self.grid.spacing();
        let off = 0.5 * (n as f64 - 1.0);
        let get = |i: isize, j: isize| -> f64 {
            let n = n as isize;
            if i < 0 || i >= n || j < 0 || j >= n {
                0.0
            } else if self.grid.dim() == 1 {
                self.values[i as usize]
            } else {
                self.values[(i * n + j) as usize]
            }
        };
        let axis = |c: f64| -> Option<(isize, f64)> {
            let t = c / h + off;
            if !(-1.0..=n as f64).contains(&t) {
                return None;
            }
            let i = t.floor();
            Some((i as isize, t - i))
        };
        match self.grid.dim() {
            1 => match axis(x[0]) {
                None => 0.0,
                Some((i, w)) => (1.0 - w) * get(i, 0) + w * get(i + 1, 0),
            },
            _ => match (axis(x[0]), axis(x[1])) {
                (Some((i, a)), Some((j, b))) => {
                    (1.0 - a) * ((1.0 - b) * get(i, j) + b * get(i, j + 1))
                        + a * ((1.0 - b) * get(i + 1, j) + b * get(i + 1, j + 1))
                }
                _ => 0.0,
            },
        }
    }

    /// Resample onto another grid of the same dimension.
    pub fn interpolate(&self, grid: Grid) -> Result<Field> {
        if grid.dim() != self.grid.dim() {
            return Err(Error::IncompatibleGrids);
        }
        let d = grid.dim();
        Ok(Field::from_fn(grid, |x| self.sample(&x[..d])))
    }

    /// Write the snapshot format: a header line then one value per line.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "dim {}; extent {}; spacing {}",
            self.grid.dim(),
            self.grid.extent(),
            self.grid.spacing()
        )?;
        for v in &self.values {
            writeln!(w, "{v:.16e}")?;
        }
        Ok(())
    }

    pub fn to_snapshot_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_snapshot(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_snapshot<R: BufRead>(r: R) -> Result<Field> {
        let mut lines = r.lines();
        let bad = |m: &str| Error::Snapshot(m.to_string());
        let header = lines
            .next()
            .ok_or_else(|| bad("empty snapshot"))?
            .map_err(|e| bad(&e.to_string()))?;
        let mut dim = None;
        let mut extent = None;
        let mut spacing = None;
        for part in header.split(';') {
            let mut it = part.split_whitespace();
            let (key, val) = match (it.next(), it.next()) {
                (Some(k), Some(v)) => (k, v),
                _ => return Err(bad(&format!("malformed header entry '{}'", part.trim()))),
            };
            match key {
                "dim" => dim = Some(val.parse::<usize>().map_err(|e| bad(&e.to_string()))?),
                "extent" => extent = Some(val.parse::<f64>().map_err(|e| bad(&e.to_string()))?),
                "spacing" => spacing = Some(val.parse::<f64>().map_err(|e| bad(&e.to_string()))?),
                other => return Err(bad(&format!("unknown header key '{other}'"))),
            }
        }
        let grid = match (dim, extent, spacing) {
            (Some(d), Some(e), Some(s)) => Grid::new(d, e, s)?,
            _ => return Err(bad("header must give dim, extent and spacing")),
        };
        let mut values = Vec::with_capacity(grid.len());
        for line in lines {
            let line = line.map_err(|e| bad(&e.to_string()))?;
            for tok in line.split_whitespace() {
                values.push(tok.parse::<f64>().map_err(|e| bad(&format!("{tok}: {e}")))?);
            }
        }
        Field::from_values(grid, values)
    }
}

/// Sample `template` (given in coordinates relative to its centre) at `center`,
/// multiplied by a radial cutoff.
pub fn place_bump(
    grid: Grid,
    template: impl Fn(&[f64]) -> f64,
    center: &[f64],
    cutoff: Cutoff,
) -> Result<Field> {
    if !grid.contains(center) {
        return Err(invalid(format!("bump centre {center:?} lies outside the box")));
    }
    let d = grid.dim();
    Ok(Field::from_fn(grid, |x| {
        let mut rel = [0.0; 2];
        let mut r2 = 0.0;
        for a in 0..d {
            rel[a] = x[a] - center[a];
            r2 += rel[a] * rel[a];
        }
        let c = cutoff.value(r2.sqrt());
        if c == 0.0 {
            0.0
        } else {
            c * template(&rel[..d])
        }
    }))
}
