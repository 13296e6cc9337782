//! Nonlinearity families, their sign split and truncation, plus the Gausson.

mod gausson;
pub mod gn;

pub use gausson::Gausson;

use crate::error::{invalid, Result};

/// Below this magnitude `s log s` is taken to be its limit value 0.
const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NonlinearityKind {
    /// f(s) = σ s log s
    PureLog { sigma: f64 },
    /// f(s) = σ s log s + μ s^{p-1}
    LogPlusPower { sigma: f64, mu: f64, p: f64 },
    /// f(s) = -s^{q-1} + s^{p-1}
    DoublePower { q: f64, p: f64 },
}

/// All six pieces of the nonlinearity at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NonlinearityValues {
    pub f: f64,
    pub big_f: f64,
    pub f1: f64,
    pub f2: f64,
    pub big_f1: f64,
    pub big_f2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearityModel {
    kind: NonlinearityKind,
    dim: usize,
    t0: f64,
    truncation: Option<f64>,
}

#[inline]
fn xlogx(s: f64) -> f64 {
    if s < LOG_FLOOR {
        0.0
    } else {
        s * s.ln()
    }
}

#[inline]
fn x2logx(s: f64) -> f64 {
    if s < LOG_FLOOR {
        0.0
    } else {
        s * s * s.ln()
    }
}

impl NonlinearityModel {
    pub fn new(kind: NonlinearityKind, dim: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(invalid(format!("dimension must be 1 or 2, got {dim}")));
        }
        let crit = 2.0 + 4.0 / dim as f64;
        let pos = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        let power = |p: f64| -> Result<()> {
            if p.is_finite() && p > 2.0 && p <= crit + 1e-12 {
                Ok(())
            } else {
                Err(invalid(format!("p must lie in (2, {crit}], got {p}")))
            }
        };
        let t0 = match kind {
            NonlinearityKind::PureLog { sigma } => {
                pos("sigma", sigma)?;
                1.0
            }
            NonlinearityKind::LogPlusPower { sigma, mu, p } => {
                pos("sigma", sigma)?;
                if !(mu.is_finite() && mu >= 0.0) {
                    return Err(invalid(format!("mu must be nonnegative, got {mu}")));
                }
                power(p)?;
                log_power_zero(sigma, mu, p)
            }
            NonlinearityKind::DoublePower { q, p } => {
                if !(q.is_finite() && q > 1.0 && q < 2.0) {
                    return Err(invalid(format!("q must lie in (1, 2), got {q}")));
                }
                power(p)?;
                1.0
            }
        };
        Ok(Self {
            kind,
            dim,
            t0,
            truncation: None,
        })
    }

    pub fn pure_log(sigma: f64, dim: usize) -> Result<Self> {
        Self::new(NonlinearityKind::PureLog { sigma }, dim)
    }

    pub fn log_plus_power(sigma: f64, mu: f64, p: f64, dim: usize) -> Result<Self> {
        Self::new(NonlinearityKind::LogPlusPower { sigma, mu, p }, dim)
    }

    pub fn double_power(q: f64, p: f64, dim: usize) -> Result<Self> {
        Self::new(NonlinearityKind::DoublePower { q, p }, dim)
    }

    pub fn kind(&self) -> NonlinearityKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Unique zero of f on (0, ∞).
    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// Truncation level, if the model has been truncated.
    pub fn k0(&self) -> Option<f64> {
        self.truncation
    }

    /// Coefficient of the critical power s^{1+4/N} in f.
    pub fn c0(&self) -> f64 {
        let crit = 2.0 + 4.0 / self.dim as f64;
        match self.kind {
            NonlinearityKind::PureLog { .. } => 0.0,
            NonlinearityKind::LogPlusPower { mu, p, .. } => {
                if (p - crit).abs() < 1e-12 {
                    mu
                } else {
                    0.0
                }
            }
            NonlinearityKind::DoublePower { p, .. } => {
                if (p - crit).abs() < 1e-12 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match self.kind {
            NonlinearityKind::PureLog { sigma } | NonlinearityKind::LogPlusPower { sigma, .. } => {
                Some(sigma)
            }
            NonlinearityKind::DoublePower { .. } => None,
        }
    }

    pub fn satisfies_f5(&self) -> bool {
        self.sigma().is_some()
    }

    /// Largest admissible mass; infinite when there is no critical power.
    pub fn mass_ceiling(&self) -> f64 {
        let c0 = self.c0();
        if c0 == 0.0 {
            return f64::INFINITY;
        }
        let s = gn::gn_constant(self.dim);
        (2.0 * c0 * s).powf(-(self.dim as f64) / 2.0)
    }

    /// Restrict the growth of f above level `k`. Repeated truncation keeps the lowest level.
    pub fn truncate(&self, k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(invalid(format!("truncation level must be positive, got {k}")));
        }
        let level = match self.truncation {
            Some(old) => old.min(k),
            None => k,
        };
        Ok(Self {
            truncation: Some(level),
            ..*self
        })
    }

    pub fn untruncated(&self) -> Self {
        Self {
            truncation: None,
            ..*self
        }
    }

    #[inline]
    fn raw_f(&self, s: f64) -> f64 {
        match self.kind {
            NonlinearityKind::PureLog { sigma } => sigma * xlogx(s),
            NonlinearityKind::LogPlusPower { sigma, mu, p } => {
                sigma * xlogx(s) + mu * s.powf(p - 1.0)
            }
            NonlinearityKind::DoublePower { q, p } => {
                if s == 0.0 {
                    0.0
                } else {
                    -s.powf(q - 1.0) + s.powf(p - 1.0)
                }
            }
        }
    }

    #[inline]
    fn raw_big_f(&self, s: f64) -> f64 {
        match self.kind {
            NonlinearityKind::PureLog { sigma } => sigma * (0.5 * x2logx(s) - 0.25 * s * s),
            NonlinearityKind::LogPlusPower { sigma, mu, p } => {
                sigma * (0.5 * x2logx(s) - 0.25 * s * s) + mu * s.powf(p) / p
            }
            NonlinearityKind::DoublePower { q, p } => -s.powf(q) / q + s.powf(p) / p,
        }
    }

    #[inline]
    fn raw_f2(&self, s: f64) -> f64 {
        if s >= self.t0 {
            self.raw_f(s)
        } else {
            0.0
        }
    }

    #[inline]
    fn raw_big_f1(&self, s: f64) -> f64 {
        -self.raw_big_f(s.min(self.t0))
    }

    /// f at `s`, truncated if the model is.
    #[inline]
    pub fn f(&self, s: f64) -> f64 {
        let a = s.abs();
        let v = match self.truncation {
            Some(k) if a > k => {
                let f1 = if a < self.t0 { -self.raw_f(a) } else { 0.0 };
                -f1 + self.raw_f2(k)
            }
            _ => self.raw_f(a),
        };
        if s < 0.0 {
            -v
        } else {
            v
        }
    }

    /// F(s) = ∫₀^{|s|} f, truncated if the model is.
    #[inline]
    pub fn big_f(&self, s: f64) -> f64 {
        let a = s.abs();
        match self.truncation {
            Some(k) if a > k => {
                let f1 = self.raw_big_f1(a);
                let f2k = self.raw_big_f(k) + self.raw_big_f1(k);
                -f1 + f2k + self.raw_f2(k) * (a - k)
            }
            _ => self.raw_big_f(a),
        }
    }

    pub fn evaluate(&self, s: f64) -> NonlinearityValues {
        let a = s.abs();
        let sign = if s < 0.0 { -1.0 } else { 1.0 };
        let f1 = if a < self.t0 { -self.raw_f(a) } else { 0.0 };
        let big_f1 = self.raw_big_f1(a);
        let (f2, big_f2) = match self.truncation {
            Some(k) if a > k => {
                let f2k = self.raw_f2(k);
                (f2k, self.raw_big_f(k) + self.raw_big_f1(k) + f2k * (a - k))
            }
            _ => (self.raw_f2(a), self.raw_big_f(a) + big_f1),
        };
        NonlinearityValues {
            f: sign * (-f1 + f2),
            big_f: -big_f1 + big_f2,
            f1: sign * f1,
            f2: sign * f2,
            big_f1,
            big_f2,
        }
    }

    /// F(b) − F(a) without cancellation when a and b are close.
    #[inline]
    pub fn big_f_diff(&self, a: f64, b: f64) -> f64 {
        let scale = a.abs().max(b.abs());
        if (b - a).abs() <= 1e-3 * scale && a.signum() * b.signum() >= 0.0 {
            let m = 0.5 * (a + b);
            (b - a) * (self.f(a) + 4.0 * self.f(m) + self.f(b)) / 6.0
        } else {
            self.big_f(b) - self.big_f(a)
        }
    }

    /// max(0, −f(s)/s), the repulsive part of the linearization used as a preconditioner weight.
    #[inline]
    pub fn negative_slope(&self, s: f64) -> f64 {
        let a = s.abs();
        if a < LOG_FLOOR {
            return match self.kind {
                NonlinearityKind::DoublePower { .. } => 1e300,
                _ => self.negative_slope(LOG_FLOOR.sqrt()),
            };
        }
        (-self.f(a) / a).max(0.0)
    }
}

/// Zero of σ ln s + μ s^{p-2} on (0, 1].
fn log_power_zero(sigma: f64, mu: f64, p: f64) -> f64 {
    if mu == 0.0 {
        return 1.0;
    }
    let g = |s: f64| sigma * s.ln() + mu * s.powf(p - 2.0);
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, 1.0);
    for _ in 0..2000 {
        let mid = if lo < 1e-300 || hi / lo > 4.0 {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}
