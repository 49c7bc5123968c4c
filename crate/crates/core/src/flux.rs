//! Concave fluxes for the LWR model.
//!
//! Densities are normalized so that the maximal density is 1. Every flux here
//! vanishes at 0 and 1 and has a unique maximum `fmax` at the critical density
//! `sigma`. Two families are provided: the reference quadratic
//! `4 fmax rho (1 - rho)` and a kinked approximation of it whose derivative is
//! bounded away from zero on both sides of `sigma`.

use serde::{Deserialize, Serialize};

use crate::error::FluxError;

/// Relative tolerance used when comparing flux values against `fmax`.
pub const FLUX_TOL: f64 = 1e-12;

/// Which monotone branch of the flux to invert on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `[0, sigma]`, where the flux increases.
    Ascending,
    /// `[sigma, 1]`, where the flux decreases.
    Descending,
}

/// Side selector for one-sided derivatives at the kink.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FluxFamily {
    /// `4 fmax rho (1 - rho)`.
    SmoothConcave,
    /// `(1 - nu) f + nu T` with `T` the tent through `(sigma, fmax)`.
    KinkedNu { nu: f64 },
}

/// A strictly concave flux on `[0, 1]`.
///
/// Immutable once built; all methods are pure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxModel {
    family: FluxFamily,
    sigma: f64,
    fmax: f64,
    c_lo: f64,
    c_hi: f64,
}

impl FluxModel {
    /// The reference quadratic with maximum `fmax` at `sigma = 1/2`.
    pub fn smooth(fmax: f64) -> Result<Self, FluxError> {
        if !(fmax.is_finite() && fmax > 0.0) {
            return Err(FluxError::Parameter(format!("fmax must be positive, got {fmax}")));
        }
        Ok(Self {
            family: FluxFamily::SmoothConcave,
            sigma: 0.5,
            fmax,
            c_lo: 0.0,
            c_hi: 4.0 * fmax,
        })
    }

    /// Kinked approximation `f_nu = (1 - nu) f + nu T` of a smooth base flux.
    ///
    /// The result shares `sigma` and `fmax` with `base`, satisfies
    /// `|f_nu'| >= nu fmax min(1/sigma, 1/(1-sigma))` away from the kink, and
    /// lies within `nu fmax` of `base` in sup norm.
    pub fn kinked(base: &FluxModel, nu: f64) -> Result<Self, FluxError> {
        if base.family != FluxFamily::SmoothConcave {
            return Err(FluxError::Parameter("kinked approximation needs a smooth base".into()));
        }
        if !(nu > 0.0 && nu < 1.0) {
            return Err(FluxError::Parameter(format!("nu must lie in (0,1), got {nu}")));
        }
        let (sigma, fmax) = (base.sigma, base.fmax);
        let tent_lo = fmax * (1.0 / sigma).min(1.0 / (1.0 - sigma));
        let tent_hi = fmax * (1.0 / sigma).max(1.0 / (1.0 - sigma));
        Ok(Self {
            family: FluxFamily::KinkedNu { nu },
            sigma,
            fmax,
            c_lo: nu * tent_lo,
            c_hi: (1.0 - nu) * base.c_hi + nu * tent_hi,
        })
    }

    pub fn family(&self) -> FluxFamily {
        self.family
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn fmax(&self) -> f64 {
        self.fmax
    }

    /// Lower bound of `|f'|` away from `sigma` (zero for the smooth family).
    pub fn c_lo(&self) -> f64 {
        self.c_lo
    }

    /// Upper bound of `|f'|`.
    pub fn c_hi(&self) -> f64 {
        self.c_hi
    }

    /// `nu` for the kinked family, `None` otherwise.
    pub fn nu(&self) -> Option<f64> {
        match self.family {
            FluxFamily::SmoothConcave => None,
            FluxFamily::KinkedNu { nu } => Some(nu),
        }
    }

    /// Absolute tolerance for flux comparisons, `FLUX_TOL * fmax`.
    pub fn flux_tol(&self) -> f64 {
        FLUX_TOL * self.fmax
    }

    fn check_density(rho: f64) -> Result<(), FluxError> {
        if (0.0..=1.0).contains(&rho) {
            Ok(())
        } else {
            Err(FluxError::Domain(rho))
        }
    }

    fn quad(&self, rho: f64) -> f64 {
        4.0 * self.fmax * rho * (1.0 - rho)
    }

    fn tent(&self, rho: f64) -> f64 {
        if rho <= self.sigma {
            self.fmax * rho / self.sigma
        } else {
            self.fmax * (1.0 - rho) / (1.0 - self.sigma)
        }
    }

    /// `f(rho)` without the domain check. Callers must pass `rho` in `[0, 1]`.
    pub(crate) fn f(&self, rho: f64) -> f64 {
        match self.family {
            FluxFamily::SmoothConcave => self.quad(rho),
            FluxFamily::KinkedNu { nu } => (1.0 - nu) * self.quad(rho) + nu * self.tent(rho),
        }
    }

    pub fn eval_flux(&self, rho: f64) -> Result<f64, FluxError> {
        Self::check_density(rho)?;
        Ok(self.f(rho))
    }

    /// Maximal flux a road can send into a junction from trace `rho`.
    pub fn demand(&self, rho: f64) -> Result<f64, FluxError> {
        Self::check_density(rho)?;
        Ok(if rho <= self.sigma { self.f(rho) } else { self.fmax })
    }

    /// Maximal flux a road can take from a junction at trace `rho`.
    pub fn supply(&self, rho: f64) -> Result<f64, FluxError> {
        Self::check_density(rho)?;
        Ok(if rho <= self.sigma { self.fmax } else { self.f(rho) })
    }

    /// Density on `branch` carrying flux `phi`.
    ///
    /// Values of `phi` within `FLUX_TOL * fmax` of `fmax` return `sigma`
    /// exactly, and `phi = 0` returns the branch endpoint exactly.
    pub fn invert_flux(&self, phi: f64, branch: Branch) -> Result<f64, FluxError> {
        let tol = self.flux_tol();
        if !phi.is_finite() || phi < -tol || phi > self.fmax + tol {
            return Err(FluxError::InfeasibleFlux { phi, fmax: self.fmax });
        }
        if phi >= self.fmax - tol {
            return Ok(self.sigma);
        }
        if phi <= 0.0 {
            return Ok(match branch {
                Branch::Ascending => 0.0,
                Branch::Descending => 1.0,
            });
        }
        Ok(match self.family {
            FluxFamily::SmoothConcave => {
                let root = (1.0 - phi / self.fmax).max(0.0).sqrt();
                match branch {
                    Branch::Ascending => 0.5 * (1.0 - root),
                    Branch::Descending => 0.5 * (1.0 + root),
                }
            }
            FluxFamily::KinkedNu { .. } => self.bisect(phi, branch),
        })
    }

    fn bisect(&self, phi: f64, branch: Branch) -> f64 {
        // lo always on the side where f < phi
        let (mut lo, mut hi) = match branch {
            Branch::Ascending => (0.0, self.sigma),
            Branch::Descending => (1.0, self.sigma),
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.f(mid) < phi {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if (self.f(lo) - phi).abs() < (self.f(hi) - phi).abs() {
            lo
        } else {
            hi
        }
    }

    /// The other density with the same flux; `tau(sigma) = sigma`.
    pub fn eval_tau(&self, rho: f64) -> Result<f64, FluxError> {
        Self::check_density(rho)?;
        if rho == self.sigma {
            return Ok(self.sigma);
        }
        match self.family {
            FluxFamily::SmoothConcave => Ok(1.0 - rho),
            FluxFamily::KinkedNu { .. } => {
                let branch = if rho < self.sigma { Branch::Descending } else { Branch::Ascending };
                self.invert_flux(self.f(rho), branch)
            }
        }
    }

    /// `f'(rho)`. Fails at the kink of the kinked family; use
    /// [`FluxModel::char_speed_side`] there.
    pub fn char_speed(&self, rho: f64) -> Result<f64, FluxError> {
        Self::check_density(rho)?;
        match self.family {
            FluxFamily::SmoothConcave => Ok(4.0 * self.fmax * (1.0 - 2.0 * rho)),
            FluxFamily::KinkedNu { .. } if rho == self.sigma => Err(FluxError::AtKink(rho)),
            FluxFamily::KinkedNu { .. } => {
                let side = if rho < self.sigma { Side::Left } else { Side::Right };
                self.char_speed_side(rho, side)
            }
        }
    }

    /// One-sided derivative of the flux.
    pub fn char_speed_side(&self, rho: f64, side: Side) -> Result<f64, FluxError> {
        Self::check_density(rho)?;
        let quad = 4.0 * self.fmax * (1.0 - 2.0 * rho);
        Ok(match self.family {
            FluxFamily::SmoothConcave => quad,
            FluxFamily::KinkedNu { nu } => {
                let left = rho < self.sigma || (rho == self.sigma && side == Side::Left);
                let tent = if left {
                    self.fmax / self.sigma
                } else {
                    -self.fmax / (1.0 - self.sigma)
                };
                (1.0 - nu) * quad + nu * tent
            }
        })
    }

    /// Rankine–Hugoniot speed of the jump `(left, right)`.
    ///
    /// Evaluated in a cancellation-free form so that narrow jumps get accurate
    /// speeds. For `left == right` this is the characteristic speed (left
    /// derivative at the kink).
    pub fn rh_speed(&self, left: f64, right: f64) -> f64 {
        let quad = 4.0 * self.fmax * (1.0 - left - right);
        match self.family {
            FluxFamily::SmoothConcave => quad,
            FluxFamily::KinkedNu { nu } => {
                let s = self.sigma;
                let tent = if left <= s && right <= s {
                    self.fmax / s
                } else if left >= s && right >= s && !(left == s && right == s) {
                    -self.fmax / (1.0 - s)
                } else if left == right {
                    self.fmax / s
                } else {
                    (self.tent(right) - self.tent(left)) / (right - left)
                };
                (1.0 - nu) * quad + nu * tent
            }
        }
    }
}
