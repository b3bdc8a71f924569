//! Analytical method-of-characteristics solution of the Riemann problem and
//! an independent first-order Godunov finite-volume oracle.
//!
//! With constant boundary state `s_inj` at `x = 0` and initial state `s_wc`,
//! the entropy solution is self-similar in `xi = x / (v_d t)`: a constant
//! injection plateau, a rarefaction fan spanning saturations
//! `[s_tangent, s_inj]`, and a shock to `s_wc` travelling at
//! `v_d * shock_speed`.

use crate::error::{Error, Result};
use crate::flux::{HullFlux, RockFluidParams};

/// Default nondimensional spatial extent; the shock stays inside for the
/// truncation bound of the velocity distribution over most report times.
pub const DEFAULT_X_MAX: f64 = 2.0;

/// Analytical Riemann solution for one realization of the Darcy velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct MocSolution {
    pub hull: HullFlux,
    /// Dimensionless total (Darcy) velocity scaling all wave speeds.
    pub v_d: f64,
}

/// Saturation samples along an ordered spatial grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturationProfile {
    pub t: f64,
    pub xs: Vec<f64>,
    pub ss: Vec<f64>,
}

impl SaturationProfile {
    pub fn new(t: f64, xs: Vec<f64>, ss: Vec<f64>) -> Result<Self> {
        if xs.len() != ss.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} grid points vs {} saturations",
                xs.len(),
                ss.len()
            )));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("grid not strictly increasing".into()));
        }
        Ok(Self { t, xs, ss })
    }
}

impl MocSolution {
    pub fn new(hull: HullFlux, v_d: f64) -> Result<Self> {
        if !(v_d > 0.0) || !v_d.is_finite() {
            return Err(Error::InvalidArgument(format!("v_d must be > 0, got {v_d}")));
        }
        Ok(Self { hull, v_d })
    }

    /// Saturation at `(x, t)`. At `t = 0` the initial condition wins
    /// everywhere (including the corner `x = 0`); for `t > 0` the inlet
    /// holds the injected saturation. Inside the rarefaction fan the unique
    /// saturation with `f'(s) = x/(v_d t)` is found by bisection (f' is
    /// monotone on the fan).
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let p = &self.hull.params;
        if t <= 0.0 {
            return p.s_wc;
        }
        if x <= 0.0 {
            return p.s_inj;
        }
        let xi = x / (self.v_d * t);
        if xi >= self.hull.shock_speed {
            return p.s_wc;
        }
        if self.hull.pure_shock {
            return p.s_inj;
        }
        let slow = p.frac_flow_slope_raw(p.s_inj);
        if xi <= slow {
            return p.s_inj;
        }
        // Rarefaction fan: f' decreases from shock_speed at s_tangent to
        // `slow` at s_inj; bisect to machine width.
        let mut lo = self.hull.s_tangent;
        let mut hi = p.s_inj;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if p.frac_flow_slope_raw(mid) > xi {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Shock position `v_d * shock_speed * t`.
    pub fn front_radius(&self, t: f64) -> f64 {
        self.v_d * self.hull.shock_speed * t
    }

    /// Time at which the shock reaches `x_outlet`.
    pub fn breakthrough_time(&self, x_outlet: f64) -> f64 {
        debug_assert!(x_outlet > 0.0);
        x_outlet / (self.v_d * self.hull.shock_speed)
    }

    /// Sample the solution on a grid.
    pub fn profile(&self, t: f64, xs: &[f64]) -> SaturationProfile {
        let ss = xs.iter().map(|&x| self.eval(x, t)).collect();
        SaturationProfile {
            t,
            xs: xs.to_vec(),
            ss,
        }
    }
}

/// Uniform cell-centered grid on `[0, x_max]`.
pub fn cell_centers(x_max: f64, nx: usize) -> Vec<f64> {
    let dx = x_max / nx as f64;
    (0..nx).map(|i| (i as f64 + 0.5) * dx).collect()
}

/// First-order Godunov solution of `S_t + v_d f(S)_x = 0` on `[0, 2]` with
/// inflow `s_inj` and zero-gradient outflow, advanced to `t_end`.
///
/// The numerical flux is the exact Riemann (min/max) flux; on the invariant
/// region `[s_wc, s_inj]` the fractional flow is monotone increasing, so the
/// interval min/max is attained at an endpoint. Converges to the entropy
/// solution the MOC produces.
pub fn godunov_solve(
    p: &RockFluidParams,
    v_d: f64,
    nx: usize,
    t_end: f64,
    cfl: f64,
) -> Result<SaturationProfile> {
    p.validate()?;
    if nx < 50 {
        return Err(Error::InvalidArgument(format!("nx must be >= 50, got {nx}")));
    }
    if !(cfl > 0.0 && cfl < 1.0) {
        return Err(Error::InvalidArgument(format!("cfl must be in (0,1), got {cfl}")));
    }
    if !(v_d > 0.0) {
        return Err(Error::InvalidArgument(format!("v_d must be > 0, got {v_d}")));
    }
    if t_end < 0.0 {
        return Err(Error::InvalidArgument(format!("t_end must be >= 0, got {t_end}")));
    }

    let flux = |s: f64| -> f64 {
        if s <= p.s_wc {
            0.0
        } else {
            v_d * p.frac_flow_raw(s)
        }
    };
    // Exact scalar Godunov flux; f monotone on [s_wc, s_inj] keeps the
    // interval extremum at an endpoint.
    let riemann_flux = |ul: f64, ur: f64| -> f64 {
        if ul <= ur {
            flux(ul).min(flux(ur))
        } else {
            flux(ul).max(flux(ur))
        }
    };

    let dx = DEFAULT_X_MAX / nx as f64;
    let mut max_speed = 0.0_f64;
    for i in 0..=2048 {
        let s = p.s_wc + (p.s_inj - p.s_wc) * i as f64 / 2048.0;
        max_speed = max_speed.max(v_d * p.frac_flow_slope_raw(s).abs());
    }
    let dt_cfl = cfl * dx / max_speed;
    if !(dt_cfl > 0.0) || !dt_cfl.is_finite() {
        return Err(Error::CflViolation);
    }

    let mut u = vec![p.s_wc; nx];
    let mut fluxes = vec![0.0_f64; nx + 1];
    let mut t = 0.0;
    while t < t_end {
        let dt = dt_cfl.min(t_end - t);
        if dt <= 0.0 {
            return Err(Error::CflViolation);
        }
        fluxes[0] = riemann_flux(p.s_inj, u[0]);
        for i in 1..nx {
            fluxes[i] = riemann_flux(u[i - 1], u[i]);
        }
        fluxes[nx] = flux(u[nx - 1]);
        let lambda = dt / dx;
        for i in 0..nx {
            u[i] -= lambda * (fluxes[i + 1] - fluxes[i]);
        }
        t += dt;
    }

    SaturationProfile::new(t_end, cell_centers(DEFAULT_X_MAX, nx), u)
}

/// L1 distance between a sampled profile and the analytical solution at the
/// profile's own time, integrated with the grid's uniform cell width.
pub fn l1_profile_distance(profile: &SaturationProfile, sol: &MocSolution) -> f64 {
    let dx = if profile.xs.len() > 1 {
        profile.xs[1] - profile.xs[0]
    } else {
        1.0
    };
    profile
        .xs
        .iter()
        .zip(&profile.ss)
        .map(|(&x, &s)| (s - sol.eval(x, profile.t)).abs() * dx)
        .sum()
}
