//! Fractional flow and the entropy-consistent convex-hull (Welge) flux.
//!
//! The wetting-phase fractional flow
//!
//! ```text
//! f(S) = (S - S_wc)^2 / ((S - S_wc)^2 + (1 - S - S_gr)^2 / M)
//! ```
//!
//! is S-shaped and non-convex, so the weak form of the transport equation
//! admits non-physical multivalued solutions. The hull flux replaces f on
//! `[S_wc, S_f]` with the chord through `(S_wc, 0)` tangent to f at `S_f`,
//! which enforces the velocity constraint (wave speed monotone in upstream
//! saturation) and the entropy condition (downstream speeds bounded by the
//! shock speed). Both the analytical MOC solver and the entropy-constrained
//! network loss consume [`HullFlux`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the two-phase displacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RockFluidParams {
    /// Connate (irreducible) wetting-phase saturation.
    pub s_wc: f64,
    /// Residual non-wetting-phase saturation.
    pub s_gr: f64,
    /// Endpoint mobility ratio M.
    pub mobility_ratio: f64,
    /// Injected (inlet) saturation.
    pub s_inj: f64,
}

impl RockFluidParams {
    pub fn new(s_wc: f64, s_gr: f64, mobility_ratio: f64, s_inj: f64) -> Result<Self> {
        let p = Self {
            s_wc,
            s_gr,
            mobility_ratio,
            s_inj,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks `0 <= s_wc < s_inj <= 1 - s_gr <= 1` and `M > 0`.
    pub fn validate(&self) -> Result<()> {
        let all_finite = self.s_wc.is_finite()
            && self.s_gr.is_finite()
            && self.mobility_ratio.is_finite()
            && self.s_inj.is_finite();
        if !all_finite {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if !(self.s_wc >= 0.0 && self.s_wc < self.s_inj) {
            return Err(Error::InvalidParams(format!(
                "need 0 <= s_wc < s_inj, got s_wc={} s_inj={}",
                self.s_wc, self.s_inj
            )));
        }
        if !(self.s_inj <= 1.0 - self.s_gr) {
            return Err(Error::InvalidParams(format!(
                "need s_inj <= 1 - s_gr, got s_inj={} s_gr={}",
                self.s_inj, self.s_gr
            )));
        }
        if !(self.s_gr >= 0.0 && self.s_gr < 1.0) {
            return Err(Error::InvalidParams(format!("need 0 <= s_gr < 1, got {}", self.s_gr)));
        }
        if !(self.mobility_ratio > 0.0) {
            return Err(Error::InvalidParams(format!(
                "need mobility_ratio > 0, got {}",
                self.mobility_ratio
            )));
        }
        Ok(())
    }

    /// The unit-mobility textbook case `s_wc = s_gr = 0, M = 1, s_inj = 1`.
    pub fn classic() -> Self {
        Self {
            s_wc: 0.0,
            s_gr: 0.0,
            mobility_ratio: 1.0,
            s_inj: 1.0,
        }
    }

    /// Mobile saturation span `1 - s_wc - s_gr`.
    #[inline]
    pub fn span(&self) -> f64 {
        1.0 - self.s_wc - self.s_gr
    }

    #[inline]
    fn phases(&self, s: f64) -> (f64, f64) {
        (s - self.s_wc, 1.0 - s - self.s_gr)
    }

    /// The rational fractional-flow expression without domain checks or
    /// clamping. Smooth on all of R (the denominator never vanishes).
    #[inline]
    pub fn frac_flow_raw(&self, s: f64) -> f64 {
        let (a, b) = self.phases(s);
        let a2 = a * a;
        a2 / (a2 + b * b / self.mobility_ratio)
    }

    /// Analytic d/dS of [`Self::frac_flow_raw`]: `2abc / (M D^2)` with
    /// `c = 1 - s_wc - s_gr` and `D` the flow denominator.
    #[inline]
    pub fn frac_flow_slope_raw(&self, s: f64) -> f64 {
        let (a, b) = self.phases(s);
        let m = self.mobility_ratio;
        let d = a * a + b * b / m;
        2.0 * a * b * self.span() / (m * d * d)
    }

    /// Analytic d2/dS2 of [`Self::frac_flow_raw`].
    #[inline]
    pub fn frac_flow_curvature_raw(&self, s: f64) -> f64 {
        let (a, b) = self.phases(s);
        let m = self.mobility_ratio;
        let d = a * a + b * b / m;
        let d_prime = 2.0 * (a - b / m);
        2.0 * self.span() / m * ((b - a) / (d * d) - 2.0 * a * b * d_prime / (d * d * d))
    }

    /// Fractional flow on `[0, 1]`, clamped to 0 below the connate saturation.
    pub fn frac_flow(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::SaturationOutOfRange(s));
        }
        if s <= self.s_wc {
            Ok(0.0)
        } else {
            Ok(self.frac_flow_raw(s))
        }
    }

    /// Analytic derivative of the fractional flow on the open mobile interval.
    pub fn frac_flow_deriv(&self, s: f64) -> Result<f64> {
        let (lo, hi) = (self.s_wc, 1.0 - self.s_gr);
        if !(s > lo && s < hi) {
            return Err(Error::SaturationOutsideOpen { s, lo, hi });
        }
        Ok(self.frac_flow_slope_raw(s))
    }
}

impl Default for RockFluidParams {
    /// Artifact defaults: a generic displacement with a clear
    /// shock-plus-rarefaction structure.
    fn default() -> Self {
        Self {
            s_wc: 0.1,
            s_gr: 0.1,
            mobility_ratio: 2.0,
            s_inj: 0.9,
        }
    }
}

/// Convexified (upper concave hull) fractional-flow curve.
///
/// For `s_inj > s_tangent` the displacement is a rarefaction from `s_inj`
/// down to `s_tangent` followed by a shock to `s_wc` travelling at
/// `shock_speed = f(s_tangent) / (s_tangent - s_wc)`. If the injected
/// saturation sits at or below the tangent point the solution degenerates to
/// a pure shock from `s_inj` (flagged by [`HullFlux::pure_shock`], with the
/// chord drawn to `s_inj` instead).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullFlux {
    pub params: RockFluidParams,
    /// Welge tangent saturation `S_f` (equals `s_inj` in the pure-shock case).
    pub s_tangent: f64,
    /// Dimensionless shock speed `f(S_f) / (S_f - s_wc)`.
    pub shock_speed: f64,
    /// True when `s_inj <= S_f` and the solution is a single shock.
    pub pure_shock: bool,
}

/// Tangency residual `f'(S) - f(S)/(S - s_wc)` whose root is the Welge point.
#[inline]
fn tangency_residual(p: &RockFluidParams, s: f64) -> f64 {
    p.frac_flow_slope_raw(s) - p.frac_flow_raw(s) / (s - p.s_wc)
}

impl HullFlux {
    /// Welge construction: bracket the tangency condition
    /// `f'(S) = (f(S) - f(S_wc)) / (S - S_wc)` on the mobile interval by a
    /// sign scan, bisect, then polish with Newton until `|residual| <= tol`.
    pub fn build(p: &RockFluidParams, tol: f64) -> Result<Self> {
        p.validate()?;
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {tol}")));
        }
        const MAX_ITER: usize = 200;
        let span = p.span();
        let lo_edge = p.s_wc + 1e-9 * span;
        let hi_edge = 1.0 - p.s_gr - 1e-9 * span;

        // t(S) = f'(S)(S - s_wc) - f(S) rises from 0+, peaks, then falls to
        // -1 at the right edge; scan for the single sign change.
        let scan = 512;
        let t_at = |s: f64| p.frac_flow_slope_raw(s) * (s - p.s_wc) - p.frac_flow_raw(s);
        let mut lo = lo_edge;
        let mut hi = f64::NAN;
        let mut t_lo = t_at(lo);
        for i in 1..=scan {
            let s = lo_edge + (hi_edge - lo_edge) * i as f64 / scan as f64;
            let t_s = t_at(s);
            if t_lo > 0.0 && t_s <= 0.0 {
                hi = s;
                break;
            }
            lo = s;
            t_lo = t_s;
        }
        if !hi.is_finite() {
            return Err(Error::NoTangentBracket);
        }

        // Bisection until the bracket is tight, then Newton on the tangency
        // residual. The residual derivative is f''(S) - residual/(S - s_wc).
        let mut iters = 0;
        while hi - lo > 1e-6 * span && iters < MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if t_at(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            iters += 1;
        }
        let mut s = 0.5 * (lo + hi);
        while tangency_residual(p, s).abs() > tol && iters < MAX_ITER {
            let r = tangency_residual(p, s);
            let dr = p.frac_flow_curvature_raw(s) - r / (s - p.s_wc);
            let next = s - r / dr;
            s = if next.is_finite() && next > lo && next < hi {
                next
            } else {
                // Newton left the bracket; fall back to one bisection step.
                if t_at(0.5 * (lo + hi)) > 0.0 {
                    lo = 0.5 * (lo + hi);
                } else {
                    hi = 0.5 * (lo + hi);
                }
                0.5 * (lo + hi)
            };
            iters += 1;
        }
        if tangency_residual(p, s).abs() > tol {
            return Err(Error::NoConvergence(MAX_ITER));
        }

        if p.s_inj <= s {
            // Injection below the tangent point: single admissible shock.
            let shock_speed = p.frac_flow_raw(p.s_inj) / (p.s_inj - p.s_wc);
            return Ok(Self {
                params: *p,
                s_tangent: p.s_inj,
                shock_speed,
                pure_shock: true,
            });
        }
        let shock_speed = p.frac_flow_raw(s) / (s - p.s_wc);
        Ok(Self {
            params: *p,
            s_tangent: s,
            shock_speed,
            pure_shock: false,
        })
    }

    /// Piecewise hull flux: 0 below `s_wc`, the Welge chord up to the
    /// tangent point, the original fractional flow above it.
    pub fn flow(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::SaturationOutOfRange(s));
        }
        Ok(self.flow_unchecked(s))
    }

    #[inline]
    fn flow_unchecked(&self, s: f64) -> f64 {
        if s <= self.params.s_wc {
            0.0
        } else if s <= self.s_tangent {
            self.shock_speed * (s - self.params.s_wc)
        } else {
            self.params.frac_flow_raw(s)
        }
    }

    /// Derivative of the hull flux. At the tangent breakpoint the chord
    /// slope (left limit) is returned; below `s_wc` the flat segment gives 0.
    #[inline]
    pub fn flow_deriv(&self, s: f64) -> f64 {
        if s <= self.params.s_wc {
            0.0
        } else if s <= self.s_tangent {
            self.shock_speed
        } else {
            self.params.frac_flow_slope_raw(s)
        }
    }

    /// Second derivative of the hull flux (zero on the flat and chord
    /// segments), used when back-propagating through the residual.
    #[inline]
    pub fn flow_curvature(&self, s: f64) -> f64 {
        if s <= self.s_tangent {
            0.0
        } else {
            self.params.frac_flow_curvature_raw(s)
        }
    }
}

/// The flux curve the PDE residual differentiates through: either the raw
/// fractional flow (naive weak form) or the convex hull (entropy-constrained).
///
/// Both variants extend smoothly outside the physical saturation range so a
/// partially trained network always sees finite slopes: below `s_wc` the
/// clamped flux is flat, elsewhere the rational expression is used as-is.
#[derive(Debug, Clone, Copy)]
pub enum FluxCurve<'a> {
    Naive(&'a RockFluidParams),
    Hull(&'a HullFlux),
}

impl FluxCurve<'_> {
    #[inline]
    pub fn slope(&self, s: f64) -> f64 {
        match self {
            FluxCurve::Naive(p) => {
                if s <= p.s_wc {
                    0.0
                } else {
                    p.frac_flow_slope_raw(s)
                }
            }
            FluxCurve::Hull(h) => h.flow_deriv(s),
        }
    }

    #[inline]
    pub fn curvature(&self, s: f64) -> f64 {
        match self {
            FluxCurve::Naive(p) => {
                if s <= p.s_wc {
                    0.0
                } else {
                    p.frac_flow_curvature_raw(s)
                }
            }
            FluxCurve::Hull(h) => h.flow_curvature(s),
        }
    }
}
