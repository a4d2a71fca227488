//! Planar piecewise system definition: the two branch fields, the switching
//! surface, region classification, and side-limit Jacobians.
//!
//! The built-in field family is
//!
//! ```text
//! f⁺(t,x) = (-mu·x1 + A·sin t, -alpha·x2)      (x1 > 0)
//! f⁻(t,x) = (-mu·x1 - A·sin t, -alpha·x2)      (x1 < 0)
//! ```
//!
//! with switching surface `h(x) = x1 = 0`. The surface is kept behind a
//! general `(h, ∇h)` interface; the fields are the parametric family above.

use nalgebra::{Matrix2, Vector2};

/// State / velocity in the plane.
pub type State = Vector2<f64>;

/// Default tolerance for deciding that a point lies on the switching surface.
pub const SURFACE_TOL: f64 = 1e-9;

/// Which side of the switching surface a branch field belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    /// Sign of `h` on this side.
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }
}

/// Region of the plane relative to the switching surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionSign {
    Plus,
    Minus,
    OnSurface,
}

/// Codimension-one switching surface `{h(x) = 0}` with its gradient.
#[derive(Clone, Copy)]
pub struct SwitchingSurface {
    pub h: fn(State) -> f64,
    pub grad_h: fn(State) -> State,
}

impl SwitchingSurface {
    /// The built-in vertical surface `h(x) = x1`.
    pub fn x1_axis() -> Self {
        Self {
            h: |x| x.x,
            grad_h: |_| Vector2::new(1.0, 0.0),
        }
    }

    /// Unit normal `∇h / |∇h|`.
    pub fn normal(&self, x: State) -> State {
        let g = (self.grad_h)(x);
        g / g.norm()
    }

    /// Move `x` onto the surface along the gradient direction (Newton steps).
    /// Exact for affine `h`; used to pin event states and sliding motion.
    pub fn project(&self, x: State) -> State {
        let mut y = x;
        for _ in 0..2 {
            let hv = (self.h)(y);
            if hv == 0.0 {
                break;
            }
            let g = (self.grad_h)(y);
            y -= g * (hv / g.norm_squared());
        }
        y
    }
}

impl std::fmt::Debug for SwitchingSurface {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SwitchingSurface").finish_non_exhaustive()
    }
}

impl Default for SwitchingSurface {
    fn default() -> Self {
        Self::x1_axis()
    }
}

/// Parameters of the piecewise system: decay rates, forcing amplitude,
/// forcing period, and the switching surface.
#[derive(Debug, Clone, Copy)]
pub struct SystemDef {
    /// Decay rate in `x1` (> 0).
    pub mu: f64,
    /// Decay rate in `x2` (> 0).
    pub alpha: f64,
    /// Amplitude multiplying `sin t` (>= 0).
    pub forcing_amp: f64,
    /// Forcing period `T` (> 0).
    pub period: f64,
    pub surface: SwitchingSurface,
}

impl SystemDef {
    pub fn new(mu: f64, alpha: f64, forcing_amp: f64, period: f64) -> Self {
        debug_assert!(mu > 0.0 && alpha > 0.0 && period > 0.0 && forcing_amp >= 0.0);
        Self {
            mu,
            alpha,
            forcing_amp,
            period,
            surface: SwitchingSurface::x1_axis(),
        }
    }

    /// Surface level at `x`.
    pub fn h(&self, x: State) -> f64 {
        (self.surface.h)(x)
    }

    /// Branch velocity `f^±(t, x)`; both side limits are defined everywhere.
    pub fn eval_side(&self, t: f64, x: State, side: Side) -> State {
        let forcing = side.sign() * self.forcing_amp * t.sin();
        Vector2::new(-self.mu * x.x + forcing, -self.alpha * x.y)
    }

    /// Spatial Jacobian of the selected branch. Constant for this family:
    /// the forcing is state-independent.
    pub fn side_jacobian(&self, _t: f64, _x: State, _side: Side) -> Matrix2<f64> {
        Matrix2::new(-self.mu, 0.0, 0.0, -self.alpha)
    }

    /// Which branch governs points at `x` (surface band decided by `surface_tol`).
    pub fn classify_region(&self, x: State, surface_tol: f64) -> RegionSign {
        debug_assert!(surface_tol > 0.0);
        let hv = self.h(x);
        if hv > surface_tol {
            RegionSign::Plus
        } else if hv < -surface_tol {
            RegionSign::Minus
        } else {
            RegionSign::OnSurface
        }
    }

    /// Endpoints `{f⁻, f⁺}` of the Filippov velocity segment at an on-surface
    /// point. Any convex combination of the pair is an admissible velocity.
    pub fn filippov_hull(
        &self,
        t: f64,
        x: State,
        surface_tol: f64,
    ) -> Result<(State, State), OffSurface> {
        if self.classify_region(x, surface_tol) != RegionSign::OnSurface {
            return Err(OffSurface { h: self.h(x) });
        }
        Ok((self.eval_side(t, x, Side::Minus), self.eval_side(t, x, Side::Plus)))
    }
}

/// A surface-only operation was invoked away from the switching surface.
#[derive(Debug, Clone, Copy, thiserror::Error)]
#[error("point is off the switching surface (h = {h:e})")]
pub struct OffSurface {
    pub h: f64,
}
