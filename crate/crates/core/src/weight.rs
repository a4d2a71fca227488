//! Weight metric `W(t,x) = -delta * sigma(x1)` built from a sinusoidal-blend
//! transition function, plus its spatial gradient and orbital derivative.

use crate::geometry::{State, SystemDef};

/// Transition function: 0 for `x1 <= -eps`, 1 for `x1 >= eps`, and the C¹
/// blend `(1 + x1/eps + sin(pi*x1/eps)/pi) / 2` in between.
pub fn sigma(x1: f64, eps: f64) -> f64 {
    debug_assert!(eps > 0.0);
    if x1 <= -eps {
        0.0
    } else if x1 >= eps {
        1.0
    } else {
        let u = x1 / eps;
        0.5 * (1.0 + u + (std::f64::consts::PI * u).sin() / std::f64::consts::PI)
    }
}

/// Derivative of [`sigma`]: `(1 + cos(pi*x1/eps)) / (2*eps)` inside the
/// transition layer, zero outside. Supremum `1/eps`, attained at `x1 = 0`.
pub fn sigma_prime(x1: f64, eps: f64) -> f64 {
    debug_assert!(eps > 0.0);
    if x1.abs() >= eps {
        0.0
    } else {
        (1.0 + (std::f64::consts::PI * x1 / eps).cos()) / (2.0 * eps)
    }
}

/// Depth and transition half-width of the weight `W(t,x) = -delta*sigma(x1)`.
#[derive(Debug, Clone, Copy)]
pub struct WeightSpec {
    /// Weight depth (>= 0; 0 switches the weight off).
    pub delta: f64,
    /// Transition half-width in `x1` units (> 0).
    pub eps: f64,
}

impl WeightSpec {
    pub fn new(delta: f64, eps: f64) -> Self {
        debug_assert!(delta >= 0.0 && eps > 0.0);
        Self { delta, eps }
    }

    /// Supremum of `|sigma'|` for this width.
    pub fn c_sigma(&self) -> f64 {
        1.0 / self.eps
    }

    /// `W(t,x) = -delta*sigma(x1)`, in `[-delta, 0]`. Independent of `t`
    /// and `x2`; the signature keeps `t` for the general contract.
    pub fn value(&self, _t: f64, x: State) -> f64 {
        -self.delta * sigma(x.x, self.eps)
    }

    /// Orbital derivative `W' = ∂t W + ∇x W · v = -delta*sigma'(x1)*v1`
    /// along a velocity `v` (the active branch or sliding field at `(t,x)`).
    pub fn orbital_derivative(&self, _sys: &SystemDef, _t: f64, x: State, v: State) -> f64 {
        -self.delta * sigma_prime(x.x, self.eps) * v.x
    }

    /// One-sided limits of the idealized (discontinuous) weight on the
    /// surface: the plateau values of the regularized profile.
    pub fn jump_limits(&self) -> (f64, f64) {
        (-self.delta, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Side, SystemDef};
    use approx::assert_relative_eq;
    use nalgebra::Vector2;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn sigma_plateaus_and_midpoint() {
        for eps in [0.01, 0.2, 1.0] {
            assert_eq!(sigma(0.0, eps), 0.5);
            assert_eq!(sigma(eps, eps), 1.0);
            assert_eq!(sigma(-eps, eps), 0.0);
            assert_eq!(sigma(eps * 3.0, eps), 1.0);
            assert_eq!(sigma(-eps * 3.0, eps), 0.0);
        }
        // direct evaluation at eps/2, checked against a high-precision
        // computation of 3/4 + 1/(2*pi)
        assert_relative_eq!(
            sigma(0.1, 0.2),
            0.909_154_943_091_895_3,
            max_relative = 1e-15
        );
    }

    #[test]
    fn sigma_prime_values_and_seams() {
        assert_relative_eq!(sigma_prime(0.0, 0.2), 5.0, max_relative = 1e-15);
        assert_eq!(sigma_prime(0.2, 0.2), 0.0);
        assert_eq!(sigma_prime(-0.2, 0.2), 0.0);
        // cos(pi/2) = 0 at the half-layer point
        assert_relative_eq!(sigma_prime(0.1, 0.2), 2.5, max_relative = 1e-12);
    }

    #[test]
    fn weight_value_range() {
        let w = WeightSpec::new(0.15, 0.2);
        assert_eq!(w.value(0.0, Vector2::new(-0.3, 1.0)), 0.0);
        assert_relative_eq!(w.value(7.0, Vector2::new(0.3, -1.0)), -0.15, max_relative = 1e-15);
        assert_relative_eq!(w.value(0.0, Vector2::new(0.0, 0.0)), -0.075, max_relative = 1e-15);
    }

    #[test]
    fn orbital_derivative_examples() {
        let sys = SystemDef::new(1.8, 0.1, 1.0, 4.0 * PI);
        let w = WeightSpec::new(0.004, 0.2);

        // outside the transition layer
        let x = Vector2::new(0.5, 1.0);
        let v = sys.eval_side(1.0, x, Side::Plus);
        assert_eq!(w.orbital_derivative(&sys, 1.0, x, v), 0.0);

        // x1 = 0, t = pi/2: v = f⁺ = (1, -alpha*x2), W' = -delta*(1/eps)*1
        let x = Vector2::new(0.0, 0.7);
        let v = sys.eval_side(PI / 2.0, x, Side::Plus);
        assert_relative_eq!(w.orbital_derivative(&sys, PI / 2.0, x, v), -0.02, epsilon = 1e-15);

        // sliding velocities have v1 = 0
        let v = Vector2::new(0.0, -0.07);
        assert_eq!(w.orbital_derivative(&sys, 1.0, x, v), 0.0);
    }

    #[test]
    fn orbital_derivative_obeys_layer_bound() {
        // |W'| <= delta*(1/eps)*(mu*eps + A) for branch velocities in the layer
        let sys = SystemDef::new(1.8, 0.1, 1.0, 4.0 * PI);
        let w = WeightSpec::new(0.05, 0.2);
        let bound = w.delta * w.c_sigma() * (sys.mu * w.eps + sys.forcing_amp);
        for i in 0..80 {
            let t = 2.0 * PI * i as f64 / 79.0;
            for j in 0..201 {
                let x1 = -w.eps + 2.0 * w.eps * j as f64 / 200.0;
                let x = Vector2::new(x1, 0.4);
                let side = if x1 >= 0.0 { Side::Plus } else { Side::Minus };
                let v = sys.eval_side(t, x, side);
                let wp = w.orbital_derivative(&sys, t, x, v);
                assert!(wp.abs() <= bound + 1e-12, "t={t} x1={x1}: |{wp}| > {bound}");
            }
        }
    }

    proptest! {
        #[test]
        fn sigma_prime_matches_finite_differences(
            x1 in -0.5f64..0.5,
            eps in 0.05f64..0.4,
        ) {
            let fd = 1e-6;
            let diff = (sigma(x1 + fd, eps) - sigma(x1 - fd, eps)) / (2.0 * fd);
            prop_assert!((sigma_prime(x1, eps) - diff).abs() <= 1e-6);
        }

        #[test]
        fn sigma_monotone_into_unit_interval(
            a in -0.6f64..0.6,
            b in -0.6f64..0.6,
            eps in 0.05f64..0.4,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (slo, shi) = (sigma(lo, eps), sigma(hi, eps));
            prop_assert!((0.0..=1.0).contains(&slo) && (0.0..=1.0).contains(&shi));
            prop_assert!(slo <= shi);
        }

        #[test]
        fn weight_is_lipschitz_across_seams(
            x1 in -0.25f64..0.25,
            dh in -0.02f64..0.02,
        ) {
            // |W(x1+dh) - W(x1)| <= delta*C_sigma*|dh|, sampled across the seams
            let w = WeightSpec::new(0.15, 0.2);
            let a = w.value(0.0, Vector2::new(x1, 0.0));
            let b = w.value(0.0, Vector2::new(x1 + dh, 0.0));
            prop_assert!((b - a).abs() <= w.delta * w.c_sigma() * dh.abs() + 1e-15);
        }
    }
}
