//! Grid verification of the weighted-contraction conditions: the smooth
//! spectral bound, the jump inequality on the surface, sliding contraction,
//! and forward invariance of the rectangle.
//!
//! All checks report measured grid suprema with a witness point; they do not
//! certify anything between grid nodes. Sweeps run in parallel over the time
//! axis and reduce associatively, so results are identical for any worker
//! count, with ties broken by lexicographic grid index.

use crate::flow::{self, SlidingError};
use crate::geometry::{RegionSign, Side, State, SystemDef};
use crate::weight::WeightSpec;
use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;
use serde::Serialize;
use std::io;

/// Uniform closed grid on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        debug_assert!(count >= 2 && max > min);
        Self { min, max, count }
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
    }
}

/// Evaluation grid for the smooth-region check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub t: Axis,
    pub x1: Axis,
    pub x2: Axis,
}

/// Axis-aligned rectangle, the forward-invariant candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rect {
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
}

impl Rect {
    pub fn new(x1_min: f64, x1_max: f64, x2_min: f64, x2_max: f64) -> Self {
        debug_assert!(x1_max > x1_min && x2_max > x2_min);
        Self { x1_min, x1_max, x2_min, x2_max }
    }

    pub fn contains(&self, x: State) -> bool {
        (self.x1_min..=self.x1_max).contains(&x.x) && (self.x2_min..=self.x2_max).contains(&x.y)
    }
}

/// Grid point attaining a reported extremum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witness {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
}

/// Extra payload for the jump check: bounds of the weighted-norm ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioBounds {
    pub sup: f64,
    pub inf: f64,
}

/// Extra payload for the invariance check: per-face-pair suprema of the
/// outward normal component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FaceBounds {
    pub x1_faces_sup: f64,
    pub x2_faces_sup: f64,
}

/// Grid axes a check actually swept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct GridSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<Axis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x1: Option<Axis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x2: Option<Axis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rect: Option<Rect>,
}

/// Measured grid extrema of one contraction inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub quantity: String,
    pub nu_used: f64,
    pub sup_value: f64,
    pub inf_value: f64,
    pub witness_sup: Witness,
    pub passes: bool,
    pub skipped_count: usize,
    pub grid: GridSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<RatioBounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub faces: Option<FaceBounds>,
}

impl ContractionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Contraction rate used when none is given: half the slower decay rate.
pub fn default_nu(sys: &SystemDef) -> f64 {
    0.5 * sys.mu.min(sys.alpha)
}

/// Largest eigenvalue of the symmetric part `(M + Mᵀ)/2`, by the closed
/// form `(a+d)/2 + sqrt(((a-d)/2)² + b̄²)` with `b̄ = (m12+m21)/2`. The
/// symmetrized-diagonal case returns `max(a, d)` exactly.
pub fn sym_lambda_max(m: &Matrix2<f64>) -> f64 {
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    if b == 0.0 {
        return a.max(d);
    }
    0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt()
}

/// Max of the vertex values over the generalized-Jacobian segment. The
/// symmetric-part top eigenvalue is convex in the matrix, so the maximum
/// over the hull is attained at an endpoint.
fn clarke_from_vertices(j_minus: &Matrix2<f64>, j_plus: &Matrix2<f64>) -> f64 {
    sym_lambda_max(j_minus).max(sym_lambda_max(j_plus))
}

/// Spectral bound of the generalized Jacobian at `(t, x)`: the active
/// branch's value away from the surface, the vertex maximum on it.
pub fn clarke_lambda_max(sys: &SystemDef, t: f64, x: State, surface_tol: f64) -> f64 {
    match sys.classify_region(x, surface_tol) {
        RegionSign::Plus => sym_lambda_max(&sys.side_jacobian(t, x, Side::Plus)),
        RegionSign::Minus => sym_lambda_max(&sys.side_jacobian(t, x, Side::Minus)),
        RegionSign::OnSurface => clarke_from_vertices(
            &sys.side_jacobian(t, x, Side::Minus),
            &sys.side_jacobian(t, x, Side::Plus),
        ),
    }
}

/// Tangential contraction rate of the sliding field: the Rayleigh quotient
/// of its symmetrized Jacobian in the surface tangent direction. The
/// built-in family slides with `(0, -alpha*x2)`, whose restricted Jacobian
/// representation is `diag(0, -alpha)`; the tangential rate is `-alpha`.
pub fn sliding_tangential_rate(sys: &SystemDef) -> f64 {
    -sys.alpha
}

/// Running extremum with first-in-lex-order tiebreak.
#[derive(Debug, Clone, Copy)]
struct Extreme {
    value: f64,
    index: usize,
}

impl Extreme {
    fn max(a: Option<Extreme>, b: Option<Extreme>) -> Option<Extreme> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(a), Some(b)) => Some(if b.value > a.value || (b.value == a.value && b.index < a.index) {
                b
            } else {
                a
            }),
        }
    }

    fn min(a: Option<Extreme>, b: Option<Extreme>) -> Option<Extreme> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(a), Some(b)) => Some(if b.value < a.value || (b.value == a.value && b.index < a.index) {
                b
            } else {
                a
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct SweepAcc {
    sup: Option<Extreme>,
    inf: Option<Extreme>,
    skipped: usize,
}

impl SweepAcc {
    fn observe(&mut self, value: f64, index: usize) {
        let e = Some(Extreme { value, index });
        self.sup = Extreme::max(self.sup, e);
        self.inf = Extreme::min(self.inf, e);
    }

    fn combine(self, other: SweepAcc) -> SweepAcc {
        SweepAcc {
            sup: Extreme::max(self.sup, other.sup),
            inf: Extreme::min(self.inf, other.inf),
            skipped: self.skipped + other.skipped,
        }
    }
}

/// Pointwise terms of the smooth-region inequality at an off-surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A2Point {
    pub w: f64,
    pub w_prime: f64,
    pub lambda: f64,
    /// `w_prime + lambda`, the checked quantity.
    pub value: f64,
}

/// Evaluate the smooth-region quantity at `(t, x)` along the active branch
/// velocity; `None` inside the surface band.
pub fn a2_point(
    sys: &SystemDef,
    w: &WeightSpec,
    t: f64,
    x: State,
    surface_tol: f64,
) -> Option<A2Point> {
    let side = match sys.classify_region(x, surface_tol) {
        RegionSign::Plus => Side::Plus,
        RegionSign::Minus => Side::Minus,
        RegionSign::OnSurface => return None,
    };
    let v = sys.eval_side(t, x, side);
    let w_prime = w.orbital_derivative(sys, t, x, v);
    let lambda = clarke_lambda_max(sys, t, x, surface_tol);
    Some(A2Point {
        w: w.value(t, x),
        w_prime,
        lambda,
        value: w_prime + lambda,
    })
}

/// Smooth-region check: `W'(t,x) + lambda_max <= -nu` off the surface.
/// Grid points inside the surface band are skipped and counted.
pub fn check_a2(
    sys: &SystemDef,
    w: &WeightSpec,
    grid: &GridSpec,
    nu: f64,
    surface_tol: f64,
) -> ContractionReport {
    let (nt, n1, n2) = (grid.t.count, grid.x1.count, grid.x2.count);
    let acc = (0..nt)
        .into_par_iter()
        .map(|it| {
            let t = grid.t.value(it);
            let mut acc = SweepAcc::default();
            for i1 in 0..n1 {
                let x1 = grid.x1.value(i1);
                for i2 in 0..n2 {
                    let x2 = grid.x2.value(i2);
                    let index = (it * n1 + i1) * n2 + i2;
                    match a2_point(sys, w, t, Vector2::new(x1, x2), surface_tol) {
                        Some(p) => acc.observe(p.value, index),
                        None => acc.skipped += 1,
                    }
                }
            }
            acc
        })
        .reduce(SweepAcc::default, SweepAcc::combine);

    let witness = |e: Option<Extreme>| {
        let index = e.map(|e| e.index).unwrap_or(0);
        let (it, rest) = (index / (n1 * n2), index % (n1 * n2));
        Witness {
            t: grid.t.value(it),
            x1: grid.x1.value(rest / n2),
            x2: grid.x2.value(rest % n2),
        }
    };
    let sup = acc.sup.map(|e| e.value).unwrap_or(f64::NEG_INFINITY);
    ContractionReport {
        quantity: "smooth_contraction".to_string(),
        nu_used: nu,
        sup_value: sup,
        inf_value: acc.inf.map(|e| e.value).unwrap_or(f64::INFINITY),
        witness_sup: witness(acc.sup),
        passes: sup <= -nu,
        skipped_count: acc.skipped,
        grid: GridSummary {
            t: Some(grid.t),
            x1: Some(grid.x1),
            x2: Some(grid.x2),
            ..GridSummary::default()
        },
        ratio: None,
        faces: None,
    }
}

/// Pointwise terms of the jump inequality at a surface point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A3Point {
    /// `e^{W⁺} ‖f⁺‖`
    pub lhs: f64,
    /// `e^{W⁻} ‖f⁻‖ e^{-eps_jump}`
    pub rhs: f64,
    /// `e^{W⁺}‖f⁺‖ / (e^{W⁻}‖f⁻‖)`
    pub ratio: f64,
}

/// Evaluate the jump quantity at `(t, (0, x2))` with the idealized one-sided
/// weight limits `W⁺ = -delta`, `W⁻ = 0`; `None` when `‖f⁻‖ = 0`.
pub fn a3_point(sys: &SystemDef, w: &WeightSpec, t: f64, x2: f64, eps_jump: f64) -> Option<A3Point> {
    let (w_plus, w_minus) = w.jump_limits();
    let x = Vector2::new(0.0, x2);
    let nfp = sys.eval_side(t, x, Side::Plus).norm();
    let nfm = sys.eval_side(t, x, Side::Minus).norm();
    if nfm == 0.0 {
        return None;
    }
    let lhs = w_plus.exp() * nfp;
    let scaled_minus = w_minus.exp() * nfm;
    Some(A3Point {
        lhs,
        rhs: scaled_minus * (-eps_jump).exp(),
        ratio: lhs / scaled_minus,
    })
}

/// Jump check on the surface: `e^{W⁺}‖f⁺‖ - e^{W⁻}‖f⁻‖e^{-eps_jump} <= 0`.
/// Points with `‖f⁻‖ = 0` are degenerate and skipped.
pub fn check_a3(
    sys: &SystemDef,
    w: &WeightSpec,
    t_axis: Axis,
    x2_axis: Axis,
    eps_jump: f64,
) -> ContractionReport {
    let (nt, n2) = (t_axis.count, x2_axis.count);

    #[derive(Clone, Copy, Default)]
    struct A3Acc {
        main: SweepAcc,
        ratio_sup: Option<Extreme>,
        ratio_inf: Option<Extreme>,
    }

    let acc = (0..nt)
        .into_par_iter()
        .map(|it| {
            let t = t_axis.value(it);
            let mut acc = A3Acc::default();
            for i2 in 0..n2 {
                let index = it * n2 + i2;
                let Some(p) = a3_point(sys, w, t, x2_axis.value(i2), eps_jump) else {
                    acc.main.skipped += 1;
                    continue;
                };
                acc.main.observe(p.lhs - p.rhs, index);
                let ratio = Some(Extreme { value: p.ratio, index });
                acc.ratio_sup = Extreme::max(acc.ratio_sup, ratio);
                acc.ratio_inf = Extreme::min(acc.ratio_inf, ratio);
            }
            acc
        })
        .reduce(A3Acc::default, |a, b| A3Acc {
            main: a.main.combine(b.main),
            ratio_sup: Extreme::max(a.ratio_sup, b.ratio_sup),
            ratio_inf: Extreme::min(a.ratio_inf, b.ratio_inf),
        });

    let witness = |e: Option<Extreme>| {
        let index = e.map(|e| e.index).unwrap_or(0);
        Witness {
            t: t_axis.value(index / n2),
            x1: 0.0,
            x2: x2_axis.value(index % n2),
        }
    };
    let sup = acc.main.sup.map(|e| e.value).unwrap_or(f64::NEG_INFINITY);
    ContractionReport {
        quantity: "jump_contraction".to_string(),
        nu_used: eps_jump,
        sup_value: sup,
        inf_value: acc.main.inf.map(|e| e.value).unwrap_or(f64::INFINITY),
        witness_sup: witness(acc.main.sup),
        passes: sup <= 0.0,
        skipped_count: acc.main.skipped,
        grid: GridSummary {
            t: Some(t_axis),
            x2: Some(x2_axis),
            ..GridSummary::default()
        },
        ratio: Some(RatioBounds {
            sup: acc.ratio_sup.map(|e| e.value).unwrap_or(f64::NEG_INFINITY),
            inf: acc.ratio_inf.map(|e| e.value).unwrap_or(f64::INFINITY),
        }),
        faces: None,
    }
}

/// Sliding check on attracting surface points: `W'` along the sliding field
/// plus the tangential spectral rate must stay `<= -nu`. Non-attracting
/// grid points are skipped and counted.
pub fn check_a4(
    sys: &SystemDef,
    w: &WeightSpec,
    t_axis: Axis,
    x2_axis: Axis,
    nu: f64,
    surface_tol: f64,
) -> ContractionReport {
    let rate = sliding_tangential_rate(sys);
    let (nt, n2) = (t_axis.count, x2_axis.count);
    let acc = (0..nt)
        .into_par_iter()
        .map(|it| {
            let t = t_axis.value(it);
            let mut acc = SweepAcc::default();
            for i2 in 0..n2 {
                let x2 = x2_axis.value(i2);
                let x = Vector2::new(0.0, x2);
                let index = it * n2 + i2;
                match flow::sliding_field(sys, t, x, surface_tol) {
                    Ok(v) => {
                        let value = w.orbital_derivative(sys, t, x, v) + rate;
                        acc.observe(value, index);
                    }
                    Err(SlidingError::NotAttracting { .. } | SlidingError::Degenerate) => {
                        acc.skipped += 1;
                    }
                    Err(SlidingError::OffSurface(_)) => unreachable!("x1 = 0 grid"),
                }
            }
            acc
        })
        .reduce(SweepAcc::default, SweepAcc::combine);

    let witness = |e: Option<Extreme>| {
        let index = e.map(|e| e.index).unwrap_or(0);
        Witness {
            t: t_axis.value(index / n2),
            x1: 0.0,
            x2: x2_axis.value(index % n2),
        }
    };
    let sup = acc.sup.map(|e| e.value).unwrap_or(f64::NEG_INFINITY);
    ContractionReport {
        quantity: "sliding_contraction".to_string(),
        nu_used: nu,
        sup_value: sup,
        inf_value: acc.inf.map(|e| e.value).unwrap_or(f64::INFINITY),
        witness_sup: witness(acc.sup),
        passes: sup <= -nu,
        skipped_count: acc.skipped,
        grid: GridSummary {
            t: Some(t_axis),
            x2: Some(x2_axis),
            ..GridSummary::default()
        },
        ratio: None,
        faces: None,
    }
}

/// Forward-invariance check: the outward normal component of the active
/// field, sampled on the rectangle boundary, must stay strictly negative.
/// On-surface boundary points use the worst hull endpoint.
pub fn check_a5(
    sys: &SystemDef,
    rect: Rect,
    t_axis: Axis,
    boundary_count: usize,
) -> ContractionReport {
    debug_assert!(boundary_count >= 2);
    let surface_tol = crate::geometry::SURFACE_TOL;

    // outward normal component, conservative over the Filippov hull
    let outward = |t: f64, x: State, n: State| -> f64 {
        match sys.classify_region(x, surface_tol) {
            RegionSign::Plus => n.dot(&sys.eval_side(t, x, Side::Plus)),
            RegionSign::Minus => n.dot(&sys.eval_side(t, x, Side::Minus)),
            RegionSign::OnSurface => n
                .dot(&sys.eval_side(t, x, Side::Minus))
                .max(n.dot(&sys.eval_side(t, x, Side::Plus))),
        }
    };

    let lerp = |a: f64, b: f64, s: f64| a + (b - a) * s;
    // faces in fixed order: x1-min, x1-max, x2-min, x2-max
    let face = |fi: usize, s: f64| -> (State, State) {
        match fi {
            0 => (Vector2::new(-1.0, 0.0), Vector2::new(rect.x1_min, lerp(rect.x2_min, rect.x2_max, s))),
            1 => (Vector2::new(1.0, 0.0), Vector2::new(rect.x1_max, lerp(rect.x2_min, rect.x2_max, s))),
            2 => (Vector2::new(0.0, -1.0), Vector2::new(lerp(rect.x1_min, rect.x1_max, s), rect.x2_min)),
            _ => (Vector2::new(0.0, 1.0), Vector2::new(lerp(rect.x1_min, rect.x1_max, s), rect.x2_max)),
        }
    };

    let mut acc = SweepAcc::default();
    let mut face_sups = [f64::NEG_INFINITY; 4];
    let mut sup_point: Option<(f64, State)> = None;
    for fi in 0..4 {
        for it in 0..t_axis.count {
            let t = t_axis.value(it);
            for j in 0..boundary_count {
                let s = j as f64 / (boundary_count - 1) as f64;
                let (normal, x) = face(fi, s);
                let value = outward(t, x, normal);
                let index = (fi * t_axis.count + it) * boundary_count + j;
                let before = acc.sup.map(|e| e.index);
                acc.observe(value, index);
                if acc.sup.map(|e| e.index) != before {
                    sup_point = Some((t, x));
                }
                face_sups[fi] = face_sups[fi].max(value);
            }
        }
    }

    let witness = match sup_point {
        Some((t, x)) => Witness { t, x1: x.x, x2: x.y },
        None => Witness { t: t_axis.value(0), x1: rect.x1_min, x2: rect.x2_min },
    };
    let sup = acc.sup.map(|e| e.value).unwrap_or(f64::NEG_INFINITY);
    ContractionReport {
        quantity: "forward_invariance".to_string(),
        nu_used: 0.0,
        sup_value: sup,
        inf_value: acc.inf.map(|e| e.value).unwrap_or(f64::INFINITY),
        witness_sup: witness,
        passes: sup < 0.0,
        skipped_count: 0,
        grid: GridSummary {
            t: Some(t_axis),
            boundary_count: Some(boundary_count),
            rect: Some(rect),
            ..GridSummary::default()
        },
        ratio: None,
        faces: Some(FaceBounds {
            x1_faces_sup: face_sups[0].max(face_sups[1]),
            x2_faces_sup: face_sups[2].max(face_sups[3]),
        }),
    }
}

/// Dump the smooth-region sweep as `t,x1,x2,w,w_prime,lambda,value` rows in
/// lexicographic grid order (surface-band points omitted). Plot-ready data
/// for weight and contraction profiles.
pub fn write_a2_grid_csv<W: io::Write>(
    out: &mut W,
    sys: &SystemDef,
    w: &WeightSpec,
    grid: &GridSpec,
    surface_tol: f64,
) -> io::Result<()> {
    writeln!(out, "t,x1,x2,w,w_prime,lambda,value")?;
    for it in 0..grid.t.count {
        let t = grid.t.value(it);
        for i1 in 0..grid.x1.count {
            let x1 = grid.x1.value(i1);
            for i2 in 0..grid.x2.count {
                let x2 = grid.x2.value(i2);
                if let Some(p) = a2_point(sys, w, t, Vector2::new(x1, x2), surface_tol) {
                    writeln!(
                        out,
                        "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                        t, x1, x2, p.w, p.w_prime, p.lambda, p.value
                    )?;
                }
            }
        }
    }
    Ok(())
}

/// Dump the jump sweep as `t,x2,lhs,rhs,ratio` rows in lexicographic grid
/// order (degenerate points omitted).
pub fn write_a3_grid_csv<W: io::Write>(
    out: &mut W,
    sys: &SystemDef,
    w: &WeightSpec,
    t_axis: Axis,
    x2_axis: Axis,
    eps_jump: f64,
) -> io::Result<()> {
    writeln!(out, "t,x2,lhs,rhs,ratio")?;
    for it in 0..t_axis.count {
        let t = t_axis.value(it);
        for i2 in 0..x2_axis.count {
            let x2 = x2_axis.value(i2);
            if let Some(p) = a3_point(sys, w, t, x2, eps_jump) {
                writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    t, x2, p.lhs, p.rhs, p.ratio
                )?;
            }
        }
    }
    Ok(())
}
