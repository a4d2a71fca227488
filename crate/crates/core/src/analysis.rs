//! Trajectory-pair contraction measurement, the comparison bound for
//! piecewise-decaying signals, decay-rate fitting, the time-T map, the
//! periodic-orbit fixed-point solver, and batched map iteration.

use crate::flow::{self, FlowError, IntegratorCfg, SwitchEvent, Trajectory};
use crate::geometry::{State, SystemDef};
use crate::weight::WeightSpec;
use rayon::prelude::*;
use serde::Serialize;
use std::io::{self, Write};

/// Relative slack applied to pointwise bound comparisons on computed
/// exponentials.
pub const COMPARISON_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, thiserror::Error)]
pub enum AnalysisError {
    #[error("fit window [{0}, {1}] contains no samples")]
    EmptyWindow(f64, f64),
    #[error("non-positive distance at t = {t}; cannot fit a log slope")]
    ZeroDistance { t: f64 },
    #[error("jump factor {gamma} outside (0, 1]")]
    InvalidJumpFactor { gamma: f64 },
    #[error("fixed-point iteration did not converge in {max_iter} iterations (last increment {last_increment:e})")]
    NoConvergence {
        max_iter: usize,
        last_increment: f64,
        iterates: Vec<State>,
    },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Distances between two trajectories on their common sample grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSeries {
    pub times: Vec<f64>,
    /// `‖x(t) - y(t)‖`
    pub euclid_dist: Vec<f64>,
    /// `e^{W(t, x(t))} ‖x(t) - y(t)‖`
    pub weighted_dist: Vec<f64>,
    /// Union of both trajectories' event times, ascending.
    pub merged_events: Vec<f64>,
}

impl PairSeries {
    /// Sub-series restricted to `t in [t_lo, t_hi]`; events before the new
    /// start are dropped.
    pub fn restrict(&self, t_lo: f64, t_hi: f64) -> PairSeries {
        let keep: Vec<usize> = (0..self.times.len())
            .filter(|&i| self.times[i] >= t_lo && self.times[i] <= t_hi)
            .collect();
        let t_start = keep.first().map(|&i| self.times[i]).unwrap_or(t_lo);
        PairSeries {
            times: keep.iter().map(|&i| self.times[i]).collect(),
            euclid_dist: keep.iter().map(|&i| self.euclid_dist[i]).collect(),
            weighted_dist: keep.iter().map(|&i| self.weighted_dist[i]).collect(),
            merged_events: self
                .merged_events
                .iter()
                .copied()
                .filter(|&t| t > t_start && t <= t_hi)
                .collect(),
        }
    }
}

fn merged_event_times(a: &[SwitchEvent], b: &[SwitchEvent]) -> Vec<f64> {
    let mut times: Vec<f64> = a.iter().chain(b.iter()).map(|e| e.time).collect();
    times.sort_by(|p, q| p.partial_cmp(q).expect("finite event times"));
    times.dedup();
    times
}

/// Simulate both starts with identical configuration and sample the
/// Euclidean and weighted distances on the common time grid.
pub fn pair_series(
    sys: &SystemDef,
    w: &WeightSpec,
    cfg: &IntegratorCfg,
    x0a: State,
    x0b: State,
    horizon: f64,
) -> Result<PairSeries, FlowError> {
    let ta = flow::simulate(sys, cfg, x0a, 0.0, horizon)?;
    let tb = flow::simulate(sys, cfg, x0b, 0.0, horizon)?;
    Ok(pair_series_from(w, &ta, &tb))
}

/// Distance series of two already-simulated trajectories (must share the
/// sample grid).
pub fn pair_series_from(w: &WeightSpec, ta: &Trajectory, tb: &Trajectory) -> PairSeries {
    debug_assert_eq!(ta.samples.len(), tb.samples.len());
    let mut times = Vec::with_capacity(ta.samples.len());
    let mut euclid = Vec::with_capacity(ta.samples.len());
    let mut weighted = Vec::with_capacity(ta.samples.len());
    for (sa, sb) in ta.samples.iter().zip(&tb.samples) {
        debug_assert_eq!(sa.time, sb.time);
        let d = (sa.state - sb.state).norm();
        times.push(sa.time);
        euclid.push(d);
        weighted.push(w.value(sa.time, sa.state).exp() * d);
    }
    PairSeries {
        times,
        euclid_dist: euclid,
        weighted_dist: weighted,
        merged_events: merged_event_times(&ta.events, &tb.events),
    }
}

/// Sandwich constant `e^{2*delta}` relating weighted and Euclidean decay.
pub fn euclidean_decay_constant(w: &WeightSpec) -> f64 {
    (2.0 * w.delta).exp()
}

/// Least-squares fit of `ln(dist)` against `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// Fitted exponential rate; the empirical decay rate is `-slope`.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub fit_window: (f64, f64),
}

/// Ordinary least squares of `ln(weighted_dist)` over the window.
pub fn fit_decay_rate(series: &PairSeries, window: (f64, f64)) -> Result<DecayFit, AnalysisError> {
    fit_log_series(&series.times, &series.weighted_dist, window)
}

/// Same fit on the Euclidean distances.
pub fn fit_euclid_decay_rate(
    series: &PairSeries,
    window: (f64, f64),
) -> Result<DecayFit, AnalysisError> {
    fit_log_series(&series.times, &series.euclid_dist, window)
}

fn fit_log_series(
    times: &[f64],
    dist: &[f64],
    window: (f64, f64),
) -> Result<DecayFit, AnalysisError> {
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for (&t, &d) in times.iter().zip(dist) {
        if t < window.0 || t > window.1 {
            continue;
        }
        if d <= 0.0 {
            return Err(AnalysisError::ZeroDistance { t });
        }
        ts.push(t);
        ys.push(d.ln());
    }
    if ts.len() < 2 {
        return Err(AnalysisError::EmptyWindow(window.0, window.1));
    }
    let n = ts.len() as f64;
    let mean_t = ts.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&t, &y) in ts.iter().zip(&ys) {
        sxx += (t - mean_t) * (t - mean_t);
        sxy += (t - mean_t) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_t;
    let ss_res = syy - slope * sxy;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(DecayFit {
        slope,
        intercept,
        r2,
        fit_window: window,
    })
}

/// Right-hand side of the comparison bound for a signal decaying at rate
/// `nu` with multiplicative jump factors: `A0 e^{-nu t} prod_{t_k <= t} g_k`.
pub fn comparison_bound(
    a0: f64,
    nu: f64,
    jumps: &[(f64, f64)],
    t: f64,
) -> Result<f64, AnalysisError> {
    let mut value = a0 * (-nu * t).exp();
    for &(t_k, gamma) in jumps {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(AnalysisError::InvalidJumpFactor { gamma });
        }
        if t_k <= t {
            value *= gamma;
        }
    }
    Ok(value)
}

/// Outcome of checking a pair series against the comparison bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonVerdict {
    pub passes: bool,
    /// Largest relative overshoot `(A - bound)/bound` over the series;
    /// negative when the series stays strictly below the bound.
    pub max_violation: f64,
    pub nu: f64,
    pub eps_jump: f64,
}

/// Check `weighted_dist(t) <= A(0) e^{-nu (t - t0)} e^{-eps_jump N(t)}`
/// pointwise, with `N(t)` counting merged events in `(t0, t]`.
pub fn verify_comparison(series: &PairSeries, nu: f64, eps_jump: f64) -> ComparisonVerdict {
    let gamma = (-eps_jump).exp();
    let t0 = series.times.first().copied().unwrap_or(0.0);
    let a0 = series.weighted_dist.first().copied().unwrap_or(0.0);
    let mut max_violation = f64::NEG_INFINITY;
    let mut next_event = 0usize;
    let mut jump_product = 1.0f64;
    for (&t, &a) in series.times.iter().zip(&series.weighted_dist) {
        while next_event < series.merged_events.len() && series.merged_events[next_event] <= t {
            if series.merged_events[next_event] > t0 {
                jump_product *= gamma;
            }
            next_event += 1;
        }
        let bound = a0 * (-nu * (t - t0)).exp() * jump_product;
        let violation = if bound > 0.0 {
            (a - bound) / bound
        } else if a > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        max_violation = max_violation.max(violation);
    }
    ComparisonVerdict {
        passes: max_violation <= COMPARISON_REL_TOL,
        max_violation,
        nu,
        eps_jump,
    }
}

/// State after one forcing period: `phi_T(x0) = phi(T, x0)`.
pub fn time_t_map(sys: &SystemDef, cfg: &IntegratorCfg, x0: State) -> Result<State, FlowError> {
    flow::integrate_endpoint(sys, cfg, x0, 0.0, sys.period)
}

/// Fixed point of the time-T map with its iterate history.
#[derive(Debug, Clone)]
pub struct OrbitResult {
    pub fixed_point: State,
    pub iterates: Vec<State>,
    /// `‖phi_T(x*) - x*‖` at the reported point.
    pub residual: f64,
    /// Last successive-difference ratio; the empirical contraction factor.
    pub q_est: f64,
    /// One full period simulated from the fixed point.
    pub orbit_samples: Trajectory,
}

/// Iterate `x_{k+1} = phi_T(x_k)` until the iterate is within `tol` of the
/// fixed point. Convergence uses the a-posteriori contraction bound
/// `q/(1-q) * ‖x_{k+1} - x_k‖` (with the measured ratio `q`), so the
/// returned point carries an error guarantee, not just a small increment.
pub fn find_periodic_orbit(
    sys: &SystemDef,
    cfg: &IntegratorCfg,
    x_init: State,
    tol: f64,
    max_iter: usize,
) -> Result<OrbitResult, AnalysisError> {
    debug_assert!(tol > 0.0);
    let mut iterates = vec![x_init];
    let mut x = x_init;
    let mut prev_increment: Option<f64> = None;
    let mut q_est = f64::NAN;
    let mut last_increment = f64::INFINITY;
    for _ in 0..max_iter {
        let x_next = time_t_map(sys, cfg, x)?;
        let d = (x_next - x).norm();
        iterates.push(x_next);
        x = x_next;
        last_increment = d;
        if let Some(pd) = prev_increment {
            if pd > 0.0 {
                q_est = d / pd;
            }
        }
        prev_increment = Some(d);

        let converged = if d == 0.0 {
            true
        } else if q_est.is_finite() && q_est < 1.0 {
            d <= tol && q_est / (1.0 - q_est) * d <= 0.5 * tol
        } else {
            // no contraction estimate yet: ask for a stronger increment
            d <= 0.5 * tol
        };
        if converged {
            let image = time_t_map(sys, cfg, x)?;
            let residual = (image - x).norm();
            let orbit_samples = flow::simulate(sys, cfg, x, 0.0, sys.period)?;
            return Ok(OrbitResult {
                fixed_point: x,
                iterates,
                residual,
                q_est: if q_est.is_finite() { q_est } else { 0.0 },
                orbit_samples,
            });
        }
    }
    Err(AnalysisError::NoConvergence {
        max_iter,
        last_increment,
        iterates,
    })
}

/// Iterate the time-T map `k_iters` times from every start. Sequences are
/// returned in start order regardless of execution order.
pub fn poincare_grid(
    sys: &SystemDef,
    cfg: &IntegratorCfg,
    starts: &[State],
    k_iters: usize,
) -> Result<Vec<Vec<State>>, FlowError> {
    starts
        .par_iter()
        .map(|&x0| {
            let mut seq = Vec::with_capacity(k_iters + 1);
            seq.push(x0);
            let mut x = x0;
            for _ in 0..k_iters {
                x = time_t_map(sys, cfg, x)?;
                seq.push(x);
            }
            Ok(seq)
        })
        .collect()
}

/// Row-major grid of starts over a rectangle, `nx * ny` points inclusive of
/// the boundary; index order is the `start_idx` used in exports. A
/// single-node axis sits at the range midpoint.
pub fn grid_starts(
    x1_range: (f64, f64),
    x2_range: (f64, f64),
    nx: usize,
    ny: usize,
) -> Vec<State> {
    let node = |range: (f64, f64), i: usize, n: usize| {
        if n == 1 {
            0.5 * (range.0 + range.1)
        } else {
            range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64
        }
    };
    let mut starts = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        let x1 = node(x1_range, i, nx);
        for j in 0..ny {
            starts.push(State::new(x1, node(x2_range, j, ny)));
        }
    }
    starts
}

/// Largest pairwise distance within one iterate layer.
pub fn layer_spread(points: &[State]) -> f64 {
    let mut spread = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            spread = spread.max((a - b).norm_squared());
        }
    }
    spread.sqrt()
}

/// Write `t,dist_euclid,dist_weighted` rows with 17 significant digits.
pub fn write_pair_csv<W: Write>(out: &mut W, series: &PairSeries) -> io::Result<()> {
    writeln!(out, "t,dist_euclid,dist_weighted")?;
    for i in 0..series.times.len() {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e}",
            series.times[i], series.euclid_dist[i], series.weighted_dist[i]
        )?;
    }
    Ok(())
}

/// Write `start_idx,k,x1,x2` rows with 17 significant digits.
pub fn write_poincare_csv<W: Write>(out: &mut W, sequences: &[Vec<State>]) -> io::Result<()> {
    writeln!(out, "start_idx,k,x1,x2")?;
    for (idx, seq) in sequences.iter().enumerate() {
        for (k, x) in seq.iter().enumerate() {
            writeln!(out, "{},{},{:.16e},{:.16e}", idx, k, x.x, x.y)?;
        }
    }
    Ok(())
}
