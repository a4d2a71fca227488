//! Event-located integration of Filippov solutions.
//!
//! Smooth flow on either side of the switching surface, transversal-crossing
//! and attracting-sliding detection by sign-bracketing bisection on `h`,
//! sliding dynamics through the Filippov convex combination, and sliding
//! exit with a deterministic departure rule at repelling configurations.

use crate::geometry::{OffSurface, RegionSign, Side, State, SystemDef};
use std::io::{self, Write};

/// Fixed-step integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Euler,
    Rk4,
}

/// Which dynamics currently governs the trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowMode {
    SmoothPlus,
    SmoothMinus,
    Sliding,
    /// Instantaneous state at a repelling surface point, before departure.
    RepellingDeparture,
}

impl FlowMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowMode::SmoothPlus => "smooth_plus",
            FlowMode::SmoothMinus => "smooth_minus",
            FlowMode::Sliding => "sliding",
            FlowMode::RepellingDeparture => "repelling_departure",
        }
    }

    fn smooth(side: Side) -> FlowMode {
        match side {
            Side::Plus => FlowMode::SmoothPlus,
            Side::Minus => FlowMode::SmoothMinus,
        }
    }

    fn side(self) -> Option<Side> {
        match self {
            FlowMode::SmoothPlus => Some(Side::Plus),
            FlowMode::SmoothMinus => Some(Side::Minus),
            _ => None,
        }
    }
}

/// Kind of a logged switching event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Crossing,
    SlideEntry,
    SlideExit,
    Departure,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Crossing => "crossing",
            EventKind::SlideEntry => "slide_entry",
            EventKind::SlideExit => "slide_exit",
            EventKind::Departure => "departure",
        }
    }
}

/// A located surface event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub time: f64,
    pub state: State,
    pub kind: EventKind,
}

/// One trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub state: State,
    pub mode: FlowMode,
}

/// Sampled Filippov solution with its event log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<SwitchEvent>,
}

impl Trajectory {
    pub fn end_state(&self) -> State {
        self.samples.last().expect("trajectory has samples").state
    }
}

/// Integrator configuration.
#[derive(Debug, Clone, Copy)]
pub struct IntegratorCfg {
    pub method: Method,
    /// Step size (> 0); also the sampling interval.
    pub dt: f64,
    /// Surface tolerance for located events (> 0).
    pub event_tol: f64,
    /// Maximum bisection iterations per event (>= 20).
    pub bisect_iters: u32,
    /// Minimum separation between logged events; closer events are merged.
    pub dwell_min: f64,
    /// Deterministic side taken when departing a repelling configuration.
    pub depart_side: Side,
}

impl IntegratorCfg {
    /// Defaults used when a scenario omits integrator fields:
    /// RK4, `dt = T/2000`, `event_tol = 1e-10`, `dwell_min = dt/2`,
    /// departure to the plus side.
    pub fn default_for_period(period: f64) -> Self {
        let dt = period / 2000.0;
        Self {
            method: Method::Rk4,
            dt,
            event_tol: 1e-10,
            bisect_iters: 64,
            dwell_min: dt / 2.0,
            depart_side: Side::Plus,
        }
    }
}

/// Integration failure.
#[derive(Debug, Clone, thiserror::Error)]
pub enum FlowError {
    #[error("event bisection failed to reach the surface band at t = {t}")]
    StepTooLarge { t: f64 },
    #[error("{count} mode transitions within one step at t = {t}; dynamics is chattering")]
    ZenoGuard { t: f64, count: usize },
    #[error("simulation horizon is empty (t1 <= t0)")]
    EmptyHorizon,
}

/// Normal components `(c⁻, c⁺) = (⟨∇h, f⁻⟩, ⟨∇h, f⁺⟩)` at an on-surface point.
pub fn normal_components(
    sys: &SystemDef,
    t: f64,
    x: State,
    surface_tol: f64,
) -> Result<(f64, f64), OffSurface> {
    if sys.classify_region(x, surface_tol) != RegionSign::OnSurface {
        return Err(OffSurface { h: sys.h(x) });
    }
    Ok(raw_normal_components(sys, t, x))
}

fn raw_normal_components(sys: &SystemDef, t: f64, x: State) -> (f64, f64) {
    let g = (sys.surface.grad_h)(x);
    let c_minus = g.dot(&sys.eval_side(t, x, Side::Minus));
    let c_plus = g.dot(&sys.eval_side(t, x, Side::Plus));
    (c_minus, c_plus)
}

/// Sliding failure.
#[derive(Debug, Clone, thiserror::Error)]
pub enum SlidingError {
    #[error("not an attracting configuration (c- = {c_minus:e}, c+ = {c_plus:e})")]
    NotAttracting { c_minus: f64, c_plus: f64 },
    #[error("degenerate normal components (|c- - c+| below resolution)")]
    Degenerate,
    #[error(transparent)]
    OffSurface(#[from] OffSurface),
}

/// Convex coefficient of the tangent combination `(1-a) f⁻ + a f⁺` at an
/// attracting surface point: `a = c⁻ / (c⁻ - c⁺)`.
pub fn sliding_alpha(
    sys: &SystemDef,
    t: f64,
    x: State,
    surface_tol: f64,
) -> Result<f64, SlidingError> {
    let (c_minus, c_plus) = normal_components(sys, t, x, surface_tol)?;
    if !(c_plus < 0.0 && c_minus > 0.0) {
        return Err(SlidingError::NotAttracting { c_minus, c_plus });
    }
    let denom = c_minus - c_plus;
    if denom.abs() < 1e-14 {
        return Err(SlidingError::Degenerate);
    }
    Ok(c_minus / denom)
}

/// Filippov sliding velocity at an attracting surface point. Tangent to
/// the surface by construction; `(0, -alpha*x2)` for the built-in system.
pub fn sliding_field(
    sys: &SystemDef,
    t: f64,
    x: State,
    surface_tol: f64,
) -> Result<State, SlidingError> {
    let a = sliding_alpha(sys, t, x, surface_tol)?;
    let fm = sys.eval_side(t, x, Side::Minus);
    let fp = sys.eval_side(t, x, Side::Plus);
    Ok(fm * (1.0 - a) + fp * a)
}

/// Clamped convex combination, defined for every configuration. Used by the
/// sliding stepper so that intermediate stage evaluations slightly past a
/// sliding window stay finite; coincides with the sliding field while the
/// configuration is attracting.
fn sliding_field_clamped(sys: &SystemDef, t: f64, x: State) -> State {
    let (c_minus, c_plus) = raw_normal_components(sys, t, x);
    let denom = c_minus - c_plus;
    let a = if denom.abs() < 1e-14 {
        0.5
    } else {
        (c_minus / denom).clamp(0.0, 1.0)
    };
    let fm = sys.eval_side(t, x, Side::Minus);
    let fp = sys.eval_side(t, x, Side::Plus);
    fm * (1.0 - a) + fp * a
}

fn method_step<F>(method: Method, f: &F, t: f64, x: State, h: f64) -> State
where
    F: Fn(f64, State) -> State,
{
    match method {
        Method::Euler => x + f(t, x) * h,
        Method::Rk4 => {
            let half = 0.5 * h;
            let k1 = f(t, x);
            let k2 = f(t + half, x + k1 * half);
            let k3 = f(t + half, x + k2 * half);
            let k4 = f(t + h, x + k3 * h);
            x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
        }
    }
}

/// Sign structure of the normal components at a surface point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SurfaceConfig {
    Attracting,
    Repelling,
    TransversalUp,
    TransversalDown,
    Degenerate,
}

const DEGENERATE_TOL: f64 = 1e-14;
/// Offset used to probe the configuration just past a tangency instant.
const PROBE_DT: f64 = 1e-9;
/// Transition budget per step; exceeding it raises [`FlowError::ZenoGuard`].
const MAX_TRANSITIONS_PER_STEP: usize = 32;

fn configuration(c_minus: f64, c_plus: f64) -> SurfaceConfig {
    let band = |c: f64| {
        if c > DEGENERATE_TOL {
            1
        } else if c < -DEGENERATE_TOL {
            -1
        } else {
            0
        }
    };
    match (band(c_minus), band(c_plus)) {
        (1, -1) => SurfaceConfig::Attracting,
        (-1, 1) => SurfaceConfig::Repelling,
        (0, 0) => SurfaceConfig::Degenerate,
        (m, p) if m >= 0 && p >= 0 => SurfaceConfig::TransversalUp,
        _ => SurfaceConfig::TransversalDown,
    }
}

/// Configuration at `(t, x)`, resolving a tangency by probing just ahead.
fn configuration_probed(sys: &SystemDef, t: f64, x: State) -> SurfaceConfig {
    let (cm, cp) = raw_normal_components(sys, t, x);
    match configuration(cm, cp) {
        SurfaceConfig::Degenerate => {
            let (cm, cp) = raw_normal_components(sys, t + PROBE_DT, x);
            configuration(cm, cp)
        }
        other => other,
    }
}

fn is_attracting(sys: &SystemDef, t: f64, x: State) -> bool {
    let (cm, cp) = raw_normal_components(sys, t, x);
    configuration(cm, cp) == SurfaceConfig::Attracting
}

/// Result of advancing one step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub t: f64,
    pub x: State,
    pub mode: FlowMode,
    pub events: Vec<SwitchEvent>,
}

struct Engine<'a> {
    sys: &'a SystemDef,
    cfg: &'a IntegratorCfg,
    t: f64,
    x: State,
    mode: FlowMode,
    events: Vec<SwitchEvent>,
    last_logged: Option<f64>,
}

impl<'a> Engine<'a> {
    /// Classify the starting point and return the mode recorded for the
    /// first sample. A start at a repelling surface point departs
    /// immediately (logged as a departure).
    fn start(sys: &'a SystemDef, cfg: &'a IntegratorCfg, t0: f64, x0: State) -> (Self, FlowMode) {
        let mut engine = Engine {
            sys,
            cfg,
            t: t0,
            x: x0,
            mode: FlowMode::SmoothPlus,
            events: Vec::new(),
            last_logged: None,
        };
        let recorded = match sys.classify_region(x0, cfg.event_tol) {
            RegionSign::Plus => FlowMode::SmoothPlus,
            RegionSign::Minus => FlowMode::SmoothMinus,
            RegionSign::OnSurface => match configuration_probed(sys, t0, x0) {
                SurfaceConfig::Attracting => {
                    engine.x = sys.surface.project(x0);
                    FlowMode::Sliding
                }
                SurfaceConfig::Repelling => FlowMode::RepellingDeparture,
                SurfaceConfig::TransversalDown => FlowMode::SmoothMinus,
                // a fully degenerate start (e.g. zero forcing) flows with
                // either branch; both agree on the surface
                SurfaceConfig::TransversalUp | SurfaceConfig::Degenerate => FlowMode::SmoothPlus,
            },
        };
        engine.mode = recorded;
        if recorded == FlowMode::RepellingDeparture {
            engine.log_event(t0, engine.x, EventKind::Departure);
            engine.mode = FlowMode::smooth(cfg.depart_side);
        }
        (engine, recorded)
    }

    /// Resume from an explicit state; the caller guarantees the mode is
    /// consistent with the region and configuration at `(t, x)`.
    fn resume(sys: &'a SystemDef, cfg: &'a IntegratorCfg, t: f64, x: State, mode: FlowMode) -> Self {
        let mut mode = mode;
        let mut x = x;
        if mode == FlowMode::RepellingDeparture {
            mode = FlowMode::smooth(cfg.depart_side);
        }
        if mode == FlowMode::Sliding {
            x = sys.surface.project(x);
        }
        Engine {
            sys,
            cfg,
            t,
            x,
            mode,
            events: Vec::new(),
            last_logged: None,
        }
    }

    fn log_event(&mut self, t: f64, x: State, kind: EventKind) {
        if let Some(prev) = self.last_logged {
            if t <= prev || t - prev < self.cfg.dwell_min {
                return; // merged into the previous event
            }
        }
        self.events.push(SwitchEvent { time: t, state: x, kind });
        self.last_logged = Some(t);
    }

    /// Advance to `t_target`, handling any events on the way. Sub-steps never
    /// exceed `cfg.dt`; the caller keeps `t_target - t <= dt`.
    fn advance_to(&mut self, t_target: f64) -> Result<(), FlowError> {
        let mut transitions = 0usize;
        while self.t < t_target {
            let h = t_target - self.t;
            let stepped = match self.mode {
                FlowMode::Sliding => self.sliding_substep(h)?,
                _ => self.smooth_substep(h)?,
            };
            if stepped {
                // accepted the full remainder; land exactly on the target
                self.t = t_target;
            } else {
                transitions += 1;
                if transitions > MAX_TRANSITIONS_PER_STEP {
                    return Err(FlowError::ZenoGuard { t: self.t, count: transitions });
                }
            }
        }
        Ok(())
    }

    /// One smooth sub-step over the full remainder `h`. Returns `true` when
    /// the remainder was consumed (the engine state then corresponds to the
    /// step end); a mid-step event leaves the engine at the event point and
    /// returns `false` so the caller continues from there.
    fn smooth_substep(&mut self, h: f64) -> Result<bool, FlowError> {
        let side = self.mode.side().expect("smooth mode");
        let sys = self.sys;
        let vel = |t: f64, x: State| sys.eval_side(t, x, side);
        let x_end = method_step(self.cfg.method, &vel, self.t, self.x, h);
        let h_end = sys.h(x_end);
        let s = side.sign();

        if h_end.abs() <= self.cfg.event_tol {
            // landed inside the surface band exactly at the step end
            self.arrive(self.t + h, x_end, side);
            return Ok(true);
        }
        if s * h_end < 0.0 {
            // sign flipped beyond the band: bracket and bisect
            let (frac, x_ev) = self.bisect_crossing(&vel, h, s)?;
            self.arrive(self.t + frac * h, x_ev, side);
            return Ok(false);
        }
        self.x = x_end;
        Ok(true)
    }

    /// Locate `|h| <= event_tol` along the step map `s -> x(s*h)`.
    fn bisect_crossing<F>(&self, vel: &F, h: f64, side_sign: f64) -> Result<(f64, State), FlowError>
    where
        F: Fn(f64, State) -> State,
    {
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        for _ in 0..self.cfg.bisect_iters {
            let mid = 0.5 * (lo + hi);
            let xm = method_step(self.cfg.method, vel, self.t, self.x, mid * h);
            let hm = self.sys.h(xm);
            if hm.abs() <= self.cfg.event_tol {
                return Ok((mid, xm));
            }
            if side_sign * hm > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Err(FlowError::StepTooLarge { t: self.t })
    }

    /// Handle arrival at the surface: classify the configuration, move the
    /// engine to the arrival point, and switch mode if the configuration
    /// demands it.
    fn arrive(&mut self, t_ev: f64, x_ev: State, from: Side) {
        let x_on = self.sys.surface.project(x_ev);
        self.t = t_ev;
        match configuration_probed(self.sys, t_ev, x_on) {
            SurfaceConfig::Attracting => {
                self.log_event(t_ev, x_on, EventKind::SlideEntry);
                self.x = x_on;
                self.mode = FlowMode::Sliding;
            }
            SurfaceConfig::Repelling => {
                if self.cfg.depart_side == from {
                    // departing back into the side we came from: no switch
                    self.x = x_ev;
                } else {
                    self.log_event(t_ev, x_on, EventKind::Departure);
                    self.x = x_on;
                    self.mode = FlowMode::smooth(self.cfg.depart_side);
                }
            }
            SurfaceConfig::TransversalUp => self.cross_to(t_ev, x_on, x_ev, from, Side::Plus),
            SurfaceConfig::TransversalDown => self.cross_to(t_ev, x_on, x_ev, from, Side::Minus),
            SurfaceConfig::Degenerate => {
                // tangent touch with no resolvable direction: keep flowing
                self.x = x_ev;
            }
        }
    }

    fn cross_to(&mut self, t_ev: f64, x_on: State, x_raw: State, from: Side, target: Side) {
        if target == from {
            // grazing touch that returns to the same side
            self.x = x_raw;
        } else {
            self.log_event(t_ev, x_on, EventKind::Crossing);
            self.x = x_on;
            self.mode = FlowMode::smooth(target);
        }
    }

    /// One sliding sub-step over the remainder `h`, watching the attracting
    /// condition. The state stays pinned to the surface.
    fn sliding_substep(&mut self, h: f64) -> Result<bool, FlowError> {
        let sys = self.sys;
        let vel = |t: f64, x: State| sliding_field_clamped(sys, t, x);
        let x_end = sys.surface.project(method_step(self.cfg.method, &vel, self.t, self.x, h));
        if is_attracting(sys, self.t + h, x_end) {
            self.x = x_end;
            return Ok(true);
        }

        // exit within the step: bisect the attracting indicator
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        let mut x_hi = x_end;
        for _ in 0..self.cfg.bisect_iters {
            let mid = 0.5 * (lo + hi);
            let xm = sys.surface.project(method_step(self.cfg.method, &vel, self.t, self.x, mid * h));
            if is_attracting(sys, self.t + mid * h, xm) {
                lo = mid;
            } else {
                hi = mid;
                x_hi = xm;
            }
        }
        let t_exit = self.t + hi * h;
        let x_exit = x_hi;

        // the configuration just past the exit decides the departure side
        let side = match configuration_probed(sys, t_exit, x_exit) {
            SurfaceConfig::Attracting | SurfaceConfig::Degenerate => {
                // bisection landed marginally early; keep sliding
                self.t = t_exit;
                self.x = x_exit;
                return Ok(false);
            }
            SurfaceConfig::Repelling => self.cfg.depart_side,
            SurfaceConfig::TransversalUp => Side::Plus,
            SurfaceConfig::TransversalDown => Side::Minus,
        };
        self.log_event(t_exit, x_exit, EventKind::SlideExit);
        self.t = t_exit;
        self.x = x_exit;
        self.mode = FlowMode::smooth(side);
        Ok(false)
    }
}

/// Advance one step of size `cfg.dt` from `(t, x, mode)`, locating any
/// events inside the step. The caller guarantees the mode is consistent
/// with the region and configuration at `(t, x)`.
pub fn step(
    sys: &SystemDef,
    cfg: &IntegratorCfg,
    t: f64,
    x: State,
    mode: FlowMode,
) -> Result<StepOutcome, FlowError> {
    let mut engine = Engine::resume(sys, cfg, t, x, mode);
    engine.advance_to(t + cfg.dt)?;
    Ok(StepOutcome {
        t: engine.t,
        x: engine.x,
        mode: engine.mode,
        events: engine.events,
    })
}

/// Integrate over `[t0, t1]`, sampling every `cfg.dt` (final sample exactly
/// at `t1`). Deterministic in all inputs.
pub fn simulate(
    sys: &SystemDef,
    cfg: &IntegratorCfg,
    x0: State,
    t0: f64,
    t1: f64,
) -> Result<Trajectory, FlowError> {
    if !(t1 > t0) {
        return Err(FlowError::EmptyHorizon);
    }
    let n = ((t1 - t0) / cfg.dt).ceil().max(1.0) as usize;
    let (mut engine, recorded) = Engine::start(sys, cfg, t0, x0);
    let mut samples = Vec::with_capacity(n + 1);
    samples.push(Sample { time: t0, state: x0, mode: recorded });
    for i in 1..=n {
        let target = if i == n { t1 } else { t0 + i as f64 * cfg.dt };
        engine.advance_to(target)?;
        samples.push(Sample { time: engine.t, state: engine.x, mode: engine.mode });
    }
    Ok(Trajectory { samples, events: engine.events })
}

/// Endpoint of the flow over `[t0, t1]` without retaining samples.
pub fn integrate_endpoint(
    sys: &SystemDef,
    cfg: &IntegratorCfg,
    x0: State,
    t0: f64,
    t1: f64,
) -> Result<State, FlowError> {
    if !(t1 > t0) {
        return Err(FlowError::EmptyHorizon);
    }
    let n = ((t1 - t0) / cfg.dt).ceil().max(1.0) as usize;
    let (mut engine, _) = Engine::start(sys, cfg, t0, x0);
    for i in 1..=n {
        let target = if i == n { t1 } else { t0 + i as f64 * cfg.dt };
        engine.advance_to(target)?;
    }
    Ok(engine.x)
}

/// Write `t,x1,x2,mode` rows with 17 significant digits.
pub fn write_trajectory_csv<W: Write>(out: &mut W, traj: &Trajectory) -> io::Result<()> {
    writeln!(out, "t,x1,x2,mode")?;
    for s in &traj.samples {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{}",
            s.time,
            s.state.x,
            s.state.y,
            s.mode.as_str()
        )?;
    }
    Ok(())
}

/// Write `k,t,x1,x2,kind` rows with 17 significant digits.
pub fn write_events_csv<W: Write>(out: &mut W, events: &[SwitchEvent]) -> io::Result<()> {
    writeln!(out, "k,t,x1,x2,kind")?;
    for (k, e) in events.iter().enumerate() {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{}",
            k,
            e.time,
            e.state.x,
            e.state.y,
            e.kind.as_str()
        )?;
    }
    Ok(())
}
