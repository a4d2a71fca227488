//! Scenario configuration: strict JSON schema, validation, defaults, and
//! the combined verification report shared with the CLI.

use crate::analysis::{ComparisonVerdict, DecayFit, OrbitResult};
use crate::contraction::{
    check_a2, check_a3, check_a4, check_a5, default_nu, Axis, ContractionReport, GridSpec, Rect,
};
use crate::flow::{IntegratorCfg, Method};
use crate::geometry::{Side, SystemDef, SURFACE_TOL};
use crate::weight::WeightSpec;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid field `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.to_string(),
        reason: reason.into(),
    }
}

// Raw on-disk schema. Unknown keys are rejected: a typo in `delta` or `eps`
// would silently invalidate verification results.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    system: RawSystem,
    weight: RawWeight,
    #[serde(default)]
    integrator: RawIntegrator,
    domain: RawDomain,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    mu: f64,
    alpha: f64,
    forcing_amp: f64,
    /// Forcing period as a multiple of 2*pi: `T = period_factor * 2*pi`.
    period_factor: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeight {
    delta: f64,
    eps: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    method: Option<String>,
    dt: Option<f64>,
    event_tol: Option<f64>,
    dwell_min: Option<f64>,
    depart_side: Option<String>,
    bisect_iters: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    x1_min: f64,
    x1_max: f64,
    x2_min: f64,
    x2_max: f64,
}

/// Fully validated run configuration.
#[derive(Debug, Clone, Copy)]
pub struct Scenario {
    pub system: SystemDef,
    pub weight: WeightSpec,
    pub integrator: IntegratorCfg,
    pub domain: Rect,
    pub seed: u64,
}

/// Parse and validate a scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = serde_json::from_str(text).map_err(classify_serde_error)?;
    validate(raw)
}

/// Load a scenario from a JSON file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text)
}

/// Unknown-key rejections surface as validation errors naming the key;
/// malformed JSON keeps its line information.
fn classify_serde_error(err: serde_json::Error) -> ScenarioError {
    let message = err.to_string();
    for marker in ["unknown field `", "unknown variant `"] {
        if let Some(start) = message.find(marker) {
            let rest = &message[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                return invalid(&rest[..end], "unknown key");
            }
        }
    }
    ScenarioError::Parse {
        line: err.line(),
        column: err.column(),
        message,
    }
}

fn validate(raw: RawScenario) -> Result<Scenario, ScenarioError> {
    if !(raw.system.mu > 0.0) {
        return Err(invalid("mu", "must be > 0"));
    }
    if !(raw.system.alpha > 0.0) {
        return Err(invalid("alpha", "must be > 0"));
    }
    if !(raw.system.forcing_amp >= 0.0) {
        return Err(invalid("forcing_amp", "must be >= 0"));
    }
    if !(raw.system.period_factor > 0.0) {
        return Err(invalid("period_factor", "must be > 0"));
    }
    if !(raw.weight.delta >= 0.0) {
        return Err(invalid("delta", "must be >= 0"));
    }
    if !(raw.weight.eps > 0.0) {
        return Err(invalid("eps", "must be > 0"));
    }
    if !(raw.domain.x1_max > raw.domain.x1_min) {
        return Err(invalid("x1_max", "must exceed x1_min"));
    }
    if !(raw.domain.x2_max > raw.domain.x2_min) {
        return Err(invalid("x2_max", "must exceed x2_min"));
    }

    let period = raw.system.period_factor * std::f64::consts::TAU;
    let system = SystemDef::new(raw.system.mu, raw.system.alpha, raw.system.forcing_amp, period);
    let mut integrator = IntegratorCfg::default_for_period(period);
    if let Some(method) = &raw.integrator.method {
        integrator.method = match method.as_str() {
            "euler" => Method::Euler,
            "rk4" => Method::Rk4,
            other => return Err(invalid("method", format!("unknown method `{other}`"))),
        };
    }
    if let Some(dt) = raw.integrator.dt {
        if !(dt > 0.0) {
            return Err(invalid("dt", "must be > 0"));
        }
        integrator.dt = dt;
        integrator.dwell_min = dt / 2.0;
    }
    if let Some(event_tol) = raw.integrator.event_tol {
        if !(event_tol > 0.0) {
            return Err(invalid("event_tol", "must be > 0"));
        }
        integrator.event_tol = event_tol;
    }
    if let Some(dwell_min) = raw.integrator.dwell_min {
        if !(dwell_min >= 0.0) {
            return Err(invalid("dwell_min", "must be >= 0"));
        }
        integrator.dwell_min = dwell_min;
    }
    if let Some(side) = &raw.integrator.depart_side {
        integrator.depart_side = match side.as_str() {
            "plus" => Side::Plus,
            "minus" => Side::Minus,
            other => return Err(invalid("depart_side", format!("unknown side `{other}`"))),
        };
    }
    if let Some(iters) = raw.integrator.bisect_iters {
        if iters < 20 {
            return Err(invalid("bisect_iters", "must be >= 20"));
        }
        integrator.bisect_iters = iters;
    }

    Ok(Scenario {
        system,
        weight: WeightSpec::new(raw.weight.delta, raw.weight.eps),
        integrator,
        domain: Rect::new(
            raw.domain.x1_min,
            raw.domain.x1_max,
            raw.domain.x2_min,
            raw.domain.x2_max,
        ),
        seed: raw.seed,
    })
}

impl Scenario {
    /// Contraction rate used when the caller does not supply one.
    pub fn default_nu(&self) -> f64 {
        default_nu(&self.system)
    }

    /// Smooth-region grid: 64 time nodes over one period, an `x1` axis fine
    /// enough to resolve the weight's transition layer (spacing at most
    /// `eps/2`), and 5 `x2` nodes across the domain.
    pub fn default_a2_grid(&self) -> GridSpec {
        let width = self.domain.x1_max - self.domain.x1_min;
        let x1_count = ((width / (self.weight.eps / 2.0)).ceil() as usize + 1).clamp(201, 2001);
        GridSpec {
            t: Axis::new(0.0, self.system.period, 64),
            x1: Axis::new(self.domain.x1_min, self.domain.x1_max, x1_count),
            x2: Axis::new(self.domain.x2_min, self.domain.x2_max, 5),
        }
    }

    /// Surface grids for the jump and sliding checks.
    pub fn default_surface_axes(&self) -> (Axis, Axis) {
        (
            Axis::new(0.0, self.system.period, 128),
            Axis::new(self.domain.x2_min, self.domain.x2_max, 101),
        )
    }

    /// Boundary time axis for the invariance check; 256 intervals per
    /// period so quarter-period forcing extrema land on grid nodes.
    pub fn default_boundary_axis(&self) -> Axis {
        Axis::new(0.0, self.system.period, 257)
    }
}

/// Options for the combined verification run; `None` means scenario default.
#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    pub nu: Option<f64>,
    pub eps_jump: Option<f64>,
    pub t_count: Option<usize>,
    pub x1_count: Option<usize>,
    pub x2_count: Option<usize>,
}

/// All four checks of one scenario in a single document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub nu: f64,
    pub eps_jump: f64,
    pub a2: ContractionReport,
    pub a3: ContractionReport,
    pub a4: ContractionReport,
    pub a5: ContractionReport,
    pub all_pass: bool,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Run the full verification battery with scenario defaults and optional
/// overrides.
pub fn run_verify(scn: &Scenario, opts: &VerifyOptions) -> VerifyReport {
    let nu = opts.nu.unwrap_or_else(|| scn.default_nu());
    // the jump margin achieved by the idealized weight limits is the depth
    let eps_jump = opts.eps_jump.unwrap_or(scn.weight.delta);

    let mut a2_grid = scn.default_a2_grid();
    if let Some(n) = opts.t_count {
        a2_grid.t.count = n;
    }
    if let Some(n) = opts.x1_count {
        a2_grid.x1.count = n;
    }
    if let Some(n) = opts.x2_count {
        a2_grid.x2.count = n;
    }
    let (mut t_axis, mut x2_axis) = scn.default_surface_axes();
    if let Some(n) = opts.t_count {
        t_axis.count = n;
    }
    if let Some(n) = opts.x2_count {
        x2_axis.count = n;
    }

    let a2 = check_a2(&scn.system, &scn.weight, &a2_grid, nu, SURFACE_TOL);
    let a3 = check_a3(&scn.system, &scn.weight, t_axis, x2_axis, eps_jump);
    let a4 = check_a4(&scn.system, &scn.weight, t_axis, x2_axis, nu, SURFACE_TOL);
    let a5 = check_a5(&scn.system, scn.domain, scn.default_boundary_axis(), 101);
    let all_pass = a2.passes && a3.passes && a4.passes && a5.passes;
    VerifyReport {
        nu,
        eps_jump,
        a2,
        a3,
        a4,
        a5,
        all_pass,
    }
}

/// Pair-command report: decay fit, comparison verdict, and the sandwich
/// constant relating weighted and Euclidean decay.
pub fn pair_report_json(
    fit: &DecayFit,
    euclid_fit: &DecayFit,
    verdict: &ComparisonVerdict,
    euclid_decay_constant: f64,
) -> String {
    let doc = serde_json::json!({
        "fit_weighted": fit,
        "fit_euclid": euclid_fit,
        "comparison": verdict,
        "euclid_decay_constant": euclid_decay_constant,
    });
    serde_json::to_string_pretty(&doc).expect("report serializes")
}

/// Orbit-command report.
pub fn orbit_report_json(result: &OrbitResult, orbit_csv_path: &str) -> String {
    let doc = serde_json::json!({
        "fixed_point": [result.fixed_point.x, result.fixed_point.y],
        "residual": result.residual,
        "q_est": result.q_est,
        "iterates": result
            .iterates
            .iter()
            .map(|x| [x.x, x.y])
            .collect::<Vec<_>>(),
        "orbit_csv_path": orbit_csv_path,
    });
    serde_json::to_string_pretty(&doc).expect("report serializes")
}
