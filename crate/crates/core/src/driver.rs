//! Time stepping: slopes, step selection, Hopf-Lax half step, parabolic
//! solve, and the a priori bound monitors.

use crate::error::{Result, SchemeError};
use crate::hyperbolic::{cfl_max_dt, compute_slopes, hopf_lax_step};
use crate::mesh::NodalField;
use crate::parabolic::{existence_margin, growth_bound, parabolic_step, pow_q};

/// Relative tolerance on the sup-norm bounds.
pub const BOUND_TOLERANCE: f64 = 1e-10;
/// Relative tolerance on the slope contraction of the Hopf-Lax step.
pub const CONTRACTION_TOLERANCE: f64 = 1e-12;
/// Levels, relative to `||u0||_inf`, whose first crossing time is recorded.
pub const BLOWUP_LEVELS: [f64; 3] = [1e4, 1e5, 1e6];

const MAX_HALVINGS: u32 = 60;

/// `q = (p - 1) / m`, restricted to `1 < p < m + 1` so that `0 < q < 1`.
pub fn derive_q(m: f64, p: f64) -> Result<f64> {
    if !(m.is_finite() && m > 0.0) {
        return Err(SchemeError::InvalidParameter(format!("m must be positive, got {m}")));
    }
    if !(p.is_finite() && p > 1.0 && p < m + 1.0) {
        return Err(SchemeError::Regime { p, upper: m + 1.0 });
    }
    Ok((p - 1.0) / m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorPolicy {
    /// A failed bound check turns into [`SchemeError::Monitor`].
    Abort,
    /// Failed checks are recorded on the step report and the run continues.
    Warn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeParams {
    m: f64,
    p: f64,
    q: f64,
    /// Fraction of the stability limit used, in `(0, 1]`.
    pub cfl_safety: f64,
    /// Upper bound enforced on `m q dt ||u||^q`, in `(0, 1)`.
    pub existence_safety: f64,
    pub dt_max: f64,
    /// Sup-norm declared "blown up"; `None` means `1e6 ||u0||_inf`.
    pub blowup_threshold: Option<f64>,
    /// Smallest admissible step; `None` means `1e-12 t_end`.
    pub dt_floor: Option<f64>,
    pub t_end: f64,
    pub monitor: MonitorPolicy,
}

impl SchemeParams {
    pub fn new(m: f64, p: f64, t_end: f64) -> Result<Self> {
        let q = derive_q(m, p)?;
        let params = Self {
            m,
            p,
            q,
            cfl_safety: 0.9,
            existence_safety: 0.1,
            dt_max: t_end,
            blowup_threshold: None,
            dt_floor: None,
            t_end,
            monitor: MonitorPolicy::Abort,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SchemeError::InvalidParameter(msg));
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety));
        }
        if !(self.existence_safety > 0.0 && self.existence_safety < 1.0) {
            return bad(format!(
                "existence_safety must lie in (0, 1), got {}",
                self.existence_safety
            ));
        }
        if !(self.dt_max > 0.0) {
            return bad(format!("dt_max must be positive, got {}", self.dt_max));
        }
        if let Some(t) = self.blowup_threshold {
            if !(t > 0.0) {
                return bad(format!("blowup_threshold must be positive, got {t}"));
            }
        }
        if let Some(f) = self.dt_floor {
            if !(f > 0.0) {
                return bad(format!("dt_floor must be positive, got {f}"));
            }
        }
        Ok(())
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn dt_floor(&self) -> f64 {
        self.dt_floor.unwrap_or(1e-12 * self.t_end)
    }

    pub fn threshold_for(&self, initial_sup: f64) -> f64 {
        match self.blowup_threshold {
            Some(t) => t,
            None if initial_sup > 0.0 => 1e6 * initial_sup,
            None => f64::INFINITY,
        }
    }

    /// Guaranteed existence time `1 / (m q ||u0||^q)`.
    pub fn lifetime(&self, initial_sup: f64) -> f64 {
        1.0 / (self.m * self.q * pow_q(initial_sup, self.q))
    }

    /// A priori bound `||u0|| / (1 - m q t ||u0||^q)^{1/q}`, `None` past the lifetime.
    pub fn sup_bound(&self, initial_sup: f64, t: f64) -> Option<f64> {
        let base = 1.0 - self.m * self.q * t * pow_q(initial_sup, self.q);
        (base > 0.0).then(|| initial_sup / base.powf(1.0 / self.q))
    }
}

/// Step size from the stability and existence conditions, the absolute cap
/// and the remaining horizon.
pub fn select_dt(field: &NodalField, params: &SchemeParams, t_n: f64) -> Result<f64> {
    let slopes = compute_slopes(field);
    let cfl = params.cfl_safety * cfl_max_dt(&slopes, params.m);
    let uq = pow_q(field.sup_norm(), params.q);
    let existence = if uq > 0.0 {
        params.existence_safety / (params.m * params.q * uq)
    } else {
        f64::INFINITY
    };
    let remaining = params.t_end - t_n;
    let dt = cfl.min(existence).min(params.dt_max).min(remaining);
    let floor = params.dt_floor();
    if dt < floor && dt < remaining {
        return Err(SchemeError::StepFloor { dt, floor });
    }
    Ok(dt)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    GrowthBound { slack: f64 },
    AprioriBound { slack: f64 },
    SlopeSup { before: f64, after: f64 },
    SlopeL1 { before: f64, after: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::GrowthBound { slack } => write!(f, "per-step growth bound slack {slack:e}"),
            Violation::AprioriBound { slack } => write!(f, "a priori sup bound slack {slack:e}"),
            Violation::SlopeSup { before, after } => {
                write!(f, "slope sup norm grew in the hyperbolic step: {before:e} -> {after:e}")
            }
            Violation::SlopeL1 { before, after } => {
                write!(f, "slope L1 norm grew in the hyperbolic step: {before:e} -> {after:e}")
            }
        }
    }
}

/// Diagnostics of one step `t_n -> t_{n+1}`. Norms refer to `u^{n+1}` unless
/// suffixed.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub sup_u: f64,
    pub sup_u_prev: f64,
    pub sup_v: f64,
    pub l1_v: f64,
    pub sup_v_prev: f64,
    pub l1_v_prev: f64,
    pub sup_v_half: f64,
    pub l1_v_half: f64,
    pub s_minus: f64,
    pub s_plus: f64,
    pub node_count: usize,
    /// `m q dt ||u^{n+1/2}||^q`.
    pub existence_margin: f64,
    /// Relative slack of the per-step growth bound.
    pub lemma23_slack: f64,
    /// Relative slack of the a priori bound at `t`, while `t` is below the lifetime.
    pub eq210_slack: Option<f64>,
    /// `(||v^{n+1}|| / ||v^n|| - 1) / dt`.
    pub slope_growth_rate: f64,
    pub dt_halvings: u32,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advance {
    pub field: NodalField,
    pub report: StepReport,
}

fn relative_slack(bound: f64, actual: f64) -> f64 {
    if bound > 0.0 {
        (bound - actual) / bound
    } else if actual == 0.0 {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

/// One full splitting step from `t_n`. `initial_sup` is `||u0||_inf`, needed for
/// the a priori bound; `dt_cap` further limits the selected step.
pub fn advance(
    field: &NodalField,
    params: &SchemeParams,
    t_n: f64,
    initial_sup: f64,
    dt_cap: Option<f64>,
    step: usize,
) -> Result<Advance> {
    let (m, q) = (params.m, params.q);
    let slopes = compute_slopes(field);
    let mut dt = select_dt(field, params, t_n)?;
    if let Some(cap) = dt_cap {
        if cap < dt {
            dt = cap;
        }
    }
    if !(dt > 0.0) {
        return Err(SchemeError::InvalidParameter(format!("non-positive time step {dt}")));
    }

    let mut halvings = 0;
    let (half, margin) = loop {
        let half = hopf_lax_step(field, dt, m)?;
        let margin = existence_margin(&half.field_half, dt, m, q);
        if margin <= params.existence_safety * (1.0 + 1e-12) {
            break (half, margin);
        }
        halvings += 1;
        if halvings > MAX_HALVINGS {
            return Err(SchemeError::ExistenceViolated { value: margin });
        }
        dt *= 0.5;
    };
    let slopes_half = compute_slopes(&half.field_half);
    let next = parabolic_step(&half.field_half, dt, m, q)?;
    let slopes_next = compute_slopes(&next);

    let t = if dt == params.t_end - t_n { params.t_end } else { t_n + dt };
    let sup_prev = field.sup_norm();
    let sup_u = next.sup_norm();
    let lemma23_slack = relative_slack(growth_bound(sup_prev, dt, m, q), sup_u);
    let eq210_slack = params
        .sup_bound(initial_sup, t)
        .map(|bound| relative_slack(bound, sup_u));

    let (sup_v_prev, l1_v_prev) = (slopes.sup_norm(), slopes.l1_norm());
    let (sup_v_half, l1_v_half) = (slopes_half.sup_norm(), slopes_half.l1_norm());
    let (sup_v, l1_v) = (slopes_next.sup_norm(), slopes_next.l1_norm());
    let slope_growth_rate = if sup_v_prev > 0.0 {
        (sup_v / sup_v_prev - 1.0) / dt
    } else {
        0.0
    };

    let mut violations = Vec::new();
    if lemma23_slack < -BOUND_TOLERANCE {
        violations.push(Violation::GrowthBound { slack: lemma23_slack });
    }
    if let Some(slack) = eq210_slack.filter(|s| *s < -BOUND_TOLERANCE) {
        violations.push(Violation::AprioriBound { slack });
    }
    if sup_v_half > sup_v_prev * (1.0 + CONTRACTION_TOLERANCE) {
        violations.push(Violation::SlopeSup { before: sup_v_prev, after: sup_v_half });
    }
    if l1_v_half > l1_v_prev * (1.0 + CONTRACTION_TOLERANCE) {
        violations.push(Violation::SlopeL1 { before: l1_v_prev, after: l1_v_half });
    }
    if params.monitor == MonitorPolicy::Abort {
        if let Some(v) = violations.first() {
            return Err(SchemeError::Monitor { step, detail: v.to_string() });
        }
    }

    let grid = next.grid();
    let report = StepReport {
        step,
        t,
        dt,
        sup_u,
        sup_u_prev: sup_prev,
        sup_v,
        l1_v,
        sup_v_prev,
        l1_v_prev,
        sup_v_half,
        l1_v_half,
        s_minus: grid.s_minus(),
        s_plus: grid.s_plus(),
        node_count: grid.node_count(),
        existence_margin: margin,
        lemma23_slack,
        eq210_slack,
        slope_growth_rate,
        dt_halvings: halvings,
        violations,
    };
    Ok(Advance { field: next, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Horizon,
    BlowUp,
    ExistenceUnsatisfiable,
    StepFloor,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Horizon => "horizon",
            Termination::BlowUp => "blowup",
            Termination::ExistenceUnsatisfiable => "existence_unsatisfiable",
            Termination::StepFloor => "step_floor",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelCrossing {
    pub level: f64,
    pub time: Option<f64>,
}

/// Incremental form of [`run`], for callers that inspect every step.
#[derive(Debug, Clone)]
pub struct Simulation {
    params: SchemeParams,
    field: NodalField,
    t: f64,
    steps: usize,
    initial_sup: f64,
    threshold: f64,
    crossings: Vec<LevelCrossing>,
    slope_growth_sup: f64,
    termination: Option<Termination>,
}

impl Simulation {
    pub fn new(initial: NodalField, params: SchemeParams) -> Result<Self> {
        params.validate()?;
        let initial_sup = initial.sup_norm();
        let threshold = params.threshold_for(initial_sup);
        let crossings = BLOWUP_LEVELS
            .iter()
            .map(|&l| LevelCrossing { level: l * initial_sup, time: None })
            .filter(|c| c.level > 0.0)
            .collect();
        Ok(Self {
            params,
            field: initial,
            t: 0.0,
            steps: 0,
            initial_sup,
            threshold,
            crossings,
            slope_growth_sup: 0.0,
            termination: None,
        })
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn field(&self) -> &NodalField {
        &self.field
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn initial_sup(&self) -> f64 {
        self.initial_sup
    }

    pub fn lifetime(&self) -> f64 {
        self.params.lifetime(self.initial_sup)
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    pub fn crossings(&self) -> &[LevelCrossing] {
        &self.crossings
    }

    /// Largest observed slope growth rate over steps ending before the lifetime.
    pub fn slope_growth_sup(&self) -> f64 {
        self.slope_growth_sup
    }

    /// Advances one step unless the run is over. Returns `None` once a
    /// termination cause is set.
    pub fn step(&mut self, dt_cap: Option<f64>) -> Result<Option<StepReport>> {
        if self.termination.is_some() {
            return Ok(None);
        }
        if self.t >= self.params.t_end {
            self.termination = Some(Termination::Horizon);
            return Ok(None);
        }
        if let Some(cap) = dt_cap {
            if cap < self.params.dt_floor() {
                self.termination = Some(Termination::StepFloor);
                return Ok(None);
            }
        }
        let adv = match advance(
            &self.field,
            &self.params,
            self.t,
            self.initial_sup,
            dt_cap,
            self.steps,
        ) {
            Ok(adv) => adv,
            Err(SchemeError::ExistenceViolated { .. }) => {
                self.termination = Some(Termination::ExistenceUnsatisfiable);
                return Ok(None);
            }
            Err(SchemeError::StepFloor { .. }) => {
                self.termination = Some(Termination::StepFloor);
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let report = adv.report;
        self.field = adv.field;
        self.t = report.t;
        self.steps += 1;
        if report.t < self.lifetime() {
            self.slope_growth_sup = self.slope_growth_sup.max(report.slope_growth_rate);
        }
        for c in self.crossings.iter_mut() {
            if c.time.is_none() && report.sup_u >= c.level {
                c.time = Some(report.t);
            }
        }
        if report.sup_u >= self.threshold {
            self.termination = Some(Termination::BlowUp);
        } else if self.t >= self.params.t_end {
            self.termination = Some(Termination::Horizon);
        }
        Ok(Some(report))
    }

    pub fn into_trace(self, reports: Vec<StepReport>) -> RunTrace {
        let blowup_time = match self.termination {
            Some(Termination::BlowUp) => Some(self.t),
            _ => None,
        };
        RunTrace {
            reports,
            termination: self.termination.unwrap_or(Termination::Horizon),
            final_time: self.t,
            final_field: self.field,
            initial_sup: self.initial_sup,
            lifetime: self.params.lifetime(self.initial_sup),
            blowup_time,
            crossings: self.crossings,
            slope_growth_sup: self.slope_growth_sup,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub reports: Vec<StepReport>,
    pub termination: Termination,
    pub final_time: f64,
    pub final_field: NodalField,
    pub initial_sup: f64,
    /// Guaranteed existence time `T1`.
    pub lifetime: f64,
    /// First time the sup norm reached the blow-up threshold.
    pub blowup_time: Option<f64>,
    pub crossings: Vec<LevelCrossing>,
    pub slope_growth_sup: f64,
}

/// Steps until the horizon, the blow-up threshold or the step floor.
pub fn run(initial: NodalField, params: SchemeParams) -> Result<RunTrace> {
    let mut sim = Simulation::new(initial, params)?;
    let mut reports = Vec::new();
    while let Some(report) = sim.step(None)? {
        reports.push(report);
    }
    Ok(sim.into_trace(reports))
}
