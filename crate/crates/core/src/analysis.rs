//! Self-similar subsolutions and blow-up certificates.
//!
//! The family
//!
//! ```text
//! u_hat(x, t_n) = lambda (T - t_n)^{-1/q} theta((x - x0) / zeta_n),
//! zeta_n = (T - t_n)^{(q-1)/(2q)},   theta(y) = max(0, 1 - y^2 / a^2),
//! ```
//!
//! is a discrete subsolution of the splitting scheme whenever the function
//! `Phi(y) = A lambda^q y^{q+1} + C - B y` stays nonnegative on `(0, 1)` at every
//! step. [`feasibility`] checks this with step-independent constants, which
//! turns a nonnegative initial datum with a plateau into a certificate of
//! blow-up before `T* = max((lambda/eps)^q, (a/rho)^{2q/(1-q)})`.

use crate::error::{Result, SchemeError};
use crate::mesh::{MovingGrid, NodalField};

pub fn theta(x: f64, a: f64) -> f64 {
    (1.0 - x * x / (a * a)).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsolutionParams {
    pub lambda: f64,
    pub a: f64,
    /// Blow-up time `T` of the subsolution.
    pub blowup_time: f64,
    pub m: f64,
    pub q: f64,
    /// Mesh width the subsolution is interpolated on.
    pub h: f64,
    /// Centre `x0` of the profile.
    pub center: f64,
}

impl SubsolutionParams {
    pub fn new(lambda: f64, a: f64, blowup_time: f64, m: f64, q: f64, h: f64) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("a", a), ("T", blowup_time), ("m", m), ("h", h)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SchemeError::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(SchemeError::InvalidParameter(format!("q must lie in (0, 1), got {q}")));
        }
        Ok(Self { lambda, a, blowup_time, m, q, h, center: 0.0 })
    }

    pub fn centered_at(mut self, x0: f64) -> Self {
        self.center = x0;
        self
    }

    /// `lambda / a^2`.
    pub fn ratio(&self) -> f64 {
        self.lambda / (self.a * self.a)
    }

    pub fn zeta(&self, t: f64) -> f64 {
        (self.blowup_time - t).powf((self.q - 1.0) / (2.0 * self.q))
    }

    pub fn amplitude(&self, t: f64) -> f64 {
        self.lambda * (self.blowup_time - t).powf(-1.0 / self.q)
    }

    /// Half-width `a zeta_n` of the support at time `t`.
    pub fn half_width(&self, t: f64) -> f64 {
        self.a * self.zeta(t)
    }

    /// Mesh slack `delta = h / (a zeta_0)`.
    pub fn delta(&self) -> f64 {
        self.h / self.half_width(0.0)
    }

    /// `mu_n = (4 lambda / (m a^2)) dt / (T - t_n)`.
    pub fn mu(&self, t: f64, dt: f64) -> f64 {
        4.0 * self.ratio() / self.m * dt / (self.blowup_time - t)
    }

    /// `4 lambda / (m a^2) > (1 - q) / q` and `lambda > (m q)^{-1/q}`.
    pub fn satisfies_invariants(&self) -> bool {
        let (m, q) = (self.m, self.q);
        4.0 * self.ratio() / m > (1.0 - q) / q && self.lambda > (m * q).powf(-1.0 / q)
    }

    /// Largest step from `t` keeping `mu_n <= mu_bound` and the subsolution's
    /// own existence condition `dt / (T - t) < 1 / (m q lambda^q)`.
    pub fn max_step(&self, t: f64, mu_bound: f64) -> f64 {
        let rest = self.blowup_time - t;
        let by_mu = mu_bound * self.m / (4.0 * self.ratio());
        let by_existence = (1.0 - 1e-9) / (self.m * self.q * self.lambda.powf(self.q));
        rest * by_mu.min(by_existence)
    }
}

/// Nodal interpolate of the subsolution at time `t` on a grid of width `params.h`.
pub fn subsolution_field(params: &SubsolutionParams, t: f64) -> Result<NodalField> {
    if !(t < params.blowup_time) {
        return Err(SchemeError::SubsolutionExpired { t, blowup: params.blowup_time });
    }
    let zeta = params.zeta(t);
    let width = params.a * zeta;
    if width < params.h {
        return Err(SchemeError::MeshTooCoarse { delta: params.h / width });
    }
    let grid = MovingGrid::new(params.h, params.center, width, width)?;
    let amp = params.amplitude(t);
    let (x0, a) = (params.center, params.a);
    NodalField::from_fn(grid, |x| amp * theta((x - x0) / zeta, a))
}

/// Coefficients of `Phi(y) = A lambda^q y^{q+1} + C - B y` together with the
/// thresholds on `lambda^q` that make it nonnegative on `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub a_coef: f64,
    pub b_coef: f64,
    pub c_coef: f64,
    /// `C / B`.
    pub y0: f64,
    /// Minimum of `Phi` over `[0, 1]`.
    pub phi_min: f64,
    /// `(B - C) / (A y0^{q+1})`, from splitting `(0, 1)` at `y0`.
    pub two_piece_threshold: f64,
    /// Closed-form threshold with `delta (1 + 2 lambda / (m a^2))` in the denominator.
    pub closed_form_m_threshold: f64,
    /// Closed-form threshold with `delta (1 + 2 lambda / a^2)` in the denominator.
    pub closed_form_threshold: f64,
    pub lambda_pow_q: f64,
    pub invariants_hold: bool,
    pub pass: bool,
}

impl FeasibilityReport {
    /// The largest of the three thresholds, used for certification.
    pub fn threshold(&self) -> f64 {
        self.two_piece_threshold
            .max(self.closed_form_m_threshold)
            .max(self.closed_form_threshold)
    }
}

/// Step-independent lower bounds for `A` and `C` and upper bound for `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ConservativeTerms {
    a: f64,
    b: f64,
    c: f64,
    two_piece: f64,
    closed_form_m: f64,
    closed_form: f64,
}

/// Upper bound of `(zeta_{n+1}^2 / zeta_n^2 - 1) (T - t_n) / dt` when
/// `dt / (T - t_n) <= tau`.
pub fn zeta_growth_bound(q: f64, tau: f64) -> f64 {
    (1.0 - q) / q * (1.0 - tau).powf(-1.0 / q)
}

fn conservative_terms(ratio: f64, m: f64, q: f64, delta: f64, mu_bound: f64) -> ConservativeTerms {
    let r4 = 4.0 * ratio / m;
    let tau = mu_bound / r4;
    let a = m * q * (1.0 - mu_bound).powf(q);
    let b = 1.0 + r4 + 2.0 * ratio;
    let c = (r4 - mu_bound * (1.0 + 2.0 * ratio)) * (1.0 - delta) - zeta_growth_bound(q, tau);

    let two_piece = if c > 0.0 {
        let y0 = c / b;
        (b - c) / (a * y0.powf(q + 1.0))
    } else {
        f64::INFINITY
    };
    let closed = |coupling: f64| {
        let den = r4 * (1.0 - delta) - delta * (1.0 + coupling) - (1.0 - q) / q;
        if den > 0.0 {
            (1.0 / q + 2.0 * ratio + r4 * delta) / (m * q * (1.0 - delta).powf(q))
                * (b / den).powf(q + 1.0)
        } else {
            f64::INFINITY
        }
    };
    ConservativeTerms {
        a,
        b,
        c,
        two_piece,
        closed_form_m: closed(2.0 * ratio / m),
        closed_form: closed(2.0 * ratio),
    }
}

/// Minimum over `[0, 1]` of the convex function `A lq y^{q+1} + C - B y`.
pub fn phi_min(a: f64, lambda_pow_q: f64, b: f64, c: f64, q: f64) -> f64 {
    let phi = |y: f64| a * lambda_pow_q * y.powf(q + 1.0) + c - b * y;
    let slope = a * lambda_pow_q * (q + 1.0);
    let y = if slope > 0.0 {
        (b / slope).powf(1.0 / q).clamp(0.0, 1.0)
    } else {
        1.0
    };
    phi(y).min(phi(0.0)).min(phi(1.0))
}

/// Certifies that `Phi_n >= 0` for every step with `mu_n <= mu_bound`.
pub fn feasibility(params: &SubsolutionParams, mu_bound: f64) -> Result<FeasibilityReport> {
    let delta = params.delta();
    if !(delta < 1.0) {
        return Err(SchemeError::MeshTooCoarse { delta });
    }
    if !(0.0..1.0).contains(&mu_bound) {
        return Err(SchemeError::InvalidParameter(format!(
            "mu bound must lie in [0, 1), got {mu_bound}"
        )));
    }
    Ok(feasibility_terms(params.lambda, params.ratio(), params.m, params.q, delta, mu_bound)
        .with_invariants(params.satisfies_invariants()))
}

impl FeasibilityReport {
    fn with_invariants(mut self, ok: bool) -> Self {
        self.invariants_hold = ok;
        self.pass = self.pass && ok;
        self
    }
}

fn feasibility_terms(lambda: f64, ratio: f64, m: f64, q: f64, delta: f64, mu_bound: f64) -> FeasibilityReport {
    let t = conservative_terms(ratio, m, q, delta, mu_bound);
    let lq = lambda.powf(q);
    let y0 = t.c / t.b;
    let phi_min = phi_min(t.a, lq, t.b, t.c, q);
    let mut report = FeasibilityReport {
        a_coef: t.a,
        b_coef: t.b,
        c_coef: t.c,
        y0,
        phi_min,
        two_piece_threshold: t.two_piece,
        closed_form_m_threshold: t.closed_form_m,
        closed_form_threshold: t.closed_form,
        lambda_pow_q: lq,
        invariants_hold: true,
        pass: false,
    };
    report.pass = t.c > 0.0 && lq >= report.threshold() && phi_min >= 0.0;
    report
}

/// Smallest `lambda` passing [`feasibility`] at fixed `lambda / a^2`, or `None`
/// when no amplitude works for this ratio and mesh slack.
pub fn min_feasible_lambda(ratio: f64, m: f64, q: f64, delta: f64, mu_bound: f64) -> Option<f64> {
    if 4.0 * ratio / m <= (1.0 - q) / q || delta >= 1.0 {
        return None;
    }
    let t = conservative_terms(ratio, m, q, delta, mu_bound);
    if !(t.c > 0.0) {
        return None;
    }
    let threshold = t.two_piece.max(t.closed_form_m).max(t.closed_form);
    if !threshold.is_finite() {
        return None;
    }
    let lambda = threshold.powf(1.0 / q).max((m * q).powf(-1.0 / q));
    Some(lambda * (1.0 + 1e-9))
}

/// Sharp per-step coefficients `(A, B, C)` for the step `t_n -> t_n + dt`.
pub fn phi_coefficients(params: &SubsolutionParams, t: f64, dt: f64) -> (f64, f64, f64) {
    let (m, q, ratio) = (params.m, params.q, params.ratio());
    let rest = params.blowup_time - t;
    let rest_next = rest - dt;
    let mu = params.mu(t, dt);
    let a = m * (1.0 - mu).powf(q) * (q + (1.0 - q) * (1.0 - mu) * rest_next / rest);
    let b = 1.0 + 4.0 * ratio / m + 2.0 * ratio - mu * (1.0 + 2.0 * ratio);
    let zeta_sq = (params.zeta(t + dt) / params.zeta(t)).powi(2);
    let c = (4.0 * ratio / m - mu * (1.0 + 2.0 * ratio)) * (1.0 - params.delta())
        - (zeta_sq - 1.0) * rest / dt;
    (a, b, c)
}

/// `T* = max((lambda/eps)^q, (a/rho)^{2q/(1-q)})`.
pub fn blowup_time_bound(lambda: f64, a: f64, q: f64, eps: f64, rho: f64) -> f64 {
    (lambda / eps).powf(q).max((a / rho).powf(2.0 * q / (1.0 - q)))
}

/// An interval `|x - x0| < rho` on which the field is at least `eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plateau {
    pub x0: f64,
    pub eps: f64,
    pub rho: f64,
}

/// Levels tried per centre in [`find_plateau`], besides the nodal values.
const PLATEAU_LEVELS: usize = 64;

/// Scans node centres and levels for the plateau maximizing `eps * rho`.
pub fn find_plateau(field: &NodalField) -> Result<Plateau> {
    if field.is_zero() {
        return Err(SchemeError::ZeroField);
    }
    let xs = field.breakpoints();
    let us: Vec<f64> = std::iter::once(0.0)
        .chain(field.values().iter().copied())
        .chain(std::iter::once(0.0))
        .collect();

    // Distance from xs[c] to the first point where the field drops below eps.
    let reach = |c: usize, eps: f64, step: isize| -> f64 {
        let mut j = c;
        loop {
            let next = (j as isize + step) as usize;
            if us[next] < eps {
                let frac = (us[j] - eps) / (us[j] - us[next]);
                let x = xs[j] + (xs[next] - xs[j]) * frac;
                return (x - xs[c]).abs();
            }
            j = next;
        }
    };

    let mut best = Plateau { x0: 0.0, eps: 0.0, rho: 0.0 };
    for c in 1..us.len() - 1 {
        let top = us[c];
        if top <= 0.0 {
            continue;
        }
        let levels = us
            .iter()
            .copied()
            .filter(|&u| u > 0.0 && u <= top)
            .chain((1..=PLATEAU_LEVELS).map(|j| top * j as f64 / PLATEAU_LEVELS as f64));
        for eps in levels {
            let rho = reach(c, eps, 1).min(reach(c, eps, -1));
            if eps * rho > best.eps * best.rho {
                best = Plateau { x0: xs[c], eps, rho };
            }
        }
    }
    if best.rho <= 0.0 {
        return Err(SchemeError::ZeroField);
    }
    Ok(best)
}

/// `min (field - sub)` over the breakpoints of both piecewise-linear functions.
pub fn domination_margin(sub: &NodalField, field: &NodalField) -> f64 {
    sub.breakpoints()
        .into_iter()
        .chain(field.breakpoints())
        .map(|x| field.eval(x) - sub.eval(x))
        .fold(f64::INFINITY, f64::min)
}

/// Relative tolerance of [`domination_check`], in units of `||field||_inf`.
pub const DOMINATION_TOLERANCE: f64 = 1e-12;

/// `sub <= field` everywhere; exact for piecewise-linear functions since the
/// difference is linear between consecutive breakpoints.
pub fn domination_check(sub: &NodalField, field: &NodalField) -> bool {
    domination_margin(sub, field) >= -DOMINATION_TOLERANCE * field.sup_norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub plateau: Plateau,
    pub params: SubsolutionParams,
    pub report: FeasibilityReport,
    pub t_star: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertificateOutcome {
    Found(Certificate),
    /// No feasible subsolution fits under the plateau at this mesh width;
    /// `delta` is the smallest mesh slack `h / rho` available.
    NotFound { delta: f64 },
}

/// Multiples of the smallest admissible `lambda / a^2` tried by [`certify`].
const RATIO_MULTIPLIERS: [f64; 13] = [1.1, 1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 64.0];

/// Searches for a subsolution lying below `initial` and returns the one with
/// the smallest blow-up time bound.
pub fn certify(initial: &NodalField, m: f64, q: f64) -> Result<CertificateOutcome> {
    let plateau = find_plateau(initial)?;
    let h = initial.grid().h();
    let base_delta = h / plateau.rho;
    let ratio_min = m * (1.0 - q) / (4.0 * q);

    let mut best: Option<Certificate> = None;
    for mult in RATIO_MULTIPLIERS {
        let ratio = ratio_min * mult;
        let mut delta = base_delta;
        for _ in 0..100 {
            if delta >= 1.0 {
                break;
            }
            let Some(lambda) = min_feasible_lambda(ratio, m, q, delta, delta) else {
                break;
            };
            let a = (lambda / ratio).sqrt();
            let t_star = blowup_time_bound(lambda, a, q, plateau.eps, plateau.rho);
            let params = SubsolutionParams::new(lambda, a, t_star, m, q, h)?.centered_at(plateau.x0);
            let actual = params.delta();
            if actual > delta * (1.0 + 1e-12) {
                delta = actual;
                continue;
            }
            let report = feasibility(&params, actual)?;
            let sub = subsolution_field(&params, 0.0)?;
            if report.pass
                && domination_check(&sub, initial)
                && best.as_ref().is_none_or(|b| t_star < b.t_star)
            {
                best = Some(Certificate { plateau, params, report, t_star });
            }
            break;
        }
    }
    Ok(match best {
        Some(c) => CertificateOutcome::Found(c),
        None => CertificateOutcome::NotFound { delta: base_delta },
    })
}
