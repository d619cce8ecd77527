//! Exact nodal evolution of `u_t - (1/m) u_x^2 = 0` via the Hopf-Lax formula.
//!
//! For piecewise-linear data and a step obeying `dt ||v||_inf / h <= m / 2`,
//! the characteristic feet of every node stay inside the two intervals adjacent
//! to it, and the variational formula
//!
//! ```text
//! u(x, t + dt) = max_y [ u(y, t) - m (x - y)^2 / (4 dt) ]
//! ```
//!
//! collapses to `u_i + (dt/m) max(0, -v_i, v_{i+1})^2`. The support fronts move
//! outward with speed `|v_end| / m`.

use crate::error::{Result, SchemeError};
use crate::mesh::{MovingGrid, NodalField, SlopeField};

/// Relative slack accepted on the stability bound before a step is rejected.
const CFL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicStepResult {
    /// Intermediate field on the regridded support.
    pub field_half: NodalField,
    pub s_minus_new: f64,
    pub s_plus_new: f64,
    pub new_node_left: bool,
    pub new_node_right: bool,
}

/// Difference quotients on interior intervals plus the two end-interval slopes.
pub fn compute_slopes(field: &NodalField) -> SlopeField {
    let grid = field.grid();
    let u = field.values();
    let n = u.len();
    let h = grid.h();
    let mut slopes = Vec::with_capacity(n + 1);
    slopes.push(u[0] / grid.h_minus());
    slopes.extend(u.windows(2).map(|w| (w[1] - w[0]) / h));
    slopes.push(-u[n - 1] / grid.h_plus());
    SlopeField::new(grid.clone(), slopes)
}

/// Largest step allowed by `dt ||v||_inf / h <= m / 2`; infinite for flat data.
pub fn cfl_max_dt(slopes: &SlopeField, m: f64) -> f64 {
    let sup = slopes.sup_norm();
    if sup == 0.0 {
        f64::INFINITY
    } else {
        0.5 * m * slopes.grid().h() / sup
    }
}

/// One Hopf-Lax step: nodal update, front motion, regrid and new-node values.
pub fn hopf_lax_step(field: &NodalField, dt: f64, m: f64) -> Result<HyperbolicStepResult> {
    if !(m.is_finite() && m > 0.0) {
        return Err(SchemeError::InvalidParameter(format!("m must be positive, got {m}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SchemeError::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let slopes = compute_slopes(field);
    let max = cfl_max_dt(&slopes, m);
    if dt > max * (1.0 + CFL_SLACK) {
        return Err(SchemeError::CflViolation { dt, max });
    }

    let grid = field.grid();
    let u = field.values();
    let v = slopes.slopes();
    let n = u.len();
    let rate = dt / m;

    // Node k sits between intervals k (left) and k + 1 (right).
    let mut half: Vec<f64> = (0..n)
        .map(|k| {
            let lift = 0.0f64.max(-v[k]).max(v[k + 1]);
            u[k] + rate * lift * lift
        })
        .collect();

    let v_left = slopes.left_end();
    let v_right = slopes.right_end();
    let s_minus_new = grid.s_minus() + rate * v_left;
    let s_plus_new = grid.s_plus() - rate * v_right;
    let (new_grid, added) = grid.regrid(s_minus_new, s_plus_new)?;
    if added.left > 1 || added.right > 1 {
        return Err(SchemeError::FrontJump);
    }

    let h = grid.h();
    if added.left == 1 {
        let value = (1.0 - h / grid.h_minus()) * u[0] + rate * v_left * v_left;
        half.insert(0, value.max(0.0));
    }
    if added.right == 1 {
        let value = (1.0 - h / grid.h_plus()) * u[n - 1] + rate * v_right * v_right;
        half.push(value.max(0.0));
    }

    Ok(HyperbolicStepResult {
        field_half: NodalField::new(new_grid, half)?,
        s_minus_new,
        s_plus_new,
        new_node_left: added.left == 1,
        new_node_right: added.right == 1,
    })
}

/// Samples per breakpoint interval used by [`hopf_lax_oracle`].
pub const ORACLE_SAMPLES: usize = 64;

/// Direct evaluation of `max_y [u(y) - m (x - y)^2 / (4 dt)]` for the
/// piecewise-linear `field`, extended by zero outside its support.
///
/// Every breakpoint interval is sampled densely; intervals whose sampled
/// maximum could still hide the global one (the sampling error of a concave
/// quadratic is bounded) are refined by golden-section search.
pub fn hopf_lax_oracle(field: &NodalField, dt: f64, m: f64, x: f64) -> f64 {
    let pts = field.breakpoints();
    let vals: Vec<f64> = std::iter::once(0.0)
        .chain(field.values().iter().copied())
        .chain(std::iter::once(0.0))
        .collect();
    let penalty = m / (4.0 * dt);
    let objective = |y: f64, j: usize| {
        let (a, b) = (pts[j], pts[j + 1]);
        let t = ((y - a) / (b - a)).clamp(0.0, 1.0);
        let u = (1.0 - t) * vals[j] + t * vals[j + 1];
        u - penalty * (x - y) * (x - y)
    };

    // Outside the support u = 0 and the best choice is the nearest admissible y.
    let left = pts[0];
    let right = pts[pts.len() - 1];
    let outside = if x <= left || x >= right {
        0.0
    } else {
        f64::NEG_INFINITY
    };

    let mut sampled = Vec::with_capacity(pts.len() - 1);
    for j in 0..pts.len() - 1 {
        let (a, b) = (pts[j], pts[j + 1]);
        let step = (b - a) / ORACLE_SAMPLES as f64;
        let best = (0..=ORACLE_SAMPLES)
            .map(|s| objective(a + s as f64 * step, j))
            .fold(f64::NEG_INFINITY, f64::max);
        let bound = 2.0 * penalty * step * step;
        sampled.push((best, bound));
    }
    let global = sampled
        .iter()
        .map(|(best, _)| *best)
        .fold(outside, f64::max);

    let mut result = global;
    for (j, (best, bound)) in sampled.iter().enumerate() {
        if best + bound < global {
            continue;
        }
        result = result.max(golden_max(|y| objective(y, j), pts[j], pts[j + 1]));
    }
    result
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd).max(f(a)).max(f(b))
}

/// Grid-free view used by tests: the support the exact solution would have.
pub fn front_positions(grid: &MovingGrid, slopes: &SlopeField, dt: f64, m: f64) -> (f64, f64) {
    (
        grid.left_end() - dt / m * slopes.left_end(),
        grid.right_end() - dt / m * slopes.right_end(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hat() -> NodalField {
        NodalField::new(MovingGrid::uniform(1.0, 1).unwrap(), vec![1.0]).unwrap()
    }

    #[test]
    fn zero_field_has_zero_slopes_and_is_fixed() {
        let f = NodalField::zeros(MovingGrid::uniform(1.0, 5).unwrap());
        let v = compute_slopes(&f);
        assert!(v.slopes().iter().all(|&s| s == 0.0));
        assert_eq!(cfl_max_dt(&v, 1.0), f64::INFINITY);
        let out = hopf_lax_step(&f, 0.3, 1.0).unwrap();
        assert_eq!(out.field_half, f);
        assert!(!out.new_node_left && !out.new_node_right);
    }

    #[test]
    fn hat_slopes_at_ends() {
        let v = compute_slopes(&hat());
        assert_eq!(v.slopes(), &[1.0, -1.0]);
    }

    #[test]
    fn ramp_slopes_match_difference_quotients() {
        let g = MovingGrid::uniform(2.0, 4).unwrap();
        let f = NodalField::new(g, vec![0.0, 0.5, 1.0, 0.5, 0.0, 0.0, 0.0]).unwrap();
        let v = compute_slopes(&f);
        assert_eq!(v.slopes(), &[0.0, 1.0, 1.0, -1.0, -1.0, 0.0, 0.0, -0.0]);
    }

    #[test]
    fn cfl_bound_substitution() {
        assert_eq!(cfl_max_dt(&compute_slopes(&hat()), 1.0), 0.5);
        // ||v|| = 4 with h = 0.5 and m = 2.
        let g = MovingGrid::uniform(0.5, 1).unwrap();
        let f = NodalField::new(g, vec![2.0]).unwrap();
        assert_eq!(cfl_max_dt(&compute_slopes(&f), 2.0), 0.125);
    }

    #[test]
    fn hat_step_by_hand() {
        let out = hopf_lax_step(&hat(), 0.5, 1.0).unwrap();
        assert_eq!(out.field_half.values(), &[1.0]);
        assert_eq!(out.s_plus_new, 1.5);
        assert_eq!(out.s_minus_new, 1.5);
        assert!(!out.new_node_left && !out.new_node_right);
        assert_eq!(out.field_half.grid().h_plus(), 1.5);
    }

    #[test]
    fn step_rejects_cfl_violation() {
        assert!(matches!(
            hopf_lax_step(&hat(), 0.6, 1.0),
            Err(SchemeError::CflViolation { .. })
        ));
    }

    #[test]
    fn new_node_value_follows_end_interval_formula() {
        // h = 1, h_plus = 1.8 so a half-step front motion crosses x = 2.
        let g = MovingGrid::new(1.0, 0.0, 1.0, 2.8).unwrap();
        assert_eq!(g.n_plus(), 2);
        let f = NodalField::new(g, vec![0.4, 0.9]).unwrap();
        let v = compute_slopes(&f);
        let dt = cfl_max_dt(&v, 1.0);
        let out = hopf_lax_step(&f, dt, 1.0).unwrap();
        assert!(out.new_node_right);
        let last = *out.field_half.values().last().unwrap();
        let expected = (1.0 - 1.0 / 1.8) * 0.9 + dt * v.right_end().powi(2);
        assert!((last - expected).abs() < 1e-15);
        let oracle = hopf_lax_oracle(&f, dt, 1.0, 2.0);
        assert!((last - oracle).abs() < 1e-9, "{last} vs {oracle}");
    }

    #[test]
    fn oracle_zero_field_and_beyond_front() {
        let z = NodalField::zeros(MovingGrid::uniform(1.0, 3).unwrap());
        assert_eq!(hopf_lax_oracle(&z, 0.1, 1.0, 0.2), 0.0);
        let f = hat();
        let dt = 0.5;
        let (_, right) = front_positions(f.grid(), &compute_slopes(&f), dt, 1.0);
        assert_eq!(right, 1.5);
        assert!(hopf_lax_oracle(&f, dt, 1.0, right + 1e-3) <= 1e-12);
        assert!(hopf_lax_oracle(&f, dt, 1.0, right - 1e-3) > 0.0);
    }

    #[test]
    fn oracle_agrees_at_nodes_for_rough_data() {
        let g = MovingGrid::uniform(1.0, 4).unwrap();
        let f = NodalField::new(g, vec![0.3, 0.1, 0.8, 0.2, 0.9, 0.0, 0.4]).unwrap();
        let dt = cfl_max_dt(&compute_slopes(&f), 1.5);
        let out = hopf_lax_step(&f, dt, 1.5).unwrap();
        for (x, &u) in out.field_half.grid().nodes().zip(out.field_half.values()) {
            let o = hopf_lax_oracle(&f, dt, 1.5, x);
            assert!((u - o).abs() < 1e-9, "x = {x}: {u} vs {o}");
        }
    }
}
