//! Randomized cross-checks of the solver against independent oracles.
//!
//! Used by the `selftest` command and by the integration tests.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::driver::{run, SchemeParams, Termination};
use crate::hyperbolic::{cfl_max_dt, compute_slopes, hopf_lax_oracle, hopf_lax_step};
use crate::mesh::{MovingGrid, NodalField};
use crate::parabolic::{assemble, TridiagonalSystem};

/// Dense LU solve of a tridiagonal system.
pub fn dense_solve(system: &TridiagonalSystem) -> Option<Vec<f64>> {
    let n = system.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = system.diag[i];
        if i > 0 {
            a[(i, i - 1)] = system.lower[i];
        }
        if i + 1 < n {
            a[(i, i + 1)] = system.upper[i];
        }
    }
    let b = DVector::from_column_slice(&system.rhs);
    a.lu().solve(&b).map(|x| x.as_slice().to_vec())
}

/// Random grid with exactly `nodes` interior nodes and end intervals in `[h, 2h)`.
pub fn random_grid<R: Rng>(rng: &mut R, nodes: usize) -> MovingGrid {
    let h = rng.gen_range(0.01..0.2);
    let n_minus = rng.gen_range(1..=nodes);
    let n_plus = nodes + 1 - n_minus;
    let s_minus = (n_minus as f64 - 1.0) * h + h * rng.gen_range(1.0..1.95);
    let s_plus = (n_plus as f64 - 1.0) * h + h * rng.gen_range(1.0..1.95);
    MovingGrid::new(h, 0.0, s_minus, s_plus).expect("valid random grid")
}

/// Random nonnegative field; about a fifth of the nodes are zero.
pub fn random_field<R: Rng>(rng: &mut R, nodes: usize) -> NodalField {
    let grid = random_grid(rng, nodes);
    let scale = rng.gen_range(0.1..10.0);
    let values = (0..nodes)
        .map(|_| if rng.gen_bool(0.2) { 0.0 } else { scale * rng.gen::<f64>() })
        .collect();
    NodalField::new(grid, values).expect("nonnegative values")
}

/// Random admissible parabolic system: a random field and a step satisfying
/// the existence condition with margin.
pub fn random_system<R: Rng>(rng: &mut R, nodes: usize) -> (NodalField, TridiagonalSystem, f64, f64, f64) {
    let field = random_field(rng, nodes);
    let m = rng.gen_range(0.5..4.0);
    let q = rng.gen_range(0.05..0.95);
    let uq = field.sup_norm().powf(q).max(1e-12);
    let dt = rng.gen_range(0.01..0.9) / (m * q * uq);
    let system = assemble(&field, dt, m, q).expect("existence condition holds");
    (field, system, dt, m, q)
}

/// Largest `|u_i - oracle(x_i)|` after one Hopf-Lax step at the stability limit.
pub fn hopf_lax_discrepancy(field: &NodalField, m: f64, cfl_fraction: f64) -> f64 {
    let dt = cfl_fraction * cfl_max_dt(&compute_slopes(field), m);
    let dt = if dt.is_finite() { dt } else { 1.0 };
    let out = hopf_lax_step(field, dt, m).expect("step within the stability bound");
    out.field_half
        .grid()
        .nodes()
        .zip(out.field_half.values())
        .map(|(x, &u)| (u - hopf_lax_oracle(field, dt, m, x)).abs())
        .fold(0.0, f64::max)
}

/// Largest relative difference between the Thomas and dense solutions.
pub fn solver_discrepancy(system: &TridiagonalSystem) -> Option<f64> {
    let thomas = system.solve().ok()?;
    let dense = dense_solve(system)?;
    let scale = dense.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    Some(
        thomas
            .iter()
            .zip(&dense)
            .map(|(a, b)| (a - b).abs() / scale)
            .fold(0.0, f64::max),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Short randomized versions of the oracle suites.
pub fn selftest(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::new();

    let worst = (0..100)
        .map(|_| {
            let nodes = rng.gen_range(5..=40);
            let f = random_field(&mut rng, nodes);
            let m = rng.gen_range(0.5..4.0);
            hopf_lax_discrepancy(&f, m, rng.gen_range(0.1..1.0))
        })
        .fold(0.0, f64::max);
    results.push(CheckResult {
        name: "hopf_lax_vs_variational_oracle",
        passed: worst <= 1e-6,
        detail: format!("max nodal error {worst:.3e}"),
    });

    let mut worst = 0.0f64;
    let mut negative = false;
    for _ in 0..100 {
        let nodes = rng.gen_range(5..=100);
        let (_, system, ..) = random_system(&mut rng, nodes);
        worst = worst.max(solver_discrepancy(&system).unwrap_or(f64::INFINITY));
        negative |= system.solve().map_or(true, |x| x.iter().any(|&v| v < 0.0));
    }
    results.push(CheckResult {
        name: "thomas_vs_dense_lu",
        passed: worst <= 1e-12 && !negative,
        detail: format!("max relative error {worst:.3e}, negative values: {negative}"),
    });

    let mut worst = f64::INFINITY;
    for _ in 0..5 {
        let m = rng.gen_range(0.5..4.0);
        let p = 1.0 + rng.gen_range(0.1..0.9) * m;
        let nodes = rng.gen_range(5..=30);
        let f = random_field(&mut rng, nodes);
        let mut params = SchemeParams::new(m, p, 1.0).expect("admissible parameters");
        params.t_end = 0.9 * params.lifetime(f.sup_norm());
        params.dt_max = params.t_end;
        match run(f, params) {
            Ok(trace) if trace.termination == Termination::Horizon => {
                for r in &trace.reports {
                    worst = worst.min(r.lemma23_slack);
                    if let Some(s) = r.eq210_slack {
                        worst = worst.min(s);
                    }
                }
            }
            _ => worst = f64::NEG_INFINITY,
        }
    }
    results.push(CheckResult {
        name: "sup_norm_bounds",
        passed: worst >= -1e-10,
        detail: format!("smallest relative slack {worst:.3e}"),
    });

    results
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_solve_matches_hand_solution() {
        let s = TridiagonalSystem {
            lower: vec![0.0, -1.0, -1.0],
            diag: vec![2.0, 2.0, 2.0],
            upper: vec![-1.0, -1.0, 0.0],
            rhs: vec![1.0, 0.0, 1.0],
        };
        assert_eq!(dense_solve(&s).unwrap().len(), 3);
        for x in dense_solve(&s).unwrap() {
            assert!((x - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn random_grids_have_requested_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for nodes in [1, 2, 5, 50] {
            let g = random_grid(&mut rng, nodes);
            assert_eq!(g.node_count(), nodes);
            assert!(g.satisfies_end_bounds());
        }
    }

    #[test]
    fn selftest_passes() {
        for check in selftest(7) {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }
}
