//! Linearized backward Euler step for `u_t - u u_xx = m u^{q+1}` with P1
//! elements and mass lumping.
//!
//! The source is split into an implicit part `m q (u^{n+1/2})^q u^{n+1}` and an
//! explicit part `m (1 - q) (u^{n+1/2})^{q+1}`. Row `i` of the resulting system,
//! after division by the lumped weight `w_i`, reads
//!
//! ```text
//! (1 - m q dt a_i^q) x_i + dt a_i (K x)_i / w_i = a_i + m (1 - q) dt a_i^{q+1}
//! ```
//!
//! with `a = u^{n+1/2}` and `K` the P1 stiffness matrix of the moving grid. On
//! interior rows this is the usual `dt a_i (2 x_i - x_{i-1} - x_{i+1}) / h^2`.

use crate::error::{Result, SchemeError};
use crate::mesh::{MovingGrid, NodalField};

/// `u^q` with the continuous extension `0^q = 0`.
#[inline]
pub fn pow_q(u: f64, q: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u.powf(q)
    }
}

/// Per-node weights of the lumped scalar product: half the width of the hat
/// function's support, i.e. `(h_minus + h)/2`, `h`, ..., `(h + h_plus)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedWeights(Vec<f64>);

impl LumpedWeights {
    pub fn new(grid: &MovingGrid) -> Self {
        let lengths = grid.interval_lengths();
        Self(lengths.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn lumped_inner_product(a: &NodalField, b: &NodalField) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(SchemeError::GridMismatch);
    }
    let w = LumpedWeights::new(a.grid());
    Ok(w.0
        .iter()
        .zip(a.values().iter().zip(b.values()))
        .map(|(w, (x, y))| w * x * y)
        .sum())
}

/// `m q dt ||u||_inf^q`, the quantity that must stay below one.
pub fn existence_margin(field_half: &NodalField, dt: f64, m: f64, q: f64) -> f64 {
    m * q * dt * pow_q(field_half.sup_norm(), q)
}

pub fn existence_condition(field_half: &NodalField, dt: f64, m: f64, q: f64) -> bool {
    existence_margin(field_half, dt, m, q) < 1.0
}

/// Tridiagonal system indexed by interior nodes; `lower[0]` and
/// `upper[n - 1]` are unused and kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Smallest row margin `diag_i - |lower_i| - |upper_i|`.
    pub fn dominance_margin(&self) -> f64 {
        (0..self.len())
            .map(|i| self.diag[i] - self.lower[i].abs() - self.upper[i].abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Thomas elimination without pivoting.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let n = self.len();
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut prev_upper = 0.0;
        let mut prev_rhs = 0.0;
        for i in 0..n {
            let pivot = self.diag[i] - self.lower[i] * prev_upper;
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(SchemeError::ZeroPivot { row: i });
            }
            upper[i] = self.upper[i] / pivot;
            rhs[i] = (self.rhs[i] - self.lower[i] * prev_rhs) / pivot;
            prev_upper = upper[i];
            prev_rhs = rhs[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            rhs[i] -= upper[i] * rhs[i + 1];
        }
        Ok(rhs)
    }
}

/// Assembles the nodal equations of one parabolic step.
pub fn assemble(field_half: &NodalField, dt: f64, m: f64, q: f64) -> Result<TridiagonalSystem> {
    let margin = existence_margin(field_half, dt, m, q);
    if !(margin < 1.0) {
        return Err(SchemeError::ExistenceViolated { value: margin });
    }
    let grid = field_half.grid();
    let a = field_half.values();
    let n = a.len();
    let lengths = grid.interval_lengths();
    let weights = LumpedWeights::new(grid);

    let mut sys = TridiagonalSystem {
        lower: vec![0.0; n],
        diag: vec![0.0; n],
        upper: vec![0.0; n],
        rhs: vec![0.0; n],
    };
    for i in 0..n {
        let (left, right) = (lengths[i], lengths[i + 1]);
        let ai = a[i];
        let aq = pow_q(ai, q);
        let scale = dt * ai / weights.0[i];
        sys.diag[i] = 1.0 - m * q * dt * aq + scale * (1.0 / left + 1.0 / right);
        if i > 0 {
            sys.lower[i] = -scale / left;
        }
        if i + 1 < n {
            sys.upper[i] = -scale / right;
        }
        sys.rhs[i] = ai + m * (1.0 - q) * dt * aq * ai;
    }
    debug_assert!(sys.dominance_margin() > 0.0, "assembled system is not diagonally dominant");
    Ok(sys)
}

/// Solves `system` and wraps the solution as a field on `grid`.
pub fn solve(system: &TridiagonalSystem, grid: &MovingGrid) -> Result<NodalField> {
    let x = system.solve()?;
    NodalField::new(grid.clone(), x)
}

/// `u^{n+1}` from `u^{n+1/2}` on the same grid.
pub fn parabolic_step(field_half: &NodalField, dt: f64, m: f64, q: f64) -> Result<NodalField> {
    let sys = assemble(field_half, dt, m, q)?;
    solve(&sys, field_half.grid())
}

/// Right-hand side of the per-step sup-norm bound:
/// `U (1 + m (1 - q) dt U^q) / (1 - m q dt U^q)`.
pub fn growth_bound(sup: f64, dt: f64, m: f64, q: f64) -> f64 {
    let uq = pow_q(sup, q);
    sup * (1.0 + m * (1.0 - q) * dt * uq) / (1.0 - m * q * dt * uq)
}
