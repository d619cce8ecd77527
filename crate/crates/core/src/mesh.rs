//! Moving-support piecewise-linear spaces.
//!
//! A [`MovingGrid`] covers the support `[origin - s_minus, origin + s_plus]`
//! with interior nodes `x_i = origin + i h`, `-N_- + 1 <= i <= N_+ - 1`, and two
//! variable end intervals of widths `h_minus`, `h_plus` in `[h, 2h)`. Functions
//! of the space vanish outside the support, so only interior node values are
//! stored.

use crate::error::{Result, SchemeError};

/// Absolute tolerance, in units of `h`, for deciding that a support endpoint
/// sits exactly on a node position.
pub const NODE_SNAP: f64 = 1.0 / (1u64 << 40) as f64;

/// Number of interior intervals to the end node: the unique `k >= 1` with
/// `h <= s - (k - 1) h < 2h`.
fn end_count(s: f64, h: f64) -> Option<usize> {
    let k = (s / h + NODE_SNAP).floor();
    if k.is_finite() && k >= 1.0 {
        Some(k as usize)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovingGrid {
    h: f64,
    origin: f64,
    s_minus: f64,
    s_plus: f64,
    n_minus: usize,
    n_plus: usize,
    h_minus: f64,
    h_plus: f64,
}

/// Which sides gained a node during a [`MovingGrid::regrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NewNodes {
    pub left: usize,
    pub right: usize,
}

impl MovingGrid {
    /// Initial grid on `[-s0, s0]` with `h = s0 / n`.
    pub fn uniform(s0: f64, n: usize) -> Result<Self> {
        if !(s0.is_finite() && s0 > 0.0) {
            return Err(SchemeError::InvalidGrid(format!("s0 must be positive, got {s0}")));
        }
        if n == 0 {
            return Err(SchemeError::InvalidGrid("N must be at least 1".into()));
        }
        let h = s0 / n as f64;
        Ok(Self {
            h,
            origin: 0.0,
            s_minus: s0,
            s_plus: s0,
            n_minus: n,
            n_plus: n,
            h_minus: h,
            h_plus: h,
        })
    }

    /// Grid with mesh width `h` covering `[origin - s_minus, origin + s_plus]`.
    pub fn new(h: f64, origin: f64, s_minus: f64, s_plus: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(SchemeError::InvalidGrid(format!("h must be positive, got {h}")));
        }
        if !origin.is_finite() {
            return Err(SchemeError::InvalidGrid("origin must be finite".into()));
        }
        let n_minus = end_count(s_minus, h).ok_or_else(|| {
            SchemeError::InvalidGrid(format!("s_minus = {s_minus} is smaller than h = {h}"))
        })?;
        let n_plus = end_count(s_plus, h).ok_or_else(|| {
            SchemeError::InvalidGrid(format!("s_plus = {s_plus} is smaller than h = {h}"))
        })?;
        Ok(Self {
            h,
            origin,
            s_minus,
            s_plus,
            n_minus,
            n_plus,
            h_minus: s_minus - (n_minus as f64 - 1.0) * h,
            h_plus: s_plus - (n_plus as f64 - 1.0) * h,
        })
    }

    /// Same `h` and origin, new support endpoints. The support may only grow.
    pub fn regrid(&self, s_minus_new: f64, s_plus_new: f64) -> Result<(Self, NewNodes)> {
        if s_minus_new < self.s_minus {
            return Err(SchemeError::SupportShrink {
                side: "left",
                old: self.s_minus,
                new: s_minus_new,
            });
        }
        if s_plus_new < self.s_plus {
            return Err(SchemeError::SupportShrink {
                side: "right",
                old: self.s_plus,
                new: s_plus_new,
            });
        }
        let mut grid = Self::new(self.h, self.origin, s_minus_new, s_plus_new)?;
        // An endpoint that did not move keeps its end interval bit for bit.
        if s_minus_new == self.s_minus {
            grid.n_minus = self.n_minus;
            grid.h_minus = self.h_minus;
        }
        if s_plus_new == self.s_plus {
            grid.n_plus = self.n_plus;
            grid.h_plus = self.h_plus;
        }
        let added = NewNodes {
            left: grid.n_minus - self.n_minus,
            right: grid.n_plus - self.n_plus,
        };
        Ok((grid, added))
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn s_minus(&self) -> f64 {
        self.s_minus
    }

    pub fn s_plus(&self) -> f64 {
        self.s_plus
    }

    pub fn n_minus(&self) -> usize {
        self.n_minus
    }

    pub fn n_plus(&self) -> usize {
        self.n_plus
    }

    pub fn h_minus(&self) -> f64 {
        self.h_minus
    }

    pub fn h_plus(&self) -> f64 {
        self.h_plus
    }

    pub fn left_end(&self) -> f64 {
        self.origin - self.s_minus
    }

    pub fn right_end(&self) -> f64 {
        self.origin + self.s_plus
    }

    /// Number of interior nodes, `N_- + N_+ - 1`.
    pub fn node_count(&self) -> usize {
        self.n_minus + self.n_plus - 1
    }

    /// Integer label `i` of the storage slot `k` (so that `x = origin + i h`).
    pub fn node_label(&self, k: usize) -> i64 {
        k as i64 - (self.n_minus as i64 - 1)
    }

    pub fn node_x(&self, k: usize) -> f64 {
        self.origin + self.node_label(k) as f64 * self.h
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.node_count()).map(move |k| self.node_x(k))
    }

    /// Lengths of the `node_count() + 1` intervals, left end interval first.
    pub fn interval_lengths(&self) -> Vec<f64> {
        let n = self.node_count();
        let mut lengths = Vec::with_capacity(n + 1);
        lengths.push(self.h_minus);
        lengths.extend(std::iter::repeat_n(self.h, n - 1));
        lengths.push(self.h_plus);
        lengths
    }

    /// `h <= h_minus, h_plus < 2h`, up to the node-snapping tolerance.
    pub fn satisfies_end_bounds(&self) -> bool {
        let lo = self.h * (1.0 - 4.0 * NODE_SNAP);
        let hi = 2.0 * self.h;
        (lo..hi).contains(&self.h_minus) && (lo..hi).contains(&self.h_plus)
    }

    pub fn contains_support_of(&self, other: &MovingGrid) -> bool {
        let tol = NODE_SNAP * self.h.max(other.h);
        self.left_end() <= other.left_end() + tol && self.right_end() >= other.right_end() - tol
    }
}

/// Nodal values of a nonnegative piecewise-linear function on a [`MovingGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    grid: MovingGrid,
    values: Vec<f64>,
}

impl NodalField {
    pub fn new(grid: MovingGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(SchemeError::LengthMismatch {
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(SchemeError::InvalidValue { index, value });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: MovingGrid) -> Self {
        let values = vec![0.0; grid.node_count()];
        Self { grid, values }
    }

    /// Lagrange interpolate of `f` (negative samples are clamped to zero).
    pub fn from_fn(grid: MovingGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().map(|x| f(x).max(0.0)).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &MovingGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, &v| acc.max(v))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Value of the piecewise-linear function at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let g = &self.grid;
        let (left, right) = (g.left_end(), g.right_end());
        if x <= left || x >= right {
            return 0.0;
        }
        let n = self.values.len();
        let first = g.node_x(0);
        let last = g.node_x(n - 1);
        if x < first {
            return self.values[0] * (x - left) / g.h_minus;
        }
        if x > last {
            return self.values[n - 1] * (right - x) / g.h_plus;
        }
        let pos = (x - first) / g.h;
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            return self.values[(nearest as usize).min(n - 1)];
        }
        let j = (pos.floor() as usize).min(n.saturating_sub(2));
        let t = pos - j as f64;
        (1.0 - t) * self.values[j] + t * self.values[(j + 1).min(n - 1)]
    }

    /// Breakpoints of the function: both support endpoints and every node.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = Vec::with_capacity(self.values.len() + 2);
        pts.push(self.grid.left_end());
        pts.extend(self.grid.nodes());
        pts.push(self.grid.right_end());
        pts
    }
}

/// Lagrange interpolate of `field` in the space defined by `target`.
pub fn interpolate(field: &NodalField, target: &MovingGrid) -> Result<NodalField> {
    if !target.contains_support_of(field.grid()) {
        return Err(SchemeError::SupportNotContained {
            source_left: field.grid().left_end(),
            source_right: field.grid().right_end(),
            target_left: target.left_end(),
            target_right: target.right_end(),
        });
    }
    if field.grid() == target {
        return Ok(field.clone());
    }
    let values = target.nodes().map(|x| field.eval(x)).collect();
    NodalField::new(target.clone(), values)
}

/// Piecewise-constant derivative of a [`NodalField`], one slope per interval
/// (left end interval first).
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeField {
    grid: MovingGrid,
    slopes: Vec<f64>,
}

impl SlopeField {
    pub(crate) fn new(grid: MovingGrid, slopes: Vec<f64>) -> Self {
        debug_assert_eq!(slopes.len(), grid.node_count() + 1);
        Self { grid, slopes }
    }

    pub fn grid(&self) -> &MovingGrid {
        &self.grid
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn left_end(&self) -> f64 {
        self.slopes[0]
    }

    pub fn right_end(&self) -> f64 {
        self.slopes[self.slopes.len() - 1]
    }

    pub fn sup_norm(&self) -> f64 {
        self.slopes.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `L1` norm of the derivative, i.e. the total variation of the field.
    pub fn l1_norm(&self) -> f64 {
        self.slopes
            .iter()
            .zip(self.grid.interval_lengths())
            .map(|(v, len)| v.abs() * len)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_grid_exact_division() {
        let g = MovingGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.n_plus(), 4);
        assert_eq!(g.h_plus(), 0.25);
        assert_eq!(g.node_count(), 7);

        let g = MovingGrid::uniform(2.5, 5).unwrap();
        assert_eq!(g.h(), 0.5);
        assert_eq!(g.h_plus(), 0.5);
    }

    #[test]
    fn smallest_grid_has_single_node_at_origin() {
        let g = MovingGrid::uniform(1.0, 1).unwrap();
        assert_eq!(g.h(), 1.0);
        assert_eq!(g.nodes().collect::<Vec<_>>(), vec![0.0]);
        assert_eq!(g.interval_lengths(), vec![1.0, 1.0]);
    }

    #[test]
    fn initial_grid_rejects_bad_input() {
        assert!(MovingGrid::uniform(1.0, 0).is_err());
        assert!(MovingGrid::uniform(0.0, 3).is_err());
        assert!(MovingGrid::uniform(-1.0, 3).is_err());
    }

    #[test]
    fn regrid_fractional_support_keeps_node_count() {
        let g = MovingGrid::uniform(1.0, 1).unwrap();
        let (g2, added) = g.regrid(1.0, 1.5).unwrap();
        assert_eq!(g2.n_plus(), 1);
        assert_eq!(g2.h_plus(), 1.5);
        assert_eq!(added, NewNodes::default());
    }

    #[test]
    fn regrid_exact_multiple_adds_node() {
        let g = MovingGrid::uniform(1.0, 1).unwrap();
        let (g2, added) = g.regrid(1.0, 2.0).unwrap();
        assert_eq!(g2.n_plus(), 2);
        assert_eq!(g2.h_plus(), 1.0);
        assert_eq!(added.right, 1);
        assert_eq!(added.left, 0);
        assert_eq!(g2.node_x(1), 1.0);
    }

    #[test]
    fn regrid_snaps_roundoff_below_a_multiple() {
        let g = MovingGrid::uniform(1.0, 1).unwrap();
        let (g2, added) = g.regrid(1.0, 2.0 - 1e-15).unwrap();
        assert_eq!(added.right, 1);
        assert!(g2.satisfies_end_bounds());
    }

    #[test]
    fn regrid_without_motion_is_identity() {
        let g = MovingGrid::uniform(1.3, 7).unwrap();
        let (g2, added) = g.regrid(g.s_minus(), g.s_plus()).unwrap();
        assert_eq!(g, g2);
        assert_eq!(added, NewNodes::default());
    }

    #[test]
    fn regrid_rejects_shrinking_support() {
        let g = MovingGrid::uniform(1.0, 4).unwrap();
        assert!(matches!(
            g.regrid(0.9, 1.0),
            Err(SchemeError::SupportShrink { side: "left", .. })
        ));
    }

    #[test]
    fn eval_is_exact_at_nodes_and_zero_outside() {
        let g = MovingGrid::uniform(1.0, 10).unwrap();
        let f = NodalField::from_fn(g.clone(), |x| 1.0 - x * x).unwrap();
        for (k, x) in g.nodes().enumerate() {
            assert_eq!(f.eval(x), f.values()[k]);
        }
        assert_eq!(f.eval(-1.0), 0.0);
        assert_eq!(f.eval(1.5), 0.0);
    }

    #[test]
    fn interpolate_identity_and_zero() {
        let g = MovingGrid::uniform(1.0, 5).unwrap();
        let f = NodalField::from_fn(g.clone(), |x| 1.0 - x.abs()).unwrap();
        assert_eq!(interpolate(&f, &g).unwrap(), f);
        let z = NodalField::zeros(g.clone());
        let (big, _) = g.regrid(1.7, 2.2).unwrap();
        assert!(interpolate(&z, &big).unwrap().is_zero());
    }

    #[test]
    fn interpolate_hat_onto_wider_support() {
        // Hat with peak 1 at 0 on [-1, 1] sampled on [-1.5, 1.5] with h = 1.
        let g = MovingGrid::uniform(1.0, 1).unwrap();
        let hat = NodalField::new(g.clone(), vec![1.0]).unwrap();
        let (target, _) = g.regrid(1.5, 1.5).unwrap();
        let out = interpolate(&hat, &target).unwrap();
        assert_eq!(out.values(), &[1.0]);
        // The end interval is now 1.5 wide, so the interpolant is flatter than the source.
        assert!((out.eval(0.5) - 2.0 / 3.0).abs() < 1e-15);

        // A wider target with nodes at ±1 sees the zero tails of the hat.
        let (target, _) = g.regrid(2.0, 2.0).unwrap();
        let out = interpolate(&hat, &target).unwrap();
        assert_eq!(out.values(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn interpolate_rejects_smaller_target() {
        let g = MovingGrid::uniform(1.0, 4).unwrap();
        let f = NodalField::zeros(g.clone());
        let small = MovingGrid::uniform(0.5, 2).unwrap();
        assert!(interpolate(&f, &small).is_err());
    }

    #[test]
    fn nodal_field_rejects_negative_values() {
        let g = MovingGrid::uniform(1.0, 2).unwrap();
        assert!(matches!(
            NodalField::new(g, vec![0.0, -1.0, 0.0]),
            Err(SchemeError::InvalidValue { index: 1, .. })
        ));
    }
}
