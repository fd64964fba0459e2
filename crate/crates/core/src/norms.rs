//! Weighted `L_q` norms on a finite space grid, mixed norms over a discrete
//! compensator, and the three atomic predictable norms.
//!
//! Everything here works on finite grids: the measure space `(X, n)` is a
//! [`SpaceGrid`] of weighted points and the compensator `ν` is a [`NuGrid`]
//! of weighted cells of `ℝ₊ × Z`. An [`Integrand`] is a deterministic field
//! `g(cell, x)` stored cell-major.
//!
//! All sums go through [`pairwise_sum_by`], and every `p`-norm is computed
//! after dividing by the largest magnitude, so the results are exactly
//! homogeneous under power-of-two rescaling and never overflow for large
//! exponents.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormError {
    #[error("exponent must lie in {range}, got {value}")]
    InvalidExponent { value: f64, range: &'static str },

    #[error("non-finite entry in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

pub type Result<T> = std::result::Result<T, NormError>;

const LEAF: usize = 8;

/// Sums `f(0) + ... + f(n-1)` along a fixed binary tree.
///
/// The tree shape depends only on `n`, so the result is reproducible
/// regardless of who calls it or how the inputs were produced.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    fn range<F: Fn(usize) -> f64>(f: &F, lo: usize, hi: usize) -> f64 {
        if hi - lo <= LEAF {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            s
        } else {
            let mid = lo + (hi - lo) / 2;
            range(f, lo, mid) + range(f, mid, hi)
        }
    }
    range(&f, 0, n)
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise_sum_by(xs.len(), |i| xs[i])
}

/// Checks `q ≥ 1` and finite.
pub fn check_exponent(q: f64) -> Result<()> {
    if q.is_finite() && q >= 1.0 {
        Ok(())
    } else {
        Err(NormError::InvalidExponent {
            value: q,
            range: "[1, ∞)",
        })
    }
}

/// Checks `q ∈ (1, ∞)`, the range of the maximal inequalities.
pub fn check_open_exponent(q: f64) -> Result<()> {
    if q.is_finite() && q > 1.0 {
        Ok(())
    } else {
        Err(NormError::InvalidExponent {
            value: q,
            range: "(1, ∞)",
        })
    }
}

fn check_finite(what: &'static str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(NormError::NonFinite { what, index }),
        None => Ok(()),
    }
}

/// `(Σ_i w_i |v_i|^p)^{1/p}` with nonnegative weights; `p = ∞` gives the
/// maximum of `|v_i|` over entries with positive weight.
///
/// No validation: callers guarantee `p ≥ 1`, finite entries and equal lengths.
pub(crate) fn weighted_lp(v: &[f64], w: &[f64], p: f64) -> f64 {
    debug_assert_eq!(v.len(), w.len());
    let mut m = 0.0f64;
    for (x, &wi) in v.iter().zip(w) {
        if wi > 0.0 {
            m = m.max(x.abs());
        }
    }
    if m == 0.0 || p == f64::INFINITY {
        return m;
    }
    // zero-weight entries may exceed m and must not turn into 0·∞
    let s = if p == 2.0 {
        pairwise_sum_by(v.len(), |i| {
            let r = v[i] / m;
            if w[i] > 0.0 { w[i] * r * r } else { 0.0 }
        })
    } else if p == 1.0 {
        pairwise_sum_by(v.len(), |i| if w[i] > 0.0 { w[i] * (v[i] / m).abs() } else { 0.0 })
    } else {
        pairwise_sum_by(v.len(), |i| {
            if w[i] > 0.0 { w[i] * (v[i].abs() / m).powf(p) } else { 0.0 }
        })
    };
    if p == 2.0 {
        m * s.sqrt()
    } else if p == 1.0 {
        m * s
    } else {
        m * s.powf(1.0 / p)
    }
}

/// Discretization of the measure space `(X, A, n)`: labelled points with
/// strictly positive weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    labels: Vec<String>,
    weights: Vec<f64>,
}

impl SpaceGrid {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let labels = (0..weights.len()).map(|i| format!("x{i}")).collect();
        Self::with_labels(labels, weights)
    }

    pub fn with_labels(labels: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(NormError::InvalidGrid(
                "space grid needs at least one point".into(),
            ));
        }
        if labels.len() != weights.len() {
            return Err(NormError::DimensionMismatch {
                what: "space grid labels",
                expected: weights.len(),
                got: labels.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(NormError::InvalidGrid(format!(
                "point weight {i} must be positive and finite, got {}",
                weights[i]
            )));
        }
        Ok(Self { labels, weights })
    }

    /// `n` points of unit weight.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// Index of a compensator cell: a time cell and a mark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub time_cell: usize,
    pub mark: usize,
}

/// The compensator `ν` as a discrete measure on `ℝ₊ × Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuGrid {
    cells: Vec<CellId>,
    weights: Vec<f64>,
}

impl NuGrid {
    pub fn new(cells: Vec<CellId>, weights: Vec<f64>) -> Result<Self> {
        if cells.len() != weights.len() {
            return Err(NormError::DimensionMismatch {
                what: "compensator cells",
                expected: weights.len(),
                got: cells.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(NormError::InvalidGrid(format!(
                "compensator mass {i} must be nonnegative and finite, got {}",
                weights[i]
            )));
        }
        if !pairwise_sum(&weights).is_finite() {
            return Err(NormError::InvalidGrid("total compensator mass overflows".into()));
        }
        Ok(Self { cells, weights })
    }

    /// Cells `(i, 0)` with the given masses.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let cells = (0..weights.len())
            .map(|time_cell| CellId { time_cell, mark: 0 })
            .collect();
        Self::new(cells, weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cells(&self) -> &[CellId] {
        &self.cells
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.weights)
    }
}

/// A deterministic predictable field `g(cell, x)`, stored cell-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Integrand {
    n_cells: usize,
    n_points: usize,
    values: Vec<f64>,
}

impl Integrand {
    pub fn new(n_cells: usize, n_points: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_cells * n_points {
            return Err(NormError::DimensionMismatch {
                what: "integrand values",
                expected: n_cells * n_points,
                got: values.len(),
            });
        }
        check_finite("integrand", &values)?;
        Ok(Self {
            n_cells,
            n_points,
            values,
        })
    }

    pub fn zeros(n_cells: usize, n_points: usize) -> Self {
        Self {
            n_cells,
            n_points,
            values: vec![0.0; n_cells * n_points],
        }
    }

    pub fn from_fn(n_cells: usize, n_points: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(n_cells * n_points);
        for c in 0..n_cells {
            for x in 0..n_points {
                values.push(f(c, x));
            }
        }
        Self::new(n_cells, n_points, values)
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cell(&self, c: usize) -> &[f64] {
        &self.values[c * self.n_points..(c + 1) * self.n_points]
    }

    pub fn get(&self, c: usize, x: usize) -> f64 {
        self.values[c * self.n_points + x]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            n_cells: self.n_cells,
            n_points: self.n_points,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn add(&self, other: &Integrand) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            n_cells: self.n_cells,
            n_points: self.n_points,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    fn check_same_shape(&self, other: &Integrand) -> Result<()> {
        if self.n_cells != other.n_cells || self.n_points != other.n_points {
            return Err(NormError::DimensionMismatch {
                what: "integrand shape",
                expected: self.values.len(),
                got: other.values.len(),
            });
        }
        Ok(())
    }

    /// Fails unless this field lives on `nu × grid`.
    pub fn check_domain(&self, nu: &NuGrid, grid: &SpaceGrid) -> Result<()> {
        if self.n_cells != nu.len() {
            return Err(NormError::DimensionMismatch {
                what: "integrand cells vs compensator",
                expected: nu.len(),
                got: self.n_cells,
            });
        }
        if self.n_points != grid.len() {
            return Err(NormError::DimensionMismatch {
                what: "integrand points vs space grid",
                expected: grid.len(),
                got: self.n_points,
            });
        }
        Ok(())
    }
}

/// `‖v‖_{L_q(X, n)} = (Σ_j |v_j|^q n_j)^{1/q}`.
pub fn lq_norm(v: &[f64], q: f64, grid: &SpaceGrid) -> Result<f64> {
    check_exponent(q)?;
    if v.len() != grid.len() {
        return Err(NormError::DimensionMismatch {
            what: "vector vs space grid",
            expected: grid.len(),
            got: v.len(),
        });
    }
    check_finite("vector", v)?;
    Ok(weighted_lp(v, grid.weights(), q))
}

/// Which index of a 2-D field carries the outer norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outer {
    Rows,
    Cols,
}

/// Iterated norm of a row-major `rows × cols` field: an inner norm over one
/// index followed by an outer norm over the other.
///
/// With `Outer::Rows` this is `(Σ_r w_r (Σ_c v_c |f_rc|^inner)^{outer/inner})^{1/outer}`.
/// Exponents may be `∞`; weights must be nonnegative.
pub fn mixed_norm(
    values: &[f64],
    rows: usize,
    cols: usize,
    row_weights: &[f64],
    col_weights: &[f64],
    outer: Outer,
    outer_exp: f64,
    inner_exp: f64,
) -> Result<f64> {
    for e in [outer_exp, inner_exp] {
        if !(e >= 1.0) {
            return Err(NormError::InvalidExponent {
                value: e,
                range: "[1, ∞]",
            });
        }
    }
    if values.len() != rows * cols || row_weights.len() != rows || col_weights.len() != cols {
        return Err(NormError::DimensionMismatch {
            what: "mixed-norm field",
            expected: rows * cols,
            got: values.len(),
        });
    }
    check_finite("field", values)?;
    Ok(mixed_norm_unchecked(
        values,
        rows,
        cols,
        row_weights,
        col_weights,
        outer,
        outer_exp,
        inner_exp,
    ))
}

pub(crate) fn mixed_norm_unchecked(
    values: &[f64],
    rows: usize,
    cols: usize,
    row_weights: &[f64],
    col_weights: &[f64],
    outer: Outer,
    outer_exp: f64,
    inner_exp: f64,
) -> f64 {
    match outer {
        Outer::Rows => {
            let inner: Vec<f64> = (0..rows)
                .map(|r| weighted_lp(&values[r * cols..(r + 1) * cols], col_weights, inner_exp))
                .collect();
            weighted_lp(&inner, row_weights, outer_exp)
        }
        Outer::Cols => {
            let mut column = vec![0.0; rows];
            let inner: Vec<f64> = (0..cols)
                .map(|c| {
                    for r in 0..rows {
                        column[r] = values[r * cols + c];
                    }
                    weighted_lp(&column, row_weights, inner_exp)
                })
                .collect();
            weighted_lp(&inner, col_weights, outer_exp)
        }
    }
}

/// The three atomic predictable norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AtomicNorm {
    /// `(∫ ‖g‖_{L_q}^p dν)^{1/p}`
    Lppq,
    /// `(∫ ‖g‖_{L_q}^q dν)^{1/q}`
    Lpqq,
    /// `‖(∫ |g|² dν)^{1/2}‖_{L_q}`
    Tilde,
}

impl AtomicNorm {
    pub const ALL: [AtomicNorm; 3] = [AtomicNorm::Lppq, AtomicNorm::Lpqq, AtomicNorm::Tilde];

    /// `(outer index, cell exponent, point exponent)` of the mixed norm this
    /// atom denotes for deterministic integrands.
    pub fn layout(self, p: f64, q: f64) -> (Outer, f64, f64) {
        match self {
            AtomicNorm::Lppq => (Outer::Rows, p, q),
            AtomicNorm::Lpqq => (Outer::Rows, q, q),
            AtomicNorm::Tilde => (Outer::Cols, 2.0, q),
        }
    }
}

impl fmt::Display for AtomicNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AtomicNorm::Lppq => "Lppq",
            AtomicNorm::Lpqq => "Lpqq",
            AtomicNorm::Tilde => "Tilde",
        })
    }
}

/// Evaluates one of the atomic norms of a deterministic integrand.
pub fn atomic_norm(
    g: &Integrand,
    which: AtomicNorm,
    p: f64,
    q: f64,
    nu: &NuGrid,
    grid: &SpaceGrid,
) -> Result<f64> {
    check_open_exponent(p)?;
    check_open_exponent(q)?;
    g.check_domain(nu, grid)?;
    let (outer, cell_exp, point_exp) = which.layout(p, q);
    Ok(cell_point_norm(g.values(), nu, grid, outer, cell_exp, point_exp))
}

/// Mixed norm over `cells × points` with the cell index weighted by `ν` and
/// the point index by `n`.
pub(crate) fn cell_point_norm(
    values: &[f64],
    nu: &NuGrid,
    grid: &SpaceGrid,
    outer: Outer,
    cell_exp: f64,
    point_exp: f64,
) -> f64 {
    let (outer_exp, inner_exp) = match outer {
        Outer::Rows => (cell_exp, point_exp),
        Outer::Cols => (point_exp, cell_exp),
    };
    mixed_norm_unchecked(
        values,
        nu.len(),
        grid.len(),
        nu.weights(),
        grid.weights(),
        outer,
        outer_exp,
        inner_exp,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn pythagorean_pair() {
        let grid = SpaceGrid::uniform(2).unwrap();
        assert_eq!(lq_norm(&[3.0, 4.0], 2.0, &grid).unwrap(), 5.0);
    }

    #[test]
    fn single_point_measure_gives_absolute_value() {
        let grid = SpaceGrid::uniform(1).unwrap();
        for q in [1.0, 1.5, 2.0, 3.7, 10.0] {
            assert!(rel(lq_norm(&[-2.5], q, &grid).unwrap(), 2.5) < 1e-15);
        }
    }

    #[test]
    fn weighted_cubic_norm_matches_direct_summation() {
        // Oracle: terms are exact in binary floating point (0.5, 8, 54), so
        // the cube root of 62.5 is the only rounding step.
        let grid = SpaceGrid::new(vec![0.5, 1.0, 2.0]).unwrap();
        let direct = (0.5f64 * 1.0 + 1.0 * 8.0 + 2.0 * 27.0).cbrt();
        let got = lq_norm(&[1.0, 2.0, 3.0], 3.0, &grid).unwrap();
        assert!(rel(got, direct) < 1e-12, "{got} vs {direct}");
    }

    #[test]
    fn exponent_below_one_is_rejected() {
        let grid = SpaceGrid::uniform(2).unwrap();
        assert!(matches!(
            lq_norm(&[1.0, 1.0], 0.5, &grid),
            Err(NormError::InvalidExponent { .. })
        ));
        assert!(lq_norm(&[1.0, 1.0], f64::NAN, &grid).is_err());
    }

    #[test]
    fn non_finite_entry_is_rejected() {
        let grid = SpaceGrid::uniform(2).unwrap();
        assert!(matches!(
            lq_norm(&[1.0, f64::INFINITY], 2.0, &grid),
            Err(NormError::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn grid_invariants() {
        assert!(SpaceGrid::new(vec![]).is_err());
        assert!(SpaceGrid::new(vec![1.0, 0.0]).is_err());
        assert!(SpaceGrid::new(vec![1.0, -1.0]).is_err());
        assert!(NuGrid::from_weights(vec![0.0, 1.0]).is_ok());
        assert!(NuGrid::from_weights(vec![-0.1]).is_err());
        assert!(NuGrid::from_weights(vec![f64::NAN]).is_err());
    }

    #[test]
    fn zero_integrand_has_zero_atomic_norms() {
        let nu = NuGrid::from_weights(vec![0.5, 1.5, 2.0]).unwrap();
        let grid = SpaceGrid::new(vec![1.0, 0.25]).unwrap();
        let g = Integrand::zeros(3, 2);
        for which in AtomicNorm::ALL {
            assert_eq!(atomic_norm(&g, which, 1.5, 3.0, &nu, &grid).unwrap(), 0.0);
        }
    }

    #[test]
    fn tilde_single_cell() {
        let nu = NuGrid::from_weights(vec![4.0]).unwrap();
        let grid = SpaceGrid::uniform(1).unwrap();
        let g = Integrand::new(1, 1, vec![1.0]).unwrap();
        let v = atomic_norm(&g, AtomicNorm::Tilde, 3.0, 2.0, &nu, &grid).unwrap();
        assert_eq!(v, 2.0);
    }

    #[test]
    fn atomic_norms_match_their_definitions() {
        let nu = NuGrid::from_weights(vec![0.5, 2.0]).unwrap();
        let grid = SpaceGrid::new(vec![1.0, 3.0]).unwrap();
        let g = Integrand::new(2, 2, vec![1.0, -2.0, 0.5, 4.0]).unwrap();
        let (p, q) = (1.5, 3.0);
        let slice = |c: usize| -> f64 {
            (1.0 * g.get(c, 0).abs().powf(q) + 3.0 * g.get(c, 1).abs().powf(q)).powf(1.0 / q)
        };
        let lppq = (0.5 * slice(0).powf(p) + 2.0 * slice(1).powf(p)).powf(1.0 / p);
        let lpqq = (0.5 * slice(0).powf(q) + 2.0 * slice(1).powf(q)).powf(1.0 / q);
        let s0 = (0.5 * 1.0f64 + 2.0 * 0.25).sqrt();
        let s1 = (0.5 * 4.0f64 + 2.0 * 16.0).sqrt();
        let tilde = (s0.powf(q) + 3.0 * s1.powf(q)).powf(1.0 / q);
        let got = |w| atomic_norm(&g, w, p, q, &nu, &grid).unwrap();
        assert!(rel(got(AtomicNorm::Lppq), lppq) < 1e-13);
        assert!(rel(got(AtomicNorm::Lpqq), lpqq) < 1e-13);
        assert!(rel(got(AtomicNorm::Tilde), tilde) < 1e-13);
    }

    #[test]
    fn atomic_norm_rejects_bad_inputs() {
        let nu = NuGrid::from_weights(vec![1.0]).unwrap();
        let grid = SpaceGrid::uniform(2).unwrap();
        let g = Integrand::zeros(1, 2);
        assert!(atomic_norm(&g, AtomicNorm::Lppq, 1.0, 2.0, &nu, &grid).is_err());
        assert!(atomic_norm(&g, AtomicNorm::Lppq, 2.0, f64::INFINITY, &nu, &grid).is_err());
        let wrong = Integrand::zeros(2, 2);
        assert!(matches!(
            atomic_norm(&wrong, AtomicNorm::Tilde, 2.0, 2.0, &nu, &grid),
            Err(NormError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn zero_mass_cells_are_ignored() {
        let nu = NuGrid::from_weights(vec![0.0, 1.0]).unwrap();
        let grid = SpaceGrid::uniform(1).unwrap();
        let g = Integrand::new(2, 1, vec![1e300, 2.0]).unwrap();
        for which in AtomicNorm::ALL {
            assert_eq!(atomic_norm(&g, which, 3.0, 1.5, &nu, &grid).unwrap(), 2.0);
        }
    }

    #[test]
    fn power_of_two_rescaling_is_exact() {
        let grid = SpaceGrid::new(vec![0.3, 1.7, 2.2]).unwrap();
        let v = [0.123, -4.56, 7.89];
        let w: Vec<f64> = v.iter().map(|x| x * 8.0).collect();
        for q in [1.0, 1.3, 2.0, 3.1] {
            assert_eq!(lq_norm(&w, q, &grid).unwrap(), 8.0 * lq_norm(&v, q, &grid).unwrap());
        }
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_input() {
        let xs: Vec<f64> = (0..37).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 666.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
