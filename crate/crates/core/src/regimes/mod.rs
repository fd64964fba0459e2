//! The six-regime predictable norm `I_{p,q}`: which combination of the
//! three atomic norms applies for a given `(p, q)`, and its evaluation.

mod dual;
mod expr;
mod solver;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dual::{dual_norm_bruteforce, MAX_BRUTEFORCE_DIM};
pub use expr::{conjugate, pairing, Domain, MixedAtom, NormExpr};
pub use solver::{sum_norm, OptimizerConfig, SumNormOutcome};

use crate::norms::{check_open_exponent, AtomicNorm, Integrand, NormError, NuGrid, SpaceGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegimeError {
    #[error(transparent)]
    Norm(#[from] NormError),

    #[error("sum norm did not converge after {iterations} iterations (best upper bound {best_upper}, lower bound {lower_bound:?})")]
    NonConvergence {
        best_upper: f64,
        lower_bound: Option<f64>,
        iterations: usize,
    },

    #[error("unsupported norm expression: {0}")]
    Unsupported(String),

    #[error("sum norm needs at least one part")]
    EmptyParts,

    #[error("brute force limited to {max} coordinates, got {dim}")]
    TooLarge { dim: usize, max: usize },
}

pub type Result<T> = std::result::Result<T, RegimeError>;

/// Combination of atomic norms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formula {
    Leaf(AtomicNorm),
    Sum(Vec<Formula>),
    Intersect(Vec<Formula>),
}

impl Formula {
    fn to_expr(&self, p: f64, q: f64) -> NormExpr {
        match self {
            Formula::Leaf(a) => {
                let (outer, ce, pe) = a.layout(p, q);
                NormExpr::Atom(MixedAtom {
                    outer,
                    cell_exp: ce,
                    point_exp: pe,
                })
            }
            Formula::Sum(ch) => NormExpr::Sum(ch.iter().map(|c| c.to_expr(p, q)).collect()),
            Formula::Intersect(ch) => {
                NormExpr::Intersect(ch.iter().map(|c| c.to_expr(p, q)).collect())
            }
        }
    }

    fn leaves(&self, out: &mut Vec<AtomicNorm>) {
        match self {
            Formula::Leaf(a) => out.push(*a),
            Formula::Sum(ch) | Formula::Intersect(ch) => ch.iter().for_each(|c| c.leaves(out)),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (name, ch) = match self {
            Formula::Leaf(a) => return write!(f, "{a}"),
            Formula::Sum(ch) => ("Sum", ch),
            Formula::Intersect(ch) => ("Intersect", ch),
        };
        write!(f, "{name}(")?;
        for (i, c) in ch.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

/// The six branches, numbered in dispatch order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RegimeCase {
    /// `1 < p ≤ q ≤ 2`
    One,
    /// `1 < q ≤ p ≤ 2`
    Two,
    /// `1 < q < 2 ≤ p`
    Three,
    /// `1 < p < 2 ≤ q`
    Four,
    /// `2 ≤ p ≤ q`
    Five,
    /// `2 ≤ q ≤ p`
    Six,
}

impl RegimeCase {
    pub fn number(self) -> u8 {
        self as u8 + 1
    }
}

impl fmt::Display for RegimeCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeFormula {
    pub case: RegimeCase,
    pub p: f64,
    pub q: f64,
    pub tree: Formula,
}

impl RegimeFormula {
    pub fn to_norm_expr(&self) -> NormExpr {
        self.tree.to_expr(self.p, self.q)
    }

    /// Atomic norms in the order they appear in the tree.
    pub fn leaves(&self) -> Vec<AtomicNorm> {
        let mut out = Vec::new();
        self.tree.leaves(&mut out);
        out
    }
}

/// Picks the first branch whose condition holds.
pub fn regime_select(p: f64, q: f64) -> Result<RegimeFormula> {
    check_open_exponent(p)?;
    check_open_exponent(q)?;
    use AtomicNorm::{Lppq, Lpqq, Tilde};
    use Formula::{Intersect, Leaf, Sum};
    let (case, tree) = if p <= q && q <= 2.0 {
        (RegimeCase::One, Sum(vec![Leaf(Lppq), Leaf(Lpqq), Leaf(Tilde)]))
    } else if q <= p && p <= 2.0 {
        (
            RegimeCase::Two,
            Sum(vec![Intersect(vec![Leaf(Lppq), Leaf(Lpqq)]), Leaf(Tilde)]),
        )
    } else if q < 2.0 && 2.0 <= p {
        (
            RegimeCase::Three,
            Intersect(vec![Leaf(Lppq), Sum(vec![Leaf(Lpqq), Leaf(Tilde)])]),
        )
    } else if p < 2.0 && 2.0 <= q {
        (
            RegimeCase::Four,
            Sum(vec![Leaf(Lppq), Intersect(vec![Leaf(Lpqq), Leaf(Tilde)])]),
        )
    } else if p <= q {
        (
            RegimeCase::Five,
            Intersect(vec![Sum(vec![Leaf(Lppq), Leaf(Lpqq)]), Leaf(Tilde)]),
        )
    } else {
        (
            RegimeCase::Six,
            Intersect(vec![Leaf(Lppq), Leaf(Lpqq), Leaf(Tilde)]),
        )
    };
    Ok(RegimeFormula { case, p, q, tree })
}

/// `‖g‖_{I_{p,q}}` with the default optimizer settings.
pub fn ipq_norm(g: &Integrand, p: f64, q: f64, nu: &NuGrid, grid: &SpaceGrid) -> Result<f64> {
    ipq_norm_with(g, p, q, nu, grid, &OptimizerConfig::default())
}

pub fn ipq_norm_with(
    g: &Integrand,
    p: f64,
    q: f64,
    nu: &NuGrid,
    grid: &SpaceGrid,
    cfg: &OptimizerConfig,
) -> Result<f64> {
    let formula = regime_select(p, q)?;
    g.check_domain(nu, grid)?;
    formula
        .to_norm_expr()
        .eval_with(g.values(), Domain::new(nu, grid), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::atomic_norm;

    #[test]
    fn branch_shapes() {
        let f = regime_select(1.5, 3.0).unwrap();
        assert_eq!(f.case, RegimeCase::Four);
        assert_eq!(f.tree.to_string(), "Sum(Lppq, Intersect(Lpqq, Tilde))");
        let f = regime_select(3.0, 1.5).unwrap();
        assert_eq!(f.case, RegimeCase::Three);
        assert_eq!(f.tree.to_string(), "Intersect(Lppq, Sum(Lpqq, Tilde))");
        assert_eq!(regime_select(2.0, 2.0).unwrap().case, RegimeCase::One);
        assert_eq!(regime_select(1.25, 1.5).unwrap().case, RegimeCase::One);
        assert_eq!(regime_select(1.5, 1.25).unwrap().case, RegimeCase::Two);
        assert_eq!(regime_select(2.0, 1.5).unwrap().case, RegimeCase::Two);
        assert_eq!(regime_select(3.0, 4.0).unwrap().case, RegimeCase::Five);
        assert_eq!(regime_select(4.0, 3.0).unwrap().case, RegimeCase::Six);
        assert_eq!(regime_select(2.0, 3.0).unwrap().case, RegimeCase::Five);
        assert_eq!(regime_select(3.0, 2.0).unwrap().case, RegimeCase::Six);
    }

    #[test]
    fn every_branch_has_three_distinct_leaves() {
        for p in [1.25, 1.5, 2.0, 3.0, 4.0] {
            for q in [1.25, 1.5, 2.0, 3.0, 4.0] {
                let mut leaves = regime_select(p, q).unwrap().leaves();
                leaves.sort();
                assert_eq!(leaves, AtomicNorm::ALL.to_vec());
            }
        }
    }

    #[test]
    fn rejects_exponents_outside_open_range() {
        assert!(regime_select(1.0, 2.0).is_err());
        assert!(regime_select(2.0, f64::INFINITY).is_err());
        assert!(regime_select(f64::NAN, 2.0).is_err());
    }

    #[test]
    fn zero_integrand() {
        let nu = NuGrid::from_weights(vec![1.0, 2.0]).unwrap();
        let grid = SpaceGrid::uniform(2).unwrap();
        let g = Integrand::zeros(2, 2);
        for p in [1.25, 2.0, 4.0] {
            for q in [1.25, 2.0, 4.0] {
                assert_eq!(ipq_norm(&g, p, q, &nu, &grid).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn hilbert_point_collapses_to_single_atom() {
        let nu = NuGrid::from_weights(vec![0.5, 2.0, 1.0]).unwrap();
        let grid = SpaceGrid::new(vec![1.0, 0.3]).unwrap();
        let g = Integrand::from_fn(3, 2, |c, x| (c as f64 + 1.0) * if x == 0 { 1.0 } else { -2.0 }).unwrap();
        let direct = atomic_norm(&g, AtomicNorm::Lpqq, 2.0, 2.0, &nu, &grid).unwrap();
        let v = ipq_norm(&g, 2.0, 2.0, &nu, &grid).unwrap();
        assert!((v - direct).abs() <= 1e-6 * direct, "{v} vs {direct}");
    }

    #[test]
    fn one_cell_case_six_closed_form() {
        let nu = NuGrid::from_weights(vec![1.0]).unwrap();
        let grid = SpaceGrid::new(vec![1.0, 0.5, 2.0]).unwrap();
        let vals = [1.0, -3.0, 0.5];
        let g = Integrand::new(1, 3, vals.to_vec()).unwrap();
        let l3: f64 = vals
            .iter()
            .zip(grid.weights())
            .map(|(v, w)| v.abs().powi(3) * w)
            .sum::<f64>()
            .cbrt();
        // one cell of unit mass: Tilde is ‖|g|‖_{L_3} as well
        let v = ipq_norm(&g, 3.0, 3.0, &nu, &grid).unwrap();
        assert_eq!(regime_select(3.0, 3.0).unwrap().case, RegimeCase::Five);
        let v6 = ipq_norm(&g, 3.5, 3.0, &nu, &grid).unwrap();
        assert!((v6 - l3).abs() <= 1e-12 * l3);
        assert!((v - l3).abs() <= 1e-6 * l3);
    }
}
