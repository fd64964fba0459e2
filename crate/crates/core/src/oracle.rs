//! Exact references: the left-hand side for small Bernoulli models by
//! enumerating every outcome, and sum norms by lattice search.

use thiserror::Error;

use crate::norms::{check_open_exponent, lq_norm, Integrand, NormError, SpaceGrid};
use crate::random_measure::BernoulliModel;
use crate::regimes::{Domain, NormExpr, RegimeError};

/// Enumeration covers `2^MAX_ENUM_CELLS` outcomes at most.
pub const MAX_ENUM_CELLS: usize = 16;

/// Lattice search handles at most this many free reals.
pub const MAX_SEARCH_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("enumeration limited to {max} cells, model has {cells}")]
    TooManyCells { cells: usize, max: usize },

    #[error("lattice search limited to {max} free reals, instance has {dim}")]
    TooLarge { dim: usize, max: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Norm(#[from] NormError),

    #[error(transparent)]
    Regime(#[from] RegimeError),
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// `(𝔼 sup_t ‖M_t‖_{L_q}^p)^{1/p}` for a Bernoulli-cell model, exactly.
///
/// Every outcome `ξ ∈ {0,1}^cells` is visited; cells sharing a time jump
/// together by `Σ (ξ_c − p_c) g_c`.
pub fn enumerate_lhs(
    g: &Integrand,
    model: &BernoulliModel,
    p: f64,
    q: f64,
    grid: &SpaceGrid,
) -> Result<f64> {
    check_open_exponent(p)?;
    check_open_exponent(q)?;
    let cells = model.cells();
    if cells.len() > MAX_ENUM_CELLS {
        return Err(OracleError::TooManyCells {
            cells: cells.len(),
            max: MAX_ENUM_CELLS,
        });
    }
    if g.n_cells() != cells.len() || g.n_points() != grid.len() {
        return Err(OracleError::Invalid(format!(
            "integrand is {}×{}, model and grid need {}×{}",
            g.n_cells(),
            g.n_points(),
            cells.len(),
            grid.len()
        )));
    }
    // groups of cells with equal time, in time order
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        match groups.last_mut() {
            Some(grp) if cells[grp[0]].time == cell.time => grp.push(c),
            _ => groups.push(vec![c]),
        }
    }

    let np = grid.len();
    let mut total = Neumaier::default();
    let mut state = vec![0.0; np];
    for mask in 0u32..(1u32 << cells.len()) {
        let mut weight = 1.0;
        for (c, cell) in cells.iter().enumerate() {
            weight *= if mask >> c & 1 == 1 { cell.prob } else { 1.0 - cell.prob };
        }
        if weight == 0.0 {
            continue;
        }
        state.iter_mut().for_each(|v| *v = 0.0);
        let mut sup = 0.0f64;
        for grp in &groups {
            for &c in grp {
                let xi = (mask >> c & 1) as f64;
                let coef = xi - cells[c].prob;
                for (s, v) in state.iter_mut().zip(g.cell(c)) {
                    *s += coef * v;
                }
            }
            sup = sup.max(lq_norm(&state, q, grid)?);
        }
        total.add(weight * sup.powf(p));
    }
    Ok(total.sum().max(0.0).powf(1.0 / p))
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Smallest `Σ_i N_i(h_i)` over splits on a lattice of step `resolution`.
///
/// All our norms are monotone in `|h|`, so a split can be replaced by
/// `h_i = λ_i g` coordinatewise with `λ ≥ 0`, `Σ_i λ_i = 1` without
/// increasing the objective. The search runs over those fractions: an
/// exhaustive coarse lattice first, then exhaustive windows around the
/// incumbent at successively finer steps down to `resolution`.
pub fn grid_search_sum_norm(
    g: &[f64],
    parts: &[NormExpr],
    dom: Domain<'_>,
    resolution: f64,
) -> Result<f64> {
    if parts.is_empty() {
        return Err(OracleError::Invalid("no parts".into()));
    }
    if !(resolution > 0.0 && resolution < 1.0) {
        return Err(OracleError::Invalid(format!(
            "resolution must lie in (0, 1), got {resolution}"
        )));
    }
    if g.len() != dom.len() {
        return Err(OracleError::Invalid(format!(
            "field has {} entries, domain {}",
            g.len(),
            dom.len()
        )));
    }
    let w = dom.pairing_weights();
    let free: Vec<usize> = (0..g.len()).filter(|&j| w[j] > 0.0 && g[j] != 0.0).collect();
    let k = parts.len();
    let dim = (k - 1) * free.len();
    if dim > MAX_SEARCH_DIM {
        return Err(OracleError::TooLarge {
            dim,
            max: MAX_SEARCH_DIM,
        });
    }
    let objective = |lam: &[f64]| -> Result<f64> {
        // lam[i * free + f] is part i's share of coordinate free[f]
        let mut total = 0.0;
        let mut rest = vec![1.0; free.len()];
        for (i, part) in parts.iter().enumerate() {
            let mut h = vec![0.0; g.len()];
            for (f, &j) in free.iter().enumerate() {
                let share = if i + 1 < k {
                    let s = lam[i * free.len() + f];
                    rest[f] -= s;
                    s
                } else {
                    rest[f]
                };
                h[j] = share * g[j];
            }
            total += part.eval(&h, dom)?;
        }
        Ok(total)
    };
    let feasible = |lam: &[f64]| -> bool {
        (0..free.len()).all(|f| {
            let used: f64 = (0..k - 1).map(|i| lam[i * free.len() + f]).sum();
            used <= 1.0 + 1e-12 && (0..k - 1).all(|i| lam[i * free.len() + f] >= -1e-12)
        })
    };

    if dim == 0 {
        // one part, or nothing to split: every coordinate goes to the last part
        let mut best = f64::INFINITY;
        for part in parts {
            best = best.min(part.eval(g, dom)?);
        }
        return Ok(best);
    }

    let coarse = 64usize;
    let mut step = 1.0 / coarse as f64;
    let mut best = f64::INFINITY;
    let mut best_lam = vec![0.0; dim];
    let visit = |centre: &[f64], half: i64, step: f64, best: &mut f64, best_lam: &mut Vec<f64>| -> Result<()> {
        let side = (2 * half + 1) as usize;
        let mut lam = vec![0.0; dim];
        for idx in 0..side.pow(dim as u32) {
            let mut r = idx;
            for (d, l) in lam.iter_mut().enumerate() {
                let o = (r % side) as i64 - half;
                r /= side;
                *l = (centre[d] + o as f64 * step).clamp(0.0, 1.0);
            }
            if !feasible(&lam) {
                continue;
            }
            let v = objective(&lam)?;
            if v < *best {
                *best = v;
                best_lam.clone_from(&lam);
            }
        }
        Ok(())
    };
    let half_coarse = coarse as i64 / 2;
    visit(&vec![0.5; dim], half_coarse, step, &mut best, &mut best_lam)?;
    while step > resolution {
        step = (step / 4.0).max(resolution);
        let centre = best_lam.clone();
        visit(&centre, 8, step, &mut best, &mut best_lam)?;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::{NuGrid, Outer};
    use crate::random_measure::BernoulliCell;

    fn one_cell() -> BernoulliModel {
        BernoulliModel::new(
            1.0,
            vec![BernoulliCell {
                time: 0.5,
                prob: 0.5,
                mark: 0,
            }],
        )
        .unwrap()
    }

    #[test]
    fn single_fair_cell() {
        let grid = SpaceGrid::uniform(1).unwrap();
        let g = Integrand::new(1, 1, vec![1.0]).unwrap();
        for p in [1.5, 2.0, 3.0] {
            for q in [1.5, 4.0] {
                let v = enumerate_lhs(&g, &one_cell(), p, q, &grid).unwrap();
                assert!((v - 0.5).abs() < 1e-15, "{p} {q} {v}");
            }
        }
    }

    #[test]
    fn zero_integrand_is_zero() {
        let grid = SpaceGrid::uniform(2).unwrap();
        let g = Integrand::zeros(1, 2);
        assert_eq!(enumerate_lhs(&g, &one_cell(), 2.0, 2.0, &grid).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_cells_reduce_to_one_path() {
        let cells = vec![
            BernoulliCell { time: 0.2, prob: 1.0, mark: 0 },
            BernoulliCell { time: 0.4, prob: 0.0, mark: 0 },
        ];
        let model = BernoulliModel::new(1.0, cells).unwrap();
        let grid = SpaceGrid::uniform(1).unwrap();
        let g = Integrand::new(2, 1, vec![3.0, 5.0]).unwrap();
        // jumps (1 − 1)·3 = 0 and (0 − 0)·5 = 0
        assert_eq!(enumerate_lhs(&g, &model, 2.0, 2.0, &grid).unwrap(), 0.0);
    }

    #[test]
    fn cap_is_enforced() {
        let cells = (1..=17)
            .map(|i| BernoulliCell { time: i as f64 / 17.0, prob: 0.5, mark: 0 })
            .collect();
        let model = BernoulliModel::new(1.0, cells).unwrap();
        let grid = SpaceGrid::uniform(1).unwrap();
        let g = Integrand::zeros(17, 1);
        assert!(matches!(
            enumerate_lhs(&g, &model, 2.0, 2.0, &grid),
            Err(OracleError::TooManyCells { cells: 17, max: 16 })
        ));
    }

    #[test]
    fn lattice_search_on_l1_l2_instance() {
        let nu = NuGrid::from_weights(vec![1.0, 1.0]).unwrap();
        let grid = SpaceGrid::uniform(1).unwrap();
        let parts = vec![
            NormExpr::atom(Outer::Rows, 1.0, 1.0).unwrap(),
            NormExpr::atom(Outer::Rows, 2.0, 2.0).unwrap().scaled(2.0),
        ];
        let v = grid_search_sum_norm(&[1.0, 1.0], &parts, Domain::new(&nu, &grid), 1e-3).unwrap();
        assert!((v - 2.0).abs() < 1e-3);
        let z = grid_search_sum_norm(&[0.0, 0.0], &parts, Domain::new(&nu, &grid), 1e-3).unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn lattice_search_same_norm_twice() {
        let nu = NuGrid::from_weights(vec![1.0, 0.5]).unwrap();
        let grid = SpaceGrid::uniform(1).unwrap();
        let n = NormExpr::atom(Outer::Rows, 3.0, 2.0).unwrap();
        let g = [1.0, -2.0];
        let v = grid_search_sum_norm(&g, &[n.clone(), n.clone()], Domain::new(&nu, &grid), 1e-3).unwrap();
        let direct = n.eval(&g, Domain::new(&nu, &grid)).unwrap();
        assert!((v - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn lattice_search_refuses_large_instances() {
        let nu = NuGrid::from_weights(vec![1.0; 4]).unwrap();
        let grid = SpaceGrid::uniform(1).unwrap();
        let n = NormExpr::atom(Outer::Rows, 2.0, 2.0).unwrap();
        assert!(matches!(
            grid_search_sum_norm(&[1.0; 4], &[n.clone(), n], Domain::new(&nu, &grid), 1e-3),
            Err(OracleError::TooLarge { dim: 4, max: 3 })
        ));
    }
}
