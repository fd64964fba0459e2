//! Brute-force dual norm of `I_{p,q}` on tiny domains, used as a test oracle.

use argmin::core::{CostFunction, Error as ArgminError, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::Rng;

use super::expr::{Domain, NormExpr};
use super::solver::OptimizerConfig;
use super::{regime_select, RegimeError, Result};
use crate::norms::{Integrand, NuGrid, SpaceGrid};
use crate::random_measure::replica_rng;

/// Largest `cells × points` the brute force accepts.
pub const MAX_BRUTEFORCE_DIM: usize = 6;

const STARTS: usize = 6;

/// `sup { Σ f g ν n : ‖g‖_{I_{p,q}} ≤ 1 }`.
///
/// Computed as `1 / min { ‖g‖_{I_{p,q}} : ⟨f, g⟩ = 1 }`: the constraint
/// hyperplane is parametrized by an orthonormal basis and the convex
/// objective is minimized by multi-start Nelder–Mead.
pub fn dual_norm_bruteforce(
    f: &Integrand,
    p: f64,
    q: f64,
    nu: &NuGrid,
    grid: &SpaceGrid,
) -> Result<f64> {
    let dim = nu.len() * grid.len();
    if dim > MAX_BRUTEFORCE_DIM {
        return Err(RegimeError::TooLarge {
            dim,
            max: MAX_BRUTEFORCE_DIM,
        });
    }
    let formula = regime_select(p, q)?;
    f.check_domain(nu, grid)?;
    let dom = Domain::new(nu, grid);
    let w = dom.pairing_weights();
    let active: Vec<usize> = (0..dim).filter(|&i| w[i] > 0.0).collect();
    // ⟨f, g⟩ = u · g on the active coordinates
    let u: Vec<f64> = active.iter().map(|&i| f.values()[i] * w[i]).collect();
    let uu: f64 = u.iter().map(|x| x * x).sum();
    if uu == 0.0 {
        return Ok(0.0);
    }
    let base: Vec<f64> = u.iter().map(|x| x / uu).collect();
    let basis = complement_basis(&u);

    let cost = HyperplaneCost {
        expr: formula.to_norm_expr(),
        dom,
        dim,
        active: &active,
        base: &base,
        basis: &basis,
        cfg: OptimizerConfig {
            tol: 1e-9,
            max_iter: 10_000,
        },
    };
    if basis.is_empty() {
        return Ok(1.0 / cost.eval(&[]));
    }

    let m = basis.len();
    let span = base.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let mut rng = replica_rng(0x6475_616c, 0);
    let mut best = f64::INFINITY;
    for start in 0..STARTS {
        let centre: Vec<f64> = if start == 0 {
            vec![0.0; m]
        } else {
            (0..m).map(|_| span * (2.0 * rng.random::<f64>() - 1.0)).collect()
        };
        let mut simplex = vec![centre.clone()];
        for j in 0..m {
            let mut v = centre.clone();
            v[j] += 0.5 * span;
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-12 * span.max(1e-300))
            .map_err(|e| RegimeError::Unsupported(e.to_string()))?;
        let res = Executor::new(&cost, solver)
            .configure(|s| s.max_iters(2_000))
            .run()
            .map_err(|e| RegimeError::Unsupported(e.to_string()))?;
        best = best.min(res.state().get_best_cost());
    }
    Ok(1.0 / best)
}

/// Orthonormal basis of `u^⊥` by Gram–Schmidt on the standard basis.
fn complement_basis(u: &[f64]) -> Vec<Vec<f64>> {
    let n = u.len();
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut vecs: Vec<Vec<f64>> = vec![u.iter().map(|x| x / norm).collect()];
    for e in 0..n {
        let mut v = vec![0.0; n];
        v[e] = 1.0;
        for b in &vecs {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-8 {
            v.iter_mut().for_each(|x| *x /= len);
            vecs.push(v);
        }
        if vecs.len() == n {
            break;
        }
    }
    vecs.remove(0);
    vecs
}

struct HyperplaneCost<'a> {
    expr: NormExpr,
    dom: Domain<'a>,
    dim: usize,
    active: &'a [usize],
    base: &'a [f64],
    basis: &'a [Vec<f64>],
    cfg: OptimizerConfig,
}

impl HyperplaneCost<'_> {
    fn eval(&self, y: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim];
        for (a, &i) in self.active.iter().enumerate() {
            g[i] = self.base[a] + self.basis.iter().zip(y).map(|(b, t)| b[a] * t).sum::<f64>();
        }
        match self.expr.eval_with(&g, self.dom, &self.cfg) {
            Ok(v) => v,
            // an upper bound still yields a valid lower estimate of the dual
            Err(RegimeError::NonConvergence { best_upper, .. }) => best_upper,
            Err(_) => f64::INFINITY,
        }
    }
}

impl CostFunction for &HyperplaneCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, y: &Self::Param) -> std::result::Result<f64, ArgminError> {
        Ok(self.eval(y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::{atomic_norm, AtomicNorm};

    #[test]
    fn zero_functional() {
        let nu = NuGrid::from_weights(vec![1.0, 2.0]).unwrap();
        let grid = SpaceGrid::uniform(1).unwrap();
        let f = Integrand::zeros(2, 1);
        assert_eq!(dual_norm_bruteforce(&f, 1.5, 3.0, &nu, &grid).unwrap(), 0.0);
    }

    #[test]
    fn hilbert_case_is_self_dual() {
        let nu = NuGrid::from_weights(vec![0.7, 1.3]).unwrap();
        let grid = SpaceGrid::new(vec![1.0, 0.5]).unwrap();
        let f = Integrand::new(2, 2, vec![1.0, -0.5, 2.0, 0.25]).unwrap();
        let d = dual_norm_bruteforce(&f, 2.0, 2.0, &nu, &grid).unwrap();
        let l2 = atomic_norm(&f, AtomicNorm::Lpqq, 2.0, 2.0, &nu, &grid).unwrap();
        assert!((d - l2).abs() <= 1e-4 * l2, "{d} vs {l2}");
    }

    #[test]
    fn refuses_large_domains() {
        let nu = NuGrid::from_weights(vec![1.0; 4]).unwrap();
        let grid = SpaceGrid::uniform(2).unwrap();
        let f = Integrand::zeros(4, 2);
        assert!(matches!(
            dual_norm_bruteforce(&f, 2.0, 2.0, &nu, &grid),
            Err(RegimeError::TooLarge { dim: 8, max: 6 })
        ));
    }

    #[test]
    fn basis_is_orthonormal_complement() {
        let u = [1.0, 2.0, -0.5];
        let b = complement_basis(&u);
        assert_eq!(b.len(), 2);
        for v in &b {
            let du: f64 = v.iter().zip(&u).map(|(x, y)| x * y).sum();
            assert!(du.abs() < 1e-12);
            let n: f64 = v.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
