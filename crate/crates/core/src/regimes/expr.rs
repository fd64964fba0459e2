//! Norm functionals built from mixed atoms with `Sum` (infimal convolution)
//! and `Intersect` (max) nodes.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::solver::{sum_norm, OptimizerConfig};
use super::{RegimeError, Result};
use crate::norms::{cell_point_norm, weighted_lp, NuGrid, Outer, SpaceGrid};

/// The finite domain `cells × points` a field lives on.
#[derive(Debug, Clone, Copy)]
pub struct Domain<'a> {
    pub nu: &'a NuGrid,
    pub grid: &'a SpaceGrid,
}

impl<'a> Domain<'a> {
    pub fn new(nu: &'a NuGrid, grid: &'a SpaceGrid) -> Self {
        Domain { nu, grid }
    }

    pub fn len(&self) -> usize {
        self.nu.len() * self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `ν_c n_x`, the weight of each coordinate in the pairing.
    pub fn pairing_weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.len());
        for nc in self.nu.weights() {
            for nx in self.grid.weights() {
                w.push(nc * nx);
            }
        }
        w
    }

    pub(crate) fn check(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(crate::norms::NormError::DimensionMismatch {
                what: "field vs domain",
                expected: self.len(),
                got: values.len(),
            }
            .into());
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(crate::norms::NormError::NonFinite {
                what: "field",
                index,
            }
            .into());
        }
        Ok(())
    }
}

/// `Σ_c Σ_x f g ν_c n_x`.
pub fn pairing(f: &[f64], g: &[f64], dom: Domain<'_>) -> f64 {
    let np = dom.grid.len();
    let nw = dom.nu.weights();
    let pw = dom.grid.weights();
    crate::norms::pairwise_sum_by(f.len(), |i| f[i] * g[i] * nw[i / np] * pw[i % np])
}

/// Mixed norm over `cells × points`: inner norm over the non-outer index,
/// then outer norm over `outer`. Exponents lie in `[1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedAtom {
    pub outer: Outer,
    pub cell_exp: f64,
    pub point_exp: f64,
}

pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p == f64::INFINITY {
        1.0
    } else {
        p / (p - 1.0)
    }
}

impl MixedAtom {
    pub fn new(outer: Outer, cell_exp: f64, point_exp: f64) -> Result<Self> {
        for e in [cell_exp, point_exp] {
            if !(e >= 1.0) {
                return Err(crate::norms::NormError::InvalidExponent {
                    value: e,
                    range: "[1, ∞]",
                }
                .into());
            }
        }
        Ok(MixedAtom {
            outer,
            cell_exp,
            point_exp,
        })
    }

    pub fn eval(&self, values: &[f64], dom: Domain<'_>) -> f64 {
        cell_point_norm(values, dom.nu, dom.grid, self.outer, self.cell_exp, self.point_exp)
    }

    /// Dual under the weighted pairing: conjugate exponents, same layout.
    pub fn dual(&self) -> Self {
        MixedAtom {
            outer: self.outer,
            cell_exp: conjugate(self.cell_exp),
            point_exp: conjugate(self.point_exp),
        }
    }

    /// Value and gradient of the norm of `sqrt(v² + δ²)`.
    fn smooth(&self, v: &[f64], dom: Domain<'_>, delta: f64, grad: &mut [f64]) -> Result<f64> {
        if self.cell_exp.is_infinite() || self.point_exp.is_infinite() {
            return Err(RegimeError::Unsupported(
                "smoothing of an ∞-exponent atom".into(),
            ));
        }
        let cols = dom.grid.len();
        let rows = dom.nu.len();
        let a: Vec<f64> = v.iter().map(|x| x.hypot(delta)).collect();
        let (n_outer, n_inner, w_outer, w_inner, p_outer, p_inner) = match self.outer {
            Outer::Rows => (
                rows,
                cols,
                dom.nu.weights(),
                dom.grid.weights(),
                self.cell_exp,
                self.point_exp,
            ),
            Outer::Cols => (
                cols,
                rows,
                dom.grid.weights(),
                dom.nu.weights(),
                self.point_exp,
                self.cell_exp,
            ),
        };
        let idx = |o: usize, i: usize| match self.outer {
            Outer::Rows => o * cols + i,
            Outer::Cols => i * cols + o,
        };
        let mut inner = vec![0.0; n_outer];
        let mut buf = vec![0.0; n_inner];
        for (o, r) in inner.iter_mut().enumerate() {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = a[idx(o, i)];
            }
            *r = weighted_lp(&buf, w_inner, p_inner);
        }
        let total = weighted_lp(&inner, w_outer, p_outer);
        for o in 0..n_outer {
            let r = inner[o];
            let fo = if r > 0.0 && total > 0.0 {
                w_outer[o] * pow_ratio(r, total, p_outer)
            } else {
                0.0
            };
            for i in 0..n_inner {
                let j = idx(o, i);
                let fi = if r > 0.0 {
                    w_inner[i] * pow_ratio(a[j], r, p_inner)
                } else {
                    0.0
                };
                grad[j] = fo * fi * v[j] / a[j];
            }
        }
        Ok(total)
    }
}

/// `(x / y)^{p-1}`.
fn pow_ratio(x: f64, y: f64, p: f64) -> f64 {
    if p == 1.0 {
        1.0
    } else if p == 2.0 {
        x / y
    } else {
        (x / y).powf(p - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NormExpr {
    Atom(MixedAtom),
    Scaled(f64, Box<NormExpr>),
    /// Infimal convolution of the children.
    Sum(Vec<NormExpr>),
    /// Maximum of the children.
    Intersect(Vec<NormExpr>),
}

impl NormExpr {
    pub fn atom(outer: Outer, cell_exp: f64, point_exp: f64) -> Result<Self> {
        Ok(NormExpr::Atom(MixedAtom::new(outer, cell_exp, point_exp)?))
    }

    pub fn scaled(self, c: f64) -> Self {
        NormExpr::Scaled(c, Box::new(self))
    }

    pub fn eval(&self, values: &[f64], dom: Domain<'_>) -> Result<f64> {
        self.eval_with(values, dom, &OptimizerConfig::default())
    }

    pub fn eval_with(&self, values: &[f64], dom: Domain<'_>, cfg: &OptimizerConfig) -> Result<f64> {
        dom.check(values)?;
        self.eval_unchecked(values, dom, cfg)
    }

    fn eval_unchecked(&self, values: &[f64], dom: Domain<'_>, cfg: &OptimizerConfig) -> Result<f64> {
        match self {
            NormExpr::Atom(a) => Ok(a.eval(values, dom)),
            NormExpr::Scaled(c, e) => Ok(c * e.eval_unchecked(values, dom, cfg)?),
            NormExpr::Intersect(children) => {
                let mut m = 0.0f64;
                for c in children {
                    m = m.max(c.eval_unchecked(values, dom, cfg)?);
                }
                Ok(m)
            }
            NormExpr::Sum(children) => Ok(sum_norm(values, children, dom, cfg)?.value),
        }
    }

    /// Dual norm under the pairing `Σ f g ν n`.
    pub fn dual(&self) -> Self {
        match self {
            NormExpr::Atom(a) => NormExpr::Atom(a.dual()),
            NormExpr::Scaled(c, e) => NormExpr::Scaled(1.0 / c, Box::new(e.dual())),
            NormExpr::Sum(ch) => NormExpr::Intersect(ch.iter().map(NormExpr::dual).collect()),
            NormExpr::Intersect(ch) => NormExpr::Sum(ch.iter().map(NormExpr::dual).collect()),
        }
    }

    pub fn contains_sum(&self) -> bool {
        match self {
            NormExpr::Atom(_) => false,
            NormExpr::Scaled(_, e) => e.contains_sum(),
            NormExpr::Sum(_) => true,
            NormExpr::Intersect(ch) => ch.iter().any(NormExpr::contains_sum),
        }
    }

    pub(crate) fn atoms(&self, out: &mut Vec<MixedAtom>) {
        match self {
            NormExpr::Atom(a) => out.push(*a),
            NormExpr::Scaled(_, e) => e.atoms(out),
            NormExpr::Sum(ch) | NormExpr::Intersect(ch) => ch.iter().for_each(|c| c.atoms(out)),
        }
    }

    /// Smoothed value and gradient: atoms see `sqrt(v² + δ²)`, maxima become
    /// `τ log Σ exp(·/τ)`. The result overestimates the exact value by at
    /// most `δ N(𝟙) + τ log(#children)` per node.
    pub(crate) fn smooth(
        &self,
        v: &[f64],
        dom: Domain<'_>,
        delta: f64,
        tau: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        match self {
            NormExpr::Atom(a) => a.smooth(v, dom, delta, grad),
            NormExpr::Scaled(c, e) => {
                let val = e.smooth(v, dom, delta, tau, grad)?;
                grad.iter_mut().for_each(|x| *x *= c);
                Ok(c * val)
            }
            NormExpr::Intersect(children) => {
                let (vals, grads) = smooth_children(children, v, dom, delta, tau)?;
                let (val, weights) = soft_max(&vals, tau);
                grad.iter_mut().for_each(|x| *x = 0.0);
                for (w, gc) in weights.iter().zip(&grads) {
                    for (x, y) in grad.iter_mut().zip(gc) {
                        *x += w * y;
                    }
                }
                Ok(val)
            }
            NormExpr::Sum(_) => Err(RegimeError::Unsupported(
                "sum node nested inside a sum part".into(),
            )),
        }
    }

    /// Upper bound on the dual norm of `φ`, given as `phi_w = φ·ν·n`.
    ///
    /// Atoms are exact. For a max node the dual is the infimal convolution
    /// of the children's duals; any split gives an upper bound, and the one
    /// used here follows the smoothed gradient weights at `v`.
    pub(crate) fn dual_bound(
        &self,
        phi_w: &[f64],
        v: &[f64],
        dom: Domain<'_>,
        delta: f64,
        tau: f64,
    ) -> Result<f64> {
        match self {
            NormExpr::Atom(a) => {
                let w = dom.pairing_weights();
                let phi: Vec<f64> = phi_w.iter().zip(&w).map(|(x, y)| x / y).collect();
                Ok(a.dual().eval(&phi, dom))
            }
            NormExpr::Scaled(c, e) => Ok(e.dual_bound(phi_w, v, dom, delta, tau)? / c),
            NormExpr::Intersect(children) => {
                let (vals, grads) = smooth_children(children, v, dom, delta, tau)?;
                let (_, weights) = soft_max(&vals, tau);
                let mut residual = phi_w.to_vec();
                for (w, gc) in weights.iter().zip(&grads) {
                    for (r, y) in residual.iter_mut().zip(gc) {
                        *r -= w * y;
                    }
                }
                let mut bound = 0.0;
                for ((w, gc), child) in weights.iter().zip(&grads).zip(children) {
                    if *w == 0.0 {
                        continue;
                    }
                    let share: Vec<f64> = gc.iter().zip(&residual).map(|(y, r)| w * (y + r)).collect();
                    bound += child.dual_bound(&share, v, dom, delta, tau)?;
                }
                Ok(bound)
            }
            NormExpr::Sum(_) => Err(RegimeError::Unsupported(
                "sum node nested inside a sum part".into(),
            )),
        }
    }
}

type ChildEvals = (Vec<f64>, Vec<Vec<f64>>);

fn smooth_children(
    children: &[NormExpr],
    v: &[f64],
    dom: Domain<'_>,
    delta: f64,
    tau: f64,
) -> Result<ChildEvals> {
    let mut vals = Vec::with_capacity(children.len());
    let mut grads = Vec::with_capacity(children.len());
    for c in children {
        let mut gc = vec![0.0; v.len()];
        vals.push(c.smooth(v, dom, delta, tau, &mut gc)?);
        grads.push(gc);
    }
    Ok((vals, grads))
}

/// `τ log Σ exp(v_j/τ)` and its softmax weights.
fn soft_max(vals: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = vals.iter().map(|v| ((v - m) / tau).exp()).collect();
    let s: f64 = e.iter().sum();
    (m + tau * s.ln(), e.iter().map(|x| x / s).collect())
}

impl fmt::Display for NormExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, name: &str, ch: &[NormExpr]| {
            write!(f, "{name}(")?;
            for (i, c) in ch.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{c}")?;
            }
            f.write_str(")")
        };
        match self {
            NormExpr::Atom(a) => {
                let o = match a.outer {
                    Outer::Rows => "cells",
                    Outer::Cols => "points",
                };
                write!(f, "L[{o}; {}, {}]", a.cell_exp, a.point_exp)
            }
            NormExpr::Scaled(c, e) => write!(f, "{c}·{e}"),
            NormExpr::Sum(ch) => list(f, "Sum", ch),
            NormExpr::Intersect(ch) => list(f, "Intersect", ch),
        }
    }
}
