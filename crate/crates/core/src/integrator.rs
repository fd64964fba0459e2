//! Pathwise computation of `M = g ⋆ (μ − ν)` for a deterministic integrand.
//!
//! Between events a Poisson path moves linearly (the compensator drift is
//! constant inside a time cell) and a Bernoulli path is constant, so the path
//! is fully described by its left limits and right values at a finite set of
//! knots: atom times, time-cell boundaries, Bernoulli cell times and `T`.
//! Since `t ↦ ‖a + t b‖` is convex, the running supremum of `‖M_t‖_{L_q}` is
//! attained at one of those knot values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::norms::{check_exponent, weighted_lp, Integrand, NormError, SpaceGrid};
use crate::random_measure::{PointPattern, RandomMeasureModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("integrand has {got} cells, model has {expected}")]
    CellMismatch { expected: usize, got: usize },

    #[error("atom {index} refers to cell {cell}, integrand has {cells} cells")]
    AtomOutsideIntegrand {
        index: usize,
        cell: usize,
        cells: usize,
    },

    #[error("atom {index} at time {time} outside (0, {horizon}]")]
    AtomOutsideHorizon {
        index: usize,
        time: f64,
        horizon: f64,
    },

    #[error("jumps are not ordered by time at index {0}")]
    Unordered(usize),

    #[error(transparent)]
    Norm(#[from] NormError),
}

pub type Result<T> = std::result::Result<T, PathError>;

/// A jump `ΔM_s` of the path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub delta: Vec<f64>,
}

/// One realization of `M` with its brackets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRealization {
    n_points: usize,
    knot_times: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
    /// `ΔM` at every knot where `μ` or (Bernoulli) `ν` has an atom.
    pub jumps: Vec<Jump>,
    /// `[M, M]_T`, pointwise in `x`.
    pub qv: Vec<f64>,
    /// `∫ |g|² dν`, pointwise in `x`.
    pub pb: Vec<f64>,
}

impl PathRealization {
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn knot_times(&self) -> &[f64] {
        &self.knot_times
    }

    pub fn n_knots(&self) -> usize {
        self.knot_times.len()
    }

    /// `M_{t-}` at knot `k`.
    pub fn left_limit(&self, k: usize) -> &[f64] {
        &self.left[k * self.n_points..(k + 1) * self.n_points]
    }

    /// `M_t` at knot `k`.
    pub fn value(&self, k: usize) -> &[f64] {
        &self.right[k * self.n_points..(k + 1) * self.n_points]
    }

    /// `M_T`.
    pub fn terminal(&self) -> &[f64] {
        self.value(self.n_knots() - 1)
    }

    /// `[M, M]_T^{1/2}` pointwise.
    pub fn qv_sqrt(&self) -> Vec<f64> {
        self.qv.iter().map(|v| v.sqrt()).collect()
    }
}

/// Computes the compensated integral of `g` along `pattern`.
///
/// Poisson: each atom adds `g(cell, ·)` and the compensator drifts
/// `Σ_m g(k, m, ·) rate(k, m)` per unit time in time cell `k`.
/// Bernoulli: at every cell time the path jumps by `(ξ_c − p_c) g_c`,
/// whether or not the cell fired.
pub fn integrate_path(
    g: &Integrand,
    pattern: &PointPattern,
    model: &RandomMeasureModel,
) -> Result<PathRealization> {
    if g.n_cells() != model.n_cells() {
        return Err(PathError::CellMismatch {
            expected: model.n_cells(),
            got: g.n_cells(),
        });
    }
    let horizon = model.horizon();
    for (index, atom) in pattern.atoms.iter().enumerate() {
        if atom.cell >= g.n_cells() {
            return Err(PathError::AtomOutsideIntegrand {
                index,
                cell: atom.cell,
                cells: g.n_cells(),
            });
        }
        if !(atom.time > 0.0 && atom.time <= horizon) {
            return Err(PathError::AtomOutsideHorizon {
                index,
                time: atom.time,
                horizon,
            });
        }
    }
    let nu = model.nu_grid();
    let np = g.n_points();
    let mut pb = vec![0.0; np];
    for (c, w) in nu.weights().iter().enumerate() {
        if *w > 0.0 {
            for (x, v) in g.cell(c).iter().enumerate() {
                pb[x] += v * v * w;
            }
        }
    }
    let mut path = match model {
        RandomMeasureModel::Poisson(m) => poisson_path(g, pattern, m),
        RandomMeasureModel::Bernoulli(m) => bernoulli_path(g, pattern, m),
    };
    path.pb = pb;
    Ok(path)
}

fn poisson_path(
    g: &Integrand,
    pattern: &PointPattern,
    m: &crate::random_measure::PoissonModel,
) -> PathRealization {
    let np = g.n_points();
    let edges = m.time_edges();
    let kcells = m.time_cells();

    // drift[k] = Σ_m g(k, m, ·) rate(k, m); comp_at_edge[k] = ∫_0^{e_k} g dν
    let mut drift = vec![0.0; kcells * np];
    for k in 0..kcells {
        for mark in 0..m.marks() {
            let c = m.cell_index(k, mark);
            let rate = m.rates()[c];
            if rate > 0.0 {
                for x in 0..np {
                    drift[k * np + x] += g.get(c, x) * rate;
                }
            }
        }
    }
    let mut comp_at_edge = vec![0.0; (kcells + 1) * np];
    for k in 0..kcells {
        let dt = edges[k + 1] - edges[k];
        for x in 0..np {
            comp_at_edge[(k + 1) * np + x] = comp_at_edge[k * np + x] + drift[k * np + x] * dt;
        }
    }
    let compensator = |t: f64, out: &mut [f64]| {
        // time cell (e_k, e_{k+1}] containing t; the compensator is
        // continuous, so the choice at an edge does not matter
        let k = edges[1..].partition_point(|e| *e < t).min(kcells - 1);
        let dt = t - edges[k];
        for x in 0..np {
            out[x] = comp_at_edge[k * np + x] + drift[k * np + x] * dt;
        }
    };

    let mut knots: Vec<f64> = pattern.atoms.iter().map(|a| a.time).collect();
    knots.extend_from_slice(&edges[1..]);
    knots.sort_by(f64::total_cmp);
    knots.dedup();

    let mut summed = vec![0.0; np];
    let mut comp = vec![0.0; np];
    let mut qv = vec![0.0; np];
    let mut left = Vec::with_capacity(knots.len() * np);
    let mut right = Vec::with_capacity(knots.len() * np);
    let mut jumps = Vec::new();
    let mut next_atom = 0;
    for &t in &knots {
        compensator(t, &mut comp);
        left.extend(summed.iter().zip(&comp).map(|(s, c)| s - c));
        let first = next_atom;
        let mut delta = vec![0.0; np];
        while next_atom < pattern.atoms.len() && pattern.atoms[next_atom].time == t {
            let row = g.cell(pattern.atoms[next_atom].cell);
            for x in 0..np {
                delta[x] += row[x];
            }
            next_atom += 1;
        }
        if next_atom > first {
            for x in 0..np {
                summed[x] += delta[x];
                qv[x] += delta[x] * delta[x];
            }
            jumps.push(Jump { time: t, delta });
        }
        right.extend(summed.iter().zip(&comp).map(|(s, c)| s - c));
    }

    PathRealization {
        n_points: np,
        knot_times: knots,
        left,
        right,
        jumps,
        qv,
        pb: Vec::new(),
    }
}

fn bernoulli_path(
    g: &Integrand,
    pattern: &PointPattern,
    m: &crate::random_measure::BernoulliModel,
) -> PathRealization {
    let np = g.n_points();
    let cells = m.cells();
    let mut fired = vec![false; cells.len()];
    for atom in &pattern.atoms {
        fired[atom.cell] = true;
    }

    let mut state = vec![0.0; np];
    let mut qv = vec![0.0; np];
    let mut knots = Vec::new();
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut jumps = Vec::new();
    let mut c = 0;
    while c < cells.len() {
        let t = cells[c].time;
        let mut delta = vec![0.0; np];
        while c < cells.len() && cells[c].time == t {
            let weight = if fired[c] { 1.0 } else { 0.0 } - cells[c].prob;
            for (d, v) in delta.iter_mut().zip(g.cell(c)) {
                *d += weight * v;
            }
            c += 1;
        }
        knots.push(t);
        left.extend_from_slice(&state);
        for x in 0..np {
            state[x] += delta[x];
            qv[x] += delta[x] * delta[x];
        }
        right.extend_from_slice(&state);
        jumps.push(Jump { time: t, delta });
    }
    if knots.last().is_none_or(|t| *t < m.horizon()) {
        knots.push(m.horizon());
        left.extend_from_slice(&state);
        right.extend_from_slice(&state);
    }

    PathRealization {
        n_points: np,
        knot_times: knots,
        left,
        right,
        jumps,
        qv,
        pb: Vec::new(),
    }
}

/// `sup_{t ≤ T} ‖M_t‖_{L_q}` over left limits and values at every knot.
pub fn sup_lq(path: &PathRealization, q: f64, grid: &SpaceGrid) -> Result<f64> {
    check_exponent(q)?;
    if path.n_points() != grid.len() {
        return Err(NormError::DimensionMismatch {
            what: "path vs space grid",
            expected: grid.len(),
            got: path.n_points(),
        }
        .into());
    }
    let w = grid.weights();
    let mut sup = 0.0f64;
    for k in 0..path.n_knots() {
        sup = sup
            .max(weighted_lp(path.left_limit(k), w, q))
            .max(weighted_lp(path.value(k), w, q));
    }
    Ok(sup)
}

/// Pathwise Davis split of the jumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DavisSplit {
    /// Indices `s` with `‖ΔM_s‖ > 2 S_{s−}`.
    pub big_indices: Vec<usize>,
    pub jump_norms: Vec<f64>,
    /// `S_{s−}`: largest jump norm strictly before jump `s`.
    pub running_sup_before: Vec<f64>,
    /// `S_∞`.
    pub sup_jump: f64,
}

impl DavisSplit {
    /// Total variation of the big-jump part, `Σ_{s ∈ big} ‖ΔM_s‖`.
    pub fn big_total_variation(&self) -> f64 {
        self.big_indices.iter().map(|&i| self.jump_norms[i]).sum()
    }
}

/// Applies the threshold rule to precomputed jump norms.
pub fn davis_split_norms(jump_norms: Vec<f64>) -> DavisSplit {
    let mut big_indices = Vec::new();
    let mut running_sup_before = Vec::with_capacity(jump_norms.len());
    let mut s = 0.0f64;
    for (i, &n) in jump_norms.iter().enumerate() {
        running_sup_before.push(s);
        if n > 2.0 * s {
            big_indices.push(i);
        }
        s = s.max(n);
    }
    DavisSplit {
        big_indices,
        jump_norms,
        running_sup_before,
        sup_jump: s,
    }
}

/// Davis split of time-ordered jumps measured in `L_q`.
pub fn davis_split(jumps: &[Jump], q: f64, grid: &SpaceGrid) -> Result<DavisSplit> {
    check_exponent(q)?;
    if let Some(i) = (1..jumps.len()).find(|&i| jumps[i].time < jumps[i - 1].time) {
        return Err(PathError::Unordered(i));
    }
    let mut norms = Vec::with_capacity(jumps.len());
    for j in jumps {
        if j.delta.len() != grid.len() {
            return Err(NormError::DimensionMismatch {
                what: "jump vs space grid",
                expected: grid.len(),
                got: j.delta.len(),
            }
            .into());
        }
        norms.push(weighted_lp(&j.delta, grid.weights(), q));
    }
    Ok(davis_split_norms(norms))
}
