//! Sum-space norm `inf { Σ_i N_i(h_i) : Σ_i h_i = g }`.
//!
//! The objective is convex but not smooth, so it is solved along a
//! smoothing homotopy: atoms see `sqrt(h² + δ²)`, maxima become a
//! log-sum-exp, and each smoothed problem is minimized by BFGS warm-started
//! from the previous level. Every iterate is a feasible split, so the best
//! exact objective seen is an upper bound. The common smoothed gradient
//! `φ` of the parts gives the lower bound `⟨φ, g⟩ / max_i N_i*(φ)`; the
//! solver stops once the two agree to the requested tolerance.

use serde::{Deserialize, Serialize};

use super::expr::{Domain, NormExpr};
use super::{RegimeError, Result};
use crate::norms::{NuGrid, SpaceGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Relative duality gap at which the solver stops.
    pub tol: f64,
    /// Budget of quasi-Newton iterations across all smoothing levels.
    pub max_iter: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SumNormOutcome {
    /// Best objective found, an upper bound on the sum norm.
    pub value: f64,
    /// Dual certificate, when one could be computed.
    pub lower_bound: Option<f64>,
    /// The split attaining `value`, one field per part, on the full domain.
    pub split: Vec<Vec<f64>>,
    pub iterations: usize,
}

const LEVELS: [f64; 11] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10, 1e-11, 1e-12];

/// Infimal convolution of `parts` at `g`.
///
/// Parts are flattened through nested sums; a sum nested inside a max is
/// rejected. Cells with zero `ν`-mass are invisible to every norm and are
/// assigned to the last part.
pub fn sum_norm(
    g: &[f64],
    parts: &[NormExpr],
    dom: Domain<'_>,
    cfg: &OptimizerConfig,
) -> Result<SumNormOutcome> {
    dom.check(g)?;
    if parts.is_empty() {
        return Err(RegimeError::EmptyParts);
    }
    let mut flat = Vec::new();
    for p in parts {
        flatten(p, 1.0, &mut flat);
    }
    for p in &flat {
        if p.contains_sum() {
            return Err(RegimeError::Unsupported(format!(
                "sum nested inside a max is not supported: {p}"
            )));
        }
    }
    let k = flat.len();
    let np = dom.grid.len();
    let active: Vec<usize> = (0..dom.nu.len()).filter(|&c| dom.nu.weights()[c] > 0.0).collect();
    let d = active.len() * np;
    let mut split = vec![vec![0.0; g.len()]; k];

    let rnu = NuGrid::from_weights(active.iter().map(|&c| dom.nu.weights()[c]).collect())?;
    let rgrid: &SpaceGrid = dom.grid;
    let rdom = Domain::new(&rnu, rgrid);
    let gr: Vec<f64> = active
        .iter()
        .flat_map(|&c| g[c * np..(c + 1) * np].iter().copied())
        .collect();

    let scatter = |split: &mut Vec<Vec<f64>>, reduced: &[Vec<f64>]| {
        for (i, h) in reduced.iter().enumerate() {
            for (a, &c) in active.iter().enumerate() {
                split[i][c * np..(c + 1) * np].copy_from_slice(&h[a * np..(a + 1) * np]);
            }
        }
        let last = split.len() - 1;
        for c in (0..dom.nu.len()).filter(|c| dom.nu.weights()[*c] == 0.0) {
            split[last][c * np..(c + 1) * np].copy_from_slice(&g[c * np..(c + 1) * np]);
        }
    };

    if gr.iter().all(|v| *v == 0.0) {
        scatter(&mut split, &vec![vec![0.0; d]; k]);
        return Ok(SumNormOutcome {
            value: 0.0,
            lower_bound: Some(0.0),
            split,
            iterations: 0,
        });
    }

    let whole: Vec<f64> = flat
        .iter()
        .map(|p| p.eval_with(&gr, rdom, cfg))
        .collect::<Result<_>>()?;
    let cheapest = (0..k).fold(0, |b, i| if whole[i] < whole[b] { i } else { b });
    let scale = whole[cheapest];
    if k == 1 || scale == 0.0 {
        let mut reduced = vec![vec![0.0; d]; k];
        reduced[cheapest] = gr.clone();
        scatter(&mut split, &reduced);
        return Ok(SumNormOutcome {
            value: scale,
            lower_bound: Some(scale),
            split,
            iterations: 0,
        });
    }

    // cheapest part last: it absorbs the remainder and the start is x = 0
    let mut order: Vec<usize> = (0..k).filter(|&i| i != cheapest).collect();
    order.push(cheapest);
    let ordered: Vec<NormExpr> = order.iter().map(|&i| flat[i].clone()).collect();
    let gn: Vec<f64> = gr.iter().map(|v| v / scale).collect();

    let mut atoms = Vec::new();
    ordered.iter().for_each(|p| p.atoms(&mut atoms));
    let ones = vec![1.0; d];
    let unit = atoms.iter().map(|a| a.eval(&ones, rdom)).fold(0.0, f64::max);

    let prob = Problem {
        parts: &ordered,
        g: &gn,
        dom: rdom,
        d,
    };
    let run = prob.solve(cfg, unit)?;

    let mut reduced = vec![vec![0.0; d]; k];
    for (slot, &i) in order.iter().enumerate() {
        reduced[i] = run.best_split[slot].iter().map(|v| v * scale).collect();
    }
    scatter(&mut split, &reduced);
    let value = run.best * scale;
    let lower = run.lower.map(|l| (l * scale).min(value));
    match run.converged {
        true => Ok(SumNormOutcome {
            value,
            lower_bound: lower,
            split,
            iterations: run.iterations,
        }),
        false => Err(RegimeError::NonConvergence {
            best_upper: value,
            lower_bound: lower,
            iterations: run.iterations,
        }),
    }
}

/// Largest value of `eval` on the segment from `a` to `b`, assuming it is
/// quasi-concave there.
fn golden_on_segment(a: &[f64], b: &[f64], eval: impl Fn(&[f64]) -> Option<f64>) -> Option<f64> {
    let at = |t: f64| -> f64 {
        let phi: Vec<f64> = a.iter().zip(b).map(|(u, v)| u + t * (v - u)).collect();
        eval(&phi).unwrap_or(f64::NEG_INFINITY)
    };
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let (mut fc, mut fd) = (at(c), at(d));
    for _ in 0..60 {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = at(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = at(d);
        }
    }
    let v = [at(1.0), fc, fd].into_iter().fold(f64::NEG_INFINITY, f64::max);
    v.is_finite().then_some(v)
}

fn flatten(e: &NormExpr, c: f64, out: &mut Vec<NormExpr>) {
    match e {
        NormExpr::Sum(ch) => ch.iter().for_each(|x| flatten(x, c, out)),
        NormExpr::Scaled(s, inner) => flatten(inner, c * s, out),
        other if c == 1.0 => out.push(other.clone()),
        other => out.push(other.clone().scaled(c)),
    }
}

struct Problem<'a> {
    parts: &'a [NormExpr],
    g: &'a [f64],
    dom: Domain<'a>,
    d: usize,
}

struct Run {
    best: f64,
    best_split: Vec<Vec<f64>>,
    lower: Option<f64>,
    converged: bool,
    iterations: usize,
}

impl Problem<'_> {
    fn k(&self) -> usize {
        self.parts.len()
    }

    fn split(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let d = self.d;
        let mut out: Vec<Vec<f64>> = x.chunks(d).map(<[f64]>::to_vec).collect();
        let mut rest = self.g.to_vec();
        for h in &out {
            for (r, v) in rest.iter_mut().zip(h) {
                *r -= v;
            }
        }
        out.push(rest);
        out
    }

    fn exact(&self, x: &[f64]) -> Result<f64> {
        let cfg = OptimizerConfig::default();
        let mut s = 0.0;
        for (p, h) in self.parts.iter().zip(self.split(x)) {
            s += p.eval_with(&h, self.dom, &cfg)?;
        }
        Ok(s)
    }

    /// Smoothed objective and its gradient in `x`; also returns the
    /// per-part gradients.
    fn smooth(&self, x: &[f64], delta: f64, tau: f64, gx: &mut [f64]) -> Result<(f64, Vec<Vec<f64>>)> {
        let d = self.d;
        let k = self.k();
        let mut val = 0.0;
        let mut grads = Vec::with_capacity(k);
        for (p, h) in self.parts.iter().zip(self.split(x)) {
            let mut gp = vec![0.0; d];
            val += p.smooth(&h, self.dom, delta, tau, &mut gp)?;
            grads.push(gp);
        }
        let last = &grads[k - 1];
        for i in 0..k - 1 {
            for j in 0..d {
                gx[i * d + j] = grads[i][j] - last[j];
            }
        }
        Ok((val, grads))
    }

    /// `⟨φ, g⟩ / max_i N_i*(φ)` for one dual vector, if computable.
    fn dual_value(&self, phi_w: &[f64], split: &[Vec<f64>], delta: f64, tau: f64) -> Option<f64> {
        let paired: f64 = phi_w.iter().zip(self.g).map(|(a, b)| a * b).sum();
        if !(paired > 0.0) {
            return None;
        }
        let mut worst = 0.0f64;
        for (p, h) in self.parts.iter().zip(split) {
            worst = worst.max(p.dual_bound(phi_w, h, self.dom, delta, tau).ok()?);
        }
        (worst > 0.0).then(|| paired / worst)
    }

    /// Best lower bound over candidate dual vectors, searched along
    /// segments (the bound is quasi-concave along lines, so golden-section
    /// search finds the best point on each). Candidates are the averaged
    /// part gradients, each part's gradient, and a mix taking coordinate `j`
    /// from the part holding the largest share of `g_j`; near-zero entries
    /// give badly conditioned gradients when exponents approach 1.
    fn certificate(&self, x: &[f64], grads: &[Vec<f64>], delta: f64, tau: f64) -> Option<f64> {
        let k = self.k() as f64;
        let split = self.split(x);
        let mut mean = vec![0.0; self.d];
        for gp in grads {
            for (a, b) in mean.iter_mut().zip(gp) {
                *a += b / k;
            }
        }
        let dominant: Vec<f64> = (0..self.d)
            .map(|j| {
                let i = (0..split.len())
                    .max_by(|&a, &b| split[a][j].abs().total_cmp(&split[b][j].abs()))
                    .unwrap_or(0);
                grads[i][j]
            })
            .collect();
        let eval = |phi: &[f64]| self.dual_value(phi, &split, delta, tau);
        let mut best = [eval(&mean), eval(&dominant)].into_iter().flatten().reduce(f64::max);
        for base in [&mean, &dominant] {
            for other in grads.iter().chain([&mean, &dominant]) {
                if std::ptr::eq(base, other) {
                    continue;
                }
                if let Some(v) = golden_on_segment(base, other, eval) {
                    if best.is_none_or(|b| v > b) {
                        best = Some(v);
                    }
                }
            }
        }
        best
    }

    /// Step along `dir` to where the directional derivative has shrunk to a
    /// tenth of `slope`, by bracketing and bisection. Uses gradients only,
    /// so it makes progress when function values are flat to rounding.
    fn slope_search(
        &self,
        x: &[f64],
        dir: &[f64],
        slope: f64,
        delta: f64,
        tau: f64,
    ) -> Result<Option<(Vec<f64>, f64, Vec<f64>)>> {
        let n = x.len();
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        let mut t = 1.0;
        let mut g_t = vec![0.0; n];
        let mut best: Option<(f64, Vec<f64>, f64, Vec<f64>)> = None;
        for _ in 0..80 {
            let xt: Vec<f64> = x.iter().zip(dir).map(|(a, b)| a + t * b).collect();
            let (ft, _) = self.smooth(&xt, delta, tau, &mut g_t)?;
            let s = dot(&g_t, dir);
            if s.abs() < best.as_ref().map_or(slope.abs(), |b| b.0) {
                best = Some((s.abs(), xt, ft, g_t.clone()));
            }
            if s.abs() <= 0.1 * slope.abs() {
                break;
            }
            if s < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            t = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * t };
        }
        Ok(best.map(|(_, xt, ft, g)| (xt, ft, g)))
    }

    fn solve(&self, cfg: &OptimizerConfig, unit: f64) -> Result<Run> {
        let n = (self.k() - 1) * self.d;
        let mut x = vec![0.0; n];
        let mut best = self.exact(&x)?;
        let mut best_x = x.clone();
        let mut lower: Option<f64> = None;
        let mut iterations = 0;
        let gmax = self.g.iter().fold(0.0f64, |m, v| m.max(v.abs()));

        for &eps in &LEVELS {
            let delta = eps / unit.max(f64::MIN_POSITIVE);
            let tau = eps;
            let mut gx = vec![0.0; n];
            let (mut f, start_grads) = self.smooth(&x, delta, tau, &mut gx)?;
            // stationarity is judged against the size of the dual vector
            let gref = start_grads
                .iter()
                .map(|g| inf_norm(g))
                .fold(inf_norm(&gx), f64::max)
                .max(f64::MIN_POSITIVE);
            let mut best_gnorm = inf_norm(&gx);
            let mut h: Option<Vec<f64>> = None;
            let mut gamma = 0.1 * gmax / gref;
            let mut stalls = 0;
            while iterations < cfg.max_iter {
                if inf_norm(&gx) <= 1e-3 * cfg.tol * gref {
                    break;
                }
                iterations += 1;
                let mut dir = match &h {
                    Some(hm) => mat_vec(hm, &gx, n),
                    None => gx.iter().map(|v| v * gamma).collect(),
                };
                dir.iter_mut().for_each(|v| *v = -*v);
                let mut slope = dot(&gx, &dir);
                if !(slope < 0.0) {
                    h = None;
                    dir = gx.iter().map(|v| -v * gamma).collect();
                    slope = dot(&gx, &dir);
                }
                let mut t = 1.0;
                let mut accepted = None;
                let mut g_new = vec![0.0; n];
                for _ in 0..60 {
                    let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
                    let (fn_, _) = self.smooth(&xn, delta, tau, &mut g_new)?;
                    if fn_ <= f + 1e-4 * t * slope {
                        accepted = Some((xn, fn_, g_new.clone()));
                        break;
                    }
                    t *= 0.5;
                }
                // Near the optimum the decrease drops below rounding noise
                // while the gradient still matters to the certificate.
                if accepted.as_ref().is_none_or(|a| f - a.1 <= 1e-15 * f.abs()) {
                    if let Some(alt) = self.slope_search(&x, &dir, slope, delta, tau)? {
                        accepted = Some(alt);
                    }
                }
                let Some((xn, fn_, g_new)) = accepted else {
                    if h.is_none() {
                        break;
                    }
                    h = None;
                    continue;
                };
                let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&gx).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                let yy = dot(&y, &y);
                if sy > 1e-12 * dot(&s, &s).sqrt() * yy.sqrt() {
                    let hm = h.get_or_insert_with(|| {
                        let mut m = vec![0.0; n * n];
                        for i in 0..n {
                            m[i * n + i] = sy / yy;
                        }
                        m
                    });
                    bfgs_update(hm, &s, &y, n);
                    gamma = sy / yy;
                }
                let gnorm = inf_norm(&g_new);
                let flat = f - fn_ <= 1e-15 * f.abs() && gnorm >= 0.9 * best_gnorm;
                best_gnorm = best_gnorm.min(gnorm);
                stalls = if flat { stalls + 1 } else { 0 };
                x = xn;
                f = fn_;
                gx.copy_from_slice(&g_new);
                if stalls >= 5 {
                    break;
                }
            }

            let exact = self.exact(&x)?;
            if exact < best {
                best = exact;
                best_x = x.clone();
            }
            let mut scratch = vec![0.0; n];
            let (_, grads) = self.smooth(&x, delta, tau, &mut scratch)?;
            if let Some(lb) = self.certificate(&x, &grads, delta, tau) {
                if lower.is_none_or(|l| lb > l) {
                    lower = Some(lb);
                }
            }
            if lower.is_some_and(|l| best - l <= cfg.tol * best) {
                return Ok(Run {
                    best,
                    best_split: self.split(&best_x),
                    lower,
                    converged: true,
                    iterations,
                });
            }
            if iterations >= cfg.max_iter {
                break;
            }
        }
        Ok(Run {
            best,
            best_split: self.split(&best_x),
            lower,
            converged: false,
            iterations,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn mat_vec(m: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| dot(&m[i * n..(i + 1) * n], v)).collect()
}

/// Inverse-Hessian BFGS update
/// `H ← H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], n: usize) {
    let rho = 1.0 / dot(s, y);
    let hy = mat_vec(h, y, n);
    let yhy = dot(y, &hy);
    let c = rho * rho * yhy + rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + c * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::Outer;

    fn l1_l2_instance() -> (NuGrid, SpaceGrid, Vec<NormExpr>) {
        let nu = NuGrid::from_weights(vec![1.0, 1.0]).unwrap();
        let grid = SpaceGrid::uniform(1).unwrap();
        let parts = vec![
            NormExpr::atom(Outer::Rows, 1.0, 1.0).unwrap(),
            NormExpr::atom(Outer::Rows, 2.0, 2.0).unwrap().scaled(2.0),
        ];
        (nu, grid, parts)
    }

    #[test]
    fn certified_l1_l2_instance() {
        let (nu, grid, parts) = l1_l2_instance();
        let out = sum_norm(&[1.0, 1.0], &parts, Domain::new(&nu, &grid), &OptimizerConfig::default())
            .unwrap();
        assert!((out.value - 2.0).abs() < 1e-4, "{out:?}");
        assert!(out.lower_bound.unwrap() <= out.value);
        assert!(out.lower_bound.unwrap() > 2.0 - 1e-4);
    }

    #[test]
    fn zero_field_is_zero() {
        let (nu, grid, parts) = l1_l2_instance();
        let out = sum_norm(&[0.0, 0.0], &parts, Domain::new(&nu, &grid), &OptimizerConfig::default())
            .unwrap();
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn same_norm_twice_gives_the_norm() {
        let nu = NuGrid::from_weights(vec![0.5, 1.5, 1.0]).unwrap();
        let grid = SpaceGrid::new(vec![1.0, 2.0]).unwrap();
        let dom = Domain::new(&nu, &grid);
        let n = NormExpr::atom(Outer::Rows, 3.0, 1.5).unwrap();
        let g = [1.0, -2.0, 0.5, 0.0, 3.0, 1.0];
        let direct = n.eval(&g, dom).unwrap();
        let out = sum_norm(&g, &[n.clone(), n], dom, &OptimizerConfig::default()).unwrap();
        assert!((out.value - direct).abs() <= 1e-6 * direct);
    }

    #[test]
    fn split_reassembles_the_field() {
        let nu = NuGrid::from_weights(vec![0.5, 0.0, 1.0]).unwrap();
        let grid = SpaceGrid::new(vec![1.0, 2.0]).unwrap();
        let dom = Domain::new(&nu, &grid);
        let parts = vec![
            NormExpr::atom(Outer::Rows, 3.0, 1.5).unwrap(),
            NormExpr::atom(Outer::Rows, 1.5, 1.5).unwrap(),
            NormExpr::atom(Outer::Cols, 2.0, 1.5).unwrap(),
        ];
        let g = [1.0, -2.0, 7.0, 7.0, 3.0, 1.0];
        let out = sum_norm(&g, &parts, dom, &OptimizerConfig::default()).unwrap();
        for j in 0..g.len() {
            let s: f64 = out.split.iter().map(|h| h[j]).sum();
            assert!((s - g[j]).abs() < 1e-12);
        }
        let total: f64 = parts
            .iter()
            .zip(&out.split)
            .map(|(p, h)| p.eval(h, dom).unwrap())
            .sum();
        assert!((total - out.value).abs() <= 1e-12 * out.value);
        let lb = out.lower_bound.unwrap();
        assert!(lb <= out.value && out.value - lb <= 1e-6 * out.value);
    }

    #[test]
    fn budget_exhaustion_reports_best_upper_bound() {
        let nu = NuGrid::from_weights(vec![0.5, 1.0]).unwrap();
        let grid = SpaceGrid::new(vec![1.0, 2.0]).unwrap();
        let dom = Domain::new(&nu, &grid);
        let parts = vec![
            NormExpr::atom(Outer::Rows, 3.0, 1.5).unwrap(),
            NormExpr::atom(Outer::Cols, 2.0, 1.5).unwrap(),
        ];
        let g = [1.0, -2.0, 3.0, 1.0];
        let cfg = OptimizerConfig { tol: 1e-14, max_iter: 3 };
        match sum_norm(&g, &parts, dom, &cfg) {
            Err(RegimeError::NonConvergence { best_upper, .. }) => {
                let cheapest = parts.iter().map(|p| p.eval(&g, dom).unwrap()).fold(f64::MAX, f64::min);
                assert!(best_upper <= cheapest);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nested_sum_in_max_is_rejected() {
        let (nu, grid, parts) = l1_l2_instance();
        let bad = NormExpr::Intersect(vec![NormExpr::Sum(parts.clone())]);
        let r = sum_norm(&[1.0, 1.0], &[bad, parts[0].clone()], Domain::new(&nu, &grid), &OptimizerConfig::default());
        assert!(matches!(r, Err(RegimeError::Unsupported(_))));
        let r = sum_norm(&[1.0, 1.0], &[], Domain::new(&nu, &grid), &OptimizerConfig::default());
        assert!(matches!(r, Err(RegimeError::EmptyParts)));
    }
}
