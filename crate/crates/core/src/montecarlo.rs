//! Ensemble estimates of `(𝔼 sup_t ‖M_t‖_{L_q}^p)^{1/p}` and of the
//! companion moment inequalities.
//!
//! Replica `r` draws from the stream `(seed, r)`, replicas run on a rayon
//! pool and are collected in index order, and every mean is a fixed-shape
//! pairwise sum, so results are bitwise identical for any worker count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::integrator::{davis_split, integrate_path, sup_lq, PathError};
use crate::norms::{check_open_exponent, pairwise_sum, weighted_lp, Integrand, NormError, SpaceGrid};
use crate::random_measure::{replica_rng, sample, RandomMeasureModel};
use crate::regimes::{ipq_norm_with, regime_select, OptimizerConfig, RegimeCase, RegimeError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Path(#[from] PathError),

    #[error(transparent)]
    Norm(#[from] NormError),

    #[error(transparent)]
    Regime(#[from] RegimeError),
}

pub type Result<T> = std::result::Result<T, McError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub replicas: usize,
    pub seed: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    /// Replace the delta-method standard error by a 200-resample bootstrap.
    pub bootstrap: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            replicas: 10_000,
            seed: 0,
            workers: 0,
            bootstrap: false,
        }
    }
}

const BOOTSTRAP_RESAMPLES: usize = 200;

/// Runs `f(replica)` for every replica and returns the results in replica
/// order.
pub fn per_replica<T, F>(mc: &McConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(mc.workers)
        .build()
        .map_err(|e| McError::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| (0..mc.replicas as u64).into_par_iter().map(&f).collect())
}

/// What one replica contributes, for each requested `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaStats {
    /// `sup_t ‖M_t‖_{L_q}`
    pub sup: Vec<f64>,
    /// `‖M_T‖_{L_q}`
    pub terminal: Vec<f64>,
    /// `‖[M, M]_T^{1/2}‖_{L_q}`
    pub bracket: Vec<f64>,
}

/// Simulates `mc.replicas` paths of `g ⋆ (μ − ν)` and records norms for
/// every exponent in `qs`.
pub fn simulate(
    g: &Integrand,
    model: &RandomMeasureModel,
    grid: &SpaceGrid,
    qs: &[f64],
    mc: &McConfig,
) -> Result<Vec<ReplicaStats>> {
    if g.n_points() != grid.len() {
        return Err(NormError::DimensionMismatch {
            what: "integrand vs space grid",
            expected: grid.len(),
            got: g.n_points(),
        }
        .into());
    }
    for &q in qs {
        check_open_exponent(q)?;
    }
    per_replica(mc, |r| {
        let pattern = sample(model, &mut replica_rng(mc.seed, r));
        let path = integrate_path(g, &pattern, model)?;
        let root = path.qv_sqrt();
        let mut stats = ReplicaStats {
            sup: Vec::with_capacity(qs.len()),
            terminal: Vec::with_capacity(qs.len()),
            bracket: Vec::with_capacity(qs.len()),
        };
        for &q in qs {
            stats.sup.push(sup_lq(&path, q, grid)?);
            stats.terminal.push(weighted_lp(path.terminal(), grid.weights(), q));
            stats.bracket.push(weighted_lp(&root, grid.weights(), q));
        }
        Ok(stats)
    })
}

/// `(mean of X^p)^{1/p}` for nonnegative samples `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    /// Standard error of `value`: delta method, or bootstrap if requested.
    pub std_error: f64,
    /// Mean of `X^p`.
    pub moment: f64,
    /// Standard error of the mean of `X^p`.
    pub moment_std_error: f64,
    pub replicas: usize,
    pub seed: u64,
}

/// Moment estimate from samples. Everything is computed relative to the
/// largest sample, so scaling the samples by a power of two scales
/// `value` and `std_error` exactly.
pub fn moment_estimate(samples: &[f64], p: f64, mc: &McConfig) -> MomentEstimate {
    let n = samples.len();
    let m = samples.iter().fold(0.0f64, |a, b| a.max(*b));
    let zero = MomentEstimate {
        value: 0.0,
        std_error: 0.0,
        moment: 0.0,
        moment_std_error: 0.0,
        replicas: n,
        seed: mc.seed,
    };
    if m == 0.0 || n == 0 {
        return zero;
    }
    let y: Vec<f64> = samples.iter().map(|s| (s / m).powf(p)).collect();
    let (mean, se) = mean_se(&y);
    let value = m * mean.powf(1.0 / p);
    let mut std_error = value * se / (p * mean);
    if mc.bootstrap {
        std_error = bootstrap_se(&y, p, mc.seed) * m;
    }
    let mp = m.powf(p);
    MomentEstimate {
        value,
        std_error,
        moment: mp * mean,
        moment_std_error: mp * se,
        replicas: n,
        seed: mc.seed,
    }
}

fn mean_se(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = pairwise_sum(y) / n;
    if y.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = y.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn bootstrap_se(y: &[f64], p: f64, seed: u64) -> f64 {
    let n = y.len();
    let mut rng = replica_rng(seed, u64::MAX);
    let mut stats = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut buf = vec![0.0; n];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for b in buf.iter_mut() {
            *b = y[rng.random_range(0..n)];
        }
        stats.push((pairwise_sum(&buf) / n as f64).powf(1.0 / p));
    }
    mean_se(&stats).1 * (BOOTSTRAP_RESAMPLES as f64).sqrt()
}

fn check_replicas(mc: &McConfig) -> Result<()> {
    if mc.replicas < 2 {
        return Err(McError::Invalid(format!(
            "need at least 2 replicas, got {}",
            mc.replicas
        )));
    }
    Ok(())
}

/// `(𝔼 sup_{t ≤ T} ‖M_t‖_{L_q}^p)^{1/p}` by Monte Carlo.
pub fn estimate_lhs(
    g: &Integrand,
    p: f64,
    q: f64,
    model: &RandomMeasureModel,
    grid: &SpaceGrid,
    mc: &McConfig,
) -> Result<MomentEstimate> {
    check_open_exponent(p)?;
    check_replicas(mc)?;
    let stats = simulate(g, model, grid, &[q], mc)?;
    let sups: Vec<f64> = stats.iter().map(|s| s.sup[0]).collect();
    Ok(moment_estimate(&sups, p, mc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// Both sides vanish.
    ZeroByZero,
    /// Right side vanishes but the left does not.
    Violation,
    NotApplicable,
}

/// One `(family, p, q)` comparison of both sides of the main inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub p: f64,
    pub q: f64,
    pub case: RegimeCase,
    pub family: String,
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub ratio: Option<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub status: RowStatus,
}

fn status_of(lhs: f64, rhs: f64) -> (RowStatus, Option<f64>) {
    if rhs > 0.0 {
        (RowStatus::Ok, Some(lhs / rhs))
    } else if lhs == 0.0 {
        (RowStatus::ZeroByZero, None)
    } else {
        (RowStatus::Violation, None)
    }
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Compares the Monte Carlo left side with `‖g‖_{I_{p,q}}` for every
/// family member and exponent pair. Rows are sorted by `(p, q, family)`.
pub fn ratio_report(
    families: &[(String, Integrand)],
    pq_list: &[(f64, f64)],
    model: &RandomMeasureModel,
    grid: &SpaceGrid,
    mc: &McConfig,
    opt: &OptimizerConfig,
) -> Result<Vec<RatioRow>> {
    if families.is_empty() || pq_list.is_empty() {
        return Err(McError::Invalid("empty family or exponent list".into()));
    }
    check_replicas(mc)?;
    let nu = model.nu_grid();
    let qs = distinct(pq_list.iter().map(|pq| pq.1));
    let mut rows = Vec::new();
    for (label, g) in families {
        let stats = simulate(g, model, grid, &qs, mc)?;
        for &(p, q) in pq_list {
            let case = regime_select(p, q)?.case;
            let qi = qs.iter().position(|x| *x == q).expect("q collected above");
            let sups: Vec<f64> = stats.iter().map(|s| s.sup[qi]).collect();
            let est = moment_estimate(&sups, p, mc);
            let rhs = ipq_norm_with(g, p, q, &nu, grid, opt)?;
            let (status, ratio) = status_of(est.value, rhs);
            rows.push(RatioRow {
                p,
                q,
                case,
                family: label.clone(),
                lhs: est.value,
                lhs_se: est.std_error,
                rhs,
                ratio,
                replicas: mc.replicas,
                seed: mc.seed,
                status,
            });
        }
    }
    rows.sort_by(|a, b| {
        a.p.total_cmp(&b.p)
            .then(a.q.total_cmp(&b.q))
            .then_with(|| a.family.cmp(&b.family))
    });
    Ok(rows)
}

/// The three Hilbert-space moment inequalities, with `H = L_2` on the grid
/// (a one-point grid gives `H = ℝ`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HilbertInequality {
    /// `𝔼 sup ‖M‖^p ≲ (∫ ‖g‖² dν)^{p/2}`, `0 < p ≤ 2`
    SquareFunction,
    /// `𝔼 sup ‖M‖^p ≲ ∫ ‖g‖^p dν`, `1 ≤ p ≤ 2`
    PthPower,
    /// `𝔼 sup ‖M‖^p ≲ ∫ ‖g‖^p dν + (∫ ‖g‖² dν)^{p/2}`, `p ≥ 2`
    Combined,
}

impl HilbertInequality {
    pub const ALL: [HilbertInequality; 3] = [
        HilbertInequality::SquareFunction,
        HilbertInequality::PthPower,
        HilbertInequality::Combined,
    ];

    pub fn applies(self, p: f64) -> bool {
        match self {
            HilbertInequality::SquareFunction => p > 0.0 && p <= 2.0,
            HilbertInequality::PthPower => (1.0..=2.0).contains(&p),
            HilbertInequality::Combined => p >= 2.0 && p.is_finite(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            HilbertInequality::SquareFunction => "square_function",
            HilbertInequality::PthPower => "pth_power",
            HilbertInequality::Combined => "combined",
        }
    }
}

/// `𝔼 sup ‖M‖_H^p / rhs` for one inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HilbertRatio {
    pub inequality: HilbertInequality,
    pub p: f64,
    pub lhs_moment: f64,
    pub rhs: f64,
    pub ratio: Option<f64>,
    pub ratio_se: Option<f64>,
    pub status: RowStatus,
}

/// Moment-form ratios of the three Hilbert-space inequalities.
pub fn hilbert_checks(
    g: &Integrand,
    p: f64,
    model: &RandomMeasureModel,
    grid: &SpaceGrid,
    mc: &McConfig,
) -> Result<Vec<HilbertRatio>> {
    if !(p > 0.0 && p.is_finite()) {
        return Err(McError::Invalid(format!("exponent must be positive, got {p}")));
    }
    check_replicas(mc)?;
    let stats = simulate(g, model, grid, &[2.0], mc)?;
    let sups: Vec<f64> = stats.iter().map(|s| s.sup[0]).collect();
    let est = moment_estimate(&sups, p, mc);

    let nu = model.nu_grid();
    let cell_norms: Vec<f64> = (0..g.n_cells())
        .map(|c| weighted_lp(g.cell(c), grid.weights(), 2.0))
        .collect();
    let square = pairwise_sum(
        &cell_norms
            .iter()
            .zip(nu.weights())
            .map(|(n, w)| n * n * w)
            .collect::<Vec<_>>(),
    );
    let pth = pairwise_sum(
        &cell_norms
            .iter()
            .zip(nu.weights())
            .map(|(n, w)| n.powf(p) * w)
            .collect::<Vec<_>>(),
    );

    Ok(HilbertInequality::ALL
        .iter()
        .map(|&inequality| {
            if !inequality.applies(p) {
                return HilbertRatio {
                    inequality,
                    p,
                    lhs_moment: est.moment,
                    rhs: f64::NAN,
                    ratio: None,
                    ratio_se: None,
                    status: RowStatus::NotApplicable,
                };
            }
            let rhs = match inequality {
                HilbertInequality::SquareFunction => square.powf(p / 2.0),
                HilbertInequality::PthPower => pth,
                HilbertInequality::Combined => pth + square.powf(p / 2.0),
            };
            let (status, ratio) = status_of(est.moment, rhs);
            HilbertRatio {
                inequality,
                p,
                lhs_moment: est.moment,
                rhs,
                ratio,
                ratio_se: ratio.map(|_| est.moment_std_error / rhs),
                status,
            }
        })
        .collect())
}

/// Both sides of the two-sided bracket comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BdgReport {
    pub p: f64,
    pub q: f64,
    /// `‖M^*_T‖_{L_p L_q}`
    pub sup: MomentEstimate,
    /// `‖[M, M]_T^{1/2}‖_{L_p L_q}`
    pub bracket: MomentEstimate,
    /// `sup.value / bracket.value`
    pub upper_ratio: Option<f64>,
    /// `bracket.value / sup.value`
    pub lower_ratio: Option<f64>,
    /// `𝔼 sup^p / 𝔼 ‖[M,M]^{1/2}‖^p`
    pub moment_ratio: Option<f64>,
    /// Delta-method error of `moment_ratio` from the paired samples.
    pub moment_ratio_se: Option<f64>,
}

pub fn bdg_check(
    g: &Integrand,
    p: f64,
    q: f64,
    model: &RandomMeasureModel,
    grid: &SpaceGrid,
    mc: &McConfig,
) -> Result<BdgReport> {
    check_open_exponent(p)?;
    check_replicas(mc)?;
    let stats = simulate(g, model, grid, &[q], mc)?;
    let sups: Vec<f64> = stats.iter().map(|s| s.sup[0]).collect();
    let brackets: Vec<f64> = stats.iter().map(|s| s.bracket[0]).collect();
    let sup = moment_estimate(&sups, p, mc);
    let bracket = moment_estimate(&brackets, p, mc);
    let div = |a: f64, b: f64| (b > 0.0).then(|| a / b);

    // paired samples, both relative to one common scale
    let m = sups.iter().chain(&brackets).fold(0.0f64, |a, b| a.max(*b));
    let (moment_ratio, moment_ratio_se) = if m > 0.0 {
        let a: Vec<f64> = sups.iter().map(|s| (s / m).powf(p)).collect();
        let b: Vec<f64> = brackets.iter().map(|s| (s / m).powf(p)).collect();
        let n = a.len() as f64;
        let (ma, _) = mean_se(&a);
        let (mb, _) = mean_se(&b);
        if mb > 0.0 {
            let r = ma / mb;
            let resid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| {
                let d = (x - ma) - r * (y - mb);
                d * d
            }).collect();
            let var = pairwise_sum(&resid) / (n - 1.0);
            (Some(r), Some((var / n).sqrt() / mb))
        } else {
            (None, None)
        }
    } else {
        (None, None)
    };

    Ok(BdgReport {
        p,
        q,
        upper_ratio: div(sup.value, bracket.value),
        lower_ratio: div(bracket.value, sup.value),
        sup,
        bracket,
        moment_ratio,
        moment_ratio_se,
    })
}

/// Pathwise big-jump check over many realizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DavisReport {
    pub q: f64,
    pub realizations: usize,
    /// Realizations where the big-jump variation exceeds `2 S_∞`.
    pub violations: usize,
    /// Largest `Σ_big ‖ΔM‖ / S_∞` seen.
    pub worst_ratio: f64,
}

pub fn davis_check(
    g: &Integrand,
    q: f64,
    model: &RandomMeasureModel,
    grid: &SpaceGrid,
    mc: &McConfig,
) -> Result<DavisReport> {
    check_open_exponent(q)?;
    let per = per_replica(mc, |r| {
        let pattern = sample(model, &mut replica_rng(mc.seed, r));
        let path = integrate_path(g, &pattern, model)?;
        let split = davis_split(&path.jumps, q, grid)?;
        let tv = split.big_total_variation();
        let ratio = if split.sup_jump > 0.0 { tv / split.sup_jump } else { 0.0 };
        Ok((tv <= 2.0 * split.sup_jump, ratio))
    })?;
    Ok(DavisReport {
        q,
        realizations: per.len(),
        violations: per.iter().filter(|x| !x.0).count(),
        worst_ratio: per.iter().fold(0.0f64, |a, x| a.max(x.1)),
    })
}
