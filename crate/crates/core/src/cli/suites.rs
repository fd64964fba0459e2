//! Verification suites and their pass/fail rows.

use rand::Rng;
use serde::Serialize;

use crate::montecarlo::{
    bdg_check, davis_check, hilbert_checks, ratio_report, McConfig, RatioRow, RowStatus,
};
use crate::norms::{mixed_norm, lq_norm, Integrand, Outer, SpaceGrid};
use crate::random_measure::{replica_rng, RandomMeasureModel};
use crate::regimes::OptimizerConfig;

use super::config::BandsConfig;
use super::report::fmt_float;

/// Relative slack allowed in the deterministic norm inequalities.
pub const LEMMA_TOLERANCE: f64 = 1e-10;

/// One row of `checks.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub suite: String,
    pub case: String,
    pub value: Option<f64>,
    pub bound: String,
    pub pass: bool,
}

fn band_label(lo: f64, hi: f64) -> String {
    format!("in [{}, {}]", fmt_float(lo), fmt_float(hi))
}

fn at_most(hi: f64) -> String {
    format!("<= {}", fmt_float(hi))
}

pub struct Setting<'a> {
    pub families: &'a [(String, Integrand)],
    pub model: &'a RandomMeasureModel,
    pub grid: &'a SpaceGrid,
    pub mc: &'a McConfig,
    pub bands: &'a BandsConfig,
}

pub type SuiteResult<T> = Result<T, String>;

pub fn ratios(
    s: &Setting<'_>,
    pq: &[(f64, f64)],
    opt: &OptimizerConfig,
) -> SuiteResult<(Vec<RatioRow>, Vec<CheckRow>)> {
    let rows = ratio_report(s.families, pq, s.model, s.grid, s.mc, opt).map_err(|e| e.to_string())?;
    let [lo, hi] = s.bands.ratio;
    let mut checks = Vec::new();
    for r in &rows {
        let pass = match r.status {
            RowStatus::Ok => r.ratio.is_some_and(|x| lo <= x && x <= hi),
            RowStatus::ZeroByZero => true,
            _ => false,
        };
        checks.push(CheckRow {
            suite: "ratio".into(),
            case: format!("p={};q={};family={}", r.p, r.q, r.family),
            value: r.ratio,
            bound: band_label(lo, hi),
            pass,
        });
    }
    let mut i = 0;
    while i < rows.len() {
        let (p, q) = (rows[i].p, rows[i].q);
        let mut j = i;
        let (mut min, mut max) = (f64::INFINITY, 0.0f64);
        while j < rows.len() && rows[j].p == p && rows[j].q == q {
            if let Some(x) = rows[j].ratio {
                min = min.min(x);
                max = max.max(x);
            }
            j += 1;
        }
        if min.is_finite() {
            let spread = max / min;
            checks.push(CheckRow {
                suite: "spread".into(),
                case: format!("p={p};q={q}"),
                value: Some(spread),
                bound: at_most(s.bands.spread),
                pass: spread <= s.bands.spread,
            });
        }
        i = j;
    }
    Ok((rows, checks))
}

pub fn hilbert(s: &Setting<'_>, ps: &[f64]) -> SuiteResult<Vec<CheckRow>> {
    let mut out = Vec::new();
    for (label, g) in s.families {
        for &p in ps {
            let report = hilbert_checks(g, p, s.model, s.grid, s.mc).map_err(|e| e.to_string())?;
            for h in report {
                let pass = match h.status {
                    RowStatus::NotApplicable => continue,
                    RowStatus::ZeroByZero => true,
                    RowStatus::Ok => h.ratio.is_some_and(|x| x <= s.bands.hilbert),
                    RowStatus::Violation => false,
                };
                out.push(CheckRow {
                    suite: "hilbert".into(),
                    case: format!("family={label};p={p};inequality={}", h.inequality.label()),
                    value: h.ratio,
                    bound: at_most(s.bands.hilbert),
                    pass,
                });
            }
        }
    }
    Ok(out)
}

pub fn bdg(s: &Setting<'_>, pq: &[(f64, f64)]) -> SuiteResult<Vec<CheckRow>> {
    let [lo, hi] = s.bands.bdg;
    let mut out = Vec::new();
    for (label, g) in s.families {
        for &(p, q) in pq {
            let r = bdg_check(g, p, q, s.model, s.grid, s.mc).map_err(|e| e.to_string())?;
            let zero = r.sup.value == 0.0 && r.bracket.value == 0.0;
            for (dir, v) in [("upper", r.upper_ratio), ("lower", r.lower_ratio)] {
                out.push(CheckRow {
                    suite: "bdg".into(),
                    case: format!("family={label};p={p};q={q};direction={dir}"),
                    value: v,
                    bound: band_label(lo, hi),
                    pass: zero || v.is_some_and(|x| lo <= x && x <= hi),
                });
            }
        }
    }
    Ok(out)
}

pub fn davis(s: &Setting<'_>, qs: &[f64], realizations: usize) -> SuiteResult<Vec<CheckRow>> {
    let mc = McConfig {
        replicas: realizations,
        ..*s.mc
    };
    let mut out = Vec::new();
    for (label, g) in s.families {
        for &q in qs {
            let r = davis_check(g, q, s.model, s.grid, &mc).map_err(|e| e.to_string())?;
            out.push(CheckRow {
                suite: "davis".into(),
                case: format!("family={label};q={q};realizations={}", r.realizations),
                value: Some(r.worst_ratio),
                bound: at_most(2.0),
                pass: r.violations == 0,
            });
        }
    }
    Ok(out)
}

/// Largest relative excess of `lhs` over `rhs` for the interpolation
/// inequality `‖f‖_q^α ≤ ‖f‖_r^α + ‖f‖_p^α` (`r < q < p`) on random
/// weighted grids.
pub fn interpolation_excess(instances: usize, seed: u64) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..instances {
        let mut rng = replica_rng(seed, i as u64);
        let n = rng.random_range(1..=6);
        let grid = SpaceGrid::new((0..n).map(|_| rng.random_range(0.1..3.0)).collect())
            .expect("positive weights");
        let f: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-1.0..1.0) * 10f64.powf(rng.random_range(-3.0..3.0)))
            .collect();
        let r = rng.random_range(1.0..4.0);
        let q = r + rng.random_range(0.01..3.0);
        let p = q + rng.random_range(0.01..4.0);
        let alpha = [0.5, 1.0, 2.0][rng.random_range(0..3)];
        let norm = |e: f64| lq_norm(&f, e, &grid).expect("valid exponent").powf(alpha);
        let rhs = norm(r) + norm(p);
        worst = worst.max((norm(q) - rhs) / rhs.max(f64::MIN_POSITIVE));
    }
    worst
}

/// Largest relative excess for `‖f‖_{L_p(L_q)} ≤ ‖f‖_{L_q(L_p)}`, `p ≥ q`:
/// the outer `L_p` over rows of the inner `L_q` over columns, against the
/// outer `L_q` over columns of the inner `L_p` over rows.
pub fn holder_minkowski_excess(instances: usize, seed: u64) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..instances {
        let mut rng = replica_rng(seed ^ 0x484d, i as u64);
        let rows = rng.random_range(1..=5);
        let cols = rng.random_range(1..=5);
        let rw: Vec<f64> = (0..rows).map(|_| rng.random_range(0.1..3.0)).collect();
        let cw: Vec<f64> = (0..cols).map(|_| rng.random_range(0.1..3.0)).collect();
        let f: Vec<f64> = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0) * 10f64.powf(rng.random_range(-2.0..2.0)))
            .collect();
        let q = rng.random_range(1.0..4.0);
        let p = q + rng.random_range(0.0..4.0);
        let lhs = mixed_norm(&f, rows, cols, &rw, &cw, Outer::Rows, p, q).expect("valid field");
        let rhs = mixed_norm(&f, rows, cols, &rw, &cw, Outer::Cols, q, p).expect("valid field");
        worst = worst.max((lhs - rhs) / rhs.max(f64::MIN_POSITIVE));
    }
    worst
}

pub fn lemma(instances: usize, seed: u64) -> Vec<CheckRow> {
    [
        ("interpolation", interpolation_excess(instances, seed)),
        ("holder_minkowski", holder_minkowski_excess(instances, seed)),
    ]
    .into_iter()
    .map(|(case, excess)| CheckRow {
        suite: "lemma".into(),
        case: format!("{case};instances={instances}"),
        value: Some(excess),
        bound: at_most(LEMMA_TOLERANCE),
        pass: excess <= LEMMA_TOLERANCE,
    })
    .collect()
}
