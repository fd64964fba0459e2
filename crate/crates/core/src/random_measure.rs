//! The two concrete random measures: a marked Poisson process with
//! piecewise-constant intensity, and independent Bernoulli cells with fixed
//! event times.
//!
//! Both expose their compensator as a [`NuGrid`] whose cell order is the
//! one used by every [`Integrand`](crate::norms::Integrand) on the model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::norms::{pairwise_sum_by, CellId, NuGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model: {0}")]
    Invalid(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("field has {got} entries, model has {expected} cells")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Marked Poisson random measure on `[0, T] × {0..marks}` with intensity
/// `rate(k, m)` on the time cell `(e_k, e_{k+1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonModel {
    time_edges: Vec<f64>,
    marks: usize,
    rates: Vec<f64>,
}

impl PoissonModel {
    /// `time_edges` must start at 0, increase strictly and end at the horizon;
    /// `rates` is indexed `time_cell * marks + mark`.
    pub fn new(time_edges: Vec<f64>, marks: usize, rates: Vec<f64>) -> Result<Self> {
        if time_edges.len() < 2 {
            return Err(ModelError::Invalid("need at least one time cell".into()));
        }
        if time_edges[0] != 0.0 {
            return Err(ModelError::Invalid("time partition must start at 0".into()));
        }
        if time_edges.iter().any(|t| !t.is_finite())
            || time_edges.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(ModelError::Invalid(
                "time edges must be finite and strictly increasing".into(),
            ));
        }
        if marks == 0 {
            return Err(ModelError::Invalid("need at least one mark".into()));
        }
        let n_cells = (time_edges.len() - 1) * marks;
        if rates.len() != n_cells {
            return Err(ModelError::DimensionMismatch {
                expected: n_cells,
                got: rates.len(),
            });
        }
        if let Some(i) = rates.iter().position(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(ModelError::Invalid(format!(
                "rate {i} must be nonnegative and finite, got {}",
                rates[i]
            )));
        }
        let model = Self {
            time_edges,
            marks,
            rates,
        };
        if !model.nu_weights().iter().sum::<f64>().is_finite() {
            return Err(ModelError::Invalid("total intensity mass overflows".into()));
        }
        Ok(model)
    }

    /// `time_cells` equal cells on `[0, horizon]` with one rate everywhere.
    pub fn uniform(horizon: f64, time_cells: usize, marks: usize, rate: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) || time_cells == 0 {
            return Err(ModelError::Invalid(
                "horizon must be positive and time_cells ≥ 1".into(),
            ));
        }
        let edges = uniform_edges(horizon, time_cells);
        Self::new(edges, marks, vec![rate; time_cells * marks])
    }

    pub fn horizon(&self) -> f64 {
        *self.time_edges.last().unwrap()
    }

    pub fn time_edges(&self) -> &[f64] {
        &self.time_edges
    }

    pub fn time_cells(&self) -> usize {
        self.time_edges.len() - 1
    }

    pub fn marks(&self) -> usize {
        self.marks
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn n_cells(&self) -> usize {
        self.rates.len()
    }

    pub fn cell_index(&self, time_cell: usize, mark: usize) -> usize {
        time_cell * self.marks + mark
    }

    fn cell_span(&self, k: usize) -> (f64, f64) {
        (self.time_edges[k], self.time_edges[k + 1])
    }

    fn nu_weights(&self) -> Vec<f64> {
        (0..self.n_cells())
            .map(|c| {
                let (a, b) = self.cell_span(c / self.marks);
                self.rates[c] * (b - a)
            })
            .collect()
    }
}

/// Equally spaced partition of `[0, horizon]`, last edge exactly `horizon`.
pub fn uniform_edges(horizon: f64, cells: usize) -> Vec<f64> {
    (0..=cells)
        .map(|i| {
            if i == cells {
                horizon
            } else {
                horizon * i as f64 / cells as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernoulliCell {
    pub time: f64,
    pub prob: f64,
    #[serde(default)]
    pub mark: usize,
}

/// Independent cells: cell `c` carries an atom at `t_c` with probability
/// `p_c`. The compensator puts mass `p_c` at `t_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliModel {
    horizon: f64,
    cells: Vec<BernoulliCell>,
}

impl BernoulliModel {
    /// Cells must be ordered by time; equal times are allowed and jump together.
    pub fn new(horizon: f64, cells: Vec<BernoulliCell>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ModelError::Invalid("horizon must be positive and finite".into()));
        }
        for (i, c) in cells.iter().enumerate() {
            if !(c.time > 0.0 && c.time <= horizon) {
                return Err(ModelError::Invalid(format!(
                    "cell {i}: event time {} outside (0, {horizon}]",
                    c.time
                )));
            }
            if !(0.0..=1.0).contains(&c.prob) {
                return Err(ModelError::Invalid(format!(
                    "cell {i}: probability {} outside [0, 1]",
                    c.prob
                )));
            }
        }
        if cells.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(ModelError::Invalid(
                "cells must be sorted by event time".into(),
            ));
        }
        Ok(Self { horizon, cells })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn cells(&self) -> &[BernoulliCell] {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
}

/// Law of the random measure `μ` together with its compensator `ν`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RandomMeasureModel {
    Poisson(PoissonModel),
    Bernoulli(BernoulliModel),
}

impl From<PoissonModel> for RandomMeasureModel {
    fn from(m: PoissonModel) -> Self {
        RandomMeasureModel::Poisson(m)
    }
}

impl From<BernoulliModel> for RandomMeasureModel {
    fn from(m: BernoulliModel) -> Self {
        RandomMeasureModel::Bernoulli(m)
    }
}

impl RandomMeasureModel {
    pub fn horizon(&self) -> f64 {
        match self {
            RandomMeasureModel::Poisson(m) => m.horizon(),
            RandomMeasureModel::Bernoulli(m) => m.horizon(),
        }
    }

    pub fn n_cells(&self) -> usize {
        match self {
            RandomMeasureModel::Poisson(m) => m.n_cells(),
            RandomMeasureModel::Bernoulli(m) => m.n_cells(),
        }
    }

    /// The compensator: `rate·Δt` per Poisson cell, `p_c` per Bernoulli cell.
    pub fn nu_grid(&self) -> NuGrid {
        let (cells, weights) = match self {
            RandomMeasureModel::Poisson(m) => {
                let cells = (0..m.n_cells())
                    .map(|c| CellId {
                        time_cell: c / m.marks,
                        mark: c % m.marks,
                    })
                    .collect();
                (cells, m.nu_weights())
            }
            RandomMeasureModel::Bernoulli(m) => {
                let cells = m
                    .cells
                    .iter()
                    .enumerate()
                    .map(|(i, c)| CellId {
                        time_cell: i,
                        mark: c.mark,
                    })
                    .collect();
                (cells, m.cells.iter().map(|c| c.prob).collect())
            }
        };
        NuGrid::new(cells, weights).expect("validated at model construction")
    }
}

/// One atom of a sampled point pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub time: f64,
    pub mark: usize,
    /// Compensator cell the atom was drawn in.
    pub cell: usize,
}

/// A realization of `μ`: atoms sorted by time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    pub atoms: Vec<Atom>,
}

impl PointPattern {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Random stream for one replica. ChaCha is counter based: `(seed, replica)`
/// selects the key and the stream, so the numbers a replica sees do not
/// depend on which thread runs it or in which order.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Draws one point pattern from `model`.
pub fn sample<R: Rng + ?Sized>(model: &RandomMeasureModel, rng: &mut R) -> PointPattern {
    match model {
        RandomMeasureModel::Poisson(m) => sample_poisson(m, rng),
        RandomMeasureModel::Bernoulli(m) => {
            let mut atoms = Vec::new();
            for (cell, c) in m.cells.iter().enumerate() {
                let u: f64 = rng.random();
                if u < c.prob {
                    atoms.push(Atom {
                        time: c.time,
                        mark: c.mark,
                        cell,
                    });
                }
            }
            PointPattern { atoms }
        }
    }
}

fn sample_poisson<R: Rng + ?Sized>(m: &PoissonModel, rng: &mut R) -> PointPattern {
    let mut atoms = Vec::new();
    for k in 0..m.time_cells() {
        let (a, b) = m.cell_span(k);
        for mark in 0..m.marks {
            let cell = m.cell_index(k, mark);
            let lambda = m.rates[cell] * (b - a);
            if lambda <= 0.0 {
                continue;
            }
            let count = Poisson::new(lambda)
                .expect("positive finite mean")
                .sample(rng) as u64;
            for _ in 0..count {
                let u: f64 = rng.random();
                // u ∈ [0, 1) puts the atom in (a, b]
                let time = b - u * (b - a);
                atoms.push(Atom { time, mark, cell });
            }
        }
    }
    atoms.sort_by(|x, y| x.time.total_cmp(&y.time).then(x.cell.cmp(&y.cell)));
    separate_ties(&mut atoms, m.horizon());
    PointPattern { atoms }
}

/// Makes atom times strictly increasing by moving tied atoms one ulp apart,
/// keeping everything inside `(0, horizon]`.
fn separate_ties(atoms: &mut [Atom], horizon: f64) {
    for i in 1..atoms.len() {
        if atoms[i].time <= atoms[i - 1].time {
            atoms[i].time = atoms[i - 1].time.next_up();
        }
    }
    if let Some(last) = atoms.last_mut() {
        if last.time > horizon {
            last.time = horizon;
            for i in (0..atoms.len() - 1).rev() {
                if atoms[i].time >= atoms[i + 1].time {
                    atoms[i].time = atoms[i + 1].time.next_down();
                }
            }
        }
    }
}

/// `∫_0^t ∫_Z field dν` for a scalar field over the model's cells.
pub fn compensator_cumulative(field: &[f64], model: &RandomMeasureModel, t: f64) -> Result<f64> {
    let horizon = model.horizon();
    if !(0.0..=horizon).contains(&t) {
        return Err(ModelError::TimeOutOfRange { t, horizon });
    }
    if field.len() != model.n_cells() {
        return Err(ModelError::DimensionMismatch {
            expected: model.n_cells(),
            got: field.len(),
        });
    }
    Ok(match model {
        RandomMeasureModel::Poisson(m) => pairwise_sum_by(field.len(), |c| {
            let (a, b) = m.cell_span(c / m.marks);
            let elapsed = (t.min(b) - a).max(0.0);
            field[c] * m.rates[c] * elapsed
        }),
        RandomMeasureModel::Bernoulli(m) => pairwise_sum_by(field.len(), |c| {
            let cell = &m.cells[c];
            if cell.time <= t {
                cell.prob * field[c]
            } else {
                0.0
            }
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson(rate: f64, horizon: f64) -> RandomMeasureModel {
        PoissonModel::uniform(horizon, 1, 1, rate).unwrap().into()
    }

    #[test]
    fn null_intensity_gives_empty_pattern() {
        let model: RandomMeasureModel = PoissonModel::uniform(2.0, 3, 2, 0.0).unwrap().into();
        let mut rng = replica_rng(1, 0);
        for _ in 0..100 {
            assert!(sample(&model, &mut rng).is_empty());
        }
    }

    #[test]
    fn poisson_mean_count() {
        // λT = 2 · 1.5 = 3, SE of the mean = sqrt(3 / 10^4)
        let model = poisson(2.0, 1.5);
        let n = 10_000u64;
        let total: usize = (0..n)
            .map(|r| sample(&model, &mut replica_rng(7, r)).len())
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 3.0).abs() < 3.0 * (3.0 / n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn sampling_is_deterministic_per_replica() {
        let model: RandomMeasureModel = PoissonModel::uniform(1.0, 4, 3, 5.0).unwrap().into();
        let a = sample(&model, &mut replica_rng(99, 12));
        let b = sample(&model, &mut replica_rng(99, 12));
        let c = sample(&model, &mut replica_rng(99, 13));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn poisson_atoms_are_sorted_and_in_positive_mass_cells() {
        let rates = vec![0.0, 3.0, 4.0, 0.0, 1.0, 2.0];
        let model: RandomMeasureModel = PoissonModel::new(vec![0.0, 0.3, 0.5, 1.0], 2, rates)
            .unwrap()
            .into();
        let nu = model.nu_grid();
        for r in 0..500 {
            let pat = sample(&model, &mut replica_rng(3, r));
            for w in pat.atoms.windows(2) {
                assert!(w[0].time < w[1].time);
            }
            for a in &pat.atoms {
                assert!(nu.weights()[a.cell] > 0.0);
                assert!(a.time > 0.0 && a.time <= 1.0);
            }
        }
    }

    #[test]
    fn ties_are_separated_inside_horizon() {
        let mut atoms = vec![
            Atom { time: 1.0, mark: 0, cell: 0 },
            Atom { time: 1.0, mark: 1, cell: 1 },
            Atom { time: 1.0, mark: 2, cell: 2 },
        ];
        separate_ties(&mut atoms, 1.0);
        assert_eq!(atoms[2].time, 1.0);
        assert!(atoms[0].time < atoms[1].time && atoms[1].time < atoms[2].time);
    }

    #[test]
    fn compensator_unit_intensity() {
        let model = poisson(1.0, 1.0);
        assert_eq!(compensator_cumulative(&[1.0], &model, 1.0).unwrap(), 1.0);
        assert_eq!(compensator_cumulative(&[1.0], &model, 0.25).unwrap(), 0.25);
    }

    #[test]
    fn compensator_bernoulli_step() {
        let model: RandomMeasureModel = BernoulliModel::new(
            1.0,
            vec![BernoulliCell { time: 0.5, prob: 0.5, mark: 0 }],
        )
        .unwrap()
        .into();
        assert_eq!(compensator_cumulative(&[1.0], &model, 0.4).unwrap(), 0.0);
        assert_eq!(compensator_cumulative(&[1.0], &model, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn compensator_at_horizon_is_total_nu_integral() {
        let rates = vec![0.7, 1.3, 2.9, 0.1, 4.0, 0.0];
        let model: RandomMeasureModel = PoissonModel::new(vec![0.0, 0.2, 0.9, 2.0], 2, rates)
            .unwrap()
            .into();
        let field = [0.3, -1.2, 2.5, 7.0, -0.4, 9.9];
        let nu = model.nu_grid();
        let direct: f64 = field.iter().zip(nu.weights()).map(|(f, w)| f * w).sum();
        let got = compensator_cumulative(&field, &model, 2.0).unwrap();
        assert!((got - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn compensator_rejects_time_outside_horizon() {
        let model = poisson(1.0, 1.0);
        assert!(matches!(
            compensator_cumulative(&[1.0], &model, 1.5),
            Err(ModelError::TimeOutOfRange { .. })
        ));
        assert!(compensator_cumulative(&[1.0], &model, -0.1).is_err());
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(PoissonModel::new(vec![0.0, 1.0], 1, vec![-1.0]).is_err());
        assert!(PoissonModel::new(vec![0.1, 1.0], 1, vec![1.0]).is_err());
        assert!(PoissonModel::new(vec![0.0, 1.0, 1.0], 1, vec![1.0, 1.0]).is_err());
        assert!(PoissonModel::new(vec![0.0, 1.0], 2, vec![1.0]).is_err());
        let cell = |time, prob| BernoulliCell { time, prob, mark: 0 };
        assert!(BernoulliModel::new(1.0, vec![cell(0.5, 1.5)]).is_err());
        assert!(BernoulliModel::new(1.0, vec![cell(0.0, 0.5)]).is_err());
        assert!(BernoulliModel::new(1.0, vec![cell(0.6, 0.5), cell(0.4, 0.5)]).is_err());
        assert!(BernoulliModel::new(1.0, vec![cell(0.5, 0.5), cell(0.5, 0.5)]).is_ok());
    }

    #[test]
    fn nu_weights_are_rate_times_length() {
        let model: RandomMeasureModel = PoissonModel::new(vec![0.0, 0.5, 2.0], 1, vec![2.0, 3.0])
            .unwrap()
            .into();
        assert_eq!(model.nu_grid().weights(), &[1.0, 4.5]);
    }
}
