//! Named integrand generators.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::norms::{Integrand, SpaceGrid};
use crate::random_measure::{replica_rng, RandomMeasureModel};

use super::config::Diagnostic;

pub const KNOWN_FAMILIES: [&str; 4] = ["constant", "separable", "single_cell_spike", "heavy_tail"];

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub name: String,
    pub kind: String,
    #[serde(default = "one")]
    pub scale: f64,
    /// `separable`: factor per time cell (Bernoulli: per cell).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_profile: Option<Vec<f64>>,
    /// `separable`: factor per mark.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mark_profile: Option<Vec<f64>>,
    /// `separable`: factor per space point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space_profile: Option<Vec<f64>>,
    /// `single_cell_spike`: the cell carrying the spike.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<usize>,
    /// `single_cell_spike`: the space point carrying the spike.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<usize>,
    /// `heavy_tail`: Pareto index `α` of `|g| = scale · U^{-1/α}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_exponent: Option<f64>,
    /// `heavy_tail`: seed of the draw.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// `(time index, mark index)` of every cell, and the number of each.
fn cell_coords(model: &RandomMeasureModel) -> (Vec<(usize, usize)>, usize, usize) {
    match model {
        RandomMeasureModel::Poisson(m) => {
            let coords = (0..m.time_cells())
                .flat_map(|k| (0..m.marks()).map(move |j| (k, j)))
                .collect();
            (coords, m.time_cells(), m.marks())
        }
        RandomMeasureModel::Bernoulli(m) => {
            let coords: Vec<_> = m.cells().iter().enumerate().map(|(c, cell)| (c, cell.mark)).collect();
            let marks = m.cells().iter().map(|c| c.mark + 1).max().unwrap_or(1);
            (coords, m.cells().len(), marks)
        }
    }
}

impl FamilyConfig {
    pub fn check(&self, index: usize, model: &RandomMeasureModel, grid: &SpaceGrid) -> Vec<Diagnostic> {
        let key = |field: &str| format!("families[{index}].{field}");
        let mut out = Vec::new();
        let mut push = |field: &str, message: String| {
            out.push(Diagnostic {
                key: key(field),
                message,
            })
        };
        if !self.scale.is_finite() {
            push("scale", format!("must be finite, got {}", self.scale));
        }
        let (_, times, marks) = cell_coords(model);
        match self.kind.as_str() {
            "separable" => {
                for (field, profile, len) in [
                    ("time_profile", &self.time_profile, times),
                    ("mark_profile", &self.mark_profile, marks),
                    ("space_profile", &self.space_profile, grid.len()),
                ] {
                    if let Some(v) = profile {
                        if v.len() != len {
                            push(field, format!("needs {len} entries, got {}", v.len()));
                        } else if v.iter().any(|x| !x.is_finite()) {
                            push(field, "entries must be finite".into());
                        }
                    }
                }
            }
            "single_cell_spike" => {
                let cells = model.n_cells();
                match self.cell {
                    Some(c) if c >= cells => push("cell", format!("must be below {cells}, got {c}")),
                    _ => {}
                }
                match self.point {
                    Some(x) if x >= grid.len() => {
                        push("point", format!("must be below {}, got {x}", grid.len()))
                    }
                    _ => {}
                }
            }
            "heavy_tail" => match self.tail_exponent {
                Some(a) if a.is_finite() && a > 0.0 => {}
                Some(a) => push("tail_exponent", format!("must be positive, got {a}")),
                None => push("tail_exponent", "required for heavy_tail".into()),
            },
            _ => {}
        }
        out
    }

    /// The integrand on `model`'s cells and `grid`'s points. Assumes
    /// [`FamilyConfig::check`] passed.
    pub fn build(&self, model: &RandomMeasureModel, grid: &SpaceGrid) -> Integrand {
        let (coords, _, _) = cell_coords(model);
        let np = grid.len();
        let s = self.scale;
        let g = match self.kind.as_str() {
            "constant" => Integrand::from_fn(coords.len(), np, |_, _| s),
            "separable" => {
                let pick = |v: &Option<Vec<f64>>, i: usize| v.as_ref().map_or(1.0, |v| v[i]);
                Integrand::from_fn(coords.len(), np, |c, x| {
                    let (k, m) = coords[c];
                    s * pick(&self.time_profile, k) * pick(&self.mark_profile, m) * pick(&self.space_profile, x)
                })
            }
            "single_cell_spike" => {
                let cell = self.cell.unwrap_or(0);
                let point = self.point.unwrap_or(0);
                Integrand::from_fn(coords.len(), np, |c, x| if (c, x) == (cell, point) { s } else { 0.0 })
            }
            "heavy_tail" => {
                let alpha = self.tail_exponent.unwrap_or(1.0);
                let mut rng = replica_rng(self.seed.unwrap_or(0), 0);
                Integrand::from_fn(coords.len(), np, |_, _| {
                    let u: f64 = 1.0 - rng.random::<f64>();
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    s * sign * u.powf(-1.0 / alpha)
                })
            }
            other => unreachable!("family kind `{other}` passed validation"),
        };
        g.expect("generated values are finite")
    }
}
