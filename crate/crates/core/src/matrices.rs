//! Time-of-day transition matrices for the scenario generator.
//!
//! Five matrices cover the periods 8-11, 11-14, 14-17, 17-22 and 22-8
//! o'clock; two more replace the period matrices for the whole of Friday and
//! Sunday. The defaults shipped here are synthetic: they encode plausible
//! daily rhythms (washing in the morning, eating around noon, housekeeping
//! on Friday, a long outing on Sunday) and are not fitted to any dataset.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::catalog::{ActivityId, Catalog, SECONDS_PER_DAY};
use crate::error::{Error, Result};

const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Identifier of one transition matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MatrixId {
    /// 8:00-11:00
    M1,
    /// 11:00-14:00
    M2,
    /// 14:00-17:00
    M3,
    /// 17:00-22:00
    M4,
    /// 22:00-8:00 (wraps midnight)
    M5,
    /// All of Friday
    M6,
    /// All of Sunday
    M7,
}

impl MatrixId {
    pub const ALL: [MatrixId; 7] = [
        MatrixId::M1,
        MatrixId::M2,
        MatrixId::M3,
        MatrixId::M4,
        MatrixId::M5,
        MatrixId::M6,
        MatrixId::M7,
    ];

    pub fn key(self) -> &'static str {
        match self {
            MatrixId::M1 => "m1",
            MatrixId::M2 => "m2",
            MatrixId::M3 => "m3",
            MatrixId::M4 => "m4",
            MatrixId::M5 => "m5",
            MatrixId::M6 => "m6",
            MatrixId::M7 => "m7",
        }
    }

    fn index(self) -> usize {
        match self {
            MatrixId::M1 => 0,
            MatrixId::M2 => 1,
            MatrixId::M3 => 2,
            MatrixId::M4 => 3,
            MatrixId::M5 => 4,
            MatrixId::M6 => 5,
            MatrixId::M7 => 6,
        }
    }
}

/// Day of week; day 0 of a scenario is a Monday.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weekday {
    Monday,
    Tuesday,
    Wednesday,
    Thursday,
    Friday,
    Saturday,
    Sunday,
}

impl Weekday {
    pub fn from_day_index(day: u64) -> Self {
        match day % 7 {
            0 => Weekday::Monday,
            1 => Weekday::Tuesday,
            2 => Weekday::Wednesday,
            3 => Weekday::Thursday,
            4 => Weekday::Friday,
            5 => Weekday::Saturday,
            _ => Weekday::Sunday,
        }
    }
}

/// Picks the matrix for a clock time. The Friday and Sunday matrices take
/// precedence for the whole day; otherwise the period covering the time of
/// day applies.
pub fn select_matrix(seconds_in_day: u64, weekday: Weekday) -> MatrixId {
    match weekday {
        Weekday::Friday => MatrixId::M6,
        Weekday::Sunday => MatrixId::M7,
        _ => {
            let hour = (seconds_in_day % SECONDS_PER_DAY) / 3600;
            match hour {
                8..=10 => MatrixId::M1,
                11..=13 => MatrixId::M2,
                14..=16 => MatrixId::M3,
                17..=21 => MatrixId::M4,
                _ => MatrixId::M5,
            }
        }
    }
}

/// Row-stochastic transition matrix over a fixed action set.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn new(id: MatrixId, rows: Vec<Vec<f64>>) -> Result<Self> {
        for (i, row) in rows.iter().enumerate() {
            if row.len() != rows.len() {
                return Err(Error::MatrixShape {
                    expected: format!("{0}x{0}", rows.len()),
                    got: format!("row {i} has {} entries", row.len()),
                });
            }
            if row.iter().any(|p| *p < 0.0 || !p.is_finite()) {
                return Err(Error::NotRowStochastic {
                    id: id.key().into(),
                    row: i,
                    sum: f64::NAN,
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::NotRowStochastic {
                    id: id.key().into(),
                    row: i,
                    sum,
                });
            }
        }
        Ok(TransitionMatrix { rows })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// The seven matrices plus the shared action list.
#[derive(Debug, Clone)]
pub struct MatrixSet {
    actions: Vec<ActivityId>,
    matrices: Vec<TransitionMatrix>,
}

#[derive(Deserialize)]
struct RawMatrixSet {
    actions: Vec<ActivityId>,
    matrices: BTreeMap<String, Vec<Vec<f64>>>,
}

impl MatrixSet {
    pub fn new(actions: Vec<ActivityId>, by_id: BTreeMap<MatrixId, TransitionMatrix>) -> Result<Self> {
        let mut matrices = Vec::with_capacity(7);
        for id in MatrixId::ALL {
            let m = by_id
                .get(&id)
                .ok_or_else(|| Error::Catalog(format!("missing transition matrix {}", id.key())))?;
            if m.len() != actions.len() {
                return Err(Error::MatrixShape {
                    expected: format!("{0}x{0}", actions.len()),
                    got: format!("{} is {1}x{1}", id.key(), m.len()),
                });
            }
            matrices.push(m.clone());
        }
        Ok(MatrixSet { actions, matrices })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawMatrixSet = serde_json::from_str(text)?;
        let mut by_id = BTreeMap::new();
        for id in MatrixId::ALL {
            let rows = raw
                .matrices
                .get(id.key())
                .ok_or_else(|| Error::Catalog(format!("missing transition matrix {}", id.key())))?;
            by_id.insert(id, TransitionMatrix::new(id, rows.clone())?);
        }
        MatrixSet::new(raw.actions, by_id)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let mut map = serde_json::Map::new();
        map.insert(
            "actions".into(),
            serde_json::to_value(&self.actions).unwrap(),
        );
        let mut mats = serde_json::Map::new();
        for id in MatrixId::ALL {
            mats.insert(
                id.key().into(),
                serde_json::to_value(&self.matrices[id.index()].rows).unwrap(),
            );
        }
        map.insert("matrices".into(), serde_json::Value::Object(mats));
        serde_json::to_string_pretty(&serde_json::Value::Object(map)).unwrap()
    }

    pub fn actions(&self) -> &[ActivityId] {
        &self.actions
    }

    pub fn action_index(&self, id: &ActivityId) -> Option<usize> {
        self.actions.iter().position(|a| a == id)
    }

    pub fn matrix(&self, id: MatrixId) -> &TransitionMatrix {
        &self.matrices[id.index()]
    }

    /// Validates that every action is known to the catalog.
    pub fn check_against(&self, catalog: &Catalog) -> Result<()> {
        for a in &self.actions {
            if catalog.resolve(a).is_none() {
                return Err(Error::UnknownActivity(a.0.clone()));
            }
        }
        Ok(())
    }

    /// Synthetic default matrices over the catalog's activities.
    pub fn synthetic_default(catalog: &Catalog) -> Self {
        let actions: Vec<ActivityId> =
            catalog.activities().iter().map(|a| a.id.clone()).collect();
        let n = actions.len();
        let mut by_id = BTreeMap::new();
        for id in MatrixId::ALL {
            let weights: Vec<f64> = actions
                .iter()
                .map(|a| period_weight(a.as_str(), id))
                .collect();
            let mut rows = Vec::with_capacity(n);
            for i in 0..n {
                // Slight self-avoidance keeps runs of the same action rare.
                let mut row: Vec<f64> = weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| if i == j { w * 0.2 } else { *w })
                    .collect();
                let sum: f64 = row.iter().sum();
                for p in &mut row {
                    *p /= sum;
                }
                // Force the row to sum to exactly 1 within tolerance.
                let correction: f64 = 1.0 - row.iter().sum::<f64>();
                row[0] += correction;
                rows.push(row);
            }
            by_id.insert(id, TransitionMatrix::new(id, rows).expect("synthetic rows"));
        }
        MatrixSet::new(actions, by_id).expect("synthetic matrix set")
    }
}

/// Relative weight of reaching an activity during a period. Tuned for
/// plausibility only.
fn period_weight(activity: &str, id: MatrixId) -> f64 {
    use MatrixId::*;
    let base = match activity {
        "eating" => 2.0,
        "toileting" => 3.0,
        "meal_preparation" => 1.5,
        "medication_use" => 1.5,
        "walking_inside" => 3.0,
        "transfer" => 1.5,
        "stairs" => 0.8,
        "watching_tv" => 1.2,
        "reading" => 0.8,
        "telephone_use" => 0.8,
        "sleeping" => 0.25,
        "weight" => 0.4,
        "washing" => 0.6,
        "dressing" => 0.6,
        "grooming" => 0.6,
        "housekeeping" => 0.6,
        "go_outside" => 0.15,
        "shopping" => 0.1,
        "laundry" => 0.15,
        "transportation" => 0.1,
        "vision" | "hearing" | "speaking" | "memory" | "comprehension" | "judgement"
        | "behavior" | "budgeting" => 0.15,
        "orientation" => 0.3,
        _ => 0.2,
    };
    let boost = match (activity, id) {
        // Mornings: hygiene, dressing, breakfast, weighing.
        ("washing", M1) => 5.0,
        ("grooming", M1) => 4.0,
        ("dressing", M1) => 4.0,
        ("weight", M1) => 3.0,
        ("eating", M1) => 1.5,
        ("medication_use", M1) => 2.0,
        ("sleeping", M1 | M2 | M3 | M4) => 0.2,
        // Lunch hours.
        ("eating", M2) => 3.0,
        ("meal_preparation", M2) => 2.5,
        // Afternoon: errands and chores.
        ("housekeeping", M3) => 2.0,
        ("laundry", M3) => 4.0,
        ("shopping", M3) => 4.0,
        ("go_outside", M3) => 3.0,
        ("transportation", M3) => 4.0,
        // Evenings: dinner, television, questionnaires.
        ("eating", M4) => 2.0,
        ("meal_preparation", M4) => 2.0,
        ("watching_tv", M4) => 3.0,
        ("reading", M4) => 2.0,
        ("medication_use", M4) => 2.0,
        (
            "vision" | "hearing" | "speaking" | "memory" | "comprehension" | "judgement"
            | "behavior" | "budgeting",
            M4,
        ) => 4.0,
        // Night: sleeping dominates.
        ("sleeping", M5) => 160.0,
        ("toileting", M5) => 1.5,
        // Friday: housekeeping day, otherwise a blend of the day periods.
        ("housekeeping", M6) => 6.0,
        ("laundry", M6) => 4.0,
        ("eating", M6) => 2.0,
        ("washing", M6) => 2.0,
        ("sleeping", M6) => 20.0,
        // Sunday: long outing.
        ("go_outside", M7) => 12.0,
        ("transportation", M7) => 4.0,
        ("eating", M7) => 2.0,
        ("washing", M7) => 2.0,
        ("sleeping", M7) => 20.0,
        _ => 1.0,
    };
    base * boost
}
