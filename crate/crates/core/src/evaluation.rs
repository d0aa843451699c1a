//! Post-processing: savings percentages against the continuous baseline,
//! false-alarm and accuracy metrics, and figure-ready CSV series.

use std::collections::BTreeMap;
use std::path::Path;

use crate::catalog::ActivityId;
use crate::error::{Error, Result};
use crate::monitor::Detection;
use crate::resources::{ActivityCost, ResourceLedger, MONTHS};
use crate::scenario::{atomic_write, GroundTruthEntry};

/// A detection matches a ground-truth anomaly when it concerns the same
/// activity within this window on either side.
pub const MATCH_WINDOW_S: u64 = 86_400;

/// Savings of the adaptive monitor relative to the continuous baseline for
/// one activity (or the total row). `None` percentages mean the baseline
/// cost is zero (not applicable).
#[derive(Debug, Clone, PartialEq)]
pub struct SavingsRow {
    /// None for the total row.
    pub activity: Option<ActivityId>,
    pub sensing_pct: Option<f64>,
    pub energy_pct: Option<f64>,
    pub traffic_pct: Option<f64>,
}

fn saving_pct(adaptive: f64, continuous: f64) -> Option<f64> {
    if continuous <= 0.0 {
        None
    } else {
        Some(100.0 * (1.0 - adaptive / continuous))
    }
}

/// Per-activity and total savings rows. Activities absent from both ledgers
/// are omitted.
pub fn savings(adaptive: &ResourceLedger, continuous: &ResourceLedger) -> Result<Vec<SavingsRow>> {
    let cont_total = continuous.grand_total();
    if cont_total.monitored == 0 && cont_total.energy_mas == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    let adaptive_totals = adaptive.activity_totals();
    let continuous_totals = continuous.activity_totals();

    let mut rows = Vec::new();
    for (id, cont) in &continuous_totals {
        let adapt = adaptive_totals.get(id).copied().unwrap_or_default();
        rows.push(SavingsRow {
            activity: Some(id.clone()),
            sensing_pct: saving_pct(adapt.monitored as f64, cont.monitored as f64),
            energy_pct: saving_pct(adapt.energy_mas, cont.energy_mas),
            traffic_pct: saving_pct(adapt.traffic_bytes, cont.traffic_bytes),
        });
    }
    let adapt_total = adaptive.grand_total();
    rows.push(SavingsRow {
        activity: None,
        sensing_pct: saving_pct(adapt_total.monitored as f64, cont_total.monitored as f64),
        energy_pct: saving_pct(adapt_total.energy_mas, cont_total.energy_mas),
        traffic_pct: saving_pct(adapt_total.traffic_bytes, cont_total.traffic_bytes),
    });
    Ok(rows)
}

fn matches_ground_truth(d: &Detection, ground_truth: &[GroundTruthEntry]) -> bool {
    ground_truth
        .iter()
        .any(|g| g.activity == d.activity && g.t_s.abs_diff(d.t_s) <= MATCH_WINDOW_S)
}

fn matched_by_detection(g: &GroundTruthEntry, detections: &[Detection]) -> bool {
    detections
        .iter()
        .any(|d| d.activity == g.activity && g.t_s.abs_diff(d.t_s) <= MATCH_WINDOW_S)
}

/// Detections with no ground-truth anomaly for the same activity within
/// the matching window, binned by month.
pub fn false_alarms(detections: &[Detection], ground_truth: &[GroundTruthEntry]) -> Vec<u32> {
    let mut bins = vec![0u32; MONTHS];
    for d in detections {
        if !matches_ground_truth(d, ground_truth) {
            bins[crate::resources::month_of(d.t_s)] += 1;
        }
    }
    bins
}

/// Percentage of ground-truth anomalies matched by at least one detection.
/// `None` when the ground truth is empty.
pub fn accuracy(detections: &[Detection], ground_truth: &[GroundTruthEntry]) -> Option<f64> {
    accuracy_between(detections, ground_truth, 0, u64::MAX)
}

/// Accuracy restricted to ground-truth anomalies in `[from_s, to_s)`.
pub fn accuracy_between(
    detections: &[Detection],
    ground_truth: &[GroundTruthEntry],
    from_s: u64,
    to_s: u64,
) -> Option<f64> {
    let in_window: Vec<&GroundTruthEntry> = ground_truth
        .iter()
        .filter(|g| g.t_s >= from_s && g.t_s < to_s)
        .collect();
    if in_window.is_empty() {
        return None;
    }
    let matched = in_window
        .iter()
        .filter(|g| matched_by_detection(g, detections))
        .count();
    Some(100.0 * matched as f64 / in_window.len() as f64)
}

fn count_by_month(detections: &[Detection]) -> Vec<u32> {
    let mut bins = vec![0u32; MONTHS];
    for d in detections {
        bins[crate::resources::month_of(d.t_s)] += 1;
    }
    bins
}

/// Everything the evaluation layer derives from one adaptive/continuous run
/// pair.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub rows: Vec<SavingsRow>,
    pub false_alarms_adaptive: Vec<u32>,
    pub false_alarms_continuous: Vec<u32>,
    pub detections_adaptive: Vec<u32>,
    pub detections_continuous: Vec<u32>,
    pub accuracy_adaptive_pct: Option<f64>,
    pub accuracy_continuous_pct: Option<f64>,
    pub adaptive_cumulative: Vec<ActivityCost>,
    pub continuous_cumulative: Vec<ActivityCost>,
}

impl ComparisonReport {
    pub fn build(
        adaptive_ledger: &ResourceLedger,
        continuous_ledger: &ResourceLedger,
        adaptive_detections: &[Detection],
        continuous_detections: &[Detection],
        ground_truth: &[GroundTruthEntry],
    ) -> Result<Self> {
        Ok(ComparisonReport {
            rows: savings(adaptive_ledger, continuous_ledger)?,
            false_alarms_adaptive: false_alarms(adaptive_detections, ground_truth),
            false_alarms_continuous: false_alarms(continuous_detections, ground_truth),
            detections_adaptive: count_by_month(adaptive_detections),
            detections_continuous: count_by_month(continuous_detections),
            accuracy_adaptive_pct: accuracy(adaptive_detections, ground_truth),
            accuracy_continuous_pct: accuracy(continuous_detections, ground_truth),
            adaptive_cumulative: adaptive_ledger.cumulative(),
            continuous_cumulative: continuous_ledger.cumulative(),
        })
    }

    pub fn total_row(&self) -> &SavingsRow {
        self.rows.last().expect("savings always appends a total row")
    }

    /// The per-activity comparison table as CSV.
    pub fn comparison_csv(&self) -> String {
        let mut out =
            String::from("#comparison v1\nactivity,sensing_saving_pct,energy_saving_pct,traffic_saving_pct\n");
        for row in &self.rows {
            let name = row
                .activity
                .as_ref()
                .map(|a| a.as_str().to_owned())
                .unwrap_or_else(|| "total".into());
            out.push_str(&format!(
                "{},{},{},{}\n",
                name,
                fmt_pct(row.sensing_pct),
                fmt_pct(row.energy_pct),
                fmt_pct(row.traffic_pct)
            ));
        }
        out
    }

    /// JSON summary with the headline percentages.
    pub fn summary_json(&self) -> String {
        let total = self.total_row();
        let mut map = serde_json::Map::new();
        map.insert("sensing_saving_pct".into(), json_pct(total.sensing_pct));
        map.insert("energy_saving_pct".into(), json_pct(total.energy_pct));
        map.insert("traffic_saving_pct".into(), json_pct(total.traffic_pct));
        map.insert(
            "accuracy_adaptive_pct".into(),
            json_pct(self.accuracy_adaptive_pct),
        );
        map.insert(
            "accuracy_continuous_pct".into(),
            json_pct(self.accuracy_continuous_pct),
        );
        map.insert(
            "false_alarms_adaptive".into(),
            serde_json::to_value(&self.false_alarms_adaptive).unwrap(),
        );
        map.insert(
            "false_alarms_continuous".into(),
            serde_json::to_value(&self.false_alarms_continuous).unwrap(),
        );
        serde_json::to_string_pretty(&serde_json::Value::Object(map)).unwrap()
    }

    /// Writes the five figure series (cumulative energy, traffic and
    /// monitored activities, monthly false alarms and detections), each with
    /// adaptive and continuous columns.
    pub fn emit_series(&self, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();

        let cumulative = |name: &str, pick: fn(&ActivityCost) -> f64| -> (String, String) {
            let mut out = format!("#series v1\nmonth,adaptive_{name},continuous_{name}\n");
            for m in 0..MONTHS {
                out.push_str(&format!(
                    "{},{:.3},{:.3}\n",
                    m + 1,
                    pick(&self.adaptive_cumulative[m]),
                    pick(&self.continuous_cumulative[m])
                ));
            }
            (format!("{name}_series.csv"), out)
        };

        let monthly = |name: &str, a: &[u32], c: &[u32]| -> (String, String) {
            let mut out = format!("#series v1\nmonth,adaptive_{name},continuous_{name}\n");
            for m in 0..MONTHS {
                out.push_str(&format!("{},{},{}\n", m + 1, a[m], c[m]));
            }
            (format!("{name}_series.csv"), out)
        };

        let files = [
            cumulative("energy", |c| c.energy_mas),
            cumulative("traffic", |c| c.traffic_bytes),
            cumulative("activities", |c| c.monitored as f64),
            monthly(
                "false_alarms",
                &self.false_alarms_adaptive,
                &self.false_alarms_continuous,
            ),
            monthly(
                "detections",
                &self.detections_adaptive,
                &self.detections_continuous,
            ),
        ];
        for (name, content) in files {
            let path = dir.join(&name);
            atomic_write(&path, content.as_bytes())?;
            written.push(path);
        }
        Ok(written)
    }
}

fn fmt_pct(v: Option<f64>) -> String {
    match v {
        Some(p) => format!("{p:.4}"),
        None => "N/A".into(),
    }
}

fn json_pct(v: Option<f64>) -> serde_json::Value {
    match v {
        Some(p) => serde_json::json!(p),
        None => serde_json::Value::Null,
    }
}

/// Convenience lookup of one activity's savings row.
pub fn row_for<'a>(rows: &'a [SavingsRow], id: &ActivityId) -> Option<&'a SavingsRow> {
    rows.iter().find(|r| r.activity.as_ref() == Some(id))
}

/// Per-activity totals keyed by id, for set comparisons in tests.
pub fn totals_by_activity(ledger: &ResourceLedger) -> BTreeMap<ActivityId, ActivityCost> {
    ledger.activity_totals()
}
