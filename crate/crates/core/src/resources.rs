//! Energy and network-traffic accounting for monitoring windows, and the
//! continuous-monitoring baseline.
//!
//! Energy is tracked in mA·s per sensor class (multiply by the class voltage
//! for Joules), traffic in bytes. A sensor is in exactly one mode at any
//! instant: transmitting, idle/receiving while a window is active, or
//! sleeping.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{ActivityId, Catalog, SensorClass, SECONDS_PER_DAY};
use crate::error::{Error, Result};
use crate::scenario::ScenarioEvent;

/// Accounting buckets: twelve 30-day months, the last one absorbing the
/// 5-day year tail.
pub const MONTHS: usize = 12;
pub const MONTH_S: u64 = 30 * SECONDS_PER_DAY;

pub fn month_of(t_s: u64) -> usize {
    ((t_s / MONTH_S) as usize).min(MONTHS - 1)
}

/// Electrical and framing parameters of one sensor class.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SensorClassParams {
    pub tx_ma: f64,
    pub idle_ma: f64,
    pub sleep_ma: f64,
    pub sample_rate_hz: f64,
    pub payload_bytes: f64,
    pub voltage_v: f64,
}

impl SensorClassParams {
    fn validate(&self, class: &str) -> Result<()> {
        let ok = self.tx_ma >= self.idle_ma
            && self.idle_ma >= self.sleep_ma
            && self.sleep_ma > 0.0
            && self.sample_rate_hz > 0.0
            && self.payload_bytes > 0.0;
        if !ok {
            return Err(Error::Catalog(format!(
                "sensor class `{class}`: requires tx >= idle >= sleep > 0, positive rate and payload"
            )));
        }
        Ok(())
    }
}

/// Parameters for all three classes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SensorParams {
    pub low: SensorClassParams,
    pub medium: SensorClassParams,
    pub high: SensorClassParams,
}

impl SensorParams {
    pub fn class(&self, class: SensorClass) -> &SensorClassParams {
        match class {
            SensorClass::Low => &self.low,
            SensorClass::Medium => &self.medium,
            SensorClass::High => &self.high,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let params: SensorParams = serde_json::from_str(text)?;
        params.low.validate("low")?;
        params.medium.validate("medium")?;
        params.high.validate("high")?;
        Ok(params)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Defaults shipped with the crate (also at `crates/core/data/sensors.json`).
    /// The low class uses 10.8/7.5/0.001 mA for transmit/idle/sleep; medium
    /// and high scale those currents by 2 and 4 and the payload by 4 and 16.
    pub fn default_params() -> Self {
        Self::from_json(include_str!("../data/sensors.json"))
            .expect("embedded default sensor parameters are valid")
    }
}

/// Cost of one accounted window segment.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowCost {
    pub energy_mas: f64,
    pub traffic_bytes: f64,
}

/// Prices an active segment: `tx_s` seconds transmitting, the rest of
/// `active_s` idle/receiving. Traffic accrues over the whole active span at
/// the class sample rate. Sleep outside active windows is accounted
/// separately by the window's owner.
pub fn window_cost(params: &SensorClassParams, active_s: f64, tx_s: f64) -> Result<WindowCost> {
    if active_s < 0.0 || tx_s < 0.0 || tx_s > active_s {
        return Err(Error::BadWindowCost { active_s, tx_s });
    }
    Ok(WindowCost {
        energy_mas: params.tx_ma * tx_s + params.idle_ma * (active_s - tx_s),
        traffic_bytes: params.sample_rate_hz * active_s * params.payload_bytes,
    })
}

/// Per-activity accumulated figures.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ActivityCost {
    pub energy_mas: f64,
    pub traffic_bytes: f64,
    pub monitored: u64,
}

impl ActivityCost {
    fn add(&mut self, other: &ActivityCost) {
        self.energy_mas += other.energy_mas;
        self.traffic_bytes += other.traffic_bytes;
        self.monitored += other.monitored;
    }
}

/// Accumulated energy, traffic and monitored-activity counts, per activity
/// and per month.
#[derive(Debug, Clone, Default)]
pub struct ResourceLedger {
    months: Vec<BTreeMap<ActivityId, ActivityCost>>,
    classes: BTreeMap<ActivityId, SensorClass>,
}

impl ResourceLedger {
    pub fn new(catalog: &Catalog) -> Self {
        ResourceLedger {
            months: vec![BTreeMap::new(); MONTHS],
            classes: catalog
                .activities()
                .iter()
                .map(|a| (a.id.clone(), a.sensor_class))
                .collect(),
        }
    }

    /// Adds a cost to an activity's bucket for `month`.
    pub fn accumulate(&mut self, activity: &ActivityId, month: usize, cost: WindowCost) {
        let entry = self.months[month.min(MONTHS - 1)]
            .entry(activity.clone())
            .or_default();
        entry.energy_mas += cost.energy_mas;
        entry.traffic_bytes += cost.traffic_bytes;
    }

    pub fn count_monitored(&mut self, activity: &ActivityId, month: usize) {
        self.months[month.min(MONTHS - 1)]
            .entry(activity.clone())
            .or_default()
            .monitored += 1;
    }

    pub fn month(&self, month: usize) -> &BTreeMap<ActivityId, ActivityCost> {
        &self.months[month]
    }

    /// Totals of one month across activities.
    pub fn month_total(&self, month: usize) -> ActivityCost {
        let mut total = ActivityCost::default();
        for cost in self.months[month].values() {
            total.add(cost);
        }
        total
    }

    /// Per-activity totals over the whole horizon.
    pub fn activity_totals(&self) -> BTreeMap<ActivityId, ActivityCost> {
        let mut totals: BTreeMap<ActivityId, ActivityCost> = BTreeMap::new();
        for month in &self.months {
            for (id, cost) in month {
                totals.entry(id.clone()).or_default().add(cost);
            }
        }
        totals
    }

    /// Per-class totals over the whole horizon.
    pub fn class_totals(&self) -> BTreeMap<SensorClass, ActivityCost> {
        let mut totals: BTreeMap<SensorClass, ActivityCost> = BTreeMap::new();
        for class in SensorClass::ALL {
            totals.insert(class, ActivityCost::default());
        }
        for (id, cost) in self.activity_totals() {
            let class = self.classes.get(&id).copied().unwrap_or(SensorClass::Low);
            totals.entry(class).or_default().add(&cost);
        }
        totals
    }

    pub fn grand_total(&self) -> ActivityCost {
        let mut total = ActivityCost::default();
        for m in 0..MONTHS {
            total.add(&self.month_total(m));
        }
        total
    }

    /// Cumulative totals after each month.
    pub fn cumulative(&self) -> Vec<ActivityCost> {
        let mut out = Vec::with_capacity(MONTHS);
        let mut acc = ActivityCost::default();
        for m in 0..MONTHS {
            acc.add(&self.month_total(m));
            out.push(acc);
        }
        out
    }

    /// CSV export: one row per (month, class) with energy, traffic and
    /// monitored counts.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("#ledger v1\nmonth,class,energy_mas,traffic_bytes,activities\n");
        for m in 0..MONTHS {
            let mut by_class: BTreeMap<SensorClass, ActivityCost> = BTreeMap::new();
            for class in SensorClass::ALL {
                by_class.insert(class, ActivityCost::default());
            }
            for (id, cost) in &self.months[m] {
                let class = self.classes.get(id).copied().unwrap_or(SensorClass::Low);
                by_class.entry(class).or_default().add(cost);
            }
            for (class, cost) in by_class {
                out.push_str(&format!(
                    "{},{},{:.3},{:.0},{}\n",
                    m + 1,
                    class.name(),
                    cost.energy_mas,
                    cost.traffic_bytes,
                    cost.monitored
                ));
            }
        }
        out
    }
}

/// Parses a ledger CSV back into monthly totals (classes summed).
pub fn monthly_totals_from_csv(text: &str) -> Result<Vec<ActivityCost>> {
    let mut totals = vec![ActivityCost::default(); MONTHS];
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        if lineno == 1 {
            if line.trim() != "#ledger v1" {
                return Err(Error::Parse {
                    line: 1,
                    msg: "expected header `#ledger v1`".into(),
                });
            }
            continue;
        }
        if lineno == 2 || line.is_empty() {
            continue; // column header
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 5 columns, got {}", parts.len()),
            });
        }
        let month: usize = parts[0].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("non-numeric month `{}`", parts[0]),
        })?;
        if month == 0 || month > MONTHS {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("month {month} out of 1..12"),
            });
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("non-numeric value `{s}`"),
            })
        };
        totals[month - 1].energy_mas += parse_f(parts[2])?;
        totals[month - 1].traffic_bytes += parse_f(parts[3])?;
        totals[month - 1].monitored += parts[4].parse::<u64>().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("non-numeric count `{}`", parts[4]),
        })?;
    }
    Ok(totals)
}

/// Computes the traditional comparator: every activity's sensor samples for
/// the whole horizon (idle current, transmit during occurrences) and every
/// scenario event counts as a monitored activity.
pub fn continuous_baseline(
    catalog: &Catalog,
    params: &SensorParams,
    events: &[ScenarioEvent],
    horizon_s: u64,
) -> Result<ResourceLedger> {
    let mut ledger = ResourceLedger::new(catalog);
    if horizon_s == 0 {
        return Ok(ledger);
    }

    // Transmit seconds per activity per month, split at bucket boundaries.
    let mut tx: BTreeMap<usize, [f64; MONTHS]> = BTreeMap::new();
    for ev in events {
        let idx = catalog
            .resolve(&ev.activity)
            .ok_or_else(|| Error::UnknownActivity(ev.activity.0.clone()))?;
        let def = catalog.activity(idx);
        ledger.count_monitored(&def.id, month_of(ev.start_s));
        if def.zero_cost || def.is_computed() {
            continue;
        }
        let slots = tx.entry(idx).or_insert([0.0; MONTHS]);
        let mut t = ev.start_s.min(horizon_s);
        let end = ev.end_s().min(horizon_s);
        while t < end {
            let m = month_of(t);
            let bucket_end = if m == MONTHS - 1 {
                horizon_s
            } else {
                ((m as u64) + 1) * MONTH_S
            };
            let piece = end.min(bucket_end) - t;
            slots[m] += piece as f64;
            t += piece;
        }
    }

    for (idx, def) in catalog.activities().iter().enumerate() {
        if def.zero_cost || def.is_computed() {
            continue;
        }
        let class = params.class(def.sensor_class);
        let tx_slots = tx.get(&idx).copied().unwrap_or([0.0; MONTHS]);
        for m in 0..MONTHS {
            let bucket_start = (m as u64) * MONTH_S;
            if bucket_start >= horizon_s {
                break;
            }
            let bucket_end = if m == MONTHS - 1 {
                horizon_s
            } else {
                (((m as u64) + 1) * MONTH_S).min(horizon_s)
            };
            let active = (bucket_end - bucket_start) as f64;
            let cost = window_cost(class, active, tx_slots[m].min(active))?;
            ledger.accumulate(&def.id, m, cost);
        }
    }
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn window_cost_examples() {
        let params = SensorParams::default_params();
        let low = params.class(SensorClass::Low);

        // Empty window costs nothing.
        let zero = window_cost(low, 0.0, 0.0).unwrap();
        assert_eq!(zero.energy_mas, 0.0);
        assert_eq!(zero.traffic_bytes, 0.0);

        // 10 s all transmitting at 10.8 mA.
        let tx = window_cost(low, 10.0, 10.0).unwrap();
        assert!((tx.energy_mas - 108.0).abs() < 1e-9);

        // One day fully asleep at 1 uA: 86.4 mA.s.
        let sleep = low.sleep_ma * SECONDS_PER_DAY as f64;
        assert!((sleep - 86.4).abs() < 1e-9);

        // Negative and inconsistent durations are rejected.
        assert!(window_cost(low, -1.0, 0.0).is_err());
        assert!(window_cost(low, 5.0, 6.0).is_err());
    }

    #[test]
    fn ledger_accumulate_is_additive() {
        let catalog = Catalog::default_catalog();
        let mut ledger = ResourceLedger::new(&catalog);
        let id = ActivityId::from("eating");
        let cost = WindowCost { energy_mas: 5.0, traffic_bytes: 40.0 };

        ledger.accumulate(&id, 0, cost);
        ledger.accumulate(&id, 0, cost);
        let total = ledger.month_total(0);
        assert!((total.energy_mas - 10.0).abs() < 1e-12);
        assert!((total.traffic_bytes - 80.0).abs() < 1e-12);

        // Adding zero is the identity.
        let before = ledger.month_total(0);
        ledger.accumulate(&id, 0, WindowCost::default());
        assert_eq!(ledger.month_total(0), before);
    }

    proptest! {
        #[test]
        fn cumulative_is_prefix_sum(costs in proptest::collection::vec((0usize..12, 0.0f64..100.0, 0.0f64..100.0), 0..60)) {
            let catalog = Catalog::default_catalog();
            let mut ledger = ResourceLedger::new(&catalog);
            let id = ActivityId::from("eating");
            for (m, e, t) in &costs {
                ledger.accumulate(&id, *m, WindowCost { energy_mas: *e, traffic_bytes: *t });
            }
            let cumulative = ledger.cumulative();
            let mut acc = 0.0;
            for m in 0..MONTHS {
                acc += ledger.month_total(m).energy_mas;
                prop_assert!((cumulative[m].energy_mas - acc).abs() < 1e-9);
            }
            prop_assert!((cumulative[MONTHS-1].energy_mas - ledger.grand_total().energy_mas).abs() < 1e-9);
        }
    }

    #[test]
    fn baseline_idle_only_closed_form() {
        let catalog = Catalog::default_catalog();
        let params = SensorParams::default_params();
        let horizon = 31_536_000u64;
        let ledger = continuous_baseline(&catalog, &params, &[], horizon).unwrap();
        // With no events every sensor idles for the whole horizon.
        let idle_low = params.low.idle_ma * horizon as f64;
        let low_sensors = catalog
            .activities()
            .iter()
            .filter(|a| {
                a.sensor_class == SensorClass::Low && !a.zero_cost && !a.is_computed()
            })
            .count() as f64;
        let low_total = ledger.class_totals()[&SensorClass::Low].energy_mas;
        assert!(
            (low_total - idle_low * low_sensors).abs() / low_total < 1e-12,
            "expected {} got {}",
            idle_low * low_sensors,
            low_total
        );
    }

    #[test]
    fn baseline_zero_horizon_is_empty() {
        let catalog = Catalog::default_catalog();
        let params = SensorParams::default_params();
        let ledger = continuous_baseline(&catalog, &params, &[], 0).unwrap();
        let total = ledger.grand_total();
        assert_eq!(total.energy_mas, 0.0);
        assert_eq!(total.monitored, 0);
    }

    #[test]
    fn baseline_counts_every_event() {
        let catalog = Catalog::default_catalog();
        let params = SensorParams::default_params();
        let events = vec![
            ScenarioEvent::new(100, "eating", 600),
            ScenarioEvent::new(1_000, "walking_inside", 60),
            ScenarioEvent::new(2_000, "telephone_use", 120),
        ];
        let ledger = continuous_baseline(&catalog, &params, &events, 10_000).unwrap();
        assert_eq!(ledger.grand_total().monitored, 3);
        // Computed and zero-cost activities carry no energy.
        let totals = ledger.activity_totals();
        assert_eq!(totals[&ActivityId::from("walking_inside")].energy_mas, 0.0);
        assert_eq!(totals[&ActivityId::from("telephone_use")].energy_mas, 0.0);
        assert!(totals[&ActivityId::from("eating")].energy_mas > 0.0);
    }

    #[test]
    fn scaling_currents_scales_energy_linearly() {
        let catalog = Catalog::default_catalog();
        let mut params = SensorParams::default_params();
        let events = vec![ScenarioEvent::new(100, "eating", 600)];
        let base = continuous_baseline(&catalog, &params, &events, 100_000).unwrap();
        for p in [&mut params.low, &mut params.medium, &mut params.high] {
            p.tx_ma *= 3.0;
            p.idle_ma *= 3.0;
            p.sleep_ma *= 3.0;
        }
        let scaled = continuous_baseline(&catalog, &params, &events, 100_000).unwrap();
        let ratio = scaled.grand_total().energy_mas / base.grand_total().energy_mas;
        assert!((ratio - 3.0).abs() < 1e-9);
        // Traffic is unchanged by current scaling.
        assert_eq!(
            scaled.grand_total().traffic_bytes,
            base.grand_total().traffic_bytes
        );
    }
}
