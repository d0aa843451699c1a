//! The adaptive monitoring engine.
//!
//! Scenario events drive per-activity monitoring windows: category I sensors
//! stay armed until the activity occurs once, category II sensors observe a
//! 24 h window opened by the first qualifying occurrence, questionnaire
//! (category III) activities behave like category I, and computed activities
//! are scored through the relation graph only. Every 30 days the per-activity
//! sub-scores are folded into a dependency assessment which re-tunes each
//! activity's monitoring frequency (global approach) and suspends monitoring
//! of activities implied by demonstrated abilities (relational approach).
//!
//! Event-driven processing: the engine only visits instants where something
//! can change (scenario events, window closes, day and month boundaries),
//! which preserves tick-exact semantics at a fraction of the cost.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::catalog::{
    classify_profile, disability_score, smaf_score, ActivityId, Catalog, MonitoringCategory,
    ProfileRow, ScoreModality, XUpdate, PERIOD_DAYS, SECONDS_PER_DAY,
};
use crate::error::{Error, Result};
use crate::resources::{month_of, window_cost, ResourceLedger, SensorParams, WindowCost, MONTHS, MONTH_S};
use crate::scenario::{atomic_write, ScenarioEvent};

pub const DEFAULT_HORIZON_S: u64 = 31_536_000;

/// Person-specific history rule: for the named condition, occurrence counts
/// on the flagged side of the rolling average are treated as abnormal even
/// when the generic rules would accept them.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HistoryFlag {
    pub condition: String,
    pub activity: ActivityId,
    pub direction: FlagDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagDirection {
    High,
    Low,
}

#[derive(Debug, Clone)]
pub struct MonitorConfig {
    pub horizon_s: u64,
    pub history_flags: Vec<HistoryFlag>,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            horizon_s: DEFAULT_HORIZON_S,
            history_flags: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionKind {
    Abnormal,
    MissingFrequency,
}

impl DetectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionKind::Abnormal => "abnormal",
            DetectionKind::MissingFrequency => "missing_frequency",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "abnormal" => Some(DetectionKind::Abnormal),
            "missing_frequency" => Some(DetectionKind::MissingFrequency),
            _ => None,
        }
    }
}

/// An abnormal-situation alert emitted by the monitor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detection {
    pub t_s: u64,
    pub activity: ActivityId,
    pub kind: DetectionKind,
    /// Set on the second of two consecutive abnormal observations.
    pub confirmed: bool,
}

/// Result of one monthly evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileAssessment {
    /// 1-based month index.
    pub month: u32,
    /// Scores in catalog order.
    pub scores: Vec<ScoreModality>,
    pub disability: i32,
    pub profile: u8,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub detections: Vec<Detection>,
    pub assessments: Vec<ProfileAssessment>,
    pub ledger: ResourceLedger,
}

#[derive(Debug, Clone, Copy)]
struct OpenWindow {
    opened_s: u64,
    close_s: u64,
    temp_count: u32,
    duration_flag: bool,
    /// Everything before this instant has been priced.
    accrual_s: u64,
}

#[derive(Debug, Clone)]
struct ActivityState {
    /// Current monitoring frequency in days; None = not monitored.
    x_days: Option<f64>,
    /// Computed activities only: whether passive observation counts.
    computed_enabled: bool,
    next_monitor_s: Option<u64>,
    /// Armed idle time priced up to this instant.
    wait_flush_s: u64,
    window: Option<OpenWindow>,
    sub_score: u32,
    history: VecDeque<u32>,
    consecutive_abnormal: u32,
    last_score: ScoreModality,
}

const HISTORY_LEN: usize = 10;

pub struct Engine<'a> {
    catalog: &'a Catalog,
    params: &'a SensorParams,
    config: &'a MonitorConfig,
    states: Vec<ActivityState>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    topo: Vec<usize>,
    active_by_month: Vec<[f64; MONTHS]>,
    buckets_slept: usize,
    detections: Vec<Detection>,
    assessments: Vec<ProfileAssessment>,
    ledger: ResourceLedger,
}

impl<'a> Engine<'a> {
    pub fn new(catalog: &'a Catalog, params: &'a SensorParams, config: &'a MonitorConfig) -> Self {
        let n = catalog.len();
        let ids: Vec<ActivityId> = catalog.activities().iter().map(|a| a.id.clone()).collect();
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for (from, to) in catalog.relations.arcs() {
            let f = catalog.index_of(from).expect("validated arc");
            let t = catalog.index_of(to).expect("validated arc");
            preds[t].push(f);
            succs[f].push(t);
        }
        let topo = catalog.relations.topological_order(&ids);

        let states = catalog
            .activities()
            .iter()
            .map(|a| ActivityState {
                x_days: a.x_initial.days(),
                computed_enabled: a.is_computed(),
                next_monitor_s: if a.is_computed() { None } else { Some(0) },
                wait_flush_s: 0,
                window: None,
                sub_score: 0,
                history: VecDeque::with_capacity(HISTORY_LEN),
                consecutive_abnormal: 0,
                last_score: ScoreModality::Autonomous,
            })
            .collect();

        Engine {
            catalog,
            params,
            config,
            states,
            preds,
            succs,
            topo,
            active_by_month: vec![[0.0; MONTHS]; n],
            buckets_slept: 0,
            detections: Vec::new(),
            assessments: Vec::new(),
            ledger: ResourceLedger::new(catalog),
        }
    }

    /// Prices an active span, splitting it at accounting-bucket boundaries.
    fn emit_active(&mut self, idx: usize, from_s: u64, to_s: u64, transmitting: bool) {
        if to_s <= from_s {
            return;
        }
        let def = self.catalog.activity(idx);
        if def.zero_cost || def.is_computed() {
            return;
        }
        let class = *self.params.class(def.sensor_class);
        let mut t = from_s;
        while t < to_s {
            let m = month_of(t);
            let bucket_end = if m == MONTHS - 1 {
                u64::MAX
            } else {
                ((m as u64) + 1) * MONTH_S
            };
            let piece = to_s.min(bucket_end) - t;
            let span = piece as f64;
            let cost = window_cost(&class, span, if transmitting { span } else { 0.0 })
                .expect("span is nonnegative");
            self.ledger.accumulate(&def.id, m, cost);
            self.active_by_month[idx][m] += span;
            t += piece;
        }
    }

    /// Emits pending armed-wait idle cost up to `t`.
    fn flush_wait(&mut self, idx: usize, t: u64) {
        let state = &self.states[idx];
        if state.window.is_some() || state.x_days.is_none() {
            return;
        }
        let Some(nmt) = state.next_monitor_s else { return };
        let from = state.wait_flush_s.max(nmt);
        if from < t {
            self.emit_active(idx, from, t, false);
            self.states[idx].wait_flush_s = t;
        }
    }

    /// Emits pending in-window idle cost up to `t`.
    fn flush_window(&mut self, idx: usize, t: u64) {
        if let Some(w) = self.states[idx].window {
            let to = t.min(w.close_s);
            if w.accrual_s < to {
                self.emit_active(idx, w.accrual_s, to, false);
                self.states[idx].window.as_mut().unwrap().accrual_s = to;
            }
        }
    }

    fn flush_all(&mut self, t: u64) {
        for idx in 0..self.states.len() {
            self.flush_window(idx, t);
            self.flush_wait(idx, t);
        }
    }

    /// Accounts sleep energy for every whole bucket that ended at or before
    /// `t`, plus the final partial bucket when `final_flush` is set.
    fn account_sleep(&mut self, t: u64, final_flush: bool) {
        loop {
            let m = self.buckets_slept;
            if m >= MONTHS {
                break;
            }
            let start = (m as u64) * MONTH_S;
            let end = if m == MONTHS - 1 { u64::MAX } else { start + MONTH_S };
            if end <= t {
                self.sleep_bucket(m, start, end);
                self.buckets_slept += 1;
            } else {
                if final_flush && t > start {
                    self.sleep_bucket(m, start, t);
                    self.buckets_slept += 1;
                }
                break;
            }
        }
    }

    fn sleep_bucket(&mut self, m: usize, start_s: u64, end_s: u64) {
        let len = (end_s - start_s) as f64;
        for idx in 0..self.states.len() {
            let def = self.catalog.activity(idx);
            if def.zero_cost || def.is_computed() {
                continue;
            }
            let sleep_s = (len - self.active_by_month[idx][m]).max(0.0);
            if sleep_s > 0.0 {
                let class = self.params.class(def.sensor_class);
                self.ledger.accumulate(
                    &def.id,
                    m,
                    WindowCost {
                        energy_mas: class.sleep_ma * sleep_s,
                        traffic_bytes: 0.0,
                    },
                );
            }
        }
    }

    fn next_monitor_after(&self, anchor_s: u64, x_days: f64) -> u64 {
        anchor_s + (x_days * SECONDS_PER_DAY as f64).round() as u64
    }

    /// How long an armed category I/III sensor waits for an occurrence
    /// before giving up until the next period: a third of the monitoring
    /// period, at least a day, at most ten. Category II arming is bounded by
    /// the 24 h watchdog instead.
    fn arming_cap_s(&self, idx: usize) -> u64 {
        let def = self.catalog.activity(idx);
        if def.category == MonitoringCategory::II {
            return SECONDS_PER_DAY;
        }
        let x = self.states[idx].x_days.unwrap_or(1.0);
        ((x / 3.0 * SECONDS_PER_DAY as f64) as u64).clamp(SECONDS_PER_DAY, 10 * SECONDS_PER_DAY)
    }

    fn has_flag(&self, idx: usize, direction: FlagDirection) -> bool {
        let id = &self.catalog.activity(idx).id;
        self.config
            .history_flags
            .iter()
            .any(|f| f.activity == *id && f.direction == direction)
    }

    /// Dispatches one scenario event to its category handler.
    pub(crate) fn handle_event(&mut self, ev: &ScenarioEvent, horizon_s: u64) -> Result<()> {
        let idx = self
            .catalog
            .resolve(&ev.activity)
            .ok_or_else(|| Error::UnknownActivity(ev.activity.0.clone()))?;
        let def = self.catalog.activity(idx);
        let t = ev.start_s;

        if def.is_computed() {
            if self.states[idx].computed_enabled {
                self.ledger.count_monitored(&def.id, month_of(t));
            }
            return Ok(());
        }

        match def.category {
            MonitoringCategory::I | MonitoringCategory::III => {
                let state = &self.states[idx];
                let Some(x) = state.x_days else { return Ok(()) };
                let Some(nmt) = state.next_monitor_s else { return Ok(()) };
                if t < nmt {
                    return Ok(()); // sensor asleep
                }
                // Idle from arming to the occurrence, then one transmit
                // burst for the occurrence itself.
                self.flush_wait(idx, t);
                let tx_end = ev.end_s().min(horizon_s.max(t));
                self.emit_active(idx, t, tx_end, true);
                self.ledger.count_monitored(&def.id, month_of(t));
                let (d_lo, d_hi) = def.duration_range_s;
                if ev.duration_s < d_lo || ev.duration_s > d_hi {
                    self.detections.push(Detection {
                        t_s: t,
                        activity: def.id.clone(),
                        kind: DetectionKind::Abnormal,
                        confirmed: false,
                    });
                }
                let state = &mut self.states[idx];
                state.sub_score += 1;
                let nmt = self.next_monitor_after(t, x);
                let state = &mut self.states[idx];
                state.next_monitor_s = Some(nmt);
                state.wait_flush_s = nmt;
            }
            MonitoringCategory::II => {
                let state = &self.states[idx];
                if state.x_days.is_none() {
                    return Ok(());
                }
                if let Some(w) = state.window {
                    if t < w.close_s {
                        self.flush_window(idx, t);
                        let tx_end = ev.end_s().min(w.close_s);
                        self.emit_active(idx, t, tx_end, true);
                        self.ledger.count_monitored(&def.id, month_of(t));
                        let (d_lo, d_hi) = def.duration_range_s;
                        let w = self.states[idx].window.as_mut().unwrap();
                        w.temp_count += 1;
                        w.accrual_s = w.accrual_s.max(tx_end);
                        if ev.duration_s < d_lo || ev.duration_s > d_hi {
                            w.duration_flag = true;
                        }
                    }
                    return Ok(());
                }
                let Some(nmt) = state.next_monitor_s else { return Ok(()) };
                if t < nmt {
                    return Ok(()); // sensor asleep
                }
                // First qualifying occurrence opens the observation window.
                self.flush_wait(idx, t);
                let close_s = t + def.monitor_duration_s;
                let tx_end = ev.end_s().min(close_s);
                self.emit_active(idx, t, tx_end, true);
                self.ledger.count_monitored(&def.id, month_of(t));
                let (d_lo, d_hi) = def.duration_range_s;
                let duration_flag = ev.duration_s < d_lo || ev.duration_s > d_hi;
                let state = &mut self.states[idx];
                state.window = Some(OpenWindow {
                    opened_s: t,
                    close_s,
                    temp_count: 1,
                    duration_flag,
                    accrual_s: tx_end,
                });
                state.next_monitor_s = None;
            }
        }
        Ok(())
    }

    /// Closes a category II window, judges it and either re-arms the sensor
    /// or opens an immediate extension window after an abnormal observation.
    pub(crate) fn close_window(&mut self, idx: usize, t: u64) {
        self.flush_window(idx, t);
        let def = self.catalog.activity(idx);
        let state = &self.states[idx];
        let Some(w) = state.window else { return };
        debug_assert_eq!(w.close_s, t);
        let (c_min, c_max) = def.normal_count_range.unwrap_or((0, u32::MAX));
        let temp = w.temp_count;
        let mean = if state.history.is_empty() {
            None
        } else {
            Some(state.history.iter().sum::<u32>() as f64 / state.history.len() as f64)
        };

        let in_range = temp >= c_min && temp <= c_max;
        let above_avg_ok =
            mean.is_some_and(|m| (temp as f64) > m) && !self.has_flag(idx, FlagDirection::High);
        let below_avg_bad =
            mean.is_some_and(|m| (temp as f64) < m) && self.has_flag(idx, FlagDirection::Low);
        let normal = !w.duration_flag && !below_avg_bad && (in_range || above_avg_ok);

        let x = self.states[idx].x_days.unwrap_or(f64::INFINITY);
        let re_arm_at = self.next_monitor_after(w.opened_s, x).max(t);

        let state = &mut self.states[idx];
        state.history.push_back(temp);
        if state.history.len() > HISTORY_LEN {
            state.history.pop_front();
        }

        if normal {
            state.sub_score += 1;
            state.consecutive_abnormal = 0;
            state.window = None;
            state.next_monitor_s = Some(re_arm_at);
            state.wait_flush_s = re_arm_at;
        } else {
            let confirmed = state.consecutive_abnormal >= 1;
            state.consecutive_abnormal += 1;
            if !confirmed {
                // Extend monitoring with an immediate extra window to record
                // opposite behavior before confirming.
                state.window = Some(OpenWindow {
                    opened_s: t,
                    close_s: t + def.monitor_duration_s,
                    temp_count: 0,
                    duration_flag: false,
                    accrual_s: t,
                });
            } else {
                state.window = None;
                state.next_monitor_s = Some(re_arm_at);
                state.wait_flush_s = re_arm_at;
            }
            self.detections.push(Detection {
                t_s: t,
                activity: def.id.clone(),
                kind: DetectionKind::Abnormal,
                confirmed,
            });
        }
    }

    /// Day-boundary frequency watchdog: a category II sensor that has been
    /// armed for more than 24 h without a single occurrence signals a
    /// missing-frequency anomaly.
    pub(crate) fn watchdog(&mut self, t: u64) {
        for idx in 0..self.states.len() {
            let def = self.catalog.activity(idx);
            if def.category != MonitoringCategory::II {
                continue;
            }
            let state = &self.states[idx];
            if state.x_days.is_none() || state.window.is_some() {
                continue;
            }
            let Some(nmt) = state.next_monitor_s else { continue };
            if t >= nmt + SECONDS_PER_DAY {
                let confirmed = state.consecutive_abnormal >= 1;
                self.states[idx].consecutive_abnormal += 1;
                self.detections.push(Detection {
                    t_s: t,
                    activity: def.id.clone(),
                    kind: DetectionKind::MissingFrequency,
                    confirmed,
                });
            }
        }
    }

    /// Resolves the month's 29 scores: observed activities through the score
    /// intervals, unmonitored and computed ones through the relation graph
    /// (a predecessor scored autonomous propagates autonomy; computed
    /// activities take the most able predecessor's score) or their last
    /// known score.
    fn resolve_scores(&self) -> Vec<ScoreModality> {
        let n = self.states.len();
        let mut current: Vec<Option<ScoreModality>> = vec![None; n];
        for &idx in &self.topo {
            let def = self.catalog.activity(idx);
            let state = &self.states[idx];
            let score = if def.is_computed() {
                let best = self.preds[idx]
                    .iter()
                    .filter_map(|&p| current[p])
                    .max_by_key(|s| s.value());
                best.unwrap_or(state.last_score)
            } else if let Some(x) = state.x_days {
                let capacity = PERIOD_DAYS / x;
                let sub = if (state.sub_score as f64) > capacity {
                    capacity.floor() as u32
                } else {
                    state.sub_score
                };
                smaf_score(sub, x, PERIOD_DAYS).expect("sub-score clamped to capacity")
            } else {
                let autonomous_pred = self.preds[idx]
                    .iter()
                    .any(|&p| current[p] == Some(ScoreModality::Autonomous));
                if autonomous_pred {
                    ScoreModality::Autonomous
                } else {
                    state.last_score
                }
            };
            current[idx] = Some(score);
        }
        current.into_iter().map(|s| s.expect("topo covers all")).collect()
    }

    /// Re-tunes every activity's monitoring frequency from the profile's
    /// matrix row. The divisor always applies to the initial frequency.
    pub(crate) fn apply_global_update(&mut self, profile: u8, now_s: u64) {
        for idx in 0..self.states.len() {
            let def = self.catalog.activity(idx);
            let cell = self.catalog.x_update.lookup(profile, def.group);
            if def.is_computed() {
                self.states[idx].computed_enabled = cell != XUpdate::Off;
                continue;
            }
            match cell {
                XUpdate::Off => {
                    let state = &mut self.states[idx];
                    state.x_days = None;
                    state.next_monitor_s = None;
                    state.window = None;
                    state.consecutive_abnormal = 0;
                }
                XUpdate::Divisor(d) => {
                    let x_new = def
                        .x_initial
                        .days()
                        .expect("non-computed activity has a frequency")
                        / d as f64;
                    let fresh = self.next_monitor_after(now_s, x_new);
                    let state = &mut self.states[idx];
                    let was_off = state.x_days.is_none();
                    state.x_days = Some(x_new);
                    if state.window.is_none() {
                        // Monitoring that just expanded to this activity
                        // starts right away; an already scheduled monitoring
                        // is never delayed beyond one fresh period from now.
                        let nmt = match (was_off, state.next_monitor_s) {
                            (false, Some(old)) => old.min(fresh),
                            (true, _) => now_s,
                            _ => fresh,
                        };
                        state.next_monitor_s = Some(nmt);
                        state.wait_flush_s = nmt.max(now_s);
                    }
                }
            }
        }
    }

    /// Suspends monitoring of every activity implied by one scored
    /// autonomous this month. The suspension lapses at the next monthly
    /// evaluation through `apply_global_update`.
    pub(crate) fn apply_relational_update(&mut self, scores: &[ScoreModality]) {
        for idx in 0..self.states.len() {
            if scores[idx] != ScoreModality::Autonomous {
                continue;
            }
            for &succ in &self.succs[idx] {
                let def = self.catalog.activity(succ);
                let state = &mut self.states[succ];
                if def.is_computed() {
                    state.computed_enabled = false;
                } else {
                    state.x_days = None;
                    state.next_monitor_s = None;
                    state.window = None;
                    state.consecutive_abnormal = 0;
                }
            }
        }
    }

    /// Runs the 30-day evaluation: scores, disability, profile, then the
    /// global and relational updates. Sub-scores reset to zero.
    pub(crate) fn monthly_evaluation(&mut self, t: u64, month: u32) {
        self.flush_all(t);
        let scores = self.resolve_scores();
        let disability = disability_score(&scores)
            .expect("catalog has exactly the expected number of activities");
        let profile = classify_profile(disability as f64, &self.catalog.profiles);
        for (idx, score) in scores.iter().enumerate() {
            let state = &mut self.states[idx];
            state.sub_score = 0;
            state.last_score = *score;
        }
        self.apply_global_update(profile, t);
        self.apply_relational_update(&scores);
        self.assessments.push(ProfileAssessment {
            month,
            scores,
            disability,
            profile,
        });
    }

    /// Runs the full horizon over a sorted scenario.
    pub fn run(mut self, events: &[ScenarioEvent]) -> Result<RunOutput> {
        let horizon = self.config.horizon_s;
        let mut last_start = 0;
        for ev in events {
            if ev.start_s < last_start {
                return Err(Error::UnsortedScenario(ev.start_s));
            }
            last_start = ev.start_s;
            if ev.end_s() > horizon {
                return Err(Error::HorizonTooShort {
                    horizon_s: horizon,
                    last_end_s: ev.end_s(),
                });
            }
        }

        let mut ev_i = 0usize;
        let mut next_day = SECONDS_PER_DAY;
        let mut next_eval: u32 = 1;
        loop {
            let t_event = events.get(ev_i).map(|e| e.start_s).unwrap_or(u64::MAX);
            let t_close = self
                .states
                .iter()
                .filter_map(|s| s.window.map(|w| w.close_s))
                .min()
                .unwrap_or(u64::MAX);
            let t_day = if next_day <= horizon { next_day } else { u64::MAX };
            let t_eval = if next_eval <= MONTHS as u32 {
                let t = next_eval as u64 * MONTH_S;
                if t <= horizon {
                    t
                } else {
                    u64::MAX
                }
            } else {
                u64::MAX
            };

            // Priority at equal instants: window closes, then the watchdog,
            // then the monthly evaluation, then event dispatch.
            let t_min = t_close.min(t_day).min(t_eval).min(t_event);
            if t_min == u64::MAX || t_min > horizon {
                break;
            }
            if t_close == t_min {
                let idx = (0..self.states.len())
                    .find(|&i| self.states[i].window.map(|w| w.close_s) == Some(t_min))
                    .expect("a window closes at t_min");
                self.close_window(idx, t_min);
            } else if t_day == t_min {
                self.watchdog(t_min);
                next_day += SECONDS_PER_DAY;
            } else if t_eval == t_min {
                self.monthly_evaluation(t_min, next_eval);
                self.account_sleep(t_min, false);
                next_eval += 1;
            } else {
                self.handle_event(&events[ev_i], horizon)?;
                ev_i += 1;
            }
        }

        self.flush_all(horizon);
        self.account_sleep(horizon, true);

        Ok(RunOutput {
            detections: self.detections,
            assessments: self.assessments,
            ledger: self.ledger,
        })
    }
}

/// Runs the adaptive monitor over a scenario.
pub fn run(
    catalog: &Catalog,
    params: &SensorParams,
    config: &MonitorConfig,
    events: &[ScenarioEvent],
) -> Result<RunOutput> {
    Engine::new(catalog, params, config).run(events)
}

/// The continuous comparator's alarms: consecutive 24 h windows per category
/// II activity flag any occurrence count outside the normal range, with no
/// history or profile gating; out-of-band occurrence durations alarm for
/// every category.
pub fn continuous_detections(
    catalog: &Catalog,
    events: &[ScenarioEvent],
    horizon_s: u64,
) -> Result<Vec<Detection>> {
    let n = catalog.len();
    let days = (horizon_s / SECONDS_PER_DAY) as usize;
    let mut counts = vec![vec![0u32; days]; n];
    let mut duration_flags = vec![vec![false; days]; n];
    let mut detections = Vec::new();

    for ev in events {
        let idx = catalog
            .resolve(&ev.activity)
            .ok_or_else(|| Error::UnknownActivity(ev.activity.0.clone()))?;
        let def = catalog.activity(idx);
        let day = (ev.start_s / SECONDS_PER_DAY) as usize;
        let (d_lo, d_hi) = def.duration_range_s;
        let duration_out = ev.duration_s < d_lo || ev.duration_s > d_hi;
        if day < days {
            counts[idx][day] += 1;
            duration_flags[idx][day] |= duration_out;
        }
        if duration_out && def.category != MonitoringCategory::II {
            detections.push(Detection {
                t_s: ev.start_s,
                activity: def.id.clone(),
                kind: DetectionKind::Abnormal,
                confirmed: false,
            });
        }
    }

    for (idx, def) in catalog.activities().iter().enumerate() {
        if def.category != MonitoringCategory::II {
            continue;
        }
        let (c_min, c_max) = def.normal_count_range.unwrap_or((0, u32::MAX));
        for day in 0..days {
            let c = counts[idx][day];
            if c < c_min || c > c_max || duration_flags[idx][day] {
                detections.push(Detection {
                    t_s: (day as u64 + 1) * SECONDS_PER_DAY,
                    activity: def.id.clone(),
                    kind: if c == 0 {
                        DetectionKind::MissingFrequency
                    } else {
                        DetectionKind::Abnormal
                    },
                    confirmed: false,
                });
            }
        }
    }
    detections.sort_by(|a, b| (a.t_s, &a.activity).cmp(&(b.t_s, &b.activity)));
    Ok(detections)
}

pub const DETECTIONS_HEADER: &str = "#detections v1";
pub const ASSESSMENTS_HEADER: &str = "#assessments v1";

pub fn write_detections_to(mut w: impl Write, detections: &[Detection]) -> Result<()> {
    writeln!(w, "{DETECTIONS_HEADER}")?;
    for d in detections {
        writeln!(
            w,
            "{},{},{},{}",
            d.t_s,
            d.activity,
            d.kind.as_str(),
            if d.confirmed { 1 } else { 0 }
        )?;
    }
    Ok(())
}

pub fn write_detections(detections: &[Detection], path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_detections_to(&mut buf, detections)?;
    atomic_write(path, &buf)
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    read_detections_from(std::fs::File::open(path)?)
}

pub fn read_detections_from(r: impl Read) -> Result<Vec<Detection>> {
    let reader = BufReader::new(r);
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if lineno == 1 {
            if line.trim() != DETECTIONS_HEADER {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header `{DETECTIONS_HEADER}`"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 4 columns, got {}", parts.len()),
            });
        }
        let t_s = parts[0].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("non-numeric time `{}`", parts[0]),
        })?;
        let kind = DetectionKind::parse(parts[2]).ok_or_else(|| Error::Parse {
            line: lineno,
            msg: format!("unknown detection kind `{}`", parts[2]),
        })?;
        out.push(Detection {
            t_s,
            activity: ActivityId::new(parts[1]),
            kind,
            confirmed: parts[3] == "1",
        });
    }
    Ok(out)
}

pub fn write_assessments_to(mut w: impl Write, assessments: &[ProfileAssessment]) -> Result<()> {
    writeln!(w, "{ASSESSMENTS_HEADER}")?;
    for a in assessments {
        let scores: Vec<String> = a.scores.iter().map(|s| s.value().to_string()).collect();
        writeln!(
            w,
            "{},{},{},{}",
            a.month,
            a.profile,
            a.disability,
            scores.join(",")
        )?;
    }
    Ok(())
}

pub fn write_assessments(assessments: &[ProfileAssessment], path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_assessments_to(&mut buf, assessments)?;
    atomic_write(path, &buf)
}

/// Profile table row for external consumers that need the means.
pub fn profile_mean(table_row: &ProfileRow) -> f64 {
    table_row.mean_disability()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::ActivityGroup;

    fn setup() -> (Catalog, SensorParams, MonitorConfig) {
        (
            Catalog::default_catalog(),
            SensorParams::default_params(),
            MonitorConfig::default(),
        )
    }

    fn idx_of(catalog: &Catalog, id: &str) -> usize {
        catalog.index_of(&ActivityId::from(id)).unwrap()
    }

    #[test]
    fn category_i_arming_cycle() {
        let (catalog, params, config) = setup();
        let mut engine = Engine::new(&catalog, &params, &config);
        let washing = idx_of(&catalog, "washing");

        // Armed from t=0: first occurrence scores and re-arms at t + 10 days.
        let ev = ScenarioEvent::new(3_600, "washing", 900);
        engine.handle_event(&ev, DEFAULT_HORIZON_S).unwrap();
        assert_eq!(engine.states[washing].sub_score, 1);
        assert_eq!(
            engine.states[washing].next_monitor_s,
            Some(3_600 + 10 * SECONDS_PER_DAY)
        );

        // Occurrence on day 3 while asleep: ignored, no cost.
        let energy_before = engine.ledger.grand_total().energy_mas;
        let ev = ScenarioEvent::new(3 * SECONDS_PER_DAY, "washing", 900);
        engine.handle_event(&ev, DEFAULT_HORIZON_S).unwrap();
        assert_eq!(engine.states[washing].sub_score, 1);
        assert_eq!(engine.ledger.grand_total().energy_mas, energy_before);

        // Past the next monitoring time: scores again.
        let ev = ScenarioEvent::new(3_600 + 10 * SECONDS_PER_DAY + 60, "washing", 900);
        engine.handle_event(&ev, DEFAULT_HORIZON_S).unwrap();
        assert_eq!(engine.states[washing].sub_score, 2);
    }

    #[test]
    fn category_ii_window_normal_and_abnormal() {
        let (catalog, params, config) = setup();
        let toileting = idx_of(&catalog, "toileting");

        // Three occurrences in 24 h with range [2,3]: normal, C=1.
        let mut engine = Engine::new(&catalog, &params, &config);
        for t in [1_000u64, 10_000, 40_000] {
            let ev = ScenarioEvent::new(t, "toileting", 300);
            engine.handle_event(&ev, DEFAULT_HORIZON_S).unwrap();
        }
        let close = engine.states[toileting].window.unwrap().close_s;
        assert_eq!(close, 1_000 + SECONDS_PER_DAY);
        engine.close_window(toileting, close);
        assert_eq!(engine.states[toileting].sub_score, 1);
        assert!(engine.detections.is_empty());
        // Re-armed x days after the window opened.
        assert_eq!(
            engine.states[toileting].next_monitor_s,
            Some(1_000 + 3 * SECONDS_PER_DAY)
        );

        // One occurrence: abnormal, C=0, detection, extension window armed.
        let mut engine = Engine::new(&catalog, &params, &config);
        let ev = ScenarioEvent::new(1_000, "toileting", 300);
        engine.handle_event(&ev, DEFAULT_HORIZON_S).unwrap();
        engine.close_window(toileting, 1_000 + SECONDS_PER_DAY);
        assert_eq!(engine.states[toileting].sub_score, 0);
        assert_eq!(engine.detections.len(), 1);
        assert!(!engine.detections[0].confirmed);
        let ext = engine.states[toileting].window.expect("extension window");
        assert_eq!(ext.opened_s, 1_000 + SECONDS_PER_DAY);

        // The empty extension window is abnormal too: confirmed detection.
        engine.close_window(toileting, ext.close_s);
        assert_eq!(engine.detections.len(), 2);
        assert!(engine.detections[1].confirmed);
        assert!(engine.states[toileting].window.is_none());
    }

    #[test]
    fn category_ii_history_rules() {
        let (catalog, params, mut config) = setup();
        let toileting = idx_of(&catalog, "toileting");

        // Six occurrences with history mean 2.5 and no flag: above average
        // is normal.
        let mut engine = Engine::new(&catalog, &params, &config);
        engine.states[toileting].history.extend([2u32, 3]);
        for k in 0..6u64 {
            let ev = ScenarioEvent::new(1_000 + k * 3_600, "toileting", 300);
            engine.handle_event(&ev, DEFAULT_HORIZON_S).unwrap();
        }
        engine.close_window(toileting, 1_000 + SECONDS_PER_DAY);
        assert_eq!(engine.states[toileting].sub_score, 1);
        assert!(engine.detections.is_empty());

        // Same counts with a high-direction flag: abnormal.
        config.history_flags.push(HistoryFlag {
            condition: "diabetes".into(),
            activity: ActivityId::from("toileting"),
            direction: FlagDirection::High,
        });
        let mut engine = Engine::new(&catalog, &params, &config);
        engine.states[toileting].history.extend([2u32, 3]);
        for k in 0..6u64 {
            let ev = ScenarioEvent::new(1_000 + k * 3_600, "toileting", 300);
            engine.handle_event(&ev, DEFAULT_HORIZON_S).unwrap();
        }
        engine.close_window(toileting, 1_000 + SECONDS_PER_DAY);
        assert_eq!(engine.states[toileting].sub_score, 0);
        assert_eq!(engine.detections.len(), 1);
    }

    #[test]
    fn out_of_band_duration_flags_window() {
        let (catalog, params, config) = setup();
        let toileting = idx_of(&catalog, "toileting");
        let mut engine = Engine::new(&catalog, &params, &config);
        // Two normal occurrences plus one far beyond the 600 s band.
        for (t, dur) in [(1_000u64, 300u64), (10_000, 1_800), (40_000, 300)] {
            let ev = ScenarioEvent::new(t, "toileting", dur);
            engine.handle_event(&ev, DEFAULT_HORIZON_S).unwrap();
        }
        engine.close_window(toileting, 1_000 + SECONDS_PER_DAY);
        assert_eq!(engine.states[toileting].sub_score, 0);
        assert_eq!(engine.detections.len(), 1);
    }

    #[test]
    fn watchdog_fires_after_armed_day_without_occurrence() {
        let (catalog, params, config) = setup();
        let mut engine = Engine::new(&catalog, &params, &config);
        // All category II sensors are armed from t=0 with no occurrences:
        // at the second day boundary they are 24 h overdue.
        engine.watchdog(SECONDS_PER_DAY);
        let first_day = engine.detections.len();
        assert!(first_day > 0);
        assert!(engine
            .detections
            .iter()
            .all(|d| d.kind == DetectionKind::MissingFrequency));
        // Eating absent while the sensor is off: no detection.
        let eating = idx_of(&catalog, "eating");
        engine.states[eating].x_days = None;
        engine.states[eating].next_monitor_s = None;
        let before = engine.detections.len();
        engine.watchdog(2 * SECONDS_PER_DAY);
        assert!(engine
            .detections
            .iter()
            .skip(before)
            .all(|d| d.activity.as_str() != "eating"));
    }

    #[test]
    fn global_update_applies_matrix_to_initial_x() {
        let (catalog, params, config) = setup();
        let mut engine = Engine::new(&catalog, &params, &config);

        engine.apply_global_update(1, 0);
        let toileting = idx_of(&catalog, "toileting");
        assert_eq!(engine.states[toileting].x_days, None); // P1 ADL off
        let meal = idx_of(&catalog, "meal_preparation");
        assert_eq!(engine.states[meal].x_days, Some(3.0)); // P1 IADL x/1

        engine.apply_global_update(6, 0);
        assert_eq!(engine.states[meal].x_days, Some(1.0)); // P6 IADL x/3
        assert_eq!(engine.states[toileting].x_days, Some(3.0)); // P6 ADL x/1

        // The divisor applies to the initial value, never compounds.
        engine.apply_global_update(9, 0);
        assert_eq!(engine.states[meal].x_days, Some(3.0)); // P9 IADL x/1
        assert_eq!(engine.states[toileting].x_days, Some(1.5)); // P9 ADL x/2

        engine.apply_global_update(12, 0);
        assert_eq!(engine.states[meal].x_days, None); // P12 IADL off
    }

    #[test]
    fn relational_update_suppresses_successors_only_on_autonomy() {
        // Synthetic chain a -> b -> c over real catalog ids.
        let mut value: serde_json::Value =
            serde_json::from_str(include_str!("../data/catalog.json")).unwrap();
        value["relations"] = serde_json::json!([
            ["meal_preparation", "eating"],
            ["eating", "toileting"]
        ]);
        let catalog = Catalog::from_json(&value.to_string()).unwrap();
        let params = SensorParams::default_params();
        let config = MonitorConfig::default();
        let mut engine = Engine::new(&catalog, &params, &config);

        let meal = idx_of(&catalog, "meal_preparation");
        let eating = idx_of(&catalog, "eating");
        let toileting = idx_of(&catalog, "toileting");

        let mut scores = vec![ScoreModality::Supervision; catalog.len()];
        scores[meal] = ScoreModality::Autonomous;
        scores[eating] = ScoreModality::NeedHelp;
        engine.apply_relational_update(&scores);

        // Only the direct successor of the autonomous activity is
        // suppressed; suppression is per-arc, not transitive.
        assert_eq!(engine.states[eating].x_days, None);
        assert!(engine.states[toileting].x_days.is_some());

        // A non-autonomous score never suppresses.
        let mut engine = Engine::new(&catalog, &params, &config);
        let mut scores = vec![ScoreModality::Supervision; catalog.len()];
        scores[meal] = ScoreModality::Supervision;
        engine.apply_relational_update(&scores);
        assert!(engine.states[eating].x_days.is_some());
    }

    #[test]
    fn empty_scenario_year_all_dependent() {
        let (catalog, params, config) = setup();
        let out = run(&catalog, &params, &config, &[]).unwrap();
        assert_eq!(out.assessments.len(), 12);
        for a in &out.assessments {
            assert!(
                a.scores.iter().all(|s| *s == ScoreModality::Dependent),
                "month {} not all dependent: {:?}",
                a.month,
                a.disability
            );
            assert_eq!(a.disability, -87);
            assert_eq!(a.profile, 14);
        }
        // Only idle and sleep costs: no transmissions happened, so traffic
        // comes from armed idle sampling only and counts stay zero.
        assert_eq!(out.ledger.grand_total().monitored, 0);
    }

    #[test]
    fn worked_example_appears_in_assessment() {
        // A month of toileting at full frequency: windows open every 3 days
        // and pass, so the score interval arithmetic must yield autonomy.
        let (catalog, params, _) = setup();
        let config = MonitorConfig {
            horizon_s: 31 * SECONDS_PER_DAY,
            ..MonitorConfig::default()
        };
        let mut events = Vec::new();
        for day in 0..31u64 {
            for hour in [9u64, 14, 20] {
                events.push(ScenarioEvent::new(
                    day * SECONDS_PER_DAY + hour * 3_600,
                    "toileting",
                    300,
                ));
            }
        }
        let out = run(&catalog, &params, &config, &events).unwrap();
        let toileting = idx_of(&catalog, "toileting");
        let score = out.assessments[0].scores[toileting];
        assert_eq!(score, ScoreModality::Autonomous);
    }

    #[test]
    fn run_rejects_unsorted_and_unknown() {
        let (catalog, params, config) = setup();
        let events = vec![
            ScenarioEvent::new(5_000, "eating", 600),
            ScenarioEvent::new(1_000, "eating", 600),
        ];
        assert!(matches!(
            run(&catalog, &params, &config, &events),
            Err(Error::UnsortedScenario(_))
        ));

        let events = vec![ScenarioEvent::new(1_000, "no_such_activity", 600)];
        assert!(matches!(
            run(&catalog, &params, &config, &events),
            Err(Error::UnknownActivity(_))
        ));

        let events = vec![ScenarioEvent::new(DEFAULT_HORIZON_S - 100, "eating", 600)];
        assert!(matches!(
            run(&catalog, &params, &config, &events),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn determinism_byte_level() {
        let (catalog, params, _) = setup();
        let config = MonitorConfig {
            horizon_s: 35 * SECONDS_PER_DAY,
            ..MonitorConfig::default()
        };
        let mut events = Vec::new();
        for day in 0..34u64 {
            events.push(ScenarioEvent::new(
                day * SECONDS_PER_DAY + 9 * 3_600,
                "toileting",
                300,
            ));
            events.push(ScenarioEvent::new(
                day * SECONDS_PER_DAY + 12 * 3_600,
                "eating",
                900,
            ));
        }
        let a = run(&catalog, &params, &config, &events).unwrap();
        let b = run(&catalog, &params, &config, &events).unwrap();
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_detections_to(&mut buf_a, &a.detections).unwrap();
        write_detections_to(&mut buf_b, &b.detections).unwrap();
        assert_eq!(buf_a, buf_b);
        assert_eq!(a.ledger.to_csv(), b.ledger.to_csv());
    }

    #[test]
    fn sub_activity_events_accrue_to_parent() {
        let (catalog, params, _) = setup();
        let config = MonitorConfig {
            horizon_s: 2 * SECONDS_PER_DAY,
            ..MonitorConfig::default()
        };
        let events = vec![
            ScenarioEvent::new(1_000, "make_coffee", 300),
            ScenarioEvent::new(5_000, "make_hot_food", 900),
        ];
        let out = run(&catalog, &params, &config, &events).unwrap();
        let totals = out.ledger.activity_totals();
        assert_eq!(totals[&ActivityId::from("meal_preparation")].monitored, 2);
    }

    #[test]
    fn detection_io_round_trip() {
        let detections = vec![
            Detection {
                t_s: 100,
                activity: ActivityId::from("eating"),
                kind: DetectionKind::Abnormal,
                confirmed: false,
            },
            Detection {
                t_s: 90_000,
                activity: ActivityId::from("toileting"),
                kind: DetectionKind::MissingFrequency,
                confirmed: true,
            },
        ];
        let mut buf = Vec::new();
        write_detections_to(&mut buf, &detections).unwrap();
        let back = read_detections_from(buf.as_slice()).unwrap();
        assert_eq!(back, detections);
    }

    #[test]
    fn continuous_comparator_flags_out_of_range_days() {
        let catalog = Catalog::default_catalog();
        // Day 0: three toileting events (normal); day 1: one (abnormal);
        // day 2: none (missing).
        let mut events = Vec::new();
        for hour in [9u64, 14, 20] {
            events.push(ScenarioEvent::new(hour * 3_600, "toileting", 300));
        }
        events.push(ScenarioEvent::new(SECONDS_PER_DAY + 9 * 3_600, "toileting", 300));
        let detections =
            continuous_detections(&catalog, &events, 3 * SECONDS_PER_DAY).unwrap();
        let toileting: Vec<_> = detections
            .iter()
            .filter(|d| d.activity.as_str() == "toileting")
            .collect();
        assert_eq!(toileting.len(), 2);
        assert_eq!(toileting[0].t_s, 2 * SECONDS_PER_DAY);
        assert_eq!(toileting[0].kind, DetectionKind::Abnormal);
        assert_eq!(toileting[1].kind, DetectionKind::MissingFrequency);
    }

    #[test]
    fn group_cells_follow_profile_for_every_activity() {
        // After an evaluation forcing profile p, every non-computed
        // activity's x equals x_initial / divisor or is off.
        let (catalog, params, config) = setup();
        for profile in 1..=14u8 {
            let mut engine = Engine::new(&catalog, &params, &config);
            engine.apply_global_update(profile, 0);
            for (idx, def) in catalog.activities().iter().enumerate() {
                let cell = catalog.x_update.lookup(profile, def.group);
                if def.is_computed() {
                    assert_eq!(
                        engine.states[idx].computed_enabled,
                        cell != XUpdate::Off
                    );
                    continue;
                }
                match cell {
                    XUpdate::Off => assert_eq!(engine.states[idx].x_days, None),
                    XUpdate::Divisor(d) => {
                        let expected = def.x_initial.days().unwrap() / d as f64;
                        assert_eq!(
                            engine.states[idx].x_days,
                            Some(expected),
                            "P{profile} {} ({:?})",
                            def.id,
                            def.group
                        );
                    }
                }
            }
        }
        // Spot-check a non-matrix group stays at its initial frequency.
        let mut engine = Engine::new(&catalog, &params, &config);
        engine.apply_global_update(1, 0);
        let tv = idx_of(&catalog, "watching_tv");
        assert_eq!(engine.states[tv].x_days, Some(10.0));
        assert_eq!(
            catalog.activity(tv).group,
            ActivityGroup::Other
        );
    }
}
