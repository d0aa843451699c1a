//! Constrained random-walk scenario generation.
//!
//! A day's activity trace is an order-1 Markov walk over the time-of-day
//! transition matrices, constrained by per-activity frequency bounds and a
//! target total active duration. A year is the concatenation of daily
//! sequences, with per-profile behavior constraints and controlled anomaly
//! injection.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{ActivityGroup, ActivityId, Catalog, SECONDS_PER_DAY};
use crate::error::{Error, Result};
use crate::matrices::{select_matrix, MatrixSet, Weekday};
use crate::scenario::{AnomalyTag, GroundTruthEntry, GroundTruthKind, ScenarioEvent};

/// Days in a generated year: twelve 30-day months plus a 5-day tail that
/// belongs to month 12.
pub const YEAR_DAYS: u64 = 365;
/// Daily sequences start at 8:00.
pub const DAY_START_OFFSET_S: u64 = 8 * 3600;

/// Per-day generation constraints.
#[derive(Debug, Clone)]
pub struct GenConstraints {
    /// Per-activity daily occurrence bounds. Unlisted activities get
    /// `(0, default_freq_max)`.
    pub freq: BTreeMap<ActivityId, (u32, u32)>,
    pub default_freq_max: u32,
    /// Per-activity occurrence duration bounds in seconds.
    pub duration_s: BTreeMap<ActivityId, (u64, u64)>,
    pub default_duration_s: (u64, u64),
    /// Gap between the end of an action and the start of the next.
    pub transition_s: (u64, u64),
    /// Target total active duration per day (activity time + transitions).
    pub target_active_s: u64,
    /// Walk anchor: the action the day implicitly starts from.
    pub start_action: Option<ActivityId>,
}

impl Default for GenConstraints {
    fn default() -> Self {
        GenConstraints {
            freq: BTreeMap::new(),
            default_freq_max: 24,
            duration_s: BTreeMap::new(),
            default_duration_s: (300, 1800),
            transition_s: (60, 600),
            target_active_s: 16 * 3600,
            start_action: None,
        }
    }
}

impl GenConstraints {
    pub fn validate(&self) -> Result<()> {
        if self.target_active_s == 0 {
            return Err(Error::InvalidConstraints("target duration must be positive".into()));
        }
        if self.transition_s.0 > self.transition_s.1 {
            return Err(Error::InvalidConstraints("transition bounds inverted".into()));
        }
        if self.default_duration_s.0 > self.default_duration_s.1 || self.default_duration_s.0 == 0 {
            return Err(Error::InvalidConstraints("default duration bounds invalid".into()));
        }
        for (id, (lo, hi)) in &self.freq {
            if lo > hi {
                return Err(Error::InvalidConstraints(format!(
                    "frequency bounds inverted for `{id}`"
                )));
            }
        }
        for (id, (lo, hi)) in &self.duration_s {
            if lo > hi || *lo == 0 {
                return Err(Error::InvalidConstraints(format!(
                    "duration bounds invalid for `{id}`"
                )));
            }
        }
        Ok(())
    }

    pub fn freq_bounds(&self, id: &ActivityId) -> (u32, u32) {
        self.freq
            .get(id)
            .copied()
            .unwrap_or((0, self.default_freq_max))
    }

    pub fn duration_bounds(&self, id: &ActivityId) -> (u64, u64) {
        self.duration_s
            .get(id)
            .copied()
            .unwrap_or(self.default_duration_s)
    }

    /// Largest possible contribution of a single appended event.
    fn max_event_span(&self, actions: &[ActivityId]) -> u64 {
        let max_dur = actions
            .iter()
            .map(|a| self.duration_bounds(a).1)
            .chain(std::iter::once(self.default_duration_s.1))
            .max()
            .unwrap_or(self.default_duration_s.1);
        max_dur + self.transition_s.1
    }

    fn check_feasible(&self, actions: &[ActivityId]) -> Result<()> {
        let required: u64 = actions
            .iter()
            .map(|a| {
                let (f_min, _) = self.freq_bounds(a);
                f_min as u64 * self.duration_bounds(a).0
            })
            .sum();
        let cap = 2 * self.target_active_s;
        if required > cap {
            return Err(Error::InfeasibleConstraints {
                required_s: required,
                cap_s: cap,
            });
        }
        Ok(())
    }
}

/// Generates one day's activity sequence starting at 8:00 of `day_index`.
///
/// The walk samples successors from the period matrix active at each event's
/// start time, rejects candidates that would exceed their daily `f_max`, and
/// steers toward unmet `f_min` targets when the remaining time budget gets
/// tight. Generation stops at the first event where all `f_min` are met and
/// the accumulated duration reaches `target_active_s`.
pub fn generate_sequence(
    matrices: &MatrixSet,
    constraints: &GenConstraints,
    day_index: u64,
    seed: u64,
) -> Result<Vec<ScenarioEvent>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_day(matrices, constraints, day_index, &mut rng)
}

pub(crate) fn generate_day(
    matrices: &MatrixSet,
    constraints: &GenConstraints,
    day_index: u64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ScenarioEvent>> {
    constraints.validate()?;
    let actions = matrices.actions();
    constraints.check_feasible(actions)?;

    let n = actions.len();
    let bounds: Vec<(u32, u32)> = actions.iter().map(|a| constraints.freq_bounds(a)).collect();
    let mut counts = vec![0u32; n];
    // Worst-case time one forced occurrence of each action can take.
    let spans: Vec<u64> = actions
        .iter()
        .map(|a| constraints.duration_bounds(a).1 + constraints.transition_s.1)
        .collect();
    let sd = constraints.target_active_s;

    let start_idx = constraints
        .start_action
        .as_ref()
        .and_then(|a| matrices.action_index(a))
        .unwrap_or(0);

    let mut events: Vec<ScenarioEvent> = Vec::new();
    let mut current = start_idx;
    let mut clock = day_index * SECONDS_PER_DAY + DAY_START_OFFSET_S;
    let mut cum: u64 = 0;

    loop {
        let mut deficit = 0u64;
        let mut needed_s = 0u64;
        for j in 0..n {
            let d = bounds[j].0.saturating_sub(counts[j]) as u64;
            deficit += d;
            needed_s += d * spans[j];
        }
        if deficit == 0 && cum >= sd {
            break;
        }

        let gap = rng.random_range(constraints.transition_s.0..=constraints.transition_s.1);
        let event_start = clock + gap;
        let weekday = Weekday::from_day_index(event_start / SECONDS_PER_DAY);
        let matrix = matrices.matrix(select_matrix(event_start % SECONDS_PER_DAY, weekday));
        let row = matrix.row(current);

        // Steer toward unmet minimums once the remaining budget could be
        // consumed by them alone; this keeps the terminal duration within
        // one event span of the target.
        let completion = deficit > 0 && cum + needed_s >= sd;
        let admissible = |j: usize| {
            counts[j] < bounds[j].1 && (!completion || counts[j] < bounds[j].0)
        };
        let weights: Vec<f64> = (0..n)
            .map(|j| if admissible(j) { row[j] } else { 0.0 })
            .collect();
        let next = match sample_weighted(rng, &weights) {
            Some(j) => j,
            None if completion => {
                // The matrix gives no mass to any unmet action; fall back to
                // a uniform draw over them.
                let unmet: Vec<usize> = (0..n).filter(|&j| counts[j] < bounds[j].0).collect();
                unmet[rng.random_range(0..unmet.len())]
            }
            None => return Err(Error::AbsorbingState(actions[current].0.clone())),
        };

        let (d_lo, d_hi) = constraints.duration_bounds(&actions[next]);
        let duration = rng.random_range(d_lo..=d_hi);

        if !events.is_empty() {
            cum += gap;
        }
        cum += duration;
        events.push(ScenarioEvent {
            start_s: event_start,
            activity: actions[next].clone(),
            duration_s: duration,
            anomaly_tag: AnomalyTag::None,
        });
        counts[next] += 1;
        current = next;
        clock = event_start + duration;
    }

    Ok(events)
}

fn sample_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut x = rng.random::<f64>() * total;
    let mut last = None;
    for (j, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        last = Some(j);
        if x < *w {
            return Some(j);
        }
        x -= *w;
    }
    last
}

/// Assignment of a dependency profile to a range of months (1-based,
/// inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub from_month: u32,
    pub to_month: u32,
    pub profile: u8,
}

/// A 12-month profile schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileSchedule {
    entries: Vec<ScheduleEntry>,
}

impl ProfileSchedule {
    pub fn new(entries: Vec<ScheduleEntry>) -> Result<Self> {
        let mut next = 1;
        for e in &entries {
            if e.from_month != next || e.to_month < e.from_month {
                return Err(Error::ScheduleGap(next));
            }
            if !(1..=14).contains(&e.profile) {
                return Err(Error::InvalidConstraints(format!(
                    "profile {} out of 1..14",
                    e.profile
                )));
            }
            next = e.to_month + 1;
        }
        if next != 13 {
            return Err(Error::ScheduleGap(next));
        }
        Ok(ProfileSchedule { entries })
    }

    /// A full year at one profile.
    pub fn constant(profile: u8) -> Self {
        ProfileSchedule::new(vec![ScheduleEntry {
            from_month: 1,
            to_month: 12,
            profile,
        }])
        .expect("constant schedule is well-formed")
    }

    /// The declining-health schedule used throughout the evaluation:
    /// P1 x3, P3 x3, P6 x3, then P9, P8, P9.
    pub fn declining() -> Self {
        ProfileSchedule::new(vec![
            ScheduleEntry { from_month: 1, to_month: 3, profile: 1 },
            ScheduleEntry { from_month: 4, to_month: 6, profile: 3 },
            ScheduleEntry { from_month: 7, to_month: 9, profile: 6 },
            ScheduleEntry { from_month: 10, to_month: 10, profile: 9 },
            ScheduleEntry { from_month: 11, to_month: 11, profile: 8 },
            ScheduleEntry { from_month: 12, to_month: 12, profile: 9 },
        ])
        .expect("declining schedule is well-formed")
    }

    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.entries
    }

    /// Profile active in a 1-based month.
    pub fn profile_for_month(&self, month: u32) -> u8 {
        let m = month.min(12);
        self.entries
            .iter()
            .find(|e| e.from_month <= m && m <= e.to_month)
            .map(|e| e.profile)
            .unwrap_or(1)
    }

    /// Profile active on a 0-based day; the 5-day tail belongs to month 12.
    pub fn profile_for_day(&self, day: u64) -> u8 {
        let month = (day / 30).min(11) as u32 + 1;
        self.profile_for_month(month)
    }
}

/// Per-group ability retention factors for a profile. 1.0 keeps the
/// autonomous behavior, 0.0 drops the group entirely.
fn ability_factors(profile: u8) -> BTreeMap<ActivityGroup, f64> {
    use ActivityGroup::*;
    let (adl, mob, com, mf, iadl) = match profile {
        1 => (1.0, 1.0, 1.0, 1.0, 1.0),
        2 => (1.0, 1.0, 1.0, 1.0, 0.8),
        3 => (1.0, 1.0, 1.0, 1.0, 0.25),
        4 => (1.0, 0.5, 1.0, 1.0, 0.25),
        5 => (1.0, 1.0, 0.9, 0.5, 0.2),
        6 => (0.9, 0.5, 1.0, 1.0, 0.15),
        7 => (0.8, 0.5, 0.9, 0.35, 0.1),
        8 => (0.8, 0.4, 0.9, 0.3, 0.1),
        9 => (0.6, 0.25, 0.9, 0.8, 0.1),
        10 => (0.5, 0.4, 0.8, 0.3, 0.05),
        11 => (0.4, 0.3, 0.7, 0.3, 0.0),
        12 => (0.3, 0.25, 0.6, 0.3, 0.0),
        13 => (0.2, 0.2, 0.5, 0.25, 0.0),
        _ => (0.1, 0.1, 0.4, 0.2, 0.0),
    };
    BTreeMap::from([
        (Adl, adl),
        (Mobility, mob),
        (Communication, com),
        (MentalFunctions, mf),
        (Iadl, iadl),
        (Other, 1.0),
    ])
}

/// How early an activity is lost within its group as abilities decline
/// (1.0 = demanding, lost first; 0.0 = effortless, lost last).
fn loss_difficulty(id: &str) -> f64 {
    match id {
        "shopping" | "transportation" | "go_outside" => 1.0,
        "budgeting" => 0.9,
        "laundry" | "stairs" | "memory" => 0.8,
        "judgement" => 0.7,
        "housekeeping" | "comprehension" | "washing" | "weight" => 0.6,
        "meal_preparation" | "grooming" | "dressing" | "behavior" | "reading" | "vision"
        | "hearing" => 0.5,
        "medication_use" | "speaking" | "orientation" => 0.4,
        "toileting" | "walking_inside" => 0.3,
        "eating" | "telephone_use" | "watching_tv" | "transfer" => 0.2,
        "sleeping" => 0.1,
        _ => 0.5,
    }
}

/// Effective retention of one activity: demanding activities fall faster
/// than their group factor, effortless ones slower. Below the cutoff the
/// activity disappears from the person's routine. Medication intake is an
/// assisted routine and persists (at a reduced rhythm) as long as the group
/// exists at all.
fn effective_retention(group_factor: f64, id: &str) -> f64 {
    let eff = (group_factor * (1.3 - 0.5 * loss_difficulty(id))).clamp(0.0, 1.0);
    if id == "medication_use" && group_factor > 0.0 {
        eff.max(0.6)
    } else {
        eff
    }
}

const RETENTION_CUTOFF: f64 = 0.25;

/// Daily frequency bounds of a fully autonomous person. These defaults are
/// synthetic; they pair with the catalog's normal count ranges so that
/// compliant days stay inside the category II normality bands.
fn autonomous_freq(id: &str) -> (u32, u32) {
    match id {
        "eating" => (2, 3),
        "washing" => (1, 1),
        "dressing" => (1, 2),
        "grooming" => (1, 2),
        "toileting" => (2, 3),
        "transfer" => (2, 4),
        "walking_inside" => (3, 8),
        "stairs" => (1, 3),
        "go_outside" => (0, 1),
        "housekeeping" => (1, 2),
        "meal_preparation" => (2, 3),
        "shopping" => (0, 1),
        "laundry" => (0, 1),
        "telephone_use" => (1, 3),
        "transportation" => (0, 1),
        "medication_use" => (2, 3),
        "watching_tv" => (1, 3),
        // The night matrix supplies sleep; forcing it through a frequency
        // floor would put the walk in completion mode all day.
        "sleeping" => (0, 1),
        "reading" => (1, 2),
        "weight" => (1, 1),
        // Questionnaire activities occur a few times a week, driven by the
        // evening matrix probabilities.
        _ => (0, 1),
    }
}

/// Builds the behavior constraints of a person at the given profile.
/// Lower-ability profiles lose demanding activities entirely, perform the
/// remaining ones less often, and drift occurrence durations toward the top
/// of their normal band.
pub fn constraints_for_profile(catalog: &Catalog, profile: u8) -> GenConstraints {
    let factors = ability_factors(profile);
    let mut constraints = GenConstraints {
        start_action: Some(ActivityId::from("sleeping")),
        ..GenConstraints::default()
    };
    for act in catalog.activities() {
        let retention = effective_retention(factors[&act.group], act.id.as_str());
        let (base_min, base_max) = autonomous_freq(act.id.as_str());
        let (f_min, f_max) = if retention >= 0.999 {
            (base_min, base_max)
        } else if retention < RETENTION_CUTOFF {
            (0, 0)
        } else {
            let f_min = (base_min as f64 * retention).floor() as u32;
            let f_max = ((base_max as f64 * retention).round() as u32).max(1).max(f_min);
            (f_min, f_max)
        };
        constraints.freq.insert(act.id.clone(), (f_min, f_max));

        let (lo, hi) = act.duration_range_s;
        // Slower execution with lower ability, kept inside the normal band.
        let shifted_lo = lo + ((hi - lo) as f64 * (1.0 - retention) * 0.5) as u64;
        constraints
            .duration_s
            .insert(act.id.clone(), (shifted_lo.min(hi), hi));
    }

    // A declined person fills fewer active hours: cap the daily target well
    // below the expected time the remaining allowances can cover, so a day
    // never runs out of admissible actions.
    let avg_gap = (constraints.transition_s.0 + constraints.transition_s.1) as f64 / 2.0;
    let expected_budget: f64 = catalog
        .activities()
        .iter()
        .map(|act| {
            let (_, f_max) = constraints.freq_bounds(&act.id);
            let (lo, hi) = constraints.duration_bounds(&act.id);
            f_max as f64 * ((lo + hi) as f64 / 2.0 + avg_gap)
        })
        .sum();
    constraints.target_active_s = constraints
        .target_active_s
        .min((expected_budget * 0.6) as u64)
        .max(3_600);
    constraints
}

/// Kind of an injected anomaly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    DurationOutHigh,
    DurationOutLow,
    MissingFrequency,
}

/// A planned anomaly: mutate `activity` on 0-based `day`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub day: u32,
    pub activity: ActivityId,
    pub kind: AnomalyKind,
}

/// How a year generation produces anomalies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnomalyPolicy {
    None,
    /// Derive specs from the schedule's decline pattern.
    Derive,
    Explicit(Vec<AnomalySpec>),
}

/// Generates a 365-day scenario plus its ground-truth anomaly log.
pub fn generate_year(
    matrices: &MatrixSet,
    catalog: &Catalog,
    schedule: &ProfileSchedule,
    seed: u64,
    anomalies: &AnomalyPolicy,
) -> Result<(Vec<ScenarioEvent>, Vec<GroundTruthEntry>)> {
    matrices.check_against(catalog)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut constraint_cache: BTreeMap<u8, GenConstraints> = BTreeMap::new();
    let mut events: Vec<ScenarioEvent> = Vec::new();

    for day in 0..YEAR_DAYS {
        let profile = schedule.profile_for_day(day);
        let constraints = constraint_cache
            .entry(profile)
            .or_insert_with(|| constraints_for_profile(catalog, profile));
        let mut day_events = generate_day(matrices, constraints, day, &mut rng)?;
        // A day's walk may run past midnight; clip the trailing events so
        // the next day's 8:00 start never overlaps, and the final day stays
        // inside the year.
        let limit = ((day + 1) * SECONDS_PER_DAY + DAY_START_OFFSET_S - constraints.transition_s.0)
            .min(YEAR_DAYS * SECONDS_PER_DAY);
        day_events.retain(|ev| ev.start_s < limit);
        for ev in &mut day_events {
            if ev.end_s() > limit {
                ev.duration_s = (limit - ev.start_s).max(1);
            }
        }
        events.extend(day_events);
    }

    let specs = match anomalies {
        AnomalyPolicy::None => Vec::new(),
        AnomalyPolicy::Explicit(specs) => specs.clone(),
        AnomalyPolicy::Derive => derive_anomaly_specs(&events, catalog, schedule, seed ^ 0x9E37_79B9_7F4A_7C15),
    };
    inject_anomalies(events, &specs, catalog)
}

/// Applies anomaly specs to an event list, returning the mutated events and
/// the ground-truth log.
///
/// `DurationOutHigh` stretches one occurrence to three times its normal
/// maximum (capped so it never overlaps the following event);
/// `DurationOutLow` shrinks one to a third of the normal minimum, floored at
/// 60 s. `MissingFrequency` deletes the day's occurrences and is logged at
/// the end of the emptied day.
pub fn inject_anomalies(
    mut events: Vec<ScenarioEvent>,
    specs: &[AnomalySpec],
    catalog: &Catalog,
) -> Result<(Vec<ScenarioEvent>, Vec<GroundTruthEntry>)> {
    let mut log: Vec<GroundTruthEntry> = Vec::new();
    let mut deleted: Vec<usize> = Vec::new();

    for spec in specs {
        let act_idx = catalog
            .index_of(&spec.activity)
            .ok_or_else(|| Error::UnknownActivity(spec.activity.0.clone()))?;
        let def = catalog.activity(act_idx);
        let day_lo = spec.day as u64 * SECONDS_PER_DAY;
        let day_hi = day_lo + SECONDS_PER_DAY;
        let in_day: Vec<usize> = events
            .iter()
            .enumerate()
            .filter(|(i, ev)| {
                ev.activity == spec.activity
                    && ev.start_s >= day_lo
                    && ev.start_s < day_hi
                    && !deleted.contains(i)
            })
            .map(|(i, _)| i)
            .collect();

        match spec.kind {
            AnomalyKind::MissingFrequency => {
                deleted.extend(&in_day);
                log.push(GroundTruthEntry {
                    t_s: day_hi,
                    activity: spec.activity.clone(),
                    kind: GroundTruthKind::MissingFrequency,
                });
            }
            AnomalyKind::DurationOutHigh => {
                if in_day.is_empty() {
                    return Err(Error::NoOccurrence {
                        activity: spec.activity.0.clone(),
                        day: spec.day,
                    });
                }
                let (_, d_hi) = def.duration_range_s;
                let target = 3 * d_hi;
                let mut placed = None;
                for &i in in_day.iter().rev() {
                    let next_start = events[i + 1..]
                        .iter()
                        .map(|e| e.start_s)
                        .next()
                        .unwrap_or(u64::MAX);
                    let room = next_start.saturating_sub(events[i].start_s).saturating_sub(60);
                    if room > d_hi {
                        placed = Some((i, target.min(room)));
                        break;
                    }
                }
                match placed {
                    Some((i, dur)) => {
                        events[i].duration_s = dur;
                        events[i].anomaly_tag = AnomalyTag::DurationOut;
                        log.push(GroundTruthEntry {
                            t_s: events[i].start_s,
                            activity: spec.activity.clone(),
                            kind: GroundTruthKind::DurationOut,
                        });
                    }
                    None => {
                        // No room to stretch; shrink instead.
                        let i = *in_day.last().expect("checked non-empty");
                        apply_duration_low(&mut events, i, def.duration_range_s.0, &mut log);
                    }
                }
            }
            AnomalyKind::DurationOutLow => {
                if in_day.is_empty() {
                    return Err(Error::NoOccurrence {
                        activity: spec.activity.0.clone(),
                        day: spec.day,
                    });
                }
                let i = in_day[0];
                apply_duration_low(&mut events, i, def.duration_range_s.0, &mut log);
            }
        }
    }

    if !deleted.is_empty() {
        deleted.sort_unstable();
        deleted.dedup();
        for &i in deleted.iter().rev() {
            events.remove(i);
        }
    }
    log.sort_by(|a, b| (a.t_s, &a.activity).cmp(&(b.t_s, &b.activity)));
    Ok((events, log))
}

fn apply_duration_low(
    events: &mut [ScenarioEvent],
    i: usize,
    d_lo: u64,
    log: &mut Vec<GroundTruthEntry>,
) {
    events[i].duration_s = (d_lo / 3).max(60);
    events[i].anomaly_tag = AnomalyTag::DurationOut;
    log.push(GroundTruthEntry {
        t_s: events[i].start_s,
        activity: events[i].activity.clone(),
        kind: GroundTruthKind::DurationOut,
    });
}

/// Derives an anomaly plan from the decline pattern of a schedule: healthy
/// months get none, declining months get a few on the category II activities
/// that the adaptive monitor watches most closely.
pub fn derive_anomaly_specs(
    events: &[ScenarioEvent],
    catalog: &Catalog,
    schedule: &ProfileSchedule,
    seed: u64,
) -> Vec<AnomalySpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Days (0-based) on which each activity occurs at least once.
    let mut occupied: BTreeMap<&ActivityId, Vec<u32>> = BTreeMap::new();
    for ev in events {
        let day = (ev.start_s / SECONDS_PER_DAY) as u32;
        let days = occupied.entry(&ev.activity).or_default();
        if days.last() != Some(&day) {
            days.push(day);
        }
    }

    // Medication intake persists in behavior through the decline and is the
    // most closely watched instrumental activity, so it carries most of the
    // injected anomalies; meal preparation works while it still happens and
    // eating adds variety late in the year.
    let early_targets = ["medication_use", "meal_preparation", "medication_use"];
    let late_targets = [
        "medication_use",
        "medication_use",
        "medication_use",
        "eating",
    ];

    let mut specs: Vec<AnomalySpec> = Vec::new();
    for month in 1..=12u32 {
        let profile = schedule.profile_for_month(month);
        if profile == 1 {
            continue;
        }
        let quota = if month < 8 {
            3
        } else if month <= 9 {
            8
        } else {
            5
        };
        let targets: &[&str] = if month < 8 { &early_targets } else { &late_targets };

        let day_lo = (month - 1) * 30 + 1;
        let day_hi = if month == 12 { 364 } else { month * 30 - 1 };
        let mut used_days: Vec<(u32, &str)> = Vec::new();
        let mut placed = 0u32;
        let mut k = 0usize;
        while placed < quota && k < targets.len() * 6 {
            let target = targets[k % targets.len()];
            k += 1;
            let id = ActivityId::from(target);
            if catalog.index_of(&id).is_none() {
                continue;
            }
            let candidates: Vec<u32> = occupied
                .get(&id)
                .map(|days| {
                    days.iter()
                        .copied()
                        .filter(|d| {
                            *d >= day_lo
                                && *d <= day_hi
                                && !used_days.iter().any(|(ud, ua)| {
                                    *ua == target && ud.abs_diff(*d) <= 1
                                })
                        })
                        .collect()
                })
                .unwrap_or_default();
            if candidates.is_empty() {
                continue;
            }
            let day = candidates[rng.random_range(0..candidates.len())];
            used_days.push((day, target));
            let kind = if placed % 4 == 3 {
                AnomalyKind::DurationOutHigh
            } else {
                AnomalyKind::MissingFrequency
            };
            specs.push(AnomalySpec { day, activity: id, kind });
            placed += 1;
        }
    }
    specs.sort_by(|a, b| (a.day, &a.activity).cmp(&(b.day, &b.activity)));
    specs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::MatrixId;
    use crate::matrices::TransitionMatrix;

    fn default_setup() -> (Catalog, MatrixSet) {
        let catalog = Catalog::default_catalog();
        let matrices = MatrixSet::synthetic_default(&catalog);
        (catalog, matrices)
    }

    #[test]
    fn frequency_minimums_are_met() {
        let (catalog, matrices) = default_setup();
        let mut constraints = constraints_for_profile(&catalog, 1);
        constraints
            .freq
            .insert(ActivityId::from("eating"), (3, 3));
        let events = generate_sequence(&matrices, &constraints, 0, 7).unwrap();
        let eating = events
            .iter()
            .filter(|e| e.activity.as_str() == "eating")
            .count();
        assert!(eating >= 3, "only {eating} eating events");
    }

    #[test]
    fn frequency_bounds_hold_for_every_action() {
        let (catalog, matrices) = default_setup();
        let constraints = constraints_for_profile(&catalog, 1);
        for seed in [1u64, 2, 3] {
            let events = generate_sequence(&matrices, &constraints, 0, seed).unwrap();
            let mut counts: BTreeMap<&ActivityId, u32> = BTreeMap::new();
            for ev in &events {
                *counts.entry(&ev.activity).or_default() += 1;
            }
            for action in matrices.actions() {
                let (lo, hi) = constraints.freq_bounds(action);
                let got = counts.get(action).copied().unwrap_or(0);
                assert!(
                    got >= lo && got <= hi,
                    "{action}: {got} outside [{lo}, {hi}] (seed {seed})"
                );
            }
        }
    }

    #[test]
    fn stopping_bound_holds() {
        let (catalog, matrices) = default_setup();
        let constraints = constraints_for_profile(&catalog, 1);
        let events = generate_sequence(&matrices, &constraints, 0, 42).unwrap();
        // Replay the walk's accounting: durations plus inter-event gaps.
        let cum: u64 = events.iter().map(|e| e.duration_s).sum::<u64>()
            + events
                .windows(2)
                .map(|w| w[1].start_s - w[0].end_s())
                .sum::<u64>();
        let sd = constraints.target_active_s;
        let span = constraints.max_event_span(matrices.actions());
        assert!(cum >= sd, "terminal duration {cum} below target {sd}");
        assert!(
            cum <= sd + span,
            "terminal duration {cum} exceeds {sd} + {span}"
        );
    }

    #[test]
    fn sequence_is_deterministic() {
        let (catalog, matrices) = default_setup();
        let constraints = constraints_for_profile(&catalog, 1);
        let a = generate_sequence(&matrices, &constraints, 0, 99).unwrap();
        let b = generate_sequence(&matrices, &constraints, 0, 99).unwrap();
        assert_eq!(a, b);
        let c = generate_sequence(&matrices, &constraints, 0, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn absorbing_state_is_an_error() {
        // Two actions; every row sends all mass to the second one, whose
        // f_max is exhausted immediately.
        let actions = vec![ActivityId::from("a"), ActivityId::from("b")];
        let rows = vec![vec![0.0, 1.0], vec![0.0, 1.0]];
        let mut by_id = BTreeMap::new();
        for id in MatrixId::ALL {
            by_id.insert(id, TransitionMatrix::new(id, rows.clone()).unwrap());
        }
        let matrices = MatrixSet::new(actions, by_id).unwrap();
        let mut constraints = GenConstraints {
            target_active_s: 4 * 3600,
            ..GenConstraints::default()
        };
        constraints.freq.insert(ActivityId::from("b"), (0, 1));
        let err = generate_sequence(&matrices, &constraints, 0, 5).unwrap_err();
        assert!(matches!(err, Error::AbsorbingState(_)), "got {err:?}");
    }

    #[test]
    fn infeasible_constraints_are_rejected() {
        let (catalog, matrices) = default_setup();
        let mut constraints = constraints_for_profile(&catalog, 1);
        constraints.target_active_s = 600;
        let err = generate_sequence(&matrices, &constraints, 0, 5).unwrap_err();
        assert!(matches!(err, Error::InfeasibleConstraints { .. }), "got {err:?}");
    }

    #[test]
    fn year_is_sorted_and_non_overlapping() {
        let (catalog, matrices) = default_setup();
        let (events, _) = generate_year(
            &matrices,
            &catalog,
            &ProfileSchedule::declining(),
            11,
            &AnomalyPolicy::None,
        )
        .unwrap();
        assert!(!events.is_empty());
        for pair in events.windows(2) {
            assert!(
                pair[1].start_s >= pair[0].end_s(),
                "overlap at t={}",
                pair[1].start_s
            );
        }
    }

    #[test]
    fn stable_schedule_without_anomalies_has_empty_log() {
        let (catalog, matrices) = default_setup();
        let (_, log) = generate_year(
            &matrices,
            &catalog,
            &ProfileSchedule::constant(1),
            3,
            &AnomalyPolicy::Derive,
        )
        .unwrap();
        assert!(log.is_empty());
    }

    #[test]
    fn derived_anomalies_start_after_first_decline() {
        let (catalog, matrices) = default_setup();
        let (events, log) = generate_year(
            &matrices,
            &catalog,
            &ProfileSchedule::declining(),
            3,
            &AnomalyPolicy::Derive,
        )
        .unwrap();
        assert!(log.len() >= 30, "only {} anomalies", log.len());
        let first = log.first().unwrap().t_s;
        assert!(first >= 90 * SECONDS_PER_DAY, "anomaly before month 4");
        // Events with a duration tag correspond one-to-one to log entries.
        let tagged = events
            .iter()
            .filter(|e| e.anomaly_tag == AnomalyTag::DurationOut)
            .count();
        let logged = log
            .iter()
            .filter(|e| e.kind == GroundTruthKind::DurationOut)
            .count();
        assert_eq!(tagged, logged);
    }

    #[test]
    fn duration_high_stretches_to_triple_band_max() {
        let catalog = Catalog::default_catalog();
        // Hand-built day: two toileting visits, then an unrelated event far
        // later so there is room to stretch.
        let events = vec![
            ScenarioEvent::new(1_000, "toileting", 300),
            ScenarioEvent::new(40_000, "toileting", 300),
            ScenarioEvent::new(80_000, "reading", 900),
        ];
        let specs = vec![AnomalySpec {
            day: 0,
            activity: ActivityId::from("toileting"),
            kind: AnomalyKind::DurationOutHigh,
        }];
        let (mutated, log) = inject_anomalies(events, &specs, &catalog).unwrap();
        // toileting duration band is [120, 600]: stretched to 3 * 600.
        assert_eq!(mutated[1].duration_s, 1_800);
        assert_eq!(mutated[1].anomaly_tag, AnomalyTag::DurationOut);
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].t_s, 40_000);
        // Still non-overlapping.
        for pair in mutated.windows(2) {
            assert!(pair[1].start_s >= pair[0].end_s());
        }
    }

    #[test]
    fn missing_frequency_deletes_the_day() {
        let catalog = Catalog::default_catalog();
        let day40 = 40 * SECONDS_PER_DAY;
        let events = vec![
            ScenarioEvent::new(day40 - 5_000, "eating", 600),
            ScenarioEvent::new(day40 + 1_000, "eating", 600),
            ScenarioEvent::new(day40 + 50_000, "eating", 600),
            ScenarioEvent::new(day40 + 60_000, "reading", 600),
        ];
        let specs = vec![AnomalySpec {
            day: 40,
            activity: ActivityId::from("eating"),
            kind: AnomalyKind::MissingFrequency,
        }];
        let (mutated, log) = inject_anomalies(events, &specs, &catalog).unwrap();
        let eating_day40 = mutated
            .iter()
            .filter(|e| {
                e.activity.as_str() == "eating"
                    && e.start_s >= day40
                    && e.start_s < day40 + SECONDS_PER_DAY
            })
            .count();
        assert_eq!(eating_day40, 0);
        assert_eq!(mutated.len(), 2); // the day-39 eating and the reading remain
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].t_s, day40 + SECONDS_PER_DAY);
    }

    #[test]
    fn empty_specs_are_identity() {
        let catalog = Catalog::default_catalog();
        let events = vec![ScenarioEvent::new(1_000, "eating", 600)];
        let (mutated, log) = inject_anomalies(events.clone(), &[], &catalog).unwrap();
        assert_eq!(mutated, events);
        assert!(log.is_empty());
    }

    #[test]
    fn duration_out_without_occurrence_is_an_error() {
        let catalog = Catalog::default_catalog();
        let events = vec![ScenarioEvent::new(1_000, "eating", 600)];
        let specs = vec![AnomalySpec {
            day: 5,
            activity: ActivityId::from("toileting"),
            kind: AnomalyKind::DurationOutHigh,
        }];
        let err = inject_anomalies(events, &specs, &catalog).unwrap_err();
        assert!(matches!(err, Error::NoOccurrence { day: 5, .. }), "got {err:?}");
    }

    #[test]
    fn schedule_validation() {
        assert!(ProfileSchedule::new(vec![
            ScheduleEntry { from_month: 1, to_month: 6, profile: 1 },
            ScheduleEntry { from_month: 8, to_month: 12, profile: 3 },
        ])
        .is_err());
        assert!(ProfileSchedule::new(vec![
            ScheduleEntry { from_month: 1, to_month: 6, profile: 1 },
            ScheduleEntry { from_month: 5, to_month: 12, profile: 3 },
        ])
        .is_err());
        assert!(ProfileSchedule::new(vec![
            ScheduleEntry { from_month: 1, to_month: 11, profile: 1 },
        ])
        .is_err());
        let ok = ProfileSchedule::declining();
        assert_eq!(ok.profile_for_month(1), 1);
        assert_eq!(ok.profile_for_month(4), 3);
        assert_eq!(ok.profile_for_month(10), 9);
        assert_eq!(ok.profile_for_month(11), 8);
        assert_eq!(ok.profile_for_day(364), 9);
    }
}
