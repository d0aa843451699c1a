//! Activity universe and static configuration: activity definitions, score
//! semantics, the 14-profile dependency table, the per-profile monitoring
//! frequency matrix and the relation graph.
//!
//! Everything here is immutable after loading and safe to share read-only
//! across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of activities in a complete catalog.
pub const ACTIVITY_COUNT: usize = 29;
/// Evaluation period in days.
pub const PERIOD_DAYS: f64 = 30.0;
/// Most negative reachable disability score (29 activities at -3).
pub const MAX_DISABILITY: i32 = -87;

pub const SECONDS_PER_DAY: u64 = 86_400;

/// Symbolic activity identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActivityId(pub String);

impl ActivityId {
    pub fn new(s: impl Into<String>) -> Self {
        ActivityId(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActivityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ActivityId {
    fn from(s: &str) -> Self {
        ActivityId(s.to_owned())
    }
}

/// Functional group an activity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityGroup {
    Adl,
    Mobility,
    Communication,
    MentalFunctions,
    Iadl,
    Other,
}

impl ActivityGroup {
    /// Column index in the x-update matrix. `Other` has no column; the
    /// matrix lookup treats it as "keep the initial frequency".
    fn matrix_column(self) -> Option<usize> {
        match self {
            ActivityGroup::Adl => Some(0),
            ActivityGroup::Mobility => Some(1),
            ActivityGroup::Communication => Some(2),
            ActivityGroup::MentalFunctions => Some(3),
            ActivityGroup::Iadl => Some(4),
            ActivityGroup::Other => None,
        }
    }
}

/// Monitoring mode of an activity.
///
/// * `I`: the sensor stays armed until the activity occurs once, then sleeps
///   for `x` days.
/// * `II`: the first occurrence opens a 24 h observation window; the
///   occurrence count inside the window is judged against
///   `normal_count_range`.
/// * `III`: questionnaire or computed activities with no dedicated window;
///   questionnaire ones behave like category I, computed ones are scored
///   through the relation graph only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MonitoringCategory {
    I,
    II,
    III,
}

/// Sensor resource class, used to price monitoring windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorClass {
    Low,
    Medium,
    High,
}

impl SensorClass {
    pub fn name(self) -> &'static str {
        match self {
            SensorClass::Low => "low",
            SensorClass::Medium => "medium",
            SensorClass::High => "high",
        }
    }
    pub const ALL: [SensorClass; 3] = [SensorClass::Low, SensorClass::Medium, SensorClass::High];
}

/// Initial monitoring frequency: a number of days, or "computed" for
/// activities that are never monitored directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XInitial {
    Days(f64),
    Computed,
}

impl XInitial {
    pub fn days(self) -> Option<f64> {
        match self {
            XInitial::Days(d) => Some(d),
            XInitial::Computed => None,
        }
    }
    pub fn is_computed(self) -> bool {
        matches!(self, XInitial::Computed)
    }
}

impl Serialize for XInitial {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            XInitial::Days(d) => ser.serialize_f64(*d),
            XInitial::Computed => ser.serialize_str("computed"),
        }
    }
}

impl<'de> Deserialize<'de> for XInitial {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(de)? {
            Raw::Num(d) => Ok(XInitial::Days(d)),
            Raw::Tag(s) if s == "computed" => Ok(XInitial::Computed),
            Raw::Tag(s) => Err(serde::de::Error::custom(format!(
                "x_initial must be a number of days or \"computed\", got {s:?}"
            ))),
        }
    }
}

/// One monitored activity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivityDef {
    pub id: ActivityId,
    pub group: ActivityGroup,
    pub category: MonitoringCategory,
    pub sensor_class: SensorClass,
    pub x_initial: XInitial,
    /// Length of an observation window in seconds. 0 for category I/III
    /// means the window lasts until the activity occurs.
    pub monitor_duration_s: u64,
    /// Normal occurrences per 24 h window (category II only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal_count_range: Option<(u32, u32)>,
    /// Typical duration of one occurrence, in seconds. Used by the scenario
    /// generator and as the normality band for occurrence durations.
    pub duration_range_s: (u64, u64),
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sub_activities: Vec<ActivityId>,
    /// Event-log-only activities: monitored occurrences are counted but
    /// carry no energy or traffic.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub zero_cost: bool,
}

impl ActivityDef {
    /// Activities scored exclusively through the relation graph.
    pub fn is_computed(&self) -> bool {
        self.x_initial.is_computed()
    }
}

/// The four score modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScoreModality {
    Dependent,
    NeedHelp,
    Supervision,
    Autonomous,
}

impl ScoreModality {
    pub fn value(self) -> i32 {
        match self {
            ScoreModality::Autonomous => 0,
            ScoreModality::Supervision => -1,
            ScoreModality::NeedHelp => -2,
            ScoreModality::Dependent => -3,
        }
    }

    pub fn from_value(v: i32) -> Option<Self> {
        match v {
            0 => Some(ScoreModality::Autonomous),
            -1 => Some(ScoreModality::Supervision),
            -2 => Some(ScoreModality::NeedHelp),
            -3 => Some(ScoreModality::Dependent),
            _ => None,
        }
    }
}

impl fmt::Display for ScoreModality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Maps an observed sub-score to a modality.
///
/// The window capacity `P/x` is split into four equal intervals of width
/// `P/(4x)`: `[0, step)` is Dependent, `[step, 2*step)` NeedHelp,
/// `[2*step, 3*step)` Supervision and `[3*step, 4*step]` Autonomous (the
/// upper endpoint is included).
pub fn smaf_score(sub_score: u32, x_days: f64, period_days: f64) -> Result<ScoreModality> {
    assert!(x_days > 0.0 && period_days > 0.0, "x and P must be positive");
    let step = period_days / (4.0 * x_days);
    let v = sub_score as f64;
    if v > 4.0 * step {
        return Err(Error::SubScoreOverflow {
            sub_score,
            capacity: period_days / x_days,
        });
    }
    Ok(if v < step {
        ScoreModality::Dependent
    } else if v < 2.0 * step {
        ScoreModality::NeedHelp
    } else if v < 3.0 * step {
        ScoreModality::Supervision
    } else {
        ScoreModality::Autonomous
    })
}

/// Sums the 29 per-activity modality values into the disability score.
pub fn disability_score(scores: &[ScoreModality]) -> Result<i32> {
    if scores.len() != ACTIVITY_COUNT {
        return Err(Error::ScoreCount {
            expected: ACTIVITY_COUNT,
            got: scores.len(),
        });
    }
    Ok(scores.iter().map(|s| s.value()).sum())
}

/// One row of the dependency profile table.
#[derive(Debug, Clone, Copy)]
pub struct ProfileRow {
    pub profile: u8,
    /// Mean disability in hundredths of a point, e.g. -933 for -9.33.
    /// Integer storage keeps tie-breaks in `classify_profile` exact.
    pub mean_disability_centi: i64,
    pub category: u8,
}

impl ProfileRow {
    pub fn mean_disability(&self) -> f64 {
        self.mean_disability_centi as f64 / 100.0
    }
}

/// The 14-profile dependency table.
#[derive(Debug, Clone)]
pub struct IsoSmafProfileTable {
    rows: Vec<ProfileRow>,
}

impl IsoSmafProfileTable {
    pub fn new(rows: Vec<ProfileRow>) -> Result<Self> {
        if rows.len() != 14 {
            return Err(Error::Catalog(format!(
                "profile table must have 14 rows, got {}",
                rows.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.profile as usize != i + 1 {
                return Err(Error::Catalog(format!(
                    "profile rows must be numbered 1..14 in order, row {} is P{}",
                    i + 1,
                    row.profile
                )));
            }
            if !(1..=4).contains(&row.category) {
                return Err(Error::Catalog(format!(
                    "profile P{} category {} out of 1..4",
                    row.profile, row.category
                )));
            }
        }
        // Mean disability is nonincreasing from P1 to P14.
        for pair in rows.windows(2) {
            if pair[1].mean_disability_centi > pair[0].mean_disability_centi {
                return Err(Error::Catalog(format!(
                    "profile means must be nonincreasing, P{} > P{}",
                    pair[1].profile, pair[0].profile
                )));
            }
        }
        Ok(IsoSmafProfileTable { rows })
    }

    pub fn rows(&self) -> &[ProfileRow] {
        &self.rows
    }

    pub fn row(&self, profile: u8) -> &ProfileRow {
        &self.rows[(profile - 1) as usize]
    }
}

/// Classifies a disability score into a profile by nearest mean disability.
/// Exact ties go to the lower profile number.
pub fn classify_profile(disability: f64, table: &IsoSmafProfileTable) -> u8 {
    let centi = (disability * 100.0).round() as i64;
    let mut best = table.rows[0].profile;
    let mut best_dist = (centi - table.rows[0].mean_disability_centi).abs();
    for row in &table.rows[1..] {
        let dist = (centi - row.mean_disability_centi).abs();
        if dist < best_dist {
            best = row.profile;
            best_dist = dist;
        }
    }
    best
}

/// One cell of the x-update matrix: divide the initial frequency by `d`, or
/// stop monitoring entirely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XUpdate {
    Divisor(u8),
    Off,
}

/// 14 x 5 grid mapping (profile, activity group) to a frequency update.
#[derive(Debug, Clone)]
pub struct XUpdateMatrix {
    cells: Vec<[XUpdate; 5]>,
}

impl XUpdateMatrix {
    pub fn new(cells: Vec<[XUpdate; 5]>) -> Result<Self> {
        if cells.len() != 14 {
            return Err(Error::MatrixShape {
                expected: "14x5".into(),
                got: format!("{}x5", cells.len()),
            });
        }
        for (i, row) in cells.iter().enumerate() {
            for cell in row {
                if let XUpdate::Divisor(d) = cell {
                    if *d == 0 || *d > 3 {
                        return Err(Error::Catalog(format!(
                            "x-update divisor {d} out of 1..3 in row P{}",
                            i + 1
                        )));
                    }
                }
            }
        }
        Ok(XUpdateMatrix { cells })
    }

    /// Update applied to `group` under `profile`. Groups outside the five
    /// table columns keep their initial frequency.
    pub fn lookup(&self, profile: u8, group: ActivityGroup) -> XUpdate {
        match group.matrix_column() {
            Some(col) => self.cells[(profile - 1) as usize][col],
            None => XUpdate::Divisor(1),
        }
    }
}

/// Directed arcs between activities: an arc (a, b) means demonstrated
/// autonomy on `a` implies autonomy on `b`.
#[derive(Debug, Clone, Default)]
pub struct RelationGraph {
    arcs: Vec<(ActivityId, ActivityId)>,
}

impl RelationGraph {
    pub fn new(arcs: Vec<(ActivityId, ActivityId)>, ids: &BTreeSet<ActivityId>) -> Result<Self> {
        for (from, to) in &arcs {
            if !ids.contains(from) {
                return Err(Error::UnknownActivity(from.0.clone()));
            }
            if !ids.contains(to) {
                return Err(Error::UnknownActivity(to.0.clone()));
            }
        }
        let graph = RelationGraph { arcs };
        graph.check_acyclic()?;
        Ok(graph)
    }

    fn check_acyclic(&self) -> Result<()> {
        let mut adjacency: BTreeMap<&ActivityId, Vec<&ActivityId>> = BTreeMap::new();
        for (from, to) in &self.arcs {
            adjacency.entry(from).or_default().push(to);
        }
        // Iterative DFS with coloring. 0 = new, 1 = on stack, 2 = done.
        let mut color: BTreeMap<&ActivityId, u8> = BTreeMap::new();
        for start in adjacency.keys().copied() {
            if color.get(start).copied().unwrap_or(0) != 0 {
                continue;
            }
            let mut stack = vec![(start, 0usize)];
            color.insert(start, 1);
            while let Some((node, child)) = stack.pop() {
                let children = adjacency.get(node).map(Vec::as_slice).unwrap_or(&[]);
                if child < children.len() {
                    stack.push((node, child + 1));
                    let next = children[child];
                    match color.get(next).copied().unwrap_or(0) {
                        0 => {
                            color.insert(next, 1);
                            stack.push((next, 0));
                        }
                        1 => return Err(Error::CyclicRelationGraph),
                        _ => {}
                    }
                } else {
                    color.insert(node, 2);
                }
            }
        }
        Ok(())
    }

    pub fn arcs(&self) -> &[(ActivityId, ActivityId)] {
        &self.arcs
    }

    pub fn predecessors<'a>(&'a self, of: &'a ActivityId) -> impl Iterator<Item = &'a ActivityId> {
        self.arcs
            .iter()
            .filter(move |(_, to)| to == of)
            .map(|(from, _)| from)
    }

    pub fn successors<'a>(&'a self, of: &'a ActivityId) -> impl Iterator<Item = &'a ActivityId> {
        self.arcs
            .iter()
            .filter(move |(from, _)| from == of)
            .map(|(_, to)| to)
    }

    /// Activity indices in an order where every predecessor comes before its
    /// successors.
    pub fn topological_order(&self, ids: &[ActivityId]) -> Vec<usize> {
        let index: BTreeMap<&ActivityId, usize> =
            ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let mut in_degree = vec![0usize; ids.len()];
        for (_, to) in &self.arcs {
            in_degree[index[to]] += 1;
        }
        let mut queue: Vec<usize> = (0..ids.len()).filter(|&i| in_degree[i] == 0).collect();
        let mut order = Vec::with_capacity(ids.len());
        let mut head = 0;
        while head < queue.len() {
            let i = queue[head];
            head += 1;
            order.push(i);
            for (from, to) in &self.arcs {
                if index[from] == i {
                    let j = index[to];
                    in_degree[j] -= 1;
                    if in_degree[j] == 0 {
                        queue.push(j);
                    }
                }
            }
        }
        order
    }
}

/// The complete static configuration consumed by the other modules.
#[derive(Debug, Clone)]
pub struct Catalog {
    activities: Vec<ActivityDef>,
    by_id: BTreeMap<ActivityId, usize>,
    sub_to_parent: BTreeMap<ActivityId, usize>,
    pub profiles: IsoSmafProfileTable,
    pub x_update: XUpdateMatrix,
    pub relations: RelationGraph,
}

#[derive(Deserialize)]
struct RawCatalog {
    activities: Vec<ActivityDef>,
    profiles: Vec<RawProfileRow>,
    x_update_matrix: Vec<Vec<serde_json::Value>>,
    #[serde(default)]
    relations: Vec<(ActivityId, ActivityId)>,
}

#[derive(Deserialize)]
struct RawProfileRow {
    profile: u8,
    mean_disability: f64,
    category: u8,
}

impl Catalog {
    /// Parses and validates a catalog from its JSON representation.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawCatalog = serde_json::from_str(text)?;
        if raw.activities.is_empty() {
            return Err(Error::EmptyCatalog);
        }

        let mut by_id = BTreeMap::new();
        for (i, act) in raw.activities.iter().enumerate() {
            if by_id.insert(act.id.clone(), i).is_some() {
                return Err(Error::DuplicateActivity(act.id.0.clone()));
            }
            if let XInitial::Days(d) = act.x_initial {
                if d <= 0.0 {
                    return Err(Error::Catalog(format!(
                        "activity `{}`: x_initial must be positive",
                        act.id
                    )));
                }
            }
            if act.category == MonitoringCategory::II {
                let (lo, hi) = act.normal_count_range.ok_or_else(|| {
                    Error::Catalog(format!(
                        "category II activity `{}` needs normal_count_range",
                        act.id
                    ))
                })?;
                if lo > hi {
                    return Err(Error::Catalog(format!(
                        "activity `{}`: normal_count_range is inverted",
                        act.id
                    )));
                }
                if act.monitor_duration_s == 0 {
                    return Err(Error::Catalog(format!(
                        "category II activity `{}` needs monitor_duration_s > 0",
                        act.id
                    )));
                }
            }
            if act.duration_range_s.0 > act.duration_range_s.1 || act.duration_range_s.1 == 0 {
                return Err(Error::Catalog(format!(
                    "activity `{}`: bad duration_range_s",
                    act.id
                )));
            }
        }

        let mut sub_to_parent = BTreeMap::new();
        for (i, act) in raw.activities.iter().enumerate() {
            for sub in &act.sub_activities {
                if by_id.contains_key(sub) {
                    return Err(Error::Catalog(format!(
                        "sub-activity `{sub}` collides with an activity id"
                    )));
                }
                if sub_to_parent.insert(sub.clone(), i).is_some() {
                    return Err(Error::DuplicateActivity(sub.0.clone()));
                }
            }
        }

        let mut profile_rows = Vec::with_capacity(raw.profiles.len());
        for p in &raw.profiles {
            profile_rows.push(ProfileRow {
                profile: p.profile,
                mean_disability_centi: (p.mean_disability * 100.0).round() as i64,
                category: p.category,
            });
        }
        let profiles = IsoSmafProfileTable::new(profile_rows)?;

        let mut cells = Vec::with_capacity(raw.x_update_matrix.len());
        for (r, row) in raw.x_update_matrix.iter().enumerate() {
            if row.len() != 5 {
                return Err(Error::MatrixShape {
                    expected: "14x5".into(),
                    got: format!("row {} has {} columns", r + 1, row.len()),
                });
            }
            let mut parsed = [XUpdate::Off; 5];
            for (c, cell) in row.iter().enumerate() {
                parsed[c] = match cell {
                    serde_json::Value::String(s) if s == "inf" => XUpdate::Off,
                    serde_json::Value::Number(n) => {
                        let d = n.as_u64().ok_or_else(|| {
                            Error::Catalog(format!("matrix cell ({},{}) not an integer", r + 1, c))
                        })?;
                        XUpdate::Divisor(d as u8)
                    }
                    other => {
                        return Err(Error::Catalog(format!(
                            "matrix cell ({},{}) must be a divisor or \"inf\", got {other}",
                            r + 1,
                            c
                        )))
                    }
                };
            }
            cells.push(parsed);
        }
        let x_update = XUpdateMatrix::new(cells)?;

        let ids: BTreeSet<ActivityId> = by_id.keys().cloned().collect();
        let relations = RelationGraph::new(raw.relations, &ids)?;

        Ok(Catalog {
            activities: raw.activities,
            by_id,
            sub_to_parent,
            profiles,
            x_update,
            relations,
        })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// The catalog shipped with the crate (also at `crates/core/data/catalog.json`).
    pub fn default_catalog() -> Self {
        Self::from_json(include_str!("../data/catalog.json"))
            .expect("embedded default catalog is valid")
    }

    pub fn activities(&self) -> &[ActivityDef] {
        &self.activities
    }

    pub fn len(&self) -> usize {
        self.activities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activities.is_empty()
    }

    pub fn activity(&self, idx: usize) -> &ActivityDef {
        &self.activities[idx]
    }

    pub fn index_of(&self, id: &ActivityId) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Resolves an event id to its activity index, mapping sub-activities to
    /// their parent.
    pub fn resolve(&self, id: &ActivityId) -> Option<usize> {
        self.by_id
            .get(id)
            .or_else(|| self.sub_to_parent.get(id))
            .copied()
    }

    pub fn sub_activity_count(&self) -> usize {
        self.sub_to_parent.len()
    }
}
