//! Scenario events and the line-based file formats shared by the generator,
//! the monitoring engine and the evaluation outputs.
//!
//! All files are UTF-8 with LF line endings and start with a `#<name> v1`
//! header line. Event lines are comma-separated:
//! `start_s,activity_id,duration_s,anomaly_tag` with an empty tag meaning a
//! normal event.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::catalog::ActivityId;
use crate::error::{Error, Result};

pub const SCENARIO_HEADER: &str = "#scenario v1";
pub const GROUND_TRUTH_HEADER: &str = "#ground-truth v1";

/// Ground-truth marker carried by a mutated event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyTag {
    None,
    DurationOut,
    /// Marker for hand-written scenarios; the injector records frequency
    /// anomalies in the ground-truth log instead, since deletion leaves no
    /// event to tag.
    MissingFrequency,
}

impl AnomalyTag {
    fn as_str(self) -> &'static str {
        match self {
            AnomalyTag::None => "",
            AnomalyTag::DurationOut => "duration_out",
            AnomalyTag::MissingFrequency => "missing_frequency",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "" => Some(AnomalyTag::None),
            "duration_out" => Some(AnomalyTag::DurationOut),
            "missing_frequency" => Some(AnomalyTag::MissingFrequency),
            _ => None,
        }
    }
}

/// One performed action in a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioEvent {
    pub start_s: u64,
    pub activity: ActivityId,
    pub duration_s: u64,
    pub anomaly_tag: AnomalyTag,
}

impl ScenarioEvent {
    pub fn new(start_s: u64, activity: impl Into<String>, duration_s: u64) -> Self {
        ScenarioEvent {
            start_s,
            activity: ActivityId::new(activity),
            duration_s,
            anomaly_tag: AnomalyTag::None,
        }
    }

    pub fn end_s(&self) -> u64 {
        self.start_s + self.duration_s
    }
}

/// Kind of an injected anomaly, as recorded in the ground-truth log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroundTruthKind {
    DurationOut,
    MissingFrequency,
}

impl GroundTruthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GroundTruthKind::DurationOut => "duration_out",
            GroundTruthKind::MissingFrequency => "missing_frequency",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "duration_out" => Some(GroundTruthKind::DurationOut),
            "missing_frequency" => Some(GroundTruthKind::MissingFrequency),
            _ => None,
        }
    }
}

/// One entry of the ground-truth anomaly log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthEntry {
    pub t_s: u64,
    pub activity: ActivityId,
    pub kind: GroundTruthKind,
}

pub fn write_scenario_to(mut w: impl Write, events: &[ScenarioEvent]) -> Result<()> {
    writeln!(w, "{SCENARIO_HEADER}")?;
    for ev in events {
        writeln!(
            w,
            "{},{},{},{}",
            ev.start_s,
            ev.activity,
            ev.duration_s,
            ev.anomaly_tag.as_str()
        )?;
    }
    Ok(())
}

pub fn write_scenario(events: &[ScenarioEvent], path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_scenario_to(&mut buf, events)?;
    crate::scenario::atomic_write(path, &buf)
}

pub fn read_scenario_from(r: impl Read) -> Result<Vec<ScenarioEvent>> {
    let reader = BufReader::new(r);
    let mut events = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if lineno == 1 {
            if line.trim() != SCENARIO_HEADER {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header `{SCENARIO_HEADER}`, got `{line}`"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        events.push(parse_event_line(&line, lineno)?);
    }
    Ok(events)
}

pub fn read_scenario(path: impl AsRef<Path>) -> Result<Vec<ScenarioEvent>> {
    read_scenario_from(std::fs::File::open(path)?)
}

fn parse_event_line(line: &str, lineno: usize) -> Result<ScenarioEvent> {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() != 4 {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("expected 4 columns, got {}", parts.len()),
        });
    }
    let start_s: u64 = parts[0].parse().map_err(|_| Error::Parse {
        line: lineno,
        msg: format!("non-numeric start time `{}`", parts[0]),
    })?;
    let duration_s: u64 = parts[2].parse().map_err(|_| Error::Parse {
        line: lineno,
        msg: format!("non-numeric duration `{}`", parts[2]),
    })?;
    if duration_s == 0 {
        return Err(Error::Parse {
            line: lineno,
            msg: "duration must be positive".into(),
        });
    }
    let anomaly_tag = AnomalyTag::parse(parts[3]).ok_or_else(|| Error::Parse {
        line: lineno,
        msg: format!("unknown anomaly tag `{}`", parts[3]),
    })?;
    Ok(ScenarioEvent {
        start_s,
        activity: ActivityId::new(parts[1]),
        duration_s,
        anomaly_tag,
    })
}

pub fn write_ground_truth_to(mut w: impl Write, entries: &[GroundTruthEntry]) -> Result<()> {
    writeln!(w, "{GROUND_TRUTH_HEADER}")?;
    for e in entries {
        writeln!(w, "{},{},{}", e.t_s, e.activity, e.kind.as_str())?;
    }
    Ok(())
}

pub fn write_ground_truth(entries: &[GroundTruthEntry], path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_ground_truth_to(&mut buf, entries)?;
    atomic_write(path, &buf)
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruthEntry>> {
    read_ground_truth_from(std::fs::File::open(path)?)
}

pub fn read_ground_truth_from(r: impl Read) -> Result<Vec<GroundTruthEntry>> {
    let reader = BufReader::new(r);
    let mut entries = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if lineno == 1 {
            if line.trim() != GROUND_TRUTH_HEADER {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header `{GROUND_TRUTH_HEADER}`, got `{line}`"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 3 columns, got {}", parts.len()),
            });
        }
        let t_s: u64 = parts[0].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("non-numeric time `{}`", parts[0]),
        })?;
        let kind = GroundTruthKind::parse(parts[2]).ok_or_else(|| Error::Parse {
            line: lineno,
            msg: format!("unknown anomaly kind `{}`", parts[2]),
        })?;
        entries.push(GroundTruthEntry {
            t_s,
            activity: ActivityId::new(parts[1]),
            kind,
        });
    }
    Ok(entries)
}

/// Writes a file through a temporary sibling and an atomic rename.
pub fn atomic_write(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
