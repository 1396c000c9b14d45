//! Per-tick trace rows (CSV) and the event log (JSON lines).

use std::fmt::Write as _;
use std::path::Path;

use crate::sim::world::{ControllerPhase, TimedEvent, WorldSnapshot};
use crate::sim::SimError;
use crate::vec3::Vec3;

pub const TRACE_HEADER: &str = "tick,t,hand_x,hand_y,hand_z,drone_id,phase,x,y,z,vx,vy,vz,cmd_vx,cmd_vy,cmd_vz";

pub const TRACE_FILE: &str = "trace.csv";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const CONFIG_FILE: &str = "config.json";

/// One drone at one tick, after the plant step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub tick: u64,
    pub t: f64,
    pub hand: Vec3,
    pub drone_id: usize,
    pub phase: ControllerPhase,
    pub position: Vec3,
    pub velocity: Vec3,
    /// Velocity command sent during this tick.
    pub command: Vec3,
}

impl TraceRow {
    pub fn to_csv_line(&self) -> String {
        let mut s = String::with_capacity(160);
        write!(
            s,
            "{},{},{},{},{},{},{}",
            self.tick, self.t, self.hand.x, self.hand.y, self.hand.z, self.drone_id, self.phase
        )
        .unwrap();
        for v in [self.position, self.velocity, self.command] {
            write!(s, ",{},{},{}", v.x, v.y, v.z).unwrap();
        }
        s
    }

    pub fn parse_csv_line(line: &str) -> Result<Self, SimError> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 16 {
            return Err(SimError::Parse(format!("expected 16 fields, found {}: {line:?}", fields.len())));
        }
        let f = |i: usize| -> Result<f64, SimError> {
            fields[i].parse::<f64>().map_err(|e| SimError::Parse(format!("field {i} {:?}: {e}", fields[i])))
        };
        let v = |i: usize| -> Result<Vec3, SimError> { Ok(Vec3::new(f(i)?, f(i + 1)?, f(i + 2)?)) };
        Ok(TraceRow {
            tick: fields[0].parse().map_err(|e| SimError::Parse(format!("tick {:?}: {e}", fields[0])))?,
            t: f(1)?,
            hand: v(2)?,
            drone_id: fields[5].parse().map_err(|e| SimError::Parse(format!("drone_id {:?}: {e}", fields[5])))?,
            phase: fields[6].parse()?,
            position: v(7)?,
            velocity: v(10)?,
            command: v(13)?,
        })
    }
}

/// Output of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub dt: f64,
    /// State before the first tick.
    pub initial: WorldSnapshot,
    pub rows: Vec<TraceRow>,
    pub events: Vec<TimedEvent>,
}

impl Trace {
    pub fn new(dt: f64, initial: WorldSnapshot) -> Self {
        Self { dt, initial, rows: Vec::new(), events: Vec::new() }
    }

    pub fn drone_count(&self) -> usize {
        self.initial.drones.len()
    }

    /// Rows of one drone, in tick order.
    pub fn drone(&self, id: usize) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.drone_id == id)
    }

    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }

    pub fn events_jsonl(&self) -> String {
        events_to_jsonl(&self.events)
    }

    /// Writes `trace.csv` and `events.jsonl` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(dir).map_err(|e| SimError::Io(format!("{}: {e}", dir.display())))?;
        write_file(&dir.join(TRACE_FILE), &self.to_csv())?;
        write_file(&dir.join(EVENTS_FILE), &self.events_jsonl())
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), SimError> {
    std::fs::write(path, text).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))
}

pub fn rows_to_csv(rows: &[TraceRow]) -> String {
    let mut s = String::with_capacity(TRACE_HEADER.len() + 1 + rows.len() * 160);
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv_line());
        s.push('\n');
    }
    s
}

pub fn parse_csv(text: &str) -> Result<Vec<TraceRow>, SimError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == TRACE_HEADER => {}
        other => return Err(SimError::Parse(format!("unexpected trace header {other:?}"))),
    }
    lines.filter(|l| !l.trim().is_empty()).map(TraceRow::parse_csv_line).collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<TraceRow>, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    parse_csv(&text)
}

pub fn events_to_jsonl(events: &[TimedEvent]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e).expect("events serialize"));
        s.push('\n');
    }
    s
}

pub fn parse_events(text: &str) -> Result<Vec<TimedEvent>, SimError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| SimError::Parse(format!("event line: {e}"))))
        .collect()
}

/// Hand position for each tick, taken from the first row of each tick.
pub fn hand_stream(rows: &[TraceRow]) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = Vec::new();
    let mut last = None;
    for r in rows {
        if last != Some(r.tick) {
            out.push(r.hand);
            last = Some(r.tick);
        }
    }
    out
}
