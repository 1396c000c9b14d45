//! Writes a live session in the same layout as a scenario run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use swarmlink_core::sim::trace::{CONFIG_FILE, EVENTS_FILE, TRACE_FILE};
use swarmlink_core::sim::{ScenarioConfig, TimedEvent, TraceRow, TRACE_HEADER};

pub struct Recorder {
    trace: BufWriter<File>,
    events: BufWriter<File>,
}

impl Recorder {
    pub fn create(dir: &Path, config: &ScenarioConfig) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(CONFIG_FILE), config.to_json_pretty())?;
        let mut trace = BufWriter::new(File::create(dir.join(TRACE_FILE))?);
        writeln!(trace, "{TRACE_HEADER}")?;
        let events = BufWriter::new(File::create(dir.join(EVENTS_FILE))?);
        Ok(Self { trace, events })
    }

    pub fn rows(&mut self, rows: &[TraceRow]) -> std::io::Result<()> {
        for r in rows {
            writeln!(self.trace, "{}", r.to_csv_line())?;
        }
        Ok(())
    }

    pub fn events(&mut self, events: &[TimedEvent]) -> std::io::Result<()> {
        for e in events {
            serde_json::to_writer(&mut self.events, e)?;
            self.events.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.trace.flush()?;
        self.events.flush()
    }
}
