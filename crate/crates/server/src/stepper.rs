//! The single owner of the live world.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use tokio::sync::{mpsc, watch};

use swarmlink_core::sim::{Simulation, TimedEvent};

use crate::protocol::{CommandMessage, ControlCommand, SnapshotMessage, SCHEMA_VERSION};
use crate::recorder::Recorder;

/// Upper bound on ticks run in one wake-up before the backlog is dropped.
const MAX_CATCH_UP_TICKS: u32 = 500;

pub struct Stepper {
    pub sim: Simulation,
    pub commands: mpsc::UnboundedReceiver<CommandMessage>,
    pub snapshots: watch::Sender<Arc<SnapshotMessage>>,
    pub recorder: Option<Recorder>,
    pub speed: f64,
    pub snapshot_hz: f64,
    pub stop: Arc<AtomicBool>,
}

pub fn initial_message(sim: &Simulation, speed: f64) -> SnapshotMessage {
    SnapshotMessage { schema_version: SCHEMA_VERSION, world: sim.snapshot(), paused: false, speed, events: Vec::new() }
}

impl Stepper {
    /// Steps until `stop` is set or every command sender is gone.
    pub fn run(mut self) {
        let dt = self.sim.config().dt;
        let snapshot_period = Duration::from_secs_f64(1.0 / self.snapshot_hz);
        let mut paused = false;
        // simulated seconds owed to the wall clock
        let mut owed = 0.0;
        let mut last = Instant::now();
        let mut next_snapshot = last;
        let mut published_tick = self.sim.tick();
        let mut pending_events: Vec<TimedEvent> = Vec::new();
        let initial: Vec<TimedEvent> = self.sim.take_new_events().to_vec();
        self.record_events(&initial);
        pending_events.extend(initial);

        while !self.stop.load(Ordering::Relaxed) {
            loop {
                match self.commands.try_recv() {
                    Ok(CommandMessage::World(c)) => self.sim.enqueue(c),
                    Ok(CommandMessage::Control(c)) => match c {
                        ControlCommand::Pause {} => paused = true,
                        ControlCommand::Resume {} => paused = false,
                        ControlCommand::SetSpeed { factor } => self.speed = factor,
                    },
                    Err(mpsc::error::TryRecvError::Empty) => break,
                    Err(mpsc::error::TryRecvError::Disconnected) => {
                        self.finish();
                        return;
                    }
                }
            }

            let now = Instant::now();
            if !paused {
                owed += (now - last).as_secs_f64() * self.speed;
            }
            last = now;
            let mut steps = 0;
            while owed >= dt && steps < MAX_CATCH_UP_TICKS {
                if let Err(e) = self.sim.step() {
                    tracing::error!("simulation stopped: {e}");
                    self.finish();
                    return;
                }
                let rows = self.sim.rows();
                if let Some(r) = self.recorder.as_mut() {
                    if let Err(e) = r.rows(&rows) {
                        self.recording_failed(e);
                    }
                }
                owed -= dt;
                steps += 1;
            }
            if steps == MAX_CATCH_UP_TICKS {
                owed = 0.0;
            }
            let events: Vec<TimedEvent> = self.sim.take_new_events().to_vec();
            self.record_events(&events);
            pending_events.extend(events);

            if now >= next_snapshot && self.sim.tick() > published_tick {
                published_tick = self.sim.tick();
                next_snapshot = now + snapshot_period;
                let msg = SnapshotMessage {
                    schema_version: SCHEMA_VERSION,
                    world: self.sim.snapshot(),
                    paused,
                    speed: self.speed,
                    events: std::mem::take(&mut pending_events),
                };
                self.snapshots.send_replace(Arc::new(msg));
                if let Some(r) = self.recorder.as_mut() {
                    if let Err(e) = r.flush() {
                        self.recording_failed(e);
                    }
                }
            }

            let until_tick =
                if paused { snapshot_period } else { Duration::from_secs_f64(((dt - owed) / self.speed).max(0.0)) };
            std::thread::sleep(until_tick.min(snapshot_period).max(Duration::from_micros(200)));
        }
        self.finish();
    }

    fn record_events(&mut self, events: &[TimedEvent]) {
        if let Some(r) = self.recorder.as_mut() {
            if let Err(e) = r.events(events) {
                self.recording_failed(e);
            }
        }
    }

    fn recording_failed(&mut self, e: std::io::Error) {
        tracing::error!("recording stopped: {e}");
        self.recorder = None;
        self.sim.note(format!("recording stopped: {e}"));
    }

    fn finish(&mut self) {
        let events: Vec<TimedEvent> = self.sim.take_new_events().to_vec();
        self.record_events(&events);
        if let Some(r) = self.recorder.as_mut() {
            if let Err(e) = r.flush() {
                tracing::error!("recording flush failed: {e}");
            }
        }
    }
}
