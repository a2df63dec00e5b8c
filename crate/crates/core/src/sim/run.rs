use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::world::{EmittedAction, World};
use crate::contracts::Action;
use crate::encoding::canonical_string;
use crate::error::{Error, Result};

/// Extra attempts after the first failed delivery.
pub const DELIVERY_RETRIES: usize = 3;

/// Consumer of emitted actions.
pub trait ActionSink {
    fn name(&self) -> &str;
    fn deliver(&mut self, action: &EmittedAction) -> std::result::Result<(), String>;
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeliveryFailure {
    /// Position of the action in the log.
    pub index: usize,
    pub sink: String,
    pub error: String,
}

/// Every emitted action in emission order, plus the deliveries that gave up.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruthLog {
    pub actions: Vec<Action>,
    pub failures: Vec<DeliveryFailure>,
}

impl GroundTruthLog {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// One canonical-JSON action per line.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for a in &self.actions {
            out.push_str(&canonical_string(a));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_lines())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<GroundTruthLog> {
        let reader = BufReader::new(File::open(path)?);
        let mut actions = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            actions.push(serde_json::from_str(&line).map_err(|e| Error::Decode(e.to_string()))?);
        }
        Ok(GroundTruthLog { actions, failures: Vec::new() })
    }

    /// Actions whose deliveries all succeeded.
    pub fn delivered_actions(&self, sink: &str) -> Vec<&Action> {
        self.actions
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.failures.iter().any(|f| f.index == *i && f.sink == sink))
            .map(|(_, a)| a)
            .collect()
    }
}

/// Appends each action to a file as it is emitted.
pub struct FileSink {
    writer: BufWriter<File>,
}

impl FileSink {
    pub fn create(path: &Path) -> Result<FileSink> {
        Ok(FileSink { writer: BufWriter::new(File::create(path)?) })
    }
}

impl ActionSink for FileSink {
    fn name(&self) -> &str {
        "file"
    }

    fn deliver(&mut self, action: &EmittedAction) -> std::result::Result<(), String> {
        writeln!(self.writer, "{}", canonical_string(&action.action))
            .and_then(|_| self.writer.flush())
            .map_err(|e| e.to_string())
    }
}

/// Records actions in memory.
#[derive(Default)]
pub struct MemorySink {
    pub received: Vec<EmittedAction>,
}

impl ActionSink for MemorySink {
    fn name(&self) -> &str {
        "memory"
    }

    fn deliver(&mut self, action: &EmittedAction) -> std::result::Result<(), String> {
        self.received.push(action.clone());
        Ok(())
    }
}

/// Appends `emitted` to the log and hands each action to every sink, with
/// retries.
pub fn deliver_all(
    emitted: &[EmittedAction],
    sinks: &mut [&mut dyn ActionSink],
    log: &mut GroundTruthLog,
) {
    for action in emitted {
        let index = log.actions.len();
        log.actions.push(action.action.clone());
        for sink in sinks.iter_mut() {
            let mut last_err = String::new();
            let mut ok = false;
            for _ in 0..=DELIVERY_RETRIES {
                match sink.deliver(action) {
                    Ok(()) => {
                        ok = true;
                        break;
                    }
                    Err(e) => last_err = e,
                }
            }
            if !ok {
                tracing::warn!(sink = sink.name(), index, "delivery failed: {last_err}");
                log.failures.push(DeliveryFailure {
                    index,
                    sink: sink.name().to_string(),
                    error: last_err,
                });
            }
        }
    }
}

/// Steps the world in increments of `dt` for `duration` simulated seconds.
pub fn run(
    world: &mut World,
    duration: f64,
    dt: f64,
    sinks: &mut [&mut dyn ActionSink],
) -> GroundTruthLog {
    let mut log = GroundTruthLog::default();
    let end = world.now() + duration.max(0.0);
    while world.now() + 1e-9 < end {
        let step = dt.min(end - world.now());
        let emitted = world.step(step);
        deliver_all(&emitted, sinks, &mut log);
    }
    log
}
