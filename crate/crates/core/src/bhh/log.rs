use serde::{Deserialize, Serialize};

/// One heuristic application: which entity ran which heuristic at which step,
/// and how it went.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub entity: usize,
    /// Index into the heuristic pool.
    pub heuristic: usize,
    pub loss: f64,
    pub credit: f64,
    pub pbest_improved: bool,
    pub gbest_improved: bool,
    /// Already counted by a belief update.
    pub consumed: bool,
}

impl LogEntry {
    pub fn new(step: usize, entity: usize, heuristic: usize, loss: f64) -> Self {
        Self {
            step,
            entity,
            heuristic,
            loss,
            credit: 0.0,
            pbest_improved: false,
            gbest_improved: false,
            consumed: false,
        }
    }
}

/// Sliding window of recent heuristic applications, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerformanceLog {
    entries: Vec<LogEntry>,
}

impl PerformanceLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: LogEntry) {
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [LogEntry] {
        &mut self.entries
    }

    pub fn oldest_step(&self) -> Option<usize> {
        self.entries.iter().map(|e| e.step).min()
    }

    /// Drops entries with `step <= current_step - window`.
    pub fn prune(&mut self, current_step: usize, window: usize) {
        self.entries.retain(|e| e.step + window > current_step);
    }
}

pub fn prune_log(log: &mut PerformanceLog, current_step: usize, window: usize) {
    log.prune(current_step, window);
}
