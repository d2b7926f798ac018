use std::collections::HashMap;

pub const DEFAULT_VISIT_QUANTUM: f64 = 0.05;

/// Counts visits per position snapped to a grid of spacing `quantum`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationCounter {
    quantum: f64,
    counts: HashMap<(i64, i64), u64>,
    total: u64,
}

impl Default for VisitationCounter {
    fn default() -> Self {
        Self::new(DEFAULT_VISIT_QUANTUM)
    }
}

impl VisitationCounter {
    pub fn new(quantum: f64) -> Self {
        assert!(quantum > 0.0, "visit quantum must be positive");
        Self {
            quantum,
            counts: HashMap::new(),
            total: 0,
        }
    }

    pub fn quantum(&self) -> f64 {
        self.quantum
    }

    /// Grid key of a position, rounding half away from zero.
    pub fn key(&self, x: f64, y: f64) -> (i64, i64) {
        (
            (x / self.quantum).round() as i64,
            (y / self.quantum).round() as i64,
        )
    }

    pub fn record_visit(&mut self, x: f64, y: f64) {
        *self.counts.entry(self.key(x, y)).or_default() += 1;
        self.total += 1;
    }

    pub fn unique_visits(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count_at(&self, x: f64, y: f64) -> u64 {
        self.counts.get(&self.key(x, y)).copied().unwrap_or(0)
    }
}
