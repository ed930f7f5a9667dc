use serde::{Deserialize, Serialize};

/// A failed check: which sample, by how much (negative margin), and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub margin: f64,
    pub detail: String,
}

/// Outcome of a sampled verification. Margins are "conclusion slack":
/// nonnegative means the inequality held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub tolerance: f64,
    /// Smallest margin over checked samples; `None` when nothing was checked.
    pub worst_margin: Option<f64>,
    pub violations: Vec<Violation>,
}

impl VerificationReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self { name: name.into(), checked: 0, skipped: 0, tolerance, worst_margin: None, violations: Vec::new() }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn skip(&mut self) {
        self.skipped += 1;
    }

    /// Records a checked sample; it is a violation when `margin < -tolerance`.
    pub fn record(&mut self, index: usize, margin: f64, detail: impl FnOnce() -> String) {
        self.checked += 1;
        self.worst_margin = Some(self.worst_margin.map_or(margin, |w| w.min(margin)));
        if margin < -self.tolerance || margin.is_nan() {
            self.violations.push(Violation { index, margin, detail: detail() });
        }
    }

    /// Orders violations by sample index so parallel runs are reproducible.
    pub fn sorted(mut self) -> Self {
        self.violations.sort_by_key(|v| v.index);
        self
    }

    /// Combines two partial reports. Associative, so sweeps can be split
    /// across workers in any way.
    pub fn merge(mut self, other: VerificationReport) -> Self {
        self.checked += other.checked;
        self.skipped += other.skipped;
        self.worst_margin = match (self.worst_margin, other.worst_margin) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.violations.extend(other.violations);
        self
    }
}
