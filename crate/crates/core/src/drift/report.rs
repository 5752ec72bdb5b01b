use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Relative tolerance: a point fails when `margin < -INEQ_TOLERANCE * scale`.
pub const INEQ_TOLERANCE: f64 = 1e-9;

/// Verdict of a deterministic inequality evaluation or sweep.
///
/// Margins are `lhs - rhs` oriented so that the claimed inequality reads
/// `margin >= 0`. `worst_margin` is the smallest margin divided by the
/// magnitude of the compared quantities, so `passed` is exactly
/// `worst_margin >= -INEQ_TOLERANCE`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IneqReport {
    pub name: String,
    pub passed: bool,
    pub worst_margin: f64,
    pub worst_abs_margin: f64,
    /// Parameters at the worst point.
    pub witness: BTreeMap<String, f64>,
    pub points: usize,
    pub failures: usize,
    /// Points outside the inequality's domain (e.g. a negative radicand).
    pub out_of_domain: usize,
    pub grid_spec: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Streaming worst-case accumulator. Ties keep the earliest point, so a
/// sweep visited in a fixed order gives a bit-identical report.
#[derive(Debug, Clone)]
pub struct Tally {
    name: String,
    grid_spec: String,
    worst_rel: f64,
    worst_abs: f64,
    witness: Vec<(String, f64)>,
    points: usize,
    failures: usize,
    out_of_domain: usize,
}

impl Tally {
    pub fn new(name: impl Into<String>, grid_spec: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            grid_spec: grid_spec.into(),
            worst_rel: f64::INFINITY,
            worst_abs: f64::INFINITY,
            witness: Vec::new(),
            points: 0,
            failures: 0,
            out_of_domain: 0,
        }
    }

    /// Records one evaluated point. `scale` is the magnitude of the compared
    /// quantities; a zero scale compares the raw margin.
    pub fn record(&mut self, margin: f64, scale: f64, witness: &[(&'static str, f64)]) {
        self.points += 1;
        let rel = if scale > 0.0 { margin / scale } else { margin };
        let rel = if rel.is_nan() { f64::NEG_INFINITY } else { rel };
        if rel < -INEQ_TOLERANCE {
            self.failures += 1;
        }
        if rel < self.worst_rel {
            self.worst_rel = rel;
            self.worst_abs = margin;
            self.witness = witness.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        }
    }

    /// Folds a finished report into this tally as if its points were recorded here.
    pub fn absorb(&mut self, r: &IneqReport) {
        self.points += r.points;
        self.failures += r.failures;
        self.out_of_domain += r.out_of_domain;
        if r.points > 0 && r.worst_margin < self.worst_rel {
            self.worst_rel = r.worst_margin;
            self.worst_abs = r.worst_abs_margin;
            self.witness = r.witness.iter().map(|(k, v)| (k.clone(), *v)).collect();
        }
    }

    pub fn skip(&mut self) {
        self.out_of_domain += 1;
    }

    pub fn merge(&mut self, other: Tally) {
        self.points += other.points;
        self.failures += other.failures;
        self.out_of_domain += other.out_of_domain;
        if other.worst_rel < self.worst_rel {
            self.worst_rel = other.worst_rel;
            self.worst_abs = other.worst_abs;
            self.witness = other.witness;
        }
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn finish(self) -> IneqReport {
        let worst_margin = if self.points == 0 { 0.0 } else { self.worst_rel };
        IneqReport {
            name: self.name,
            passed: self.failures == 0,
            worst_margin,
            worst_abs_margin: if self.points == 0 { 0.0 } else { self.worst_abs },
            witness: self
                .witness
                .into_iter()
                .collect(),
            points: self.points,
            failures: self.failures,
            out_of_domain: self.out_of_domain,
            grid_spec: self.grid_spec,
            note: None,
        }
    }
}

/// Three-valued reading of a margin: points within the tolerance band of
/// zero are ties, so two forms of one inequality can only disagree decisively.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Verdict {
    Pass,
    Tie,
    Fail,
}

impl Verdict {
    pub(crate) fn of(margin: f64, scale: f64) -> Self {
        let rel = if scale > 0.0 { margin / scale } else { margin };
        if rel >= INEQ_TOLERANCE {
            Verdict::Pass
        } else if rel < -INEQ_TOLERANCE || rel.is_nan() {
            Verdict::Fail
        } else {
            Verdict::Tie
        }
    }

    /// True when one reading passes and the other fails outright.
    pub(crate) fn conflicts(self, other: Verdict) -> bool {
        matches!(
            (self, other),
            (Verdict::Pass, Verdict::Fail) | (Verdict::Fail, Verdict::Pass)
        )
    }
}

impl IneqReport {
    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tally_tracks_worst_and_failures() {
        let mut t = Tally::new("demo", "three points");
        t.record(1.0, 1.0, &[("x", 1.0)]);
        t.record(-1e-12, 1.0, &[("x", 2.0)]);
        t.record(-0.5, 10.0, &[("x", 3.0)]);
        t.skip();
        let r = t.finish();
        assert!(!r.passed);
        assert_eq!(r.failures, 1);
        assert_eq!(r.points, 3);
        assert_eq!(r.out_of_domain, 1);
        assert_eq!(r.worst_margin, -0.05);
        assert_eq!(r.worst_abs_margin, -0.5);
        assert_eq!(r.witness["x"], 3.0);
    }

    #[test]
    fn empty_tally_passes() {
        let r = Tally::new("empty", "").finish();
        assert!(r.passed);
        assert_eq!(r.worst_margin, 0.0);
    }
}
