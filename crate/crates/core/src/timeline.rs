//! Sets of disjoint half-open time intervals on the global clock.

/// Ordered, disjoint `[start_ns, end_ns)` intervals where data is usable.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidityTimeline {
    intervals: Vec<(u64, u64)>,
}

impl ValidityTimeline {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds from arbitrary intervals: sorts, drops empties, merges overlaps
    /// and adjacencies.
    pub fn from_intervals(mut raw: Vec<(u64, u64)>) -> Self {
        raw.retain(|&(s, e)| e > s);
        raw.sort_unstable();
        let mut intervals: Vec<(u64, u64)> = Vec::with_capacity(raw.len());
        for (s, e) in raw {
            match intervals.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => intervals.push((s, e)),
            }
        }
        Self { intervals }
    }

    pub fn intervals(&self) -> &[(u64, u64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, t_ns: u64) -> bool {
        let idx = self.intervals.partition_point(|&(s, _)| s <= t_ns);
        idx > 0 && t_ns < self.intervals[idx - 1].1
    }

    pub fn total_ns(&self) -> u64 {
        self.intervals.iter().map(|&(s, e)| e - s).sum()
    }

    /// Set intersection. Commutative and associative.
    pub fn intersect(&self, other: &ValidityTimeline) -> ValidityTimeline {
        let mut out = Vec::new();
        let (mut i, mut j) = (0usize, 0usize);
        while i < self.intervals.len() && j < other.intervals.len() {
            let (a_s, a_e) = self.intervals[i];
            let (b_s, b_e) = other.intervals[j];
            let s = a_s.max(b_s);
            let e = a_e.min(b_e);
            if e > s {
                out.push((s, e));
            }
            if a_e <= b_e {
                i += 1;
            } else {
                j += 1;
            }
        }
        ValidityTimeline { intervals: out }
    }

    /// Complement of `self` within `[span_start, span_end)`.
    pub fn complement(&self, span_start: u64, span_end: u64) -> ValidityTimeline {
        let mut out = Vec::new();
        let mut cursor = span_start;
        for &(s, e) in &self.intervals {
            if e <= span_start {
                continue;
            }
            if s >= span_end {
                break;
            }
            if s > cursor {
                out.push((cursor, s.min(span_end)));
            }
            cursor = cursor.max(e);
        }
        if cursor < span_end {
            out.push((cursor, span_end));
        }
        ValidityTimeline::from_intervals(out)
    }
}
