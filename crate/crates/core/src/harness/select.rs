//! Pareto filtering and the optimal-parameter rule.

use crate::harness::run::{RunRecord, RunStatus};

/// Peak reduction (N) below which a difference is treated as imperceptible.
pub const PERCEPTIBLE_PEAK_GAP: f64 = 1.0;
/// Relative slack on total force allowed when trading for a lower peak.
pub const TOTAL_SLACK: f64 = 0.05;

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("no successful runs to select from")]
pub struct NoOkRecords;

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Index into the input records.
    pub chosen: usize,
    /// Indices of the non-dominated ok records, in input order.
    pub pareto: Vec<usize>,
}

/// `a` dominates `b` when it is no worse in both total and peak and
/// strictly better in one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Non-dominated indices among the ok records, over (total, peak).
pub fn pareto_set(records: &[RunRecord]) -> Vec<usize> {
    let ok: Vec<usize> = (0..records.len()).filter(|&i| records[i].status == RunStatus::Ok).collect();
    let key = |i: usize| (records[i].total, records[i].peak);
    ok.iter()
        .copied()
        .filter(|&i| !ok.iter().any(|&j| dominates(key(j), key(i))))
        .collect()
}

/// Minimum total force, unless a Pareto point lowers the peak by more
/// than [`PERCEPTIBLE_PEAK_GAP`] at a total within [`TOTAL_SLACK`]; then
/// the lowest such peak wins. Remaining ties go to the lower peak and then
/// to grid order.
pub fn select_optimal(records: &[RunRecord]) -> Result<Selection, NoOkRecords> {
    let pareto = pareto_set(records);
    let by = |a: &usize, b: &usize, primary: fn(&RunRecord) -> f64, secondary: fn(&RunRecord) -> f64| {
        let (ra, rb) = (&records[*a], &records[*b]);
        primary(ra)
            .total_cmp(&primary(rb))
            .then(secondary(ra).total_cmp(&secondary(rb)))
            .then(a.cmp(b))
    };
    let base = *pareto
        .iter()
        .min_by(|a, b| by(a, b, |r| r.total, |r| r.peak))
        .ok_or(NoOkRecords)?;
    let b = &records[base];
    let chosen = pareto
        .iter()
        .filter(|&&i| {
            let r = &records[i];
            b.peak - r.peak > PERCEPTIBLE_PEAK_GAP && r.total <= b.total * (1.0 + TOTAL_SLACK)
        })
        .min_by(|a, b| by(a, b, |r| r.peak, |r| r.total))
        .copied()
        .unwrap_or(base);
    Ok(Selection { chosen, pareto })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::TrajectoryPoint;

    fn rec(total: f64, peak: f64) -> RunRecord {
        let mut r = RunRecord::invalid(
            TrajectoryPoint {
                alpha_deg: 90.0,
                depth_m: 0.07,
                beta_deg: 90.0,
                exit_depth_m: 0.0,
            },
            String::new(),
        );
        r.status = RunStatus::Ok;
        r.message = None;
        r.total = total;
        r.peak = peak;
        r
    }

    #[test]
    fn small_peak_gap_keeps_min_total() {
        let s = select_optimal(&[rec(10.0, 2.0), rec(12.0, 1.5)]).unwrap();
        assert_eq!(s.chosen, 0);
        assert_eq!(s.pareto, vec![0, 1]);
    }

    #[test]
    fn perceptible_gap_within_slack_wins() {
        let s = select_optimal(&[rec(10.0, 5.0), rec(10.2, 3.0)]).unwrap();
        assert_eq!(s.chosen, 1);
    }

    #[test]
    fn gap_outside_slack_loses() {
        let s = select_optimal(&[rec(10.0, 5.0), rec(10.6, 3.0)]).unwrap();
        assert_eq!(s.chosen, 0);
    }

    #[test]
    fn ties_and_failures() {
        let mut bad = rec(1.0, 0.0);
        bad.status = RunStatus::SolverFailure;
        let s = select_optimal(&[bad, rec(5.0, 2.0), rec(5.0, 2.0), rec(5.0, 1.0)]).unwrap();
        assert_eq!(s.chosen, 3);
        assert_eq!(s.pareto, vec![3]);
        let s = select_optimal(&[rec(5.0, 2.0), rec(5.0, 2.0)]).unwrap();
        assert_eq!((s.chosen, s.pareto), (0, vec![0, 1]));
    }

    #[test]
    fn nothing_ok() {
        assert_eq!(select_optimal(&[]), Err(NoOkRecords));
    }
}
