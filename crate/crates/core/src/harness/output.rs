//! Text outputs: sweep and trace CSVs, plot data and the sweep summary.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::harness::run::{RunRecord, RunStatus, TraceRow};
use crate::harness::select::Selection;
use crate::numfmt::sig9;

pub const SWEEP_HEADER: &str =
    "alpha_deg,depth_m,beta_deg,exit_depth_m,peak_N,total_N,impulse_Ns,max_penetration_m,status";
pub const TRACE_HEADER: &str = "step,time_s,num_contacts,f_t_N";

pub fn sweep_csv(records: &[RunRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(SWEEP_HEADER);
    s.push('\n');
    for r in records {
        let p = &r.params;
        let cols = [
            sig9(p.alpha_deg),
            sig9(p.depth_m),
            sig9(p.beta_deg),
            sig9(p.exit_depth_m),
            sig9(r.peak),
            sig9(r.total),
            sig9(r.impulse),
            sig9(r.max_penetration),
            r.status.label().to_string(),
        ];
        s.push_str(&cols.join(","));
        s.push('\n');
    }
    s
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::with_capacity(40 * (rows.len() + 1));
    s.push_str(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.step, sig9(r.time), r.num_contacts, sig9(r.f_t));
    }
    s
}

/// Two whitespace-separated columns, time and f_t, for the windowed steps.
pub fn plot_data(rows: &[TraceRow]) -> String {
    let mut s = String::from("# time_s f_t_N\n");
    for r in rows.iter().filter(|r| r.in_window) {
        let _ = writeln!(s, "{} {}", sig9(r.time), sig9(r.f_t));
    }
    s
}

pub fn write_sweep_csv(records: &[RunRecord], path: &Path) -> io::Result<()> {
    fs::write(path, sweep_csv(records))
}

pub fn write_trace_csv(rows: &[TraceRow], path: &Path) -> io::Result<()> {
    fs::write(path, trace_csv(rows))
}

/// Trend check over exit depth at one exit angle: peak force should not
/// decrease as the exit depth grows. Returns the report lines and whether
/// the trend held.
pub fn exit_depth_trend(records: &[RunRecord], beta_deg: f64) -> (Vec<String>, bool) {
    let mut rows: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.status == RunStatus::Ok && r.params.beta_deg == beta_deg)
        .collect();
    rows.sort_by(|a, b| a.params.exit_depth_m.total_cmp(&b.params.exit_depth_m));
    let mut lines = Vec::new();
    let mut held = true;
    for w in rows.windows(2) {
        if w[1].peak < w[0].peak {
            held = false;
            lines.push(format!(
                "deviation: peak drops from {} N at e={} to {} N at e={}",
                sig9(w[0].peak),
                sig9(w[0].params.exit_depth_m),
                sig9(w[1].peak),
                sig9(w[1].params.exit_depth_m)
            ));
        }
    }
    let series: Vec<String> = rows
        .iter()
        .map(|r| format!("{}:{}", sig9(r.params.exit_depth_m), sig9(r.peak)))
        .collect();
    lines.insert(
        0,
        format!(
            "peak vs exit depth at beta={}: {} ({})",
            sig9(beta_deg),
            series.join(" "),
            if held { "non-decreasing" } else { "not monotone" }
        ),
    );
    (lines, held)
}

pub fn summary(phase: &str, records: &[RunRecord], selection: Option<&Selection>) -> String {
    let mut s = String::new();
    let ok = records.iter().filter(|r| r.status == RunStatus::Ok).count();
    let _ = writeln!(s, "phase {phase}: {} runs, {ok} ok", records.len());
    for r in records.iter().filter(|r| r.status != RunStatus::Ok) {
        let p = &r.params;
        let _ = writeln!(
            s,
            "{} at alpha={} d={} beta={} e={}: {}",
            r.status.label(),
            sig9(p.alpha_deg),
            sig9(p.depth_m),
            sig9(p.beta_deg),
            sig9(p.exit_depth_m),
            r.message.as_deref().unwrap_or("")
        );
    }
    match selection {
        Some(sel) => {
            let describe = |i: usize| {
                let r = &records[i];
                let p = &r.params;
                format!(
                    "alpha={} d={} beta={} e={} peak={} total={}",
                    sig9(p.alpha_deg),
                    sig9(p.depth_m),
                    sig9(p.beta_deg),
                    sig9(p.exit_depth_m),
                    sig9(r.peak),
                    sig9(r.total)
                )
            };
            let _ = writeln!(s, "chosen: {}", describe(sel.chosen));
            for &i in &sel.pareto {
                let _ = writeln!(s, "pareto: {}", describe(i));
            }
        }
        None => {
            let _ = writeln!(s, "chosen: none (no ok runs)");
        }
    }
    if phase == "exit" {
        for line in exit_depth_trend(records, 90.0).0 {
            let _ = writeln!(s, "{line}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bite::Phase;
    use crate::harness::run::TrajectoryPoint;

    fn rec(e: f64, peak: f64) -> RunRecord {
        let mut r = RunRecord::invalid(
            TrajectoryPoint {
                alpha_deg: 90.0,
                depth_m: 0.07,
                beta_deg: 90.0,
                exit_depth_m: e,
            },
            String::new(),
        );
        r.status = RunStatus::Ok;
        r.peak = peak;
        r
    }

    #[test]
    fn sweep_rows() {
        let text = sweep_csv(&[rec(0.01, 2.5)]);
        assert_eq!(
            text,
            format!("{SWEEP_HEADER}\n90,0.07,90,0.01,2.5,0,0,0,ok\n")
        );
    }

    #[test]
    fn empty_trace_is_header_only() {
        assert_eq!(trace_csv(&[]), format!("{TRACE_HEADER}\n"));
    }

    #[test]
    fn trace_rows_and_plot() {
        let row = TraceRow {
            step: 3,
            time: 0.008,
            phase: Phase::Entry,
            num_contacts: 2,
            f_t: 1.0 / 3.0,
            in_window: true,
            jaw_angle: 0.0,
        };
        assert_eq!(trace_csv(&[row]).lines().nth(1), Some("3,0.008,2,0.333333333"));
        let hidden = TraceRow { in_window: false, ..row };
        assert_eq!(plot_data(&[row, hidden]).lines().count(), 2);
    }

    #[test]
    fn trend_report() {
        let (_, held) = exit_depth_trend(&[rec(0.0, 1.0), rec(0.01, 1.0), rec(0.02, 2.0)], 90.0);
        assert!(held);
        let (lines, held) = exit_depth_trend(&[rec(0.0, 1.0), rec(0.01, 0.5)], 90.0);
        assert!(!held);
        assert!(lines[1].starts_with("deviation"));
    }
}
