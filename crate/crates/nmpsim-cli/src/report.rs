//! CSV and summary rendering.
//!
//! Rendering is plain string formatting so identical reports serialize
//! to identical bytes; timestamps are virtual seconds with millisecond
//! precision.

use std::fs;
use std::io;
use std::path::Path;

use nmpsim_core::controller::TransitionEvent;
use nmpsim_core::sim::{CompareReport, RunReport, RunSummary, TimeSeriesRow};

pub const TRANSITIONS_FILE: &str = "transitions.csv";
pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SUMMARY_FILE: &str = "summary.txt";

fn opt_ms(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.3}")).unwrap_or_default()
}

/// `time_s,current_path,next_path,action`; a missing current path
/// renders as `-`.
pub fn transitions_csv(transitions: &[TransitionEvent]) -> String {
    let mut out = String::from("time_s,current_path,next_path,action\n");
    for event in transitions {
        let current = event
            .current_path
            .as_ref()
            .map(|p| p.as_str())
            .unwrap_or("-");
        out.push_str(&format!(
            "{},{},{},{}\n",
            event.time,
            current,
            event.next_path,
            event.action.label()
        ));
    }
    out
}

/// `time_s,active_path,network_est_ms,network_truth_ms,blocking_tx_ms,blocking_rx_ms,mouth_to_ear_ms,event`.
/// Multiple events on one row join with `;`.
pub fn timeseries_csv(rows: &[TimeSeriesRow]) -> String {
    let mut out = String::from(
        "time_s,active_path,network_est_ms,network_truth_ms,blocking_tx_ms,blocking_rx_ms,mouth_to_ear_ms,event\n",
    );
    for row in rows {
        let active = row.active_path.as_ref().map(|p| p.as_str()).unwrap_or("-");
        let events: Vec<&str> = row.events.iter().map(|e| e.label()).collect();
        out.push_str(&format!(
            "{},{},{},{},{:.3},{:.3},{},{}\n",
            row.time,
            active,
            opt_ms(row.network_est_ms),
            opt_ms(row.network_truth_ms),
            row.blocking_tx_ms,
            row.blocking_rx_ms,
            opt_ms(row.mouth_to_ear_ms),
            events.join(";")
        ));
    }
    out
}

/// Key=value summary lines.
pub fn summary_text(summary: &RunSummary) -> String {
    format!(
        "avg_gain_pct={:.3}\nmax_gain_pct={:.3}\nept_violations={}\nreroutes={}\n",
        summary.avg_gain_pct, summary.max_gain_pct, summary.ept_violations, summary.reroutes
    )
}

/// Writes `transitions.csv`, `timeseries.csv`, and `summary.txt` for a
/// single run into `dir`.
pub fn write_run_report(dir: &Path, report: &RunReport) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(TRANSITIONS_FILE), transitions_csv(&report.transitions))?;
    fs::write(dir.join(TIMESERIES_FILE), timeseries_csv(&report.rows))?;
    fs::write(dir.join(SUMMARY_FILE), summary_text(&report.summary))?;
    Ok(())
}

/// Summary of a comparison: the gain metrics plus the enabled run's
/// violation and reroute counts.
pub fn compare_summary(report: &CompareReport) -> RunSummary {
    RunSummary {
        avg_gain_pct: report.gain.avg_gain_pct,
        max_gain_pct: report.gain.max_gain_pct,
        ept_violations: report.enabled.summary.ept_violations,
        reroutes: report.enabled.summary.reroutes,
    }
}

/// Writes both runs (under `enabled/` and `disabled/`) plus the
/// top-level comparison summary.
pub fn write_compare_report(dir: &Path, report: &CompareReport) -> io::Result<()> {
    write_run_report(&dir.join("enabled"), &report.enabled)?;
    write_run_report(&dir.join("disabled"), &report.disabled)?;
    fs::write(dir.join(SUMMARY_FILE), summary_text(&compare_summary(report)))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nmpsim_core::controller::{TransitionAction, TransitionEvent};
    use nmpsim_core::netsim::PathId;
    use nmpsim_core::sim::RowEvent;
    use nmpsim_core::time::SimTime;

    #[test]
    fn transitions_render_like_the_transition_table() {
        let transitions = vec![
            TransitionEvent {
                time: SimTime::from_secs_f64(161.0),
                current_path: None,
                next_path: PathId::new("1-3-5"),
                action: TransitionAction::PathAssignment,
            },
            TransitionEvent {
                time: SimTime::from_secs_f64(280.018),
                current_path: Some(PathId::new("1-3-5")),
                next_path: PathId::new("1-4-5"),
                action: TransitionAction::Rerouting,
            },
        ];
        let csv = transitions_csv(&transitions);
        assert_eq!(
            csv,
            "time_s,current_path,next_path,action\n\
             161.000,-,1-3-5,path-assignment\n\
             280.018,1-3-5,1-4-5,rerouting\n"
        );
    }

    #[test]
    fn timeseries_renders_fixed_columns() {
        let rows = vec![TimeSeriesRow {
            time: SimTime::from_secs_f64(1.0124),
            active_path: Some(PathId::new("1-3-5")),
            network_est_ms: Some(4.2),
            network_truth_ms: Some(4.2),
            blocking_tx_ms: 6.30498866,
            blocking_rx_ms: 6.30498866,
            mouth_to_ear_ms: Some(16.80997732),
            events: vec![RowEvent::Transition(TransitionAction::PathAssignment)],
        }];
        let csv = timeseries_csv(&rows);
        assert_eq!(
            csv,
            "time_s,active_path,network_est_ms,network_truth_ms,blocking_tx_ms,blocking_rx_ms,mouth_to_ear_ms,event\n\
             1.012,1-3-5,4.200,4.200,6.305,6.305,16.810,path-assignment\n"
        );
    }

    #[test]
    fn summary_emits_key_value_lines() {
        let summary = RunSummary {
            avg_gain_pct: 28.308,
            max_gain_pct: 28.308,
            ept_violations: 0,
            reroutes: 5,
        };
        assert_eq!(
            summary_text(&summary),
            "avg_gain_pct=28.308\nmax_gain_pct=28.308\nept_violations=0\nreroutes=5\n"
        );
    }
}
