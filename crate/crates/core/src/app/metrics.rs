//! Once-a-second metrics rows and the end-of-run report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::sim::CollisionReport;

pub const CSV_HEADER: &str = "timestamp,distance,recovery_executed,vel_x,vel_theta";

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub timestamp: f64,
    /// Cumulative odometric distance, meters.
    pub distance: f64,
    /// Recoveries finished since the previous row, `;`-separated.
    pub recovery_executed: String,
    pub vel_x: f64,
    pub vel_theta: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{:.2},{:.4},{},{:.4},{:.4}",
            self.timestamp, self.distance, self.recovery_executed, self.vel_x, self.vel_theta
        )
    }
}

/// Emits a row at t = 0 and then every full second of simulated time.
#[derive(Debug, Clone, Default)]
pub struct MetricsLogger {
    rows: Vec<MetricsRow>,
    pending: Vec<String>,
    next_due: f64,
}

impl MetricsLogger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Remembers a finished recovery for the next row.
    pub fn note_recovery(&mut self, name: &str) {
        self.pending.push(name.to_string());
    }

    /// Appends a row if one is due at `now`.
    pub fn log_tick(&mut self, now: f64, distance: f64, vel_x: f64, vel_theta: f64) -> Option<&MetricsRow> {
        if now + TIME_EPS < self.next_due {
            return None;
        }
        let timestamp = self.next_due;
        self.next_due += 1.0;
        // rows keep a non-decreasing distance even if a caller passes noise
        let distance = self.rows.last().map_or(distance, |r| r.distance.max(distance));
        self.rows.push(MetricsRow {
            timestamp,
            distance,
            recovery_executed: std::mem::take(&mut self.pending).join(";"),
            vel_x,
            vel_theta,
        });
        self.rows.last()
    }

    pub fn rows(&self) -> &[MetricsRow] {
        &self.rows
    }

    pub fn to_csv(&self) -> String {
        rows_to_csv(&self.rows)
    }
}

pub fn rows_to_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::with_capacity(32 * (rows.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.to_csv());
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WaypointStatus {
    Succeeded,
    Skipped,
    /// The run ended before this waypoint was attempted or finished.
    NotReached,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaypointOutcome {
    pub lap: usize,
    pub index: usize,
    pub status: WaypointStatus,
    /// Why a waypoint was skipped.
    pub reason: Option<String>,
    pub started: f64,
    pub ended: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub total_distance: f64,
    pub total_duration: f64,
    pub average_speed: f64,
    pub recoveries: BTreeMap<String, usize>,
    pub total_recoveries: usize,
    pub waypoints_total: usize,
    pub waypoints_succeeded: usize,
    pub waypoints_skipped: usize,
    pub waypoints_not_reached: usize,
    pub collisions: usize,
}

impl RunReport {
    pub fn success_ratio(&self) -> f64 {
        if self.waypoints_total == 0 {
            0.0
        } else {
            self.waypoints_succeeded as f64 / self.waypoints_total as f64
        }
    }

    /// A run passes with no collisions and at least one reached waypoint.
    pub fn passed(&self) -> bool {
        self.collisions == 0 && self.waypoints_succeeded > 0
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "distance        {:.2} m", self.total_distance);
        let _ = writeln!(s, "duration        {:.1} s", self.total_duration);
        let _ = writeln!(s, "average speed   {:.3} m/s", self.average_speed);
        let _ = writeln!(
            s,
            "waypoints       {}/{} succeeded, {} skipped, {} not reached",
            self.waypoints_succeeded, self.waypoints_total, self.waypoints_skipped, self.waypoints_not_reached
        );
        let kinds: Vec<String> = self.recoveries.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(s, "recoveries      {} [{}]", self.total_recoveries, kinds.join(", "));
        let _ = write!(s, "collisions      {}", self.collisions);
        s
    }
}

/// Aggregates rows and outcomes. Distance and duration come from the last
/// row, recoveries from the names logged in the rows.
pub fn emit_report(rows: &[MetricsRow], outcomes: &[WaypointOutcome], collisions: &[CollisionReport]) -> RunReport {
    let (total_distance, total_duration) = rows.last().map_or((0.0, 0.0), |r| (r.distance, r.timestamp));
    let average_speed = if total_duration > 0.0 { total_distance / total_duration } else { 0.0 };
    let mut recoveries = BTreeMap::new();
    for r in rows {
        for name in r.recovery_executed.split(';').filter(|n| !n.is_empty()) {
            *recoveries.entry(name.to_string()).or_insert(0) += 1;
        }
    }
    let count = |s: WaypointStatus| outcomes.iter().filter(|o| o.status == s).count();
    RunReport {
        total_distance,
        total_duration,
        average_speed,
        total_recoveries: recoveries.values().sum(),
        recoveries,
        waypoints_total: outcomes.len(),
        waypoints_succeeded: count(WaypointStatus::Succeeded),
        waypoints_skipped: count(WaypointStatus::Skipped),
        waypoints_not_reached: count(WaypointStatus::NotReached),
        collisions: collisions.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cadence_at_whole_seconds() {
        let mut m = MetricsLogger::new();
        let mut stamps = Vec::new();
        for k in 0..=40 {
            let t = k as f64 * 0.05;
            if let Some(r) = m.log_tick(t, 0.0, 0.0, 0.0) {
                stamps.push(r.timestamp);
            }
        }
        assert_eq!(stamps, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn recovery_lands_in_next_row() {
        let mut m = MetricsLogger::new();
        m.log_tick(0.0, 0.0, 0.0, 0.0);
        m.log_tick(1.0, 0.0, 0.0, 0.0);
        m.note_recovery("spin");
        assert!(m.log_tick(1.4, 0.0, 0.0, 0.0).is_none());
        assert_eq!(m.log_tick(2.0, 0.0, 0.0, 0.0).unwrap().recovery_executed, "spin");
        assert!(m.to_csv().starts_with("timestamp,distance,recovery_executed,vel_x,vel_theta\n"));
    }

    #[test]
    fn report_arithmetic() {
        let rows: Vec<MetricsRow> = (0..=10)
            .map(|k| MetricsRow {
                timestamp: k as f64,
                distance: 0.37 * k as f64,
                recovery_executed: String::new(),
                vel_x: 0.37,
                vel_theta: 0.0,
            })
            .collect();
        let outs: Vec<WaypointOutcome> = (0..4)
            .map(|i| WaypointOutcome {
                lap: 0,
                index: i,
                status: if i == 2 { WaypointStatus::Skipped } else { WaypointStatus::Succeeded },
                reason: None,
                started: 0.0,
                ended: 0.0,
            })
            .collect();
        let r = emit_report(&rows, &outs, &[]);
        assert!((r.average_speed - 0.37).abs() < 1e-12);
        assert_eq!(r.total_recoveries, 0);
        assert_eq!((r.waypoints_succeeded, r.waypoints_skipped), (3, 1));
    }
}
