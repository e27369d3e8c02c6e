//! Time-stamped records of replicate runs and their file formats.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// What to record and when.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SnapshotPlan {
    /// Snapshot times, strictly increasing.
    pub times: Vec<f64>,
    /// Store full position vectors at each snapshot.
    #[serde(default)]
    pub record_positions: bool,
    /// Store the off-diagonal pair sum `sum_{i != j} U(x_i - x_j)`.
    #[serde(default)]
    pub record_pair_u: bool,
    /// Store the count of individuals within this radius of the origin.
    #[serde(default)]
    pub count_radius: Option<f64>,
    /// Store the interaction load within this radius of the origin.
    #[serde(default)]
    pub load_radius: Option<f64>,
}

impl SnapshotPlan {
    pub fn at_times(times: Vec<f64>) -> Self {
        SnapshotPlan { times, ..Default::default() }
    }

    /// Evenly spaced snapshots `0, dt, 2dt, ..., t_end`.
    pub fn regular(t_end: f64, dt: f64) -> Self {
        let n = (t_end / dt).round() as usize;
        let times = (0..=n).map(|k| k as f64 * dt).collect();
        SnapshotPlan::at_times(times)
    }

    pub fn with_positions(mut self) -> Self {
        self.record_positions = true;
        self
    }

    pub fn with_pair_u(mut self) -> Self {
        self.record_pair_u = true;
        self
    }

    pub fn with_count_radius(mut self, r: f64) -> Self {
        self.count_radius = Some(r);
        self
    }

    pub fn with_load_radius(mut self, r: f64) -> Self {
        self.load_radius = Some(r);
        self
    }
}

/// Per-observable values at one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservablePoint {
    /// `<nu_t, f>`
    pub value: f64,
    /// Accumulated drift integral of the compensator.
    pub drift_int: f64,
    /// Accumulated predictable bracket.
    pub bracket_int: f64,
    /// Accumulated `int <nu_s, f^2> ds`.
    pub int_f2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub count: usize,
    pub births_cum: u64,
    pub ndeaths_cum: u64,
    pub cdeaths_cum: u64,
    pub fictitious_cum: u64,
    pub seeds_lost_cum: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_u: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub load: Option<f64>,
    #[serde(default)]
    pub observables: Vec<ObservablePoint>,
}

/// The full record of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub replicate_id: u64,
    pub dim: usize,
    pub snapshots: Vec<Snapshot>,
    pub extinct_at: Option<f64>,
    pub total_events: u64,
    pub final_count: usize,
    pub final_t: f64,
}

impl Trace {
    /// Index of the snapshot at time `t` (within 1e-9), if recorded.
    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| (s.t - t).abs() < 1e-9)
    }
}

/// Serialize a float with 17 significant digits (round-trip exact).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write the count-trace CSV:
/// `replicate_id,t,count,births_cum,ndeaths_cum,cdeaths_cum,fictitious_cum`.
pub fn write_trace_csv(traces: &[Trace], mut w: impl Write) -> io::Result<()> {
    writeln!(w, "replicate_id,t,count,births_cum,ndeaths_cum,cdeaths_cum,fictitious_cum")?;
    for trace in traces {
        for s in &trace.snapshots {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                trace.replicate_id,
                fmt_f64(s.t),
                s.count,
                s.births_cum,
                s.ndeaths_cum,
                s.cdeaths_cum,
                s.fictitious_cum
            )?;
        }
    }
    Ok(())
}

/// Write the positions CSV: `replicate_id,t,x_1[,x_2,...]`, one row per individual.
pub fn write_positions_csv(traces: &[Trace], mut w: impl Write) -> io::Result<()> {
    let dim = traces.first().map_or(1, |t| t.dim);
    let header: Vec<String> = (1..=dim).map(|k| format!("x_{k}")).collect();
    writeln!(w, "replicate_id,t,{}", header.join(","))?;
    for trace in traces {
        for s in &trace.snapshots {
            if let Some(pos) = &s.positions {
                for chunk in pos.chunks_exact(dim) {
                    let coords: Vec<String> = chunk.iter().map(|v| fmt_f64(*v)).collect();
                    writeln!(w, "{},{},{}", trace.replicate_id, fmt_f64(s.t), coords.join(","))?;
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum TraceReadError {
    #[error("trace csv: {0}")]
    Io(#[from] io::Error),
    #[error("trace csv line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Read traces back from the count-trace CSV and (optionally) the
/// positions CSV. Counters and counts round-trip exactly; observables
/// and the derived snapshot scalars are not part of the CSV formats.
pub fn read_trace_csv(
    trace_csv: &str,
    positions_csv: Option<&str>,
) -> Result<Vec<Trace>, TraceReadError> {
    let mut traces: Vec<Trace> = Vec::new();
    let malformed = |line: usize, reason: &str| TraceReadError::Malformed {
        line,
        reason: reason.to_string(),
    };
    for (idx, row) in trace_csv.lines().enumerate().skip(1) {
        if row.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != 7 {
            return Err(malformed(idx + 1, "expected 7 columns"));
        }
        let parse_u = |s: &str| s.parse::<u64>().map_err(|e| malformed(idx + 1, &e.to_string()));
        let parse_f = |s: &str| s.parse::<f64>().map_err(|e| malformed(idx + 1, &e.to_string()));
        let replicate_id = parse_u(cols[0])?;
        let snapshot = Snapshot {
            t: parse_f(cols[1])?,
            count: parse_u(cols[2])? as usize,
            births_cum: parse_u(cols[3])?,
            ndeaths_cum: parse_u(cols[4])?,
            cdeaths_cum: parse_u(cols[5])?,
            fictitious_cum: parse_u(cols[6])?,
            seeds_lost_cum: 0,
            positions: None,
            pair_u: None,
            window_count: None,
            load: None,
            observables: Vec::new(),
        };
        match traces.last_mut() {
            Some(tr) if tr.replicate_id == replicate_id => tr.snapshots.push(snapshot),
            _ => traces.push(Trace {
                replicate_id,
                dim: 1,
                snapshots: vec![snapshot],
                extinct_at: None,
                total_events: 0,
                final_count: 0,
                final_t: 0.0,
            }),
        }
    }
    for tr in traces.iter_mut() {
        if let Some(last) = tr.snapshots.last() {
            tr.final_count = last.count;
            tr.final_t = last.t;
        }
    }

    if let Some(pos_text) = positions_csv {
        let mut header_dim = 1usize;
        for (idx, row) in pos_text.lines().enumerate() {
            if row.trim().is_empty() {
                continue;
            }
            if idx == 0 {
                header_dim = row.split(',').count().saturating_sub(2).max(1);
                for tr in traces.iter_mut() {
                    tr.dim = header_dim;
                }
                continue;
            }
            let cols: Vec<&str> = row.split(',').collect();
            if cols.len() != header_dim + 2 {
                return Err(malformed(idx + 1, "column count does not match header"));
            }
            let parse_f =
                |s: &str| s.parse::<f64>().map_err(|e| malformed(idx + 1, &e.to_string()));
            let replicate_id = cols[0]
                .parse::<u64>()
                .map_err(|e| malformed(idx + 1, &e.to_string()))?;
            let t = parse_f(cols[1])?;
            let tr = traces
                .iter_mut()
                .find(|tr| tr.replicate_id == replicate_id)
                .ok_or_else(|| malformed(idx + 1, "unknown replicate id"))?;
            let snap = tr
                .snapshots
                .iter_mut()
                .find(|s| (s.t - t).abs() < 1e-9)
                .ok_or_else(|| malformed(idx + 1, "no snapshot at this time"))?;
            let positions = snap.positions.get_or_insert_with(Vec::new);
            for c in &cols[2..] {
                positions.push(parse_f(c)?);
            }
        }
        // an extinct snapshot writes no rows; with a positions file in
        // hand that means an empty configuration, not missing data
        for tr in traces.iter_mut() {
            for snap in tr.snapshots.iter_mut() {
                if snap.count == 0 && snap.positions.is_none() {
                    snap.positions = Some(Vec::new());
                }
            }
        }
    }
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_plan_includes_endpoints() {
        let p = SnapshotPlan::regular(2.0, 0.5);
        assert_eq!(p.times, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-17, 123456.789, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back, v, "{s}");
        }
    }

    #[test]
    fn csv_round_trip_restores_counts_and_positions() {
        let snap = |t: f64, count: usize, pos: Vec<f64>| Snapshot {
            t,
            count,
            births_cum: count as u64,
            ndeaths_cum: 1,
            cdeaths_cum: 2,
            fictitious_cum: 3,
            seeds_lost_cum: 0,
            positions: Some(pos),
            pair_u: None,
            window_count: None,
            load: None,
            observables: Vec::new(),
        };
        let traces = vec![
            Trace {
                replicate_id: 0,
                dim: 1,
                snapshots: vec![snap(0.0, 2, vec![0.25, -1.5]), snap(1.0, 1, vec![0.1])],
                extinct_at: None,
                total_events: 9,
                final_count: 1,
                final_t: 1.0,
            },
            Trace {
                replicate_id: 1,
                dim: 1,
                snapshots: vec![snap(0.0, 1, vec![3.0]), snap(1.0, 0, vec![])],
                extinct_at: Some(0.7),
                total_events: 4,
                final_count: 0,
                final_t: 1.0,
            },
        ];
        let mut tcsv = Vec::new();
        write_trace_csv(&traces, &mut tcsv).unwrap();
        let mut pcsv = Vec::new();
        write_positions_csv(&traces, &mut pcsv).unwrap();
        let back = read_trace_csv(
            std::str::from_utf8(&tcsv).unwrap(),
            Some(std::str::from_utf8(&pcsv).unwrap()),
        )
        .unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in traces.iter().zip(&back) {
            assert_eq!(a.replicate_id, b.replicate_id);
            for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
                assert_eq!(sa.t, sb.t);
                assert_eq!(sa.count, sb.count);
                assert_eq!(sa.births_cum, sb.births_cum);
                // empty position lists are not represented in the CSV
                if sa.positions.as_ref().is_some_and(|p| !p.is_empty()) {
                    assert_eq!(sa.positions, sb.positions);
                }
            }
        }
    }

    #[test]
    fn malformed_csv_is_rejected_with_line() {
        let err = read_trace_csv("header\n1,2\n", None).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
