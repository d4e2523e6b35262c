//! Snapshot time-series CSV: `time,bus,vr,vi[,p,q]`, rows grouped by time,
//! everything per-unit. Our own emissions round-trip bit-exactly (floats are
//! written with 17 significant digits).

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{GridCase, Snapshot};

/// An ordered run of snapshots for one scenario of one case.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSeries {
    pub case_ref: String,
    pub scenario_id: String,
    pub snapshots: Vec<Snapshot>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SnapshotCsvError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("bus {bus} is missing at time {time}")]
    MissingBus { time: f64, bus: usize },
    #[error("bus {bus} at time {time} is not part of the case")]
    UnknownBus { time: f64, bus: usize },
    #[error("bus {bus} appears twice at time {time}")]
    DuplicateBus { time: f64, bus: usize },
    #[error("time {next} does not increase over {prev}")]
    NonMonotoneTime { prev: f64, next: f64 },
}

pub fn read_snapshot_csv(
    text: &str,
    case: &GridCase,
) -> Result<SnapshotSeries, SnapshotCsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| SnapshotCsvError::Syntax {
            line: 1,
            msg: e.to_string(),
        })?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let with_injections = match cols.as_slice() {
        ["time", "bus", "vr", "vi"] => false,
        ["time", "bus", "vr", "vi", "p", "q"] => true,
        other => {
            return Err(SnapshotCsvError::Syntax {
                line: 1,
                msg: format!("unsupported header {other:?}; expected time,bus,vr,vi[,p,q]"),
            })
        }
    };

    let expected: BTreeMap<usize, ()> = case.buses.iter().map(|b| (b.id, ())).collect();
    let mut snapshots: Vec<Snapshot> = Vec::new();
    let mut current: Option<Snapshot> = None;

    for (row_idx, record) in reader.records().enumerate() {
        let line = row_idx + 2;
        let record = record.map_err(|e| SnapshotCsvError::Syntax {
            line,
            msg: e.to_string(),
        })?;
        if record.len() != cols.len() {
            return Err(SnapshotCsvError::Syntax {
                line,
                msg: format!("expected {} fields, got {}", cols.len(), record.len()),
            });
        }
        let num = |i: usize| -> Result<f64, SnapshotCsvError> {
            record[i].parse().map_err(|_| SnapshotCsvError::Syntax {
                line,
                msg: format!("cannot parse number '{}'", &record[i]),
            })
        };
        let time = num(0)?;
        let bus = num(1)? as usize;
        let voltage = Complex64::new(num(2)?, num(3)?);

        let start_new = match &current {
            None => true,
            Some(snap) if snap.time == time => false,
            Some(snap) => {
                if time <= snap.time {
                    return Err(SnapshotCsvError::NonMonotoneTime {
                        prev: snap.time,
                        next: time,
                    });
                }
                true
            }
        };
        if start_new {
            if let Some(done) = current.take() {
                check_complete(&done, &expected)?;
                snapshots.push(done);
            }
            current = Some(Snapshot::new(snapshots.len(), time));
        }
        let snap = current.as_mut().expect("group in progress");
        if !expected.contains_key(&bus) {
            return Err(SnapshotCsvError::UnknownBus { time, bus });
        }
        if snap.voltages.insert(bus, voltage).is_some() {
            return Err(SnapshotCsvError::DuplicateBus { time, bus });
        }
        if with_injections {
            snap.injections.insert(bus, Complex64::new(num(4)?, num(5)?));
        }
    }
    if let Some(done) = current.take() {
        check_complete(&done, &expected)?;
        snapshots.push(done);
    }

    Ok(SnapshotSeries {
        case_ref: String::new(),
        scenario_id: String::new(),
        snapshots,
    })
}

fn check_complete(
    snap: &Snapshot,
    expected: &BTreeMap<usize, ()>,
) -> Result<(), SnapshotCsvError> {
    for bus in expected.keys() {
        if !snap.voltages.contains_key(bus) {
            return Err(SnapshotCsvError::MissingBus {
                time: snap.time,
                bus: *bus,
            });
        }
    }
    Ok(())
}

/// Canonical text form of a float: 17 significant digits, exponent notation.
pub fn canonical_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_snapshot_csv(series: &SnapshotSeries) -> String {
    let with_injections = !series.snapshots.is_empty()
        && series.snapshots.iter().all(|s| {
            s.voltages.keys().all(|b| s.injections.contains_key(b))
        });
    let mut out = String::new();
    out.push_str(if with_injections {
        "time,bus,vr,vi,p,q\n"
    } else {
        "time,bus,vr,vi\n"
    });
    for snap in &series.snapshots {
        for (bus, v) in &snap.voltages {
            out.push_str(&canonical_f64(snap.time));
            out.push(',');
            out.push_str(&bus.to_string());
            out.push(',');
            out.push_str(&canonical_f64(v.re));
            out.push(',');
            out.push_str(&canonical_f64(v.im));
            if with_injections {
                let s = snap.injections[bus];
                out.push(',');
                out.push_str(&canonical_f64(s.re));
                out.push(',');
                out.push_str(&canonical_f64(s.im));
            }
            out.push('\n');
        }
    }
    out
}
