//! Case and time-series file formats.

pub mod csv;
pub mod json;
pub mod matpower;

pub use csv::{read_snapshot_csv, write_snapshot_csv, SnapshotCsvError, SnapshotSeries};
pub use json::{emit_native_json, parse_native_json, CaseJsonError};
pub use matpower::{parse_matpower, MatpowerError};
