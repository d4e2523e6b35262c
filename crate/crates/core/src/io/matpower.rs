//! Reader for the matrix-literal subset of MATPOWER case files: the
//! `baseMVA` scalar plus the `bus`, `gen` and `branch` matrices. Comments,
//! `gencost` and any other fields are skipped. Quantities arrive in MW/MVAr
//! and degrees and leave in per-unit and radians.

use thiserror::Error;

use crate::grid::{Branch, Bus, BusKind, Generator, GridCase};

#[derive(Debug, Error, PartialEq)]
pub enum MatpowerError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{0}")]
    Semantic(String),
}

// bus matrix columns
const BUS_I: usize = 0;
const BUS_TYPE: usize = 1;
const PD: usize = 2;
const QD: usize = 3;
const GS: usize = 4;
const BS: usize = 5;
const VM: usize = 7;
const VA: usize = 8;
const BASE_KV: usize = 9;
// branch matrix columns
const F_BUS: usize = 0;
const T_BUS: usize = 1;
const BR_R: usize = 2;
const BR_X: usize = 3;
const BR_B: usize = 4;
const TAP: usize = 8;
const SHIFT: usize = 9;
const BR_STATUS: usize = 10;
// gen matrix columns
const GEN_BUS: usize = 0;
const PG: usize = 1;
const QG: usize = 2;
const QMAX: usize = 3;
const QMIN: usize = 4;
const VG: usize = 5;
const GEN_STATUS: usize = 7;

struct Row {
    line: usize,
    values: Vec<f64>,
}

#[derive(Default)]
struct RawCase {
    base_mva: Option<f64>,
    bus: Vec<Row>,
    gen: Vec<Row>,
    branch: Vec<Row>,
}

pub fn parse_matpower(text: &str) -> Result<GridCase, MatpowerError> {
    let raw = scan(text)?;
    let base_mva = raw
        .base_mva
        .ok_or_else(|| MatpowerError::Semantic("missing baseMVA".into()))?;
    if !(base_mva > 0.0) {
        return Err(MatpowerError::Semantic(format!(
            "baseMVA must be positive, got {base_mva}"
        )));
    }
    if raw.bus.is_empty() {
        return Err(MatpowerError::Semantic("missing or empty bus matrix".into()));
    }

    let mut buses = Vec::with_capacity(raw.bus.len());
    for row in &raw.bus {
        let v = need(row, BASE_KV + 1, "bus")?;
        let id = int(row, BUS_I, "bus id")?;
        let kind = match v[BUS_TYPE] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            code => {
                return Err(MatpowerError::Semantic(format!(
                    "bus {id}: unsupported bus type code {code}"
                )))
            }
        };
        buses.push(Bus {
            id,
            kind,
            p_load: v[PD] / base_mva,
            q_load: v[QD] / base_mva,
            g_shunt: v[GS] / base_mva,
            b_shunt: v[BS] / base_mva,
            v_init_mag: v[VM],
            v_init_ang: v[VA].to_radians(),
            base_kv: v[BASE_KV],
        });
    }

    let mut branches = Vec::with_capacity(raw.branch.len());
    for row in &raw.branch {
        let v = need(row, BR_STATUS + 1, "branch")?;
        let raw_tap = v[TAP];
        branches.push(Branch {
            from_bus: int(row, F_BUS, "branch from bus")?,
            to_bus: int(row, T_BUS, "branch to bus")?,
            r: v[BR_R],
            x: v[BR_X],
            b_charging: v[BR_B],
            tap: if raw_tap == 0.0 { 1.0 } else { raw_tap },
            shift: v[SHIFT].to_radians(),
            in_service: v[BR_STATUS] != 0.0,
            is_transformer: raw_tap != 0.0,
        });
    }

    let mut generators = Vec::with_capacity(raw.gen.len());
    for row in &raw.gen {
        let v = need(row, GEN_STATUS + 1, "gen")?;
        generators.push(Generator {
            bus: int(row, GEN_BUS, "gen bus")?,
            p_gen: v[PG] / base_mva,
            q_gen: v[QG] / base_mva,
            v_setpoint: v[VG],
            q_min: v[QMIN] / base_mva,
            q_max: v[QMAX] / base_mva,
            in_service: v[GEN_STATUS] > 0.0,
        });
    }

    let case = GridCase {
        base_mva,
        buses,
        branches,
        generators,
    };
    case.validate()
        .map_err(|e| MatpowerError::Semantic(e.to_string()))?;
    Ok(case)
}

fn need<'a>(row: &'a Row, cols: usize, what: &str) -> Result<&'a [f64], MatpowerError> {
    if row.values.len() < cols {
        return Err(MatpowerError::Syntax {
            line: row.line,
            msg: format!(
                "{what} row has {} columns, expected at least {cols}",
                row.values.len()
            ),
        });
    }
    Ok(&row.values)
}

fn int(row: &Row, col: usize, what: &str) -> Result<usize, MatpowerError> {
    let v = row.values[col];
    if v < 0.0 || v.fract() != 0.0 {
        return Err(MatpowerError::Syntax {
            line: row.line,
            msg: format!("{what} must be a non-negative integer, got {v}"),
        });
    }
    Ok(v as usize)
}

fn scan(text: &str) -> Result<RawCase, MatpowerError> {
    let mut raw = RawCase::default();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((idx, line)) = lines.next() {
        let line_no = idx + 1;
        let code = strip_comment(line).trim();
        if code.is_empty() {
            continue;
        }
        let Some(rest) = code.strip_prefix("mpc.") else {
            continue;
        };
        let Some(eq) = rest.find('=') else { continue };
        let name = rest[..eq].trim();
        let value = rest[eq + 1..].trim();

        if name == "baseMVA" {
            let value = value.trim_end_matches(';').trim();
            raw.base_mva = Some(value.parse().map_err(|_| MatpowerError::Syntax {
                line: line_no,
                msg: format!("cannot parse baseMVA value '{value}'"),
            })?);
            continue;
        }
        if !value.starts_with('[') {
            continue; // scalar or string field we do not use
        }
        let mut rows = Vec::new();
        let mut body = value[1..].to_string();
        let mut body_line = line_no;
        loop {
            let (chunk, done) = match body.find(']') {
                Some(pos) => (body[..pos].to_string(), true),
                None => (body.clone(), false),
            };
            let chunk = chunk.trim();
            if !chunk.is_empty() {
                for piece in chunk.split(';') {
                    let piece = piece.trim();
                    if piece.is_empty() {
                        continue;
                    }
                    rows.push(parse_row(piece, body_line)?);
                }
            }
            if done {
                break;
            }
            match lines.next() {
                Some((idx, next)) => {
                    body = strip_comment(next).to_string();
                    body_line = idx + 1;
                }
                None => {
                    return Err(MatpowerError::Syntax {
                        line: body_line,
                        msg: format!("matrix mpc.{name} is not closed with ']'"),
                    })
                }
            }
        }
        match name {
            "bus" => raw.bus = rows,
            "gen" => raw.gen = rows,
            "branch" => raw.branch = rows,
            _ => {} // gencost and friends
        }
    }
    Ok(raw)
}

fn parse_row(piece: &str, line: usize) -> Result<Row, MatpowerError> {
    let mut values = Vec::new();
    for tok in piece.split_whitespace() {
        values.push(tok.parse().map_err(|_| MatpowerError::Syntax {
            line,
            msg: format!("cannot parse number '{tok}'"),
        })?);
    }
    Ok(Row { line, values })
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const MINIMAL: &str = "\
function mpc = mini
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1.0\t0\t132\t1\t1.1\t0.9;
\t2\t1\t50\t0\t0\t0\t1\t1.0\t0\t132\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t300\t-300\t1.0\t100\t1\t250\t0;
];
mpc.branch = [
\t1\t2\t0.1\t0.2\t0\t250\t250\t250\t0\t0\t1\t-360\t360;
];
";

    #[test]
    fn minimal_case_parses() {
        let case = parse_matpower(MINIMAL).unwrap();
        assert_eq!(case.base_mva, 100.0);
        assert_eq!(case.buses.len(), 2);
        assert_eq!(case.buses[0].kind, BusKind::Slack);
        assert_relative_eq!(case.buses[1].p_load, 0.5);
        assert_eq!(case.branches.len(), 1);
        assert_eq!(case.branches[0].tap, 1.0);
        assert!(!case.branches[0].is_transformer);
        assert_eq!(case.generators.len(), 1);
        assert_relative_eq!(case.generators[0].q_max, 3.0);
    }

    #[test]
    fn duplicate_bus_id_is_semantic() {
        let text = MINIMAL.replace(
            "\t2\t1\t50\t0\t0\t0\t1\t1.0\t0\t132\t1\t1.1\t0.9;",
            "\t1\t1\t50\t0\t0\t0\t1\t1.0\t0\t132\t1\t1.1\t0.9;",
        );
        let err = parse_matpower(&text).unwrap_err();
        assert!(matches!(err, MatpowerError::Semantic(ref m) if m.contains("duplicate")));
    }

    #[test]
    fn missing_slack_is_semantic() {
        let text = MINIMAL.replace(
            "\t1\t3\t0\t0\t0\t0\t1\t1.0\t0\t132\t1\t1.1\t0.9;",
            "\t1\t2\t0\t0\t0\t0\t1\t1.0\t0\t132\t1\t1.1\t0.9;",
        );
        let err = parse_matpower(&text).unwrap_err();
        assert!(matches!(err, MatpowerError::Semantic(ref m) if m.contains("slack")));
    }

    #[test]
    fn bad_bus_type_is_semantic() {
        let text = MINIMAL.replace(
            "\t2\t1\t50\t0",
            "\t2\t7\t50\t0",
        );
        let err = parse_matpower(&text).unwrap_err();
        assert!(matches!(err, MatpowerError::Semantic(ref m) if m.contains("type code 7")));
    }

    #[test]
    fn zero_tap_means_nominal_transformerless_line() {
        let case = parse_matpower(MINIMAL).unwrap();
        assert_eq!(case.branches[0].tap, 1.0);
        let tapped = MINIMAL.replace(
            "\t1\t2\t0.1\t0.2\t0\t250\t250\t250\t0\t0\t1",
            "\t1\t2\t0.1\t0.2\t0\t250\t250\t250\t0.97\t0\t1",
        );
        let case = parse_matpower(&tapped).unwrap();
        assert_eq!(case.branches[0].tap, 0.97);
        assert!(case.branches[0].is_transformer);
    }

    #[test]
    fn angles_arrive_in_radians() {
        let text = MINIMAL.replace(
            "\t2\t1\t50\t0\t0\t0\t1\t1.0\t0\t132",
            "\t2\t1\t50\t0\t0\t0\t1\t1.0\t-30\t132",
        );
        let case = parse_matpower(&text).unwrap();
        assert_relative_eq!(case.buses[1].v_init_ang, -30.0_f64.to_radians());
    }

    #[test]
    fn garbage_number_is_syntax_error_with_line() {
        let text = MINIMAL.replace("\t1\t2\t0.1\t0.2", "\t1\t2\tzz\t0.2");
        match parse_matpower(&text).unwrap_err() {
            MatpowerError::Syntax { line, msg } => {
                assert_eq!(line, 12);
                assert!(msg.contains("zz"));
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unclosed_matrix_is_syntax_error() {
        let text = "mpc.baseMVA = 100;\nmpc.bus = [\n 1 3 0 0 0 0 1 1 0 1 1 1.1 0.9;\n";
        assert!(matches!(
            parse_matpower(text).unwrap_err(),
            MatpowerError::Syntax { .. }
        ));
    }

    #[test]
    fn comments_and_gencost_are_ignored() {
        let text = format!(
            "{}\nmpc.gencost = [\n\t2\t0\t0\t3\t0.01\t40\t0;\n];\n% trailing note\n",
            MINIMAL
        );
        assert!(parse_matpower(&text).is_ok());
    }
}
