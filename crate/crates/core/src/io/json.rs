//! Native JSON case format: a lossless mirror of the in-memory model with
//! keys named after the fields. Unknown keys are accepted and ignored so the
//! format can grow.

use thiserror::Error;

use crate::grid::{GridCase, GridError};

#[derive(Debug, Error, PartialEq)]
pub enum CaseJsonError {
    #[error("schema error at {path}: {msg}")]
    Schema { path: String, msg: String },
    #[error(transparent)]
    Invalid(#[from] GridError),
}

pub fn parse_native_json(text: &str) -> Result<GridCase, CaseJsonError> {
    let case: GridCase = serde_json::from_str(text).map_err(schema_error)?;
    case.validate()?;
    Ok(case)
}

pub fn emit_native_json(case: &GridCase) -> String {
    serde_json::to_string_pretty(case).expect("grid case serializes infallibly")
}

/// serde reports missing fields by name; surface them as a JSON path.
fn schema_error(err: serde_json::Error) -> CaseJsonError {
    let msg = err.to_string();
    let path = msg
        .split_once("missing field `")
        .and_then(|(_, rest)| rest.split_once('`'))
        .map(|(field, _)| format!("$.{field}"))
        .unwrap_or_else(|| "$".to_string());
    CaseJsonError::Schema { path, msg }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, Bus, BusKind, Generator};

    fn sample() -> GridCase {
        GridCase {
            base_mva: 100.0,
            buses: vec![
                Bus {
                    id: 1,
                    kind: BusKind::Slack,
                    p_load: 0.0,
                    q_load: 0.0,
                    g_shunt: 0.0,
                    b_shunt: 0.0,
                    v_init_mag: 1.02,
                    v_init_ang: 0.0,
                    base_kv: 345.0,
                },
                Bus {
                    id: 5,
                    kind: BusKind::Pq,
                    p_load: 0.9,
                    q_load: 0.3,
                    g_shunt: 0.0,
                    b_shunt: 0.19,
                    v_init_mag: 1.0,
                    v_init_ang: -0.05,
                    base_kv: 138.0,
                },
            ],
            branches: vec![Branch {
                from_bus: 1,
                to_bus: 5,
                r: 0.01,
                x: 0.085,
                b_charging: 0.176,
                tap: 0.978,
                shift: 0.0,
                in_service: true,
                is_transformer: true,
            }],
            generators: vec![Generator {
                bus: 1,
                p_gen: 1.0,
                q_gen: 0.1,
                v_setpoint: 1.02,
                q_min: -3.0,
                q_max: 3.0,
                in_service: true,
            }],
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let case = sample();
        let text = emit_native_json(&case);
        let back = parse_native_json(&text).unwrap();
        assert_eq!(back, case);
    }

    #[test]
    fn missing_base_mva_reports_path() {
        let err = parse_native_json(r#"{"buses": []}"#).unwrap_err();
        match err {
            CaseJsonError::Schema { path, .. } => assert_eq!(path, "$.base_mva"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_ignored() {
        let mut text = emit_native_json(&sample());
        text = text.replacen('{', "{\n  \"format_rev\": 7,", 1);
        assert_eq!(parse_native_json(&text).unwrap(), sample());
    }

    #[test]
    fn invalid_case_is_rejected_after_decoding() {
        let mut case = sample();
        case.buses[1].id = 1;
        let err = parse_native_json(&emit_native_json(&case)).unwrap_err();
        assert_eq!(err, CaseJsonError::Invalid(GridError::DuplicateBusId(1)));
    }
}
