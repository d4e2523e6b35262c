//! Static network model: buses, branches, generators, and operating-point
//! snapshots. Everything is in per-unit on the system base; angles are radians.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Power-flow role of a bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    #[serde(default)]
    pub p_load: f64,
    #[serde(default)]
    pub q_load: f64,
    #[serde(default)]
    pub g_shunt: f64,
    #[serde(default)]
    pub b_shunt: f64,
    #[serde(default = "one")]
    pub v_init_mag: f64,
    #[serde(default)]
    pub v_init_ang: f64,
    /// Nominal voltage level in kV; informational only.
    #[serde(default)]
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance (half applied at each end).
    #[serde(default)]
    pub b_charging: f64,
    /// Off-nominal turns ratio on the from side; 1.0 means none.
    #[serde(default = "one")]
    pub tap: f64,
    /// Phase shift in radians on the from side.
    #[serde(default)]
    pub shift: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
    #[serde(default)]
    pub is_transformer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    #[serde(default)]
    pub p_gen: f64,
    #[serde(default)]
    pub q_gen: f64,
    #[serde(default = "one")]
    pub v_setpoint: f64,
    #[serde(default)]
    pub q_min: f64,
    #[serde(default)]
    pub q_max: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// A complete static case: the unit of everything downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    #[serde(default)]
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub generators: Vec<Generator>,
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("duplicate bus id {0}")]
    DuplicateBusId(usize),
    #[error("bus {0} has non-positive initial voltage magnitude")]
    NonPositiveVoltage(usize),
    #[error("no slack bus in case")]
    MissingSlack,
    #[error("more than one slack bus (ids {0} and {1})")]
    MultipleSlack(usize, usize),
    #[error("branch {from_bus}-{to_bus} references a missing bus")]
    DanglingBranch { from_bus: usize, to_bus: usize },
    #[error("branch {from_bus}-{to_bus} connects a bus to itself")]
    SelfLoop { from_bus: usize, to_bus: usize },
    #[error("branch {from_bus}-{to_bus} has zero series impedance")]
    ZeroImpedanceBranch { from_bus: usize, to_bus: usize },
    #[error("branch {from_bus}-{to_bus} has non-positive tap ratio {tap}")]
    InvalidTap {
        from_bus: usize,
        to_bus: usize,
        tap: f64,
    },
    #[error("generator at bus {0} references a missing bus")]
    DanglingGenerator(usize),
    #[error("generator at bus {0} has q_min > q_max")]
    InvalidQLimits(usize),
}

impl GridCase {
    /// Map from bus id to dense position in `buses`.
    pub fn bus_index(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn bus(&self, id: usize) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn slack_id(&self) -> Option<usize> {
        self.buses.iter().find(|b| b.kind == BusKind::Slack).map(|b| b.id)
    }

    pub fn pq_bus_ids(&self) -> Vec<usize> {
        self.buses
            .iter()
            .filter(|b| b.kind == BusKind::Pq)
            .map(|b| b.id)
            .collect()
    }

    /// Total active load of the case in MW (per-unit loads times the base).
    pub fn total_load_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.p_load).sum::<f64>() * self.base_mva
    }

    /// Check every structural invariant; the first violation is returned.
    pub fn validate(&self) -> Result<(), GridError> {
        let mut seen = HashMap::new();
        let mut slack = None;
        for bus in &self.buses {
            if seen.insert(bus.id, ()).is_some() {
                return Err(GridError::DuplicateBusId(bus.id));
            }
            if !(bus.v_init_mag > 0.0) {
                return Err(GridError::NonPositiveVoltage(bus.id));
            }
            if bus.kind == BusKind::Slack {
                match slack {
                    None => slack = Some(bus.id),
                    Some(first) => return Err(GridError::MultipleSlack(first, bus.id)),
                }
            }
        }
        if slack.is_none() {
            return Err(GridError::MissingSlack);
        }
        for br in &self.branches {
            if br.from_bus == br.to_bus {
                return Err(GridError::SelfLoop {
                    from_bus: br.from_bus,
                    to_bus: br.to_bus,
                });
            }
            if !seen.contains_key(&br.from_bus) || !seen.contains_key(&br.to_bus) {
                return Err(GridError::DanglingBranch {
                    from_bus: br.from_bus,
                    to_bus: br.to_bus,
                });
            }
            if br.r * br.r + br.x * br.x == 0.0 {
                return Err(GridError::ZeroImpedanceBranch {
                    from_bus: br.from_bus,
                    to_bus: br.to_bus,
                });
            }
            if !(br.tap > 0.0) {
                return Err(GridError::InvalidTap {
                    from_bus: br.from_bus,
                    to_bus: br.to_bus,
                    tap: br.tap,
                });
            }
        }
        for gen in &self.generators {
            if !seen.contains_key(&gen.bus) {
                return Err(GridError::DanglingGenerator(gen.bus));
            }
            if gen.q_min > gen.q_max {
                return Err(GridError::InvalidQLimits(gen.bus));
            }
        }
        Ok(())
    }
}

/// One operating condition: complex voltage per bus, and (optionally)
/// the net complex power injection per bus, both in per-unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Ordinal position within a series.
    pub index: usize,
    /// Time (or loading) coordinate the snapshot was taken at.
    pub time: f64,
    pub voltages: BTreeMap<usize, Complex64>,
    /// Net injections, generation-positive: a pure load P shows up as -P.
    /// May be empty or partial; fill with `compute_injections`.
    pub injections: BTreeMap<usize, Complex64>,
}

impl Snapshot {
    pub fn new(index: usize, time: f64) -> Self {
        Self {
            index,
            time,
            voltages: BTreeMap::new(),
            injections: BTreeMap::new(),
        }
    }

    pub fn voltage(&self, bus: usize) -> Option<Complex64> {
        self.voltages.get(&bus).copied()
    }

    pub fn injection(&self, bus: usize) -> Option<Complex64> {
        self.injections.get(&bus).copied()
    }

    /// True when `voltages` covers exactly the buses of `case`.
    pub fn covers(&self, case: &GridCase) -> bool {
        self.voltages.len() == case.buses.len()
            && case.buses.iter().all(|b| self.voltages.contains_key(&b.id))
    }
}
