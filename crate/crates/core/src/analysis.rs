//! Scenario-level criticality analysis: per-bus critical index values across
//! time, the system-critical value and its location, z-score selection of the
//! critical bus set, and distribution statistics across scenario sets.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::grid::{BusKind, GridCase};
use crate::io::csv::SnapshotSeries;
use crate::lci::{lci, LciError, LciFlag, LciValue};
use crate::ybus::{build_ybus, YbusError};

/// The index trajectory of one bus across a snapshot series.
#[derive(Debug, Clone)]
pub struct BusSeries {
    pub bus: usize,
    pub values: Vec<(usize, LciValue)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Skew {
    Left,
    Right,
    Symmetric,
}

/// Five-number summary of a bus's critical values across scenarios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub skew: Skew,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub scenario_id: String,
    /// Per bus: smallest index value across the series and the earliest
    /// snapshot index attaining it.
    pub per_bus_critical: BTreeMap<usize, (f64, usize)>,
    pub system_critical: f64,
    pub critical_location: usize,
    pub z_scores: BTreeMap<usize, f64>,
    pub critical_set: BTreeSet<usize>,
    /// Populated by cross-scenario aggregation, keyed by bus.
    pub stats: BTreeMap<usize, BoxStats>,
    /// Non-ok evaluation flags observed per bus, deduplicated.
    pub flags: BTreeMap<usize, Vec<LciFlag>>,
    /// The bus filter the report was restricted to, when one was given.
    pub bus_filter: Option<Vec<usize>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    /// Buses to analyze; all PQ buses when absent.
    pub bus_filter: Option<BTreeSet<usize>>,
    pub z_threshold: f64,
    /// Use the 1/(N-1) standard deviation instead of 1/N.
    pub sample_std: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            bus_filter: None,
            z_threshold: -2.0,
            sample_std: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("series is empty")]
    EmptySeries,
    #[error("no buses to analyze")]
    EmptyInput,
    #[error("degenerate distribution: spread below 1e-15")]
    DegenerateDistribution,
    #[error(transparent)]
    Lci(#[from] LciError),
    #[error(transparent)]
    Matrix(#[from] YbusError),
}

/// Smallest value of a bus series and the earliest index attaining it.
pub fn bus_critical(series: &BusSeries) -> Result<(f64, usize), AnalysisError> {
    let mut best: Option<(f64, usize)> = None;
    for (idx, value) in &series.values {
        let better = match best {
            None => true,
            Some((b, _)) => value.lci < b,
        };
        if better {
            best = Some((value.lci, *idx));
        }
    }
    best.ok_or(AnalysisError::EmptySeries)
}

/// Minimum over the per-bus criticals and the bus attaining it; ties break
/// toward the lowest bus id.
pub fn system_critical(
    per_bus: &BTreeMap<usize, (f64, usize)>,
) -> Result<(f64, usize), AnalysisError> {
    let mut best: Option<(f64, usize)> = None;
    for (&bus, &(value, _)) in per_bus {
        let better = match best {
            None => true,
            Some((b, _)) => value < b,
        };
        if better {
            best = Some((value, bus));
        }
    }
    best.ok_or(AnalysisError::EmptyInput)
}

/// Z-score of each bus's critical value within the given map.
pub fn z_scores(
    criticals: &BTreeMap<usize, f64>,
    sample_std: bool,
) -> Result<BTreeMap<usize, f64>, AnalysisError> {
    let n = criticals.len();
    if n == 0 {
        return Err(AnalysisError::EmptyInput);
    }
    if n == 1 {
        return Err(AnalysisError::DegenerateDistribution);
    }
    let mean = criticals.values().sum::<f64>() / n as f64;
    let ss: f64 = criticals.values().map(|x| (x - mean) * (x - mean)).sum();
    let denom = if sample_std { n - 1 } else { n } as f64;
    let std = (ss / denom).sqrt();
    if std < 1e-15 {
        return Err(AnalysisError::DegenerateDistribution);
    }
    Ok(criticals
        .iter()
        .map(|(&bus, &x)| (bus, (x - mean) / std))
        .collect())
}

pub fn select_critical(z: &BTreeMap<usize, f64>, threshold: f64) -> BTreeSet<usize> {
    z.iter()
        .filter(|(_, &score)| score <= threshold)
        .map(|(&bus, _)| bus)
        .collect()
}

/// Quartile by linear interpolation between order statistics (the inclusive
/// convention): position (n-1)p.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    // Median nearer the upper quartile reads as right-skewed on a box plot.
    let upper_gap = q3 - median;
    let lower_gap = median - q1;
    let skew = if (upper_gap - lower_gap).abs() < 1e-12 {
        Skew::Symmetric
    } else if upper_gap < lower_gap {
        Skew::Right
    } else {
        Skew::Left
    };
    Some(BoxStats {
        min: sorted[0],
        q1,
        median,
        q3,
        max: sorted[sorted.len() - 1],
        skew,
    })
}

/// Equal-width histogram over [min, max]; bins are right-open except the
/// last. A single distinct value collapses to one bin.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, usize)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return vec![(lo, values.len())];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in values {
        let idx = (((x - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, c))
        .collect()
}

/// Evaluate the index for every analyzed bus over every snapshot of a series
/// and boil the trajectories down to one report.
///
/// Only the per-bus neighbor views are touched during evaluation, so the cost
/// of a filtered run scales with the filter size and bus degree, not the
/// system size.
pub fn build_scenario_report(
    case: &GridCase,
    series: &SnapshotSeries,
    opts: &AnalysisOptions,
) -> Result<ScenarioReport, AnalysisError> {
    if series.snapshots.is_empty() {
        return Err(AnalysisError::EmptySeries);
    }
    let y = build_ybus(case)?;
    let buses: Vec<usize> = match &opts.bus_filter {
        Some(filter) => filter.iter().copied().collect(),
        None => case
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Pq)
            .map(|b| b.id)
            .collect(),
    };
    if buses.is_empty() {
        return Err(AnalysisError::EmptyInput);
    }

    let mut per_bus_critical = BTreeMap::new();
    let mut flags: BTreeMap<usize, Vec<LciFlag>> = BTreeMap::new();
    for &bus in &buses {
        let view = y.neighbor_view(bus)?;
        let mut values = Vec::with_capacity(series.snapshots.len());
        let mut seen = BTreeSet::new();
        for snap in &series.snapshots {
            let value = lci(&view, snap)?;
            if value.flag != LciFlag::Ok {
                seen.insert(flag_rank(value.flag));
            }
            values.push((snap.index, value));
        }
        let series = BusSeries { bus, values };
        per_bus_critical.insert(bus, bus_critical(&series)?);
        if !seen.is_empty() {
            flags.insert(bus, seen.into_iter().map(flag_unrank).collect());
        }
    }

    let (system_critical, critical_location) = system_critical(&per_bus_critical)?;
    let criticals: BTreeMap<usize, f64> = per_bus_critical
        .iter()
        .map(|(&b, &(v, _))| (b, v))
        .collect();
    let mut warnings = Vec::new();
    let (z, critical_set) = match z_scores(&criticals, opts.sample_std) {
        Ok(z) => {
            let selected = select_critical(&z, opts.z_threshold);
            (z, selected)
        }
        Err(AnalysisError::DegenerateDistribution) => {
            warnings.push(
                "critical values have no spread; z-selection yields an empty set".to_string(),
            );
            (BTreeMap::new(), BTreeSet::new())
        }
        Err(e) => return Err(e),
    };
    let bus_filter = opts.bus_filter.as_ref().map(|f| {
        warnings.push("system critical value covers the filtered bus set only".to_string());
        f.iter().copied().collect()
    });

    Ok(ScenarioReport {
        scenario_id: series.scenario_id.clone(),
        per_bus_critical,
        system_critical,
        critical_location,
        z_scores: z,
        critical_set,
        stats: BTreeMap::new(),
        flags,
        bus_filter,
        warnings,
    })
}

fn flag_rank(flag: LciFlag) -> u8 {
    match flag {
        LciFlag::Ok => 0,
        LciFlag::ClampedTangent => 1,
        LciFlag::NoIntersection => 2,
    }
}

fn flag_unrank(rank: u8) -> LciFlag {
    match rank {
        1 => LciFlag::ClampedTangent,
        2 => LciFlag::NoIntersection,
        _ => LciFlag::Ok,
    }
}

/// Union of the scenario critical sets plus box-plot statistics of each
/// selected bus's critical values across scenarios. Input order does not
/// matter: reports are folded in scenario-id order.
pub fn aggregate_scenarios(reports: &[ScenarioReport]) -> Option<ScenarioReport> {
    if reports.is_empty() {
        return None;
    }
    let mut sorted: Vec<&ScenarioReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id));

    let mut per_bus_critical: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let mut critical_set = BTreeSet::new();
    let mut per_bus_values: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for report in &sorted {
        critical_set.extend(report.critical_set.iter().copied());
        for (&bus, &(value, idx)) in &report.per_bus_critical {
            per_bus_values.entry(bus).or_default().push(value);
            per_bus_critical
                .entry(bus)
                .and_modify(|best| {
                    if value < best.0 {
                        *best = (value, idx);
                    }
                })
                .or_insert((value, idx));
        }
    }

    let (system_critical, critical_location) =
        system_critical(&per_bus_critical).expect("non-empty aggregate");
    let criticals: BTreeMap<usize, f64> = per_bus_critical
        .iter()
        .map(|(&b, &(v, _))| (b, v))
        .collect();
    let mut warnings = Vec::new();
    let z = match z_scores(&criticals, false) {
        Ok(z) => z,
        Err(_) => {
            warnings.push("aggregate critical values have no spread".to_string());
            BTreeMap::new()
        }
    };
    let stats: BTreeMap<usize, BoxStats> = critical_set
        .iter()
        .filter_map(|bus| {
            per_bus_values
                .get(bus)
                .and_then(|v| box_stats(v))
                .map(|s| (*bus, s))
        })
        .collect();

    Some(ScenarioReport {
        scenario_id: "aggregate".to_string(),
        per_bus_critical,
        system_critical,
        critical_location,
        z_scores: z,
        critical_set,
        stats,
        flags: BTreeMap::new(),
        bus_filter: None,
        warnings,
    })
}
