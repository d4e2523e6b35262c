//! Nodal admittance matrix assembly and the per-bus neighbor view the local
//! index computation is restricted to.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{GridCase, Snapshot};

/// Sparse complex nodal admittance matrix, stored row-wise. Bus ids are
/// preserved from the case; dense positions are an internal detail.
#[derive(Debug, Clone)]
pub struct AdmittanceMatrix {
    ids: Vec<usize>,
    index: HashMap<usize, usize>,
    diag: Vec<Complex64>,
    /// Per row: (dense column, Y_dk), sorted by column.
    offdiag: Vec<Vec<(usize, Complex64)>>,
}

/// Row `bus` of the admittance matrix: everything the local computation at
/// one bus is allowed to see. Neighbor entries are keyed by bus id.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborView {
    pub bus: usize,
    pub diagonal: Complex64,
    pub neighbors: Vec<(usize, Complex64)>,
}

#[derive(Debug, Error, PartialEq)]
pub enum YbusError {
    #[error("branch {from_bus}-{to_bus} has zero series impedance")]
    ZeroImpedanceBranch { from_bus: usize, to_bus: usize },
    #[error("branch {from_bus}-{to_bus} references a missing bus")]
    DanglingBranch { from_bus: usize, to_bus: usize },
    #[error("unknown bus {0}")]
    UnknownBus(usize),
    #[error("snapshot bus set does not match the matrix dimension")]
    DimensionMismatch,
}

impl AdmittanceMatrix {
    pub fn dimension(&self) -> usize {
        self.ids.len()
    }

    pub fn bus_ids(&self) -> &[usize] {
        &self.ids
    }

    /// Entry (d, k) by bus id; zero when no branch joins d and k.
    pub fn entry(&self, d: usize, k: usize) -> Complex64 {
        let (Some(&di), Some(&ki)) = (self.index.get(&d), self.index.get(&k)) else {
            return Complex64::ZERO;
        };
        if di == ki {
            return self.diag[di];
        }
        self.offdiag[di]
            .iter()
            .find(|(c, _)| *c == ki)
            .map(|(_, y)| *y)
            .unwrap_or(Complex64::ZERO)
    }

    /// Extract row `d`: cost proportional to the degree of `d`.
    pub fn neighbor_view(&self, d: usize) -> Result<NeighborView, YbusError> {
        let &di = self.index.get(&d).ok_or(YbusError::UnknownBus(d))?;
        Ok(NeighborView {
            bus: d,
            diagonal: self.diag[di],
            neighbors: self.offdiag[di]
                .iter()
                .map(|&(c, y)| (self.ids[c], y))
                .collect(),
        })
    }

    /// Current injected into the network at dense row `i` for voltages `v`
    /// (dense, aligned with `bus_ids`).
    fn row_current(&self, i: usize, v: &[Complex64]) -> Complex64 {
        let mut acc = self.diag[i] * v[i];
        for &(c, y) in &self.offdiag[i] {
            acc += y * v[c];
        }
        acc
    }

    /// Net complex injection S_d = V_d * conj(sum_k Y_dk V_k) per dense row.
    pub fn injections_dense(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.ids.len())
            .map(|i| v[i] * self.row_current(i, v).conj())
            .collect()
    }

    pub fn dense_position(&self, bus: usize) -> Option<usize> {
        self.index.get(&bus).copied()
    }

    pub(crate) fn diag_dense(&self, i: usize) -> Complex64 {
        self.diag[i]
    }

    pub(crate) fn row_dense(&self, i: usize) -> &[(usize, Complex64)] {
        &self.offdiag[i]
    }
}

/// Assemble the admittance matrix of `case` with the standard pi model.
///
/// Each in-service branch with series admittance y = 1/(r + jx), total
/// charging b, ratio t and shift s contributes
///   Y_ff += (y + j b/2) / t^2        Y_ft += -y / (t e^{-js})
///   Y_tt +=  y + j b/2               Y_tf += -y / (t e^{+js})
/// and each bus shunt adds g + jb to its diagonal.
pub fn build_ybus(case: &GridCase) -> Result<AdmittanceMatrix, YbusError> {
    let ids: Vec<usize> = case.buses.iter().map(|b| b.id).collect();
    let index: HashMap<usize, usize> = ids.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let n = ids.len();
    let mut diag = vec![Complex64::ZERO; n];
    let mut off: Vec<BTreeMap<usize, Complex64>> = vec![BTreeMap::new(); n];

    for br in case.branches.iter().filter(|b| b.in_service) {
        let (Some(&f), Some(&t)) = (index.get(&br.from_bus), index.get(&br.to_bus)) else {
            return Err(YbusError::DanglingBranch {
                from_bus: br.from_bus,
                to_bus: br.to_bus,
            });
        };
        if br.r == 0.0 && br.x == 0.0 {
            return Err(YbusError::ZeroImpedanceBranch {
                from_bus: br.from_bus,
                to_bus: br.to_bus,
            });
        }
        let ys = Complex64::new(br.r, br.x).inv();
        let ysh = ys + Complex64::new(0.0, br.b_charging / 2.0);
        let ratio = Complex64::from_polar(br.tap, br.shift);
        diag[f] += ysh / (br.tap * br.tap);
        diag[t] += ysh;
        *off[f].entry(t).or_insert(Complex64::ZERO) += -ys / ratio.conj();
        *off[t].entry(f).or_insert(Complex64::ZERO) += -ys / ratio;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        diag[i] += Complex64::new(bus.g_shunt, bus.b_shunt);
    }

    Ok(AdmittanceMatrix {
        ids,
        index,
        diag,
        offdiag: off.into_iter().map(|m| m.into_iter().collect()).collect(),
    })
}

/// Fill any missing injections of `snapshot` from its voltages.
///
/// Entries already present are kept as-is (measured data wins), so the
/// operation is idempotent. Fails when the snapshot's bus set differs from
/// the matrix.
pub fn compute_injections(
    y: &AdmittanceMatrix,
    snapshot: &Snapshot,
) -> Result<Snapshot, YbusError> {
    if snapshot.voltages.len() != y.dimension()
        || !y.ids.iter().all(|b| snapshot.voltages.contains_key(b))
    {
        return Err(YbusError::DimensionMismatch);
    }
    let v: Vec<Complex64> = y.ids.iter().map(|b| snapshot.voltages[b]).collect();
    let s = y.injections_dense(&v);
    let mut out = snapshot.clone();
    for (i, &bus) in y.ids.iter().enumerate() {
        out.injections.entry(bus).or_insert(s[i]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Branch, Bus, BusKind};
    use approx::assert_relative_eq;

    fn bus(id: usize, kind: BusKind) -> Bus {
        Bus {
            id,
            kind,
            p_load: 0.0,
            q_load: 0.0,
            g_shunt: 0.0,
            b_shunt: 0.0,
            v_init_mag: 1.0,
            v_init_ang: 0.0,
            base_kv: 0.0,
        }
    }

    fn line(from_bus: usize, to_bus: usize, r: f64, x: f64) -> Branch {
        Branch {
            from_bus,
            to_bus,
            r,
            x,
            b_charging: 0.0,
            tap: 1.0,
            shift: 0.0,
            in_service: true,
            is_transformer: false,
        }
    }

    fn two_bus() -> GridCase {
        GridCase {
            base_mva: 100.0,
            buses: vec![bus(1, BusKind::Slack), bus(2, BusKind::Pq)],
            branches: vec![line(1, 2, 0.1, 0.2)],
            generators: vec![],
        }
    }

    #[test]
    fn two_bus_line_matrix() {
        // 1/(0.1 + 0.2j) = 2 - 4j
        let y = build_ybus(&two_bus()).unwrap();
        let d = y.entry(1, 1);
        assert_relative_eq!(d.re, 2.0, max_relative = 1e-12);
        assert_relative_eq!(d.im, -4.0, max_relative = 1e-12);
        let o = y.entry(1, 2);
        assert_relative_eq!(o.re, -2.0, max_relative = 1e-12);
        assert_relative_eq!(o.im, 4.0, max_relative = 1e-12);
        // reciprocal check: y * (r + jx) = 1
        let back = Complex64::new(2.0, -4.0) * Complex64::new(0.1, 0.2);
        assert_relative_eq!(back.re, 1.0, max_relative = 1e-15);
        assert_relative_eq!(back.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn shunt_only_diagonal() {
        let mut case = two_bus();
        case.branches.clear();
        case.buses.truncate(1);
        case.buses[0].g_shunt = 0.5;
        let y = build_ybus(&case).unwrap();
        assert_eq!(y.entry(1, 1), Complex64::new(0.5, 0.0));
        assert!(y.neighbor_view(1).unwrap().neighbors.is_empty());
    }

    #[test]
    fn shift_free_matrix_is_symmetric() {
        let mut case = two_bus();
        case.buses.push(bus(3, BusKind::Pq));
        case.branches.push(Branch {
            tap: 0.97,
            ..line(2, 3, 0.02, 0.09)
        });
        case.branches.push(line(1, 3, 0.03, 0.11));
        let y = build_ybus(&case).unwrap();
        for &d in y.bus_ids() {
            for &k in y.bus_ids() {
                let a = y.entry(d, k);
                let b = y.entry(k, d);
                assert_relative_eq!(a.re, b.re, epsilon = 1e-15);
                assert_relative_eq!(a.im, b.im, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn plain_network_diagonal_is_negated_offdiagonal_sum() {
        let mut case = two_bus();
        case.buses.push(bus(3, BusKind::Pq));
        case.branches.push(line(2, 3, 0.02, 0.09));
        case.branches.push(line(1, 3, 0.03, 0.11));
        let y = build_ybus(&case).unwrap();
        for &d in y.bus_ids() {
            let view = y.neighbor_view(d).unwrap();
            let sum: Complex64 = view.neighbors.iter().map(|(_, v)| v).sum();
            assert_relative_eq!(view.diagonal.re, -sum.re, epsilon = 1e-12);
            assert_relative_eq!(view.diagonal.im, -sum.im, epsilon = 1e-12);
        }
    }

    #[test]
    fn neighbor_view_of_two_bus() {
        let y = build_ybus(&two_bus()).unwrap();
        let view = y.neighbor_view(1).unwrap();
        assert_eq!(view.bus, 1);
        assert_eq!(view.neighbors.len(), 1);
        assert_eq!(view.neighbors[0].0, 2);
        assert_eq!(y.neighbor_view(9), Err(YbusError::UnknownBus(9)));
    }

    #[test]
    fn star_center_has_three_neighbors() {
        let mut case = two_bus();
        case.branches.clear();
        case.buses.push(bus(3, BusKind::Pq));
        case.buses.push(bus(4, BusKind::Pq));
        for t in [2, 3, 4] {
            case.branches.push(line(1, t, 0.01, 0.05));
        }
        let y = build_ybus(&case).unwrap();
        assert_eq!(y.neighbor_view(1).unwrap().neighbors.len(), 3);
        assert_eq!(y.neighbor_view(2).unwrap().neighbors.len(), 1);
    }

    #[test]
    fn locality_of_neighbor_view() {
        // Row of a bus is identical whether built from the whole case or from
        // the case cut down to the bus and its direct neighbors.
        let mut case = two_bus();
        case.buses.push(bus(3, BusKind::Pq));
        case.buses.push(bus(4, BusKind::Pq));
        case.branches.push(line(2, 3, 0.02, 0.09));
        case.branches.push(line(3, 4, 0.04, 0.14));
        let full = build_ybus(&case).unwrap().neighbor_view(2).unwrap();

        let restricted = GridCase {
            base_mva: case.base_mva,
            buses: case
                .buses
                .iter()
                .filter(|b| [1, 2, 3].contains(&b.id))
                .cloned()
                .collect(),
            branches: case
                .branches
                .iter()
                .filter(|b| b.from_bus == 2 || b.to_bus == 2)
                .cloned()
                .collect(),
            generators: vec![],
        };
        let local = build_ybus(&restricted).unwrap().neighbor_view(2).unwrap();
        assert_eq!(full, local);
    }

    #[test]
    fn injections_of_two_bus_solution() {
        let y = build_ybus(&two_bus()).unwrap();
        let mut snap = Snapshot::new(0, 0.0);
        snap.voltages.insert(1, Complex64::new(1.0, 0.0));
        // high-voltage solution for a 0.5 pu unity-pf load
        snap.voltages
            .insert(2, Complex64::new(0.5 + 0.19_f64.sqrt(), -0.1));
        let filled = compute_injections(&y, &snap).unwrap();
        let s2 = filled.injection(2).unwrap();
        assert_relative_eq!(s2.re, -0.5, epsilon = 1e-10);
        assert_relative_eq!(s2.im, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn equal_voltages_mean_zero_injections() {
        let mut case = two_bus();
        case.buses.push(bus(3, BusKind::Pq));
        case.branches.push(line(2, 3, 0.02, 0.09));
        let y = build_ybus(&case).unwrap();
        let mut snap = Snapshot::new(0, 0.0);
        for b in [1, 2, 3] {
            snap.voltages.insert(b, Complex64::new(1.02, -0.3));
        }
        let filled = compute_injections(&y, &snap).unwrap();
        for b in [1, 2, 3] {
            let s = filled.injection(b).unwrap();
            assert_relative_eq!(s.re, 0.0, epsilon = 1e-12);
            assert_relative_eq!(s.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn shunt_bus_injection_follows_the_formula() {
        // S = V conj(Y V) with the shunt inside Y: holding 1 pu at a bus with
        // g_shunt = 0.5 takes +0.5 pu of injected power to feed the shunt.
        let mut case = two_bus();
        case.branches.clear();
        case.buses.truncate(1);
        case.buses[0].g_shunt = 0.5;
        let y = build_ybus(&case).unwrap();
        let mut snap = Snapshot::new(0, 0.0);
        snap.voltages.insert(1, Complex64::new(1.0, 0.0));
        let filled = compute_injections(&y, &snap).unwrap();
        let s = filled.injection(1).unwrap();
        assert_relative_eq!(s.re, 0.5, epsilon = 1e-15);
        assert_relative_eq!(s.im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn present_injections_are_kept() {
        let y = build_ybus(&two_bus()).unwrap();
        let mut snap = Snapshot::new(0, 0.0);
        snap.voltages.insert(1, Complex64::new(1.0, 0.0));
        snap.voltages.insert(2, Complex64::new(0.97, -0.05));
        snap.injections.insert(2, Complex64::new(-0.123, 0.045));
        let filled = compute_injections(&y, &snap).unwrap();
        assert_eq!(filled.injection(2), Some(Complex64::new(-0.123, 0.045)));
        assert!(filled.injection(1).is_some());
        // second application changes nothing
        let again = compute_injections(&y, &filled).unwrap();
        assert_eq!(again.injections, filled.injections);
    }

    #[test]
    fn dimension_mismatch_detected() {
        let y = build_ybus(&two_bus()).unwrap();
        let mut snap = Snapshot::new(0, 0.0);
        snap.voltages.insert(1, Complex64::new(1.0, 0.0));
        assert_eq!(
            compute_injections(&y, &snap),
            Err(YbusError::DimensionMismatch)
        );
    }

    #[test]
    fn lossless_network_conserves_active_power() {
        let mut case = two_bus();
        case.buses.push(bus(3, BusKind::Pq));
        case.branches = vec![
            Branch {
                b_charging: 0.04,
                ..line(1, 2, 0.0, 0.2)
            },
            Branch {
                tap: 1.05,
                ..line(2, 3, 0.0, 0.4)
            },
            line(1, 3, 0.0, 0.25),
        ];
        case.buses[1].b_shunt = 0.3;
        let y = build_ybus(&case).unwrap();
        let mut snap = Snapshot::new(0, 0.0);
        snap.voltages.insert(1, Complex64::new(1.0, 0.0));
        snap.voltages.insert(2, Complex64::new(0.93, -0.12));
        snap.voltages.insert(3, Complex64::new(1.04, 0.07));
        let filled = compute_injections(&y, &snap).unwrap();
        let total_p: f64 = filled.injections.values().map(|s| s.re).sum();
        assert!(total_p.abs() < 1e-9, "sum p = {total_p}");
    }
}
