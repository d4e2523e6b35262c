//! Newton-Raphson AC power flow, quasi-static stress sweeps to the collapse
//! point, and Jacobian spectral diagnostics. Dense factorizations throughout;
//! this solver targets desk-scale study cases, not production grids.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{BusKind, GridCase, Snapshot};
use crate::ybus::{build_ybus, AdmittanceMatrix, YbusError};

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Convergence threshold on the largest power mismatch, per-unit.
    pub tol: f64,
    pub max_iter: usize,
    /// Convert PV buses to PQ at their reactive limits after convergence and
    /// re-solve. Off by default.
    pub enforce_q_limits: bool,
    /// Start from a flat profile rather than the case's stored voltages.
    pub flat_start: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 30,
            enforce_q_limits: false,
            flat_start: true,
        }
    }
}

/// How a stress sweep moves the operating point with the multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StressPattern {
    /// Scale active load and generation; reactive load stays at its base
    /// value. This is the MW-stress pattern used for collapse studies.
    ActivePower,
    /// Scale both load components and active generation, keeping each load's
    /// power factor constant.
    ConstantPowerFactor,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// Converged operating points, strictly increasing in the multiplier.
    pub points: Vec<(f64, Snapshot)>,
    /// Last multiplier that converged; accurate to the sweep's minimum step.
    pub lambda_max: f64,
}

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error("power flow diverged after {iterations} iterations (mismatch {final_mismatch:.3e})")]
    Diverged {
        iterations: usize,
        final_mismatch: f64,
    },
    #[error("singular Jacobian")]
    SingularJacobian,
    #[error("base case failed to converge at the sweep start")]
    BaseCaseDiverged,
    #[error("sweep step {step} must exceed min_step {min_step} > 0")]
    InvalidStep { step: f64, min_step: f64 },
    #[error("snapshot is not a converged operating point (mismatch {mismatch:.3e})")]
    NotConverged { mismatch: f64 },
    #[error(transparent)]
    Matrix(#[from] YbusError),
}

struct BusFrame {
    y: AdmittanceMatrix,
    kinds: Vec<BusKind>,
    p_spec: Vec<f64>,
    q_spec: Vec<f64>,
    v_set: Vec<f64>,
    q_load: Vec<f64>,
    /// Aggregate generator reactive limits per bus, where generation exists.
    q_limits: Vec<Option<(f64, f64)>>,
}

impl BusFrame {
    fn build(case: &GridCase) -> Result<Self, PowerFlowError> {
        let y = build_ybus(case)?;
        let index = case.bus_index();
        let n = case.buses.len();
        let mut p_spec = vec![0.0; n];
        let mut q_spec = vec![0.0; n];
        let mut v_set: Vec<f64> = case.buses.iter().map(|b| b.v_init_mag).collect();
        let mut q_limits: Vec<Option<(f64, f64)>> = vec![None; n];
        for (i, bus) in case.buses.iter().enumerate() {
            p_spec[i] -= bus.p_load;
            q_spec[i] -= bus.q_load;
        }
        for gen in case.generators.iter().filter(|g| g.in_service) {
            let i = index[&gen.bus];
            p_spec[i] += gen.p_gen;
            q_spec[i] += gen.q_gen;
            v_set[i] = gen.v_setpoint;
            let (lo, hi) = q_limits[i].unwrap_or((0.0, 0.0));
            q_limits[i] = Some((lo + gen.q_min, hi + gen.q_max));
        }
        Ok(Self {
            y,
            kinds: case.buses.iter().map(|b| b.kind).collect(),
            p_spec,
            q_spec,
            v_set,
            q_load: case.buses.iter().map(|b| b.q_load).collect(),
            q_limits,
        })
    }

    fn start_voltages(&self, case: &GridCase, opts: &SolveOptions) -> Vec<Complex64> {
        case.buses
            .iter()
            .enumerate()
            .map(|(i, b)| {
                if opts.flat_start {
                    match self.kinds[i] {
                        BusKind::Pq => Complex64::new(1.0, 0.0),
                        _ => Complex64::from_polar(self.v_set[i], 0.0),
                    }
                } else {
                    Complex64::from_polar(b.v_init_mag, b.v_init_ang)
                }
            })
            .collect()
    }
}

fn mismatch(frame: &BusFrame, kinds: &[BusKind], q_spec: &[f64], v: &[Complex64]) -> Vec<f64> {
    let s = frame.y.injections_dense(v);
    let mut f = Vec::new();
    for (i, kind) in kinds.iter().enumerate() {
        if *kind != BusKind::Slack {
            f.push(frame.p_spec[i] - s[i].re);
        }
    }
    for (i, kind) in kinds.iter().enumerate() {
        if *kind == BusKind::Pq {
            f.push(q_spec[i] - s[i].im);
        }
    }
    f
}

/// Polar mismatch Jacobian at `v` for the given bus classification: rows are
/// P equations at non-slack buses then Q equations at PQ buses, columns are
/// angles at non-slack buses then magnitudes at PQ buses.
fn polar_jacobian(frame: &BusFrame, kinds: &[BusKind], v: &[Complex64]) -> DMatrix<f64> {
    let n = v.len();
    let s = frame.y.injections_dense(v);
    let vm: Vec<f64> = v.iter().map(|x| x.norm()).collect();
    let pvpq: Vec<usize> = (0..n).filter(|&i| kinds[i] != BusKind::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&i| kinds[i] == BusKind::Pq).collect();
    let na = pvpq.len();
    let nm = pq.len();
    let col_of_angle: BTreeMap<usize, usize> =
        pvpq.iter().enumerate().map(|(c, &i)| (i, c)).collect();
    let col_of_mag: BTreeMap<usize, usize> =
        pq.iter().enumerate().map(|(c, &i)| (i, na + c)).collect();

    let mut jac = DMatrix::zeros(na + nm, na + nm);
    let mut fill = |row: usize, i: usize, is_q: bool| {
        let (pi, qi) = (s[i].re, s[i].im);
        let gii = frame.y.diag_dense(i);
        // diagonal terms
        if let Some(&c) = col_of_angle.get(&i) {
            jac[(row, c)] = if is_q {
                pi - gii.re * vm[i] * vm[i]
            } else {
                -qi - gii.im * vm[i] * vm[i]
            };
        }
        if let Some(&c) = col_of_mag.get(&i) {
            jac[(row, c)] = if is_q {
                qi / vm[i] - gii.im * vm[i]
            } else {
                pi / vm[i] + gii.re * vm[i]
            };
        }
        // off-diagonal terms over the row's neighbors
        for &(j, y) in frame.y.row_dense(i) {
            let thij = v[i].arg() - v[j].arg();
            let (sin, cos) = thij.sin_cos();
            let gsbc = y.re * sin - y.im * cos;
            let gcbs = y.re * cos + y.im * sin;
            if let Some(&c) = col_of_angle.get(&j) {
                jac[(row, c)] = if is_q {
                    -vm[i] * vm[j] * gcbs
                } else {
                    vm[i] * vm[j] * gsbc
                };
            }
            if let Some(&c) = col_of_mag.get(&j) {
                jac[(row, c)] = if is_q { vm[i] * gsbc } else { vm[i] * gcbs };
            }
        }
    };
    for (r, &i) in pvpq.iter().enumerate() {
        fill(r, i, false);
    }
    for (r, &i) in pq.iter().enumerate() {
        fill(na + r, i, true);
    }
    jac
}

fn newton_loop(
    frame: &BusFrame,
    kinds: &[BusKind],
    q_spec: &[f64],
    v0: Vec<Complex64>,
    opts: &SolveOptions,
) -> Result<(Vec<Complex64>, usize), PowerFlowError> {
    let n = v0.len();
    let mut vm: Vec<f64> = v0.iter().map(|x| x.norm()).collect();
    let mut va: Vec<f64> = v0.iter().map(|x| x.arg()).collect();
    let pvpq: Vec<usize> = (0..n).filter(|&i| kinds[i] != BusKind::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&i| kinds[i] == BusKind::Pq).collect();
    let na = pvpq.len();

    let mut v: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(vm[i], va[i])).collect();
    for it in 0..=opts.max_iter {
        let f = mismatch(frame, kinds, q_spec, &v);
        let norm = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !norm.is_finite() {
            return Err(PowerFlowError::Diverged {
                iterations: it,
                final_mismatch: norm,
            });
        }
        if norm < opts.tol {
            return Ok((v, it));
        }
        if it == opts.max_iter {
            return Err(PowerFlowError::Diverged {
                iterations: it,
                final_mismatch: norm,
            });
        }
        let jac = polar_jacobian(frame, kinds, &v);
        let rhs = DVector::from_vec(f);
        let lu = jac.lu();
        let Some(dx) = lu.solve(&rhs) else {
            return Err(PowerFlowError::SingularJacobian);
        };
        if !dx.iter().all(|x| x.is_finite()) {
            return Err(PowerFlowError::SingularJacobian);
        }
        for (c, &i) in pvpq.iter().enumerate() {
            va[i] += dx[c];
        }
        for (c, &i) in pq.iter().enumerate() {
            vm[i] += dx[na + c];
        }
        for i in 0..n {
            v[i] = Complex64::from_polar(vm[i], va[i]);
            vm[i] = v[i].norm();
            va[i] = v[i].arg();
        }
    }
    unreachable!()
}

/// Solve the case to a converged snapshot with all injections back-filled.
///
/// Newton iterations from a flat profile land on the high-voltage branch of
/// the PV curve. Slack P/Q and PV-bus Q fall out of the converged voltages.
pub fn solve(case: &GridCase, opts: &SolveOptions) -> Result<Snapshot, PowerFlowError> {
    solve_with_start(case, None, opts).map(|(snap, _)| snap)
}

/// Like [`solve`] but optionally warm-started from a previous snapshot.
/// Returns the snapshot and the iteration count.
pub fn solve_with_start(
    case: &GridCase,
    start: Option<&Snapshot>,
    opts: &SolveOptions,
) -> Result<(Snapshot, usize), PowerFlowError> {
    let frame = BusFrame::build(case)?;
    let v0 = match start {
        Some(snap) => frame
            .y
            .bus_ids()
            .iter()
            .map(|b| snap.voltage(*b).unwrap_or(Complex64::new(1.0, 0.0)))
            .collect(),
        None => frame.start_voltages(case, opts),
    };

    let mut kinds = frame.kinds.clone();
    let mut q_spec = frame.q_spec.clone();
    let mut v0 = v0;
    let mut iterations = 0;
    // At most one switch per PV bus, so the loop is bounded by the PV count.
    for _round in 0..=kinds.iter().filter(|k| **k == BusKind::Pv).count() {
        let (v, it) = newton_loop(&frame, &kinds, &q_spec, v0.clone(), opts)?;
        iterations = it;
        if !opts.enforce_q_limits {
            v0 = v;
            break;
        }
        let s = frame.y.injections_dense(&v);
        let mut switched = false;
        for i in 0..kinds.len() {
            if kinds[i] != BusKind::Pv {
                continue;
            }
            let Some((q_lo, q_hi)) = frame.q_limits[i] else {
                continue;
            };
            let q_gen = s[i].im + frame.q_load[i];
            if q_gen > q_hi + 1e-9 {
                kinds[i] = BusKind::Pq;
                q_spec[i] = q_hi - frame.q_load[i];
                switched = true;
            } else if q_gen < q_lo - 1e-9 {
                kinds[i] = BusKind::Pq;
                q_spec[i] = q_lo - frame.q_load[i];
                switched = true;
            }
        }
        v0 = v;
        if !switched {
            break;
        }
    }

    let mut snap = Snapshot::new(0, 0.0);
    for (i, &bus) in frame.y.bus_ids().iter().enumerate() {
        snap.voltages.insert(bus, v0[i]);
    }
    let snap = crate::ybus::compute_injections(&frame.y, &snap)?;
    Ok((snap, iterations))
}

/// The case with loads and active generation multiplied by `lambda`;
/// the slack absorbs the mismatch and voltage setpoints stay put.
pub fn scale_case(case: &GridCase, lambda: f64) -> GridCase {
    let mut out = case.clone();
    for bus in &mut out.buses {
        bus.p_load *= lambda;
        bus.q_load *= lambda;
    }
    for gen in &mut out.generators {
        gen.p_gen *= lambda;
    }
    out
}

/// The case with only the active components scaled: MW load and MW
/// generation move with `lambda`, reactive load stays fixed.
pub fn scale_case_active(case: &GridCase, lambda: f64) -> GridCase {
    let mut out = case.clone();
    for bus in &mut out.buses {
        bus.p_load *= lambda;
    }
    for gen in &mut out.generators {
        gen.p_gen *= lambda;
    }
    out
}

fn scaled(case: &GridCase, lambda: f64, pattern: StressPattern) -> GridCase {
    match pattern {
        StressPattern::ActivePower => scale_case_active(case, lambda),
        StressPattern::ConstantPowerFactor => scale_case(case, lambda),
    }
}

/// Push the multiplier up from `lambda_start` until the power flow stops
/// converging, halving the step on failure, warm-starting every solve from
/// the previous point so the trajectory stays on the upper branch. Stops
/// once the step falls below `min_step`; `lambda_max` is then accurate to
/// the last step taken.
pub fn stress_sweep(
    case: &GridCase,
    lambda_start: f64,
    step: f64,
    min_step: f64,
    pattern: StressPattern,
    opts: &SolveOptions,
) -> Result<SweepResult, PowerFlowError> {
    if !(step > min_step && min_step > 0.0) {
        return Err(PowerFlowError::InvalidStep { step, min_step });
    }
    let mut snap = solve(&scaled(case, lambda_start, pattern), opts)
        .map_err(|_| PowerFlowError::BaseCaseDiverged)?;
    snap.time = lambda_start;
    let mut points = vec![(lambda_start, snap)];
    let mut lambda = lambda_start;
    let mut step = step;
    // Cases without a collapse point (no load at all) would sweep forever.
    const MAX_POINTS: usize = 100_000;
    while step >= min_step && points.len() < MAX_POINTS {
        let trial = lambda + step;
        match solve_with_start(
            &scaled(case, trial, pattern),
            Some(&points.last().unwrap().1),
            opts,
        ) {
            Ok((mut snap, _)) => {
                snap.index = points.len();
                snap.time = trial;
                points.push((trial, snap));
                lambda = trial;
            }
            Err(_) => step /= 2.0,
        }
    }
    Ok(SweepResult {
        points,
        lambda_max: lambda,
    })
}

/// Mismatch Jacobian of `case` at a converged snapshot.
///
/// The snapshot must satisfy the balance equations to 1e-6; anything looser
/// is rejected rather than silently differentiated at a non-solution.
pub fn jacobian(case: &GridCase, snapshot: &Snapshot) -> Result<DMatrix<f64>, PowerFlowError> {
    let frame = BusFrame::build(case)?;
    let v: Vec<Complex64> = frame
        .y
        .bus_ids()
        .iter()
        .map(|b| snapshot.voltage(*b).unwrap_or(Complex64::new(1.0, 0.0)))
        .collect();
    let f = mismatch(&frame, &frame.kinds, &frame.q_spec, &v);
    let norm = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if norm > 1e-6 {
        return Err(PowerFlowError::NotConverged { mismatch: norm });
    }
    Ok(polar_jacobian(&frame, &frame.kinds, &v))
}

/// The k smallest singular values of a Jacobian, ascending. `k` larger than
/// the dimension is clamped.
pub fn smallest_singular_values(jac: &DMatrix<f64>, k: usize) -> Vec<f64> {
    let mut sv: Vec<f64> = jac.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sv.truncate(k.min(sv.len()));
    sv
}
