//! The local stability index at one bus.
//!
//! At a bus d, the rectangular power-balance equations for fixed neighbor
//! voltages are a pair of conic loci in the (vr, vi) plane: circles in the
//! general case, a line where the quadratic coefficient vanishes (a bus whose
//! adjacent branches are all purely reactive, e.g. transformers). The two
//! intersection points of the loci are the high- and low-voltage solutions at
//! that bus; they coalesce at the collapse point. The index is the distance
//! between the two solutions, normalized by its value with all neighbors at
//! 1 pu and zero injection, so it runs from 1 at no load to 0 at the nose.

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::Snapshot;
use crate::ybus::NeighborView;

/// Absolute threshold below which the quadratic coefficient of a locus is
/// treated as zero and the locus degrades to a line.
pub const EPS_LIN: f64 = 1e-8;
/// Tangency clamp on the squared half-chord: slightly negative values are
/// rounded to a tangent intersection.
pub const EPS_TANGENT: f64 = 1e-10;
/// Tolerance for a circle radicand before the operating point is declared
/// inconsistent with the locus.
pub const EPS_RADICAND: f64 = 1e-10;

/// Coefficients that turn the rectangular power-flow equations at one bus
/// into two conics:
///   p = t1 (vr^2 + vi^2) + t2 vr + t3 vi
///   q = t4 (vr^2 + vi^2) - t3 vr + t2 vi
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TParams {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

/// The line a·vr + b·vi = c.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Locus {
    Circle(Circle),
    Line(Line),
}

/// The two power-flow solutions at a bus. `v1` is the high-voltage solution
/// (larger Euclidean norm); `tangent` marks a coalesced pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionPair {
    pub v1: Complex64,
    pub v2: Complex64,
    pub tangent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LciFlag {
    Ok,
    ClampedTangent,
    NoIntersection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LciValue {
    pub bus: usize,
    /// Distance between the two solutions at the operating point, in pu.
    pub raw_distance: f64,
    /// The same distance with neighbors at 1 pu and zero injection.
    pub no_load_distance: f64,
    pub lci: f64,
    pub flag: LciFlag,
}

#[derive(Debug, Error, PartialEq)]
pub enum LciError {
    #[error("no voltage for neighbor bus {0}")]
    MissingNeighborVoltage(usize),
    #[error("no voltage for bus {0}")]
    MissingBusVoltage(usize),
    #[error("bus is electrically isolated")]
    IsolatedBus,
    #[error("locus radicand {0} is negative: operating point inconsistent")]
    ImaginaryRadius(f64),
    #[error("circles do not intersect (squared half-chord {0})")]
    NoIntersection(f64),
    #[error("circle centers coincide")]
    ConcentricCircles,
    #[error("line coefficients are degenerate")]
    DegenerateLine,
    #[error("both loci are linear (t1 and t4 both vanish)")]
    BothLinear,
    #[error("no-load solutions at bus {0} coincide; index undefined")]
    DegenerateNoLoad(usize),
}

/// Locus coefficients at `view.bus` for the given neighbor voltages.
///
/// The quadratic terms come from the matrix diagonal (t1 = Re Y_dd,
/// t4 = -Im Y_dd) so the conic equations stay exact identities in the
/// presence of bus shunts and line charging; on a plain network this equals
/// the negated off-diagonal sums. The linear terms accumulate the neighbor
/// voltages against the row entries.
pub fn t_params(
    view: &NeighborView,
    voltages: &BTreeMap<usize, Complex64>,
) -> Result<TParams, LciError> {
    let mut t2 = 0.0;
    let mut t3 = 0.0;
    for &(k, y) in &view.neighbors {
        let v = voltages
            .get(&k)
            .copied()
            .ok_or(LciError::MissingNeighborVoltage(k))?;
        t2 += v.re * y.re - v.im * y.im;
        t3 += v.re * y.im + v.im * y.re;
    }
    Ok(TParams {
        t1: view.diagonal.re,
        t2,
        t3,
        t4: -view.diagonal.im,
    })
}

/// Active- and reactive-power loci at the operating point (p, q).
///
/// A quadratic coefficient within `eps_lin` of zero turns that locus into a
/// line; a circle radicand below `-EPS_RADICAND` means the injection cannot
/// be realized on the locus at all.
pub fn loci(t: &TParams, p: f64, q: f64, eps_lin: f64) -> Result<(Locus, Locus), LciError> {
    let lin_norm = t.t2 * t.t2 + t.t3 * t.t3;
    let p_locus = if t.t1.abs() > eps_lin {
        Locus::Circle(locus_circle(-t.t2, -t.t3, t.t1, p, lin_norm)?)
    } else if lin_norm > eps_lin * eps_lin {
        Locus::Line(Line {
            a: t.t2,
            b: t.t3,
            c: p,
        })
    } else if t.t4.abs() > eps_lin {
        return Err(LciError::DegenerateLine);
    } else {
        return Err(LciError::IsolatedBus);
    };
    let q_locus = if t.t4.abs() > eps_lin {
        Locus::Circle(locus_circle(t.t3, -t.t2, t.t4, q, lin_norm)?)
    } else if lin_norm > eps_lin * eps_lin {
        Locus::Line(Line {
            a: -t.t3,
            b: t.t2,
            c: q,
        })
    } else {
        return Err(LciError::DegenerateLine);
    };
    Ok((p_locus, q_locus))
}

fn locus_circle(
    num_x: f64,
    num_y: f64,
    quad: f64,
    power: f64,
    lin_norm: f64,
) -> Result<Circle, LciError> {
    let cx = num_x / (2.0 * quad);
    let cy = num_y / (2.0 * quad);
    let radicand = power / quad + lin_norm / (4.0 * quad * quad);
    if radicand < -EPS_RADICAND {
        return Err(LciError::ImaginaryRadius(radicand));
    }
    Ok(Circle {
        cx,
        cy,
        r: radicand.max(0.0).sqrt(),
    })
}

/// Intersection of two circles.
///
/// With center distance a, the chord midpoint sits w1 = (rp^2 - rq^2 + a^2)/2a
/// from the first center along the center line and the half-chord is
/// w2 = sqrt(rp^2 - w1^2); w2^2 within `eps` below zero is clamped to a
/// tangent pair. The returned points follow the center-line orientation; use
/// `solution_pair` for norm-ordered solutions.
pub fn intersect_circles(cp: &Circle, cq: &Circle, eps: f64) -> Result<SolutionPair, LciError> {
    let dx = cq.cx - cp.cx;
    let dy = cq.cy - cp.cy;
    let alpha = dx.hypot(dy);
    if alpha < eps {
        return Err(LciError::ConcentricCircles);
    }
    let w1 = (cp.r * cp.r - cq.r * cq.r + alpha * alpha) / (2.0 * alpha);
    let w2_sq = cp.r * cp.r - w1 * w1;
    if w2_sq < -eps {
        return Err(LciError::NoIntersection(w2_sq));
    }
    let tangent = w2_sq <= 0.0;
    let w2 = w2_sq.max(0.0).sqrt();
    let w3 = cp.cx + w1 * dx / alpha;
    let w4 = cp.cy + w1 * dy / alpha;
    Ok(SolutionPair {
        v1: Complex64::new(w3 + w2 * dy / alpha, w4 - w2 * dx / alpha),
        v2: Complex64::new(w3 - w2 * dy / alpha, w4 + w2 * dx / alpha),
        tangent,
    })
}

/// Reflect a circle across a line; the radius is preserved.
pub fn mirror_circle(q_locus: &Circle, p_line: &Line) -> Result<Circle, LciError> {
    let nn = p_line.a * p_line.a + p_line.b * p_line.b;
    if nn <= 0.0 {
        return Err(LciError::DegenerateLine);
    }
    let gamma = -2.0 * (p_line.a * q_locus.cx + p_line.b * q_locus.cy - p_line.c) / nn;
    Ok(Circle {
        cx: q_locus.cx + gamma * p_line.a,
        cy: q_locus.cy + gamma * p_line.b,
        r: q_locus.r,
    })
}

/// Both solutions of the loci for injection (p, q), ordered so `v1` is the
/// high-voltage one.
///
/// Dispatch: two circles intersect directly; a line paired with a circle goes
/// through the reflection construction (the line-circle intersection equals
/// the intersection of the circle with its own mirror image across the line);
/// two lines cannot pin down a solution pair.
pub fn solution_pair(t: &TParams, p: f64, q: f64) -> Result<SolutionPair, LciError> {
    let (p_locus, q_locus) = loci(t, p, q, EPS_LIN)?;
    let pair = match (p_locus, q_locus) {
        (Locus::Circle(cp), Locus::Circle(cq)) => intersect_circles(&cp, &cq, EPS_TANGENT)?,
        (Locus::Line(line), Locus::Circle(circle)) => line_circle_pair(&line, &circle)?,
        (Locus::Circle(circle), Locus::Line(line)) => line_circle_pair(&line, &circle)?,
        (Locus::Line(_), Locus::Line(_)) => return Err(LciError::BothLinear),
    };
    Ok(order_by_norm(pair))
}

/// Line/circle intersection via the mirror construction. When the center lies
/// on the line the mirror coincides with the circle, and the chord through
/// the center is taken directly.
fn line_circle_pair(line: &Line, circle: &Circle) -> Result<SolutionPair, LciError> {
    let nn = line.a * line.a + line.b * line.b;
    if nn <= 0.0 {
        return Err(LciError::DegenerateLine);
    }
    let norm = nn.sqrt();
    let dist = (line.a * circle.cx + line.b * circle.cy - line.c) / norm;
    if dist.abs() < 1e-13 * circle.r.max(1.0) {
        let (ux, uy) = (line.b / norm, -line.a / norm);
        return Ok(SolutionPair {
            v1: Complex64::new(circle.cx + circle.r * ux, circle.cy + circle.r * uy),
            v2: Complex64::new(circle.cx - circle.r * ux, circle.cy - circle.r * uy),
            tangent: circle.r == 0.0,
        });
    }
    let mirror = mirror_circle(circle, line)?;
    intersect_circles(&mirror, circle, EPS_TANGENT)
}

fn order_by_norm(pair: SolutionPair) -> SolutionPair {
    if pair.v2.norm_sqr() > pair.v1.norm_sqr() {
        SolutionPair {
            v1: pair.v2,
            v2: pair.v1,
            tangent: pair.tangent,
        }
    } else {
        pair
    }
}

/// Distance between the two solutions with every neighbor at 1 pu and zero
/// injection at the bus: the normalization constant of the index.
pub fn no_load_distance(view: &NeighborView) -> Result<f64, LciError> {
    let ones: BTreeMap<usize, Complex64> = view
        .neighbors
        .iter()
        .map(|&(k, _)| (k, Complex64::new(1.0, 0.0)))
        .collect();
    let t = t_params_isolation_checked(view, &ones)?;
    let pair = solution_pair(&t, 0.0, 0.0)?;
    Ok((pair.v1 - pair.v2).norm())
}

fn t_params_isolation_checked(
    view: &NeighborView,
    voltages: &BTreeMap<usize, Complex64>,
) -> Result<TParams, LciError> {
    if view.neighbors.is_empty() && view.diagonal.norm_sqr() == 0.0 {
        return Err(LciError::IsolatedBus);
    }
    t_params(view, voltages)
}

/// The index at `view.bus` for one snapshot.
///
/// The injection is taken from the snapshot when present; otherwise it is
/// evaluated in place from the bus and neighbor voltages, which needs nothing
/// beyond the row. Numeric edge cases at the operating point (tangency,
/// separated circles) come back as flags, not errors: past-the-nose data
/// clamps the index to zero.
pub fn lci(view: &NeighborView, snapshot: &Snapshot) -> Result<LciValue, LciError> {
    let (p, q) = match snapshot.injection(view.bus) {
        Some(s) => (s.re, s.im),
        None => {
            let s = local_injection(view, snapshot)?;
            (s.re, s.im)
        }
    };
    let t = t_params_isolation_checked(view, &snapshot.voltages)?;

    let no_load = no_load_distance(view)?;
    if !(no_load > 0.0) {
        return Err(LciError::DegenerateNoLoad(view.bus));
    }

    let (raw, flag) = match solution_pair(&t, p, q) {
        Ok(pair) if pair.tangent => (0.0, LciFlag::ClampedTangent),
        Ok(pair) => ((pair.v1 - pair.v2).norm(), LciFlag::Ok),
        Err(LciError::NoIntersection(_))
        | Err(LciError::ImaginaryRadius(_))
        | Err(LciError::ConcentricCircles) => (0.0, LciFlag::NoIntersection),
        Err(e) => return Err(e),
    };
    Ok(LciValue {
        bus: view.bus,
        raw_distance: raw,
        no_load_distance: no_load,
        lci: raw / no_load,
        flag,
    })
}

/// Net injection at the bus from its own row: S = V_d conj(Y_dd V_d + sum Y_dk V_k).
fn local_injection(view: &NeighborView, snapshot: &Snapshot) -> Result<Complex64, LciError> {
    let vd = snapshot
        .voltage(view.bus)
        .ok_or(LciError::MissingBusVoltage(view.bus))?;
    let mut current = view.diagonal * vd;
    for &(k, y) in &view.neighbors {
        let vk = snapshot
            .voltage(k)
            .ok_or(LciError::MissingNeighborVoltage(k))?;
        current += y * vk;
    }
    Ok(vd * current.conj())
}

/// Closed form of the index for a single load fed from an ideal source over
/// admittance g + jb, at unity power factor and load-positive P.
pub fn two_bus_lci(g: f64, b: f64, p_load: f64) -> f64 {
    let b2 = b * b;
    let g2 = g * g;
    let num = b2 * b2 + 2.0 * b2 * g2 - 4.0 * b2 * g * p_load - 4.0 * b2 * p_load * p_load
        + g2 * g2
        - 4.0 * g2 * g * p_load;
    num.abs().sqrt() / (b2 + g2)
}

/// Maximum transferable power of the same two-bus system.
pub fn two_bus_pmax(g: f64, b: f64) -> Result<f64, LciError> {
    if b == 0.0 {
        return Err(LciError::DegenerateLine);
    }
    let y2 = b * b + g * g;
    Ok((-y2 * g + y2.powf(1.5)) / (2.0 * b * b))
}
