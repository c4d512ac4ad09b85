//! Controlled dynamics `X' = sigma V(X) + alpha(t)` with `|alpha| <= b`.
//!
//! `sigma = -1` gives the travel-time dynamics and `sigma = +1` the forward
//! (burned-region) dynamics. [`max_speed`] is the local speed every graph
//! solver is built from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::VelocityField;
use crate::geometry::Vec2;
use crate::traveltime::TravelTimeField;

/// Sign in front of the drift term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum DriftSign {
    /// `X' = -V + alpha`, the dynamics behind the travel time.
    Minus,
    /// `X' = V + alpha`.
    Plus,
}

impl DriftSign {
    pub fn value(self) -> f64 {
        match self {
            DriftSign::Minus => -1.0,
            DriftSign::Plus => 1.0,
        }
    }

    pub fn flip(self) -> DriftSign {
        match self {
            DriftSign::Minus => DriftSign::Plus,
            DriftSign::Plus => DriftSign::Minus,
        }
    }
}

impl TryFrom<i8> for DriftSign {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            -1 => Ok(DriftSign::Minus),
            1 => Ok(DriftSign::Plus),
            _ => Err(format!("drift sign must be -1 or 1, got {v}")),
        }
    }
}

impl From<DriftSign> for i8 {
    fn from(d: DriftSign) -> i8 {
        d.value() as i8
    }
}

/// Largest `s > 0` such that `s e = sigma v + alpha` for some `|alpha| <= b`.
///
/// Returns `None` when no positive speed along `e` is attainable. The
/// direction must be a unit vector.
pub fn max_speed(v: Vec2, e: Vec2, drift: DriftSign, b: f64) -> Result<Option<f64>> {
    let n = e.norm();
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::NonUnitDirection(n));
    }
    Ok(max_speed_unchecked(v, e, drift, b))
}

/// [`max_speed`] without the unit-vector check, for inner loops.
#[inline]
pub fn max_speed_unchecked(v: Vec2, e: Vec2, drift: DriftSign, b: f64) -> Option<f64> {
    let we = drift.value() * (v.x * e.x + v.y * e.y);
    let radicand = we * we + b * b - v.norm_sq();
    if radicand < 0.0 {
        return None;
    }
    let s = we + radicand.sqrt();
    // Mathematically s <= |v| + b; the clamp keeps that true after rounding.
    (s > 0.0).then(|| s.min(v.norm() + b))
}

/// Piecewise-constant control with values on consecutive intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    /// Start time of each piece; strictly increasing, first entry 0.
    knots: Vec<f64>,
    values: Vec<Vec2>,
    bound: f64,
}

impl ControlSignal {
    /// Control equal to `values[k]` on `[k dt, (k + 1) dt)`; the last value persists.
    pub fn uniform(dt: f64, values: Vec<Vec2>, bound: f64) -> Result<ControlSignal> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("control step must be positive, got {dt}")));
        }
        let knots = (0..values.len()).map(|k| k as f64 * dt).collect();
        ControlSignal::piecewise(knots, values, bound)
    }

    pub fn piecewise(knots: Vec<f64>, values: Vec<Vec2>, bound: f64) -> Result<ControlSignal> {
        if !(bound > 0.0) {
            return Err(Error::InvalidArgument(format!("control bound must be positive, got {bound}")));
        }
        if knots.len() != values.len() {
            return Err(Error::InvalidArgument("knots and values differ in length".into()));
        }
        if knots.first().is_some_and(|&t| t != 0.0) || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("knots must start at 0 and increase".into()));
        }
        if let Some(a) = values.iter().find(|a| a.norm() > bound * (1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!(
                "control value |({}, {})| exceeds the bound {bound}",
                a.x, a.y
            )));
        }
        Ok(ControlSignal { knots, values, bound })
    }

    pub fn constant(value: Vec2, bound: f64) -> Result<ControlSignal> {
        ControlSignal::piecewise(vec![0.0], vec![value], bound)
    }

    pub fn zero(bound: f64) -> ControlSignal {
        ControlSignal { knots: vec![0.0], values: vec![Vec2::ZERO], bound }
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[Vec2] {
        &self.values
    }

    pub fn at(&self, t: f64) -> Vec2 {
        if self.values.is_empty() {
            return Vec2::ZERO;
        }
        let k = self.knots.partition_point(|&s| s <= t);
        self.values[k.saturating_sub(1)]
    }
}

/// Sampled positions of a controlled path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub positions: Vec<Vec2>,
    pub control: ControlSignal,
}

impl Trajectory {
    pub fn start(&self) -> Vec2 {
        self.positions[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.positions.last().expect("trajectory has at least one sample")
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Largest `|X(t) - X(0)| - c t` over the samples; non-positive when the
    /// path never outruns speed `c`.
    pub fn propagation_excess(&self, c: f64) -> f64 {
        let x0 = self.start();
        self.times
            .iter()
            .zip(&self.positions)
            .map(|(t, x)| x.distance(x0) - c * t)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Classical fourth-order Runge-Kutta for `X' = sigma V(X) + alpha(t)`.
///
/// The control is held at its value at the start of each step.
pub fn integrate<F: VelocityField + ?Sized>(
    field: &F,
    x0: Vec2,
    control: &ControlSignal,
    t_end: f64,
    dt: f64,
    drift: DriftSign,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("need dt > 0 and T >= 0 (dt = {dt}, T = {t_end})")));
    }
    let sigma = drift.value();
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut positions = Vec::with_capacity(steps + 1);
    let mut x = x0;
    times.push(0.0);
    positions.push(x);
    for k in 0..steps {
        let t = k as f64 * dt;
        let step = dt.min(t_end - t);
        let a = control.at(t);
        let f = |p: Vec2| field.velocity_at(p) * sigma + a;
        let k1 = f(x);
        let k2 = f(x + k1 * (0.5 * step));
        let k3 = f(x + k2 * (0.5 * step));
        let k4 = f(x + k3 * step);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0);
        times.push(if k + 1 == steps { t_end } else { t + step });
        positions.push(x);
    }
    Ok(Trajectory { times, positions, control: control.clone() })
}

/// A reconstructed near-optimal path and how long it really takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathReport {
    pub trajectory: Trajectory,
    /// Graph travel time at the end node.
    pub tau: f64,
    /// Traversal time of the polyline under the true velocity.
    pub traversal_time: f64,
    /// `traversal_time / tau - 1`.
    pub slack: f64,
}

/// Recover a path from a source to the node nearest `y` by descending the
/// arrival values along stencil predecessors.
///
/// Among predecessors that are optimal to within a relative `1e-9`, the one
/// closest to the straight segment from the terminal source to `y` wins, so
/// equal-cost staircase orderings come out as straight as the lattice allows.
pub fn descend_path<F: VelocityField + ?Sized>(
    tau: &TravelTimeField,
    field: &F,
    y: Vec2,
) -> Result<PathReport> {
    let grid = tau.grid();
    let end = grid.nearest(y).ok_or(Error::OutsideGrid(y))?;
    let t_end = tau.values()[end];
    if !t_end.is_finite() {
        return Err(Error::Unreachable(y));
    }
    let start = tau.terminal_source(end).ok_or(Error::Unreachable(y))?;
    let (a, b_pt) = (grid.position(start), grid.position(end));
    let seg = b_pt - a;
    let seg_len2 = seg.norm_sq();
    let dist_to_segment = |p: Vec2| {
        let u = if seg_len2 > 0.0 { ((p - a).dot(seg) / seg_len2).clamp(0.0, 1.0) } else { 0.0 };
        p.distance(a + seg * u)
    };

    let mut nodes = vec![end];
    let mut cur = end;
    while tau.values()[cur] > 0.0 {
        let target = tau.values()[cur];
        let mut best: Option<(f64, usize)> = None;
        for (m, cost) in tau.incoming_edges(field, cur) {
            let via = tau.values()[m] + cost;
            if via <= target * (1.0 + 1e-9) && tau.values()[m] < target {
                let d = dist_to_segment(grid.position(m));
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, m));
                }
            }
        }
        cur = match best {
            Some((_, m)) => m,
            None => tau.predecessor(cur).ok_or(Error::Unreachable(y))?,
        };
        nodes.push(cur);
    }
    nodes.reverse();

    let sigma = tau.drift();
    let bound = tau.bound();
    let mut times = vec![0.0];
    let mut knots = Vec::new();
    let mut controls = Vec::new();
    let mut t = 0.0;
    for w in nodes.windows(2) {
        let (p, q) = (grid.position(w[0]), grid.position(w[1]));
        let len = p.distance(q);
        let e = (q - p) / len;
        let inv = |x: Vec2| match max_speed_unchecked(field.velocity_at(x), e, sigma, bound) {
            Some(s) => 1.0 / s,
            None => f64::INFINITY,
        };
        let mid = (p + q) * 0.5;
        let dt = len / 6.0 * (inv(p) + 4.0 * inv(mid) + inv(q));
        let s_mid = max_speed_unchecked(field.velocity_at(mid), e, sigma, bound).unwrap_or(0.0);
        let alpha = e * s_mid - field.velocity_at(mid) * sigma.value();
        knots.push(t);
        controls.push(alpha);
        t += dt;
        times.push(t);
    }
    let positions: Vec<Vec2> = nodes.iter().map(|&n| grid.position(n)).collect();
    if controls.is_empty() {
        knots.push(0.0);
        controls.push(Vec2::ZERO);
    }
    // Rounding in alpha can put it a hair over the bound; rescale if so.
    for a in &mut controls {
        let n = a.norm();
        if n > bound {
            *a = *a * (bound / n);
        }
    }
    let control = ControlSignal::piecewise(knots, controls, bound)?;
    let slack = if t_end > 0.0 { t / t_end - 1.0 } else { 0.0 };
    Ok(PathReport {
        trajectory: Trajectory { times, positions, control },
        tau: t_end,
        traversal_time: t,
        slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{sample_field, FieldRealization, FieldSpec};
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    /// Largest feasible speed found by scanning controls on the circle of radius b.
    fn scan_speed(v: Vec2, e: Vec2, drift: DriftSign, b: f64, n: usize) -> Option<f64> {
        let normal = e.perp();
        let mut best: Option<f64> = None;
        for k in 0..n {
            let a = Vec2::from_angle(TAU * k as f64 / n as f64) * b;
            let w = v * drift.value() + a;
            // Keep controls whose resulting velocity is (nearly) parallel to e.
            if w.dot(normal).abs() <= 2.0 * TAU * b / n as f64 {
                let s = w.dot(e);
                if s > 0.0 {
                    best = Some(best.map_or(s, |m: f64| m.max(s)));
                }
            }
        }
        best
    }

    #[test]
    fn speed_examples() {
        let s = |v, e, d| max_speed(v, e, d, 1.0).unwrap();
        assert_eq!(s(Vec2::ZERO, Vec2::new(1.0, 0.0), DriftSign::Minus), Some(1.0));
        // Against the drift direction the backward dynamics move at 1 + 2.
        assert_eq!(s(Vec2::new(2.0, 0.0), Vec2::new(-1.0, 0.0), DriftSign::Minus), Some(3.0));
        assert_eq!(s(Vec2::new(2.0, 0.0), Vec2::new(1.0, 0.0), DriftSign::Minus), None);
        let cross = s(Vec2::new(0.5, 0.0), Vec2::new(0.0, 1.0), DriftSign::Minus).unwrap();
        assert!((cross - 0.75_f64.sqrt()).abs() < 1e-15);
        let scanned = scan_speed(Vec2::new(0.5, 0.0), Vec2::new(0.0, 1.0), DriftSign::Minus, 1.0, 10_000).unwrap();
        assert!((cross - scanned).abs() < 3e-3);
    }

    #[test]
    fn non_unit_direction_is_rejected() {
        assert!(matches!(
            max_speed(Vec2::ZERO, Vec2::new(2.0, 0.0), DriftSign::Minus, 1.0),
            Err(Error::NonUnitDirection(_))
        ));
    }

    #[test]
    fn trap_radial_speed() {
        for r in [0.1, 0.3, 0.45] {
            let x = Vec2::new(r, 0.0);
            let s = max_speed(x * 2.0, Vec2::new(1.0, 0.0), DriftSign::Minus, 1.0).unwrap().unwrap();
            assert!((s - (1.0 - 2.0 * r)).abs() < 1e-14);
        }
        assert_eq!(max_speed(Vec2::new(1.2, 0.0), Vec2::new(1.0, 0.0), DriftSign::Minus, 1.0).unwrap(), None);
    }

    proptest! {
        #[test]
        fn duality_is_exact(vx in -3.0..3.0f64, vy in -3.0..3.0f64, th in 0.0..TAU, b in 0.1..2.0f64) {
            let v = Vec2::new(vx, vy);
            let e = Vec2::from_angle(th);
            let a = max_speed_unchecked(v, e, DriftSign::Minus, b);
            let c = max_speed_unchecked(-v, e, DriftSign::Plus, b);
            prop_assert_eq!(a.map(f64::to_bits), c.map(f64::to_bits));
            let d = max_speed_unchecked(v, -e, DriftSign::Plus, b);
            prop_assert_eq!(a.map(f64::to_bits), d.map(f64::to_bits));
        }

        #[test]
        fn monotone_in_bound(vx in -2.0..2.0f64, vy in -2.0..2.0f64, th in 0.0..TAU, b1 in 0.1..2.0f64, db in 0.0..1.0f64) {
            let (v, e) = (Vec2::new(vx, vy), Vec2::from_angle(th));
            if let (Some(s1), Some(s2)) = (
                max_speed_unchecked(v, e, DriftSign::Minus, b1),
                max_speed_unchecked(v, e, DriftSign::Minus, b1 + db),
            ) {
                prop_assert!(s1 <= s2);
            }
            if max_speed_unchecked(v, e, DriftSign::Minus, b1).is_some() {
                prop_assert!(max_speed_unchecked(v, e, DriftSign::Minus, b1 + db).is_some());
            }
        }

        #[test]
        fn speed_is_attainable_and_bounded(vx in -2.0..2.0f64, vy in -2.0..2.0f64, th in 0.0..TAU, b in 0.2..1.5f64) {
            let (v, e) = (Vec2::new(vx, vy), Vec2::from_angle(th));
            if let Some(s) = max_speed_unchecked(v, e, DriftSign::Minus, b) {
                let alpha = e * s + v;
                prop_assert!(alpha.norm() <= b * (1.0 + 1e-9));
                prop_assert!(s <= v.norm() + b);
            }
        }
    }

    #[test]
    fn feasibility_matches_control_scan() {
        let v = Vec2::new(1.5, 0.4);
        let b = 1.0;
        for k in 0..10_000 {
            let e = Vec2::from_angle(TAU * k as f64 / 10_000.0);
            let f = max_speed_unchecked(v, e, DriftSign::Minus, b);
            let we = -v.dot(e);
            let predicted = we > 0.0 && we * we >= v.norm_sq() - b * b;
            assert_eq!(f.is_some(), predicted, "direction {k}");
            // Near tangency the strip relaxation of the scan overshoots; compare elsewhere.
            let clear = we * we - (v.norm_sq() - b * b) > 0.05;
            let scan = scan_speed(v, e, DriftSign::Minus, b, 4096);
            if let (Some(s), Some(t), true) = (f, scan, clear) {
                assert!((s - t).abs() < 0.06, "direction {k}: {s} vs scan {t}");
            }
        }
    }

    #[test]
    fn straight_motion_and_pure_drift() {
        let zero = sample_field(&FieldSpec::zero(), 0).unwrap();
        let u = ControlSignal::constant(Vec2::new(1.0, 0.0), 1.0).unwrap();
        let x0 = Vec2::new(0.3, -0.2);
        let tr = integrate(&zero, x0, &u, 2.0, 0.01, DriftSign::Minus).unwrap();
        assert!((tr.end() - (x0 + Vec2::new(2.0, 0.0))).norm() < 1e-12);
        assert_eq!(tr.duration(), 2.0);

        let c = sample_field(&FieldSpec::constant(0.5, 0.0), 0).unwrap();
        let tr = integrate(&c, x0, &ControlSignal::zero(1.0), 2.0, 0.01, DriftSign::Minus).unwrap();
        assert!((tr.end() - (x0 + Vec2::new(-1.0, 0.0))).norm() < 1e-12);
    }

    #[test]
    fn cellular_flow_conserves_stream_function() {
        let f = sample_field(&FieldSpec::cellular(1.0), 7).unwrap();
        let x0 = Vec2::new(0.4, 1.1);
        let tr = integrate(&f, x0, &ControlSignal::zero(1.0), 10.0, 1e-3, DriftSign::Minus).unwrap();
        let psi0 = f.psi(x0);
        let drift = tr.positions.iter().map(|&x| (f.psi(x) - psi0).abs()).fold(0.0, f64::max);
        assert!(drift < 1e-6, "stream function drift {drift}");
    }

    #[test]
    fn trajectories_respect_finite_propagation() {
        let f = sample_field(&FieldSpec::isotropic_fourier(6, 1.0, 1.0), 3).unwrap();
        let values: Vec<Vec2> = (0..50).map(|k| Vec2::from_angle(0.7 * k as f64)).collect();
        let u = ControlSignal::uniform(0.1, values, 1.0).unwrap();
        let tr = integrate(&f, Vec2::ZERO, &u, 5.0, 0.01, DriftSign::Plus).unwrap();
        assert!(tr.propagation_excess(f.velocity_bound() + 1.0) <= 1e-6);
    }

    #[test]
    fn control_signal_rejects_oversized_values() {
        assert!(ControlSignal::constant(Vec2::new(0.6, 0.0), 0.5).is_err());
        let u = ControlSignal::uniform(0.5, vec![Vec2::new(0.1, 0.0), Vec2::new(0.2, 0.0)], 1.0).unwrap();
        assert_eq!(u.at(0.7), Vec2::new(0.2, 0.0));
        assert_eq!(u.at(100.0), Vec2::new(0.2, 0.0));
    }

    fn path_for(spec: FieldSpec, y: Vec2, h: f64, half: f64) -> (FieldRealization, PathReport) {
        let f = sample_field(&spec, 0).unwrap();
        let grid = crate::traveltime::Grid2::new(Vec2::ZERO, half, h, 3).unwrap();
        let tau = crate::traveltime::solve_travel_time(&f, &[Vec2::ZERO], &grid, DriftSign::Minus, 1.0).unwrap();
        let p = descend_path(&tau, &f, y).unwrap();
        (f, p)
    }

    #[test]
    fn descended_path_is_straight_without_drift() {
        let y = Vec2::new(1.0, 0.5);
        let (f, p) = path_for(FieldSpec::zero(), y, 0.02, 2.0);
        assert!(p.slack.abs() < 1e-9);
        let dir = y / y.norm();
        let off = p.trajectory.positions.iter().map(|x| x.cross(dir).abs()).fold(0.0, f64::max);
        assert!(off <= 0.05, "{off}");
        let replay = integrate(&f, p.trajectory.start(), &p.trajectory.control, p.traversal_time, 1e-3, DriftSign::Minus).unwrap();
        assert!(replay.end().distance(y) < 0.02);
    }

    #[test]
    fn descended_path_with_constant_drift_replays() {
        let y = Vec2::new(0.0, 1.0);
        let (f, p) = path_for(FieldSpec::constant(0.5, 0.0), y, 0.02, 3.0);
        assert!(p.slack.abs() < 0.05);
        // min { t : |y + t V| <= t } for V = (0.5, 0) and y = (0, 1).
        assert!((p.tau - 2.0 / 3f64.sqrt()).abs() / p.tau < 0.05);
        let replay = integrate(&f, p.trajectory.start(), &p.trajectory.control, p.traversal_time, 1e-3, DriftSign::Minus).unwrap();
        assert!(replay.end().distance(y) < 0.05);
    }

    #[test]
    fn descended_path_escapes_the_trap_radially() {
        let y = Vec2::new(0.4, 0.0);
        let (f, p) = path_for(FieldSpec::gradient_trap(), y, 0.005, 1.0);
        let exact = -(1.0f64 - 0.8).ln() / 2.0;
        assert!((p.tau - exact).abs() / exact < 0.05, "{} vs {exact}", p.tau);
        assert!(p.slack.abs() < 0.05);
        let replay = integrate(&f, p.trajectory.start(), &p.trajectory.control, p.traversal_time, 1e-4, DriftSign::Minus).unwrap();
        assert!(replay.end().distance(y) < 0.05, "{:?}", replay.end());
    }
}
