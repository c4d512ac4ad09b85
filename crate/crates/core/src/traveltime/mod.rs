//! First-arrival travel times for `X' = sigma V(X) + alpha`, `|alpha| <= b`.
//!
//! The continuum problem is replaced by shortest paths on a lattice graph:
//! each node links to the neighbors in its stencil, and an edge costs its
//! length over the largest speed attainable along it at the edge midpoint.
//! Edges along which no positive speed exists are dropped, so regions the
//! control cannot reach come out as `+inf` rather than as large numbers.

mod grid;
mod solver;

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use grid::{stencil_offsets, Grid2, GridParams, Offset, MAX_SIDE};
pub(crate) use solver::bilinear;
pub use solver::{solve_travel_time, RunSummary, SolverGraph, StopRule, TravelTimeField, Workspace};

use crate::control::DriftSign;
use crate::error::{Error, Result};
use crate::fields::VelocityField;
use crate::geometry::Vec2;

/// Domain safety factor: a pair solve needs the disk of radius
/// `DOMAIN_FACTOR (V_inf + 1) |x - y|` about `x` inside the grid.
pub const DOMAIN_FACTOR: f64 = 1.5;

/// Smallest grid centered at `x` that satisfies the sizing rule of [`tau`].
pub fn pair_grid(x: Vec2, y: Vec2, speed_bound: f64, h: f64, stencil: u8) -> Result<Grid2> {
    let r = DOMAIN_FACTOR * (speed_bound + 1.0) * x.distance(y);
    Grid2::covering(x, r.max(2.0 * h), h, stencil)
}

/// Travel time from `x` to the node nearest `y` for the backward dynamics with `b = 1`.
///
/// Truncating the domain can only lengthen paths, invisibly, so an undersized
/// grid is an error rather than a silent bias.
pub fn tau<F: VelocityField + ?Sized>(field: &F, x: Vec2, y: Vec2, grid: &Grid2) -> Result<f64> {
    let r = DOMAIN_FACTOR * (field.speed_bound() + 1.0) * x.distance(y);
    if !grid.contains_disk(x, r) {
        return Err(Error::GridTooSmall(format!(
            "need the disk of radius {r:.3} about ({}, {}) inside a grid of half-width {} centered at ({}, {})",
            x.x,
            x.y,
            grid.half_width(),
            grid.center().x,
            grid.center().y
        )));
    }
    let graph = SolverGraph::new(field, *grid, DriftSign::Minus, 1.0)?;
    let target = grid.nearest(y).ok_or(Error::OutsideGrid(y))?;
    let t = graph.solve(&[x], &StopRule::targets(vec![target]))?;
    Ok(t.values()[target])
}

/// Sample estimate of `sup { tau(x, y) : x, y in B_R }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEstimate {
    pub radius: f64,
    pub value: f64,
    /// Pair attaining `value` (for finite values) or an unreachable pair.
    pub argmax: Option<(Vec2, Vec2)>,
    pub unreachable: bool,
    pub sources: Vec<Vec2>,
    pub sampling: String,
}

/// Deterministic source points for [`gamma_hat`]: half on a ring just inside
/// the boundary, the rest on a Vogel spiral filling the disk.
pub fn gamma_sources(radius: f64, n: usize, h: f64) -> Vec<Vec2> {
    let n_ring = n.div_ceil(2);
    let n_in = n - n_ring;
    let ring_r = (radius - h).max(0.0);
    let golden = TAU * (1.0 - 1.0 / ((1.0 + 5f64.sqrt()) / 2.0));
    let mut out: Vec<Vec2> = (0..n_ring).map(|j| Vec2::from_angle(TAU * j as f64 / n_ring as f64) * ring_r).collect();
    out.extend((0..n_in).map(|k| {
        let r = ring_r * ((k as f64 + 0.5) / n_in as f64).sqrt();
        Vec2::from_angle(golden * k as f64) * r
    }));
    out
}

/// Largest travel time from `n` sampled sources in `B_R` to every node in `B_R`.
///
/// A lower bound on the true supremum. Any unreachable node makes the value
/// `+inf` and the offending pair is returned as a witness.
pub fn gamma_hat<F: VelocityField + ?Sized>(field: &F, radius: f64, n: usize, grid: &Grid2) -> Result<GammaEstimate> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("gamma_hat needs at least 2 sources, got {n}")));
    }
    if !grid.contains_disk(Vec2::ZERO, radius) {
        return Err(Error::GridTooSmall(format!("grid does not contain the ball of radius {radius}")));
    }
    let graph = SolverGraph::new(field, *grid, DriftSign::Minus, 1.0)?;
    gamma_on_graph(&graph, radius, n)
}

pub(crate) fn gamma_on_graph(graph: &SolverGraph, radius: f64, n: usize) -> Result<GammaEstimate> {
    let grid = *graph.grid();
    let sources = gamma_sources(radius, n, grid.spacing());
    let targets = grid.nodes_in_disk(Vec2::ZERO, radius);
    let per_source: Vec<Result<(f64, Option<Vec2>, bool)>> = sources
        .par_iter()
        .map_init(
            || graph.workspace(),
            |ws, &s| {
                let node = grid.nearest(s).ok_or(Error::OutsideGrid(s))?;
                let summary = graph.run(ws, &[node], &StopRule::targets(targets.clone()))?;
                if summary.targets_left > 0 {
                    let w = targets.iter().find(|&&t| ws.settled_value(t).is_none()).copied();
                    return Ok((f64::INFINITY, w.map(|t| grid.position(t)), true));
                }
                let mut best = (0.0, None);
                for &t in &targets {
                    let v = ws.settled_value(t).unwrap_or(f64::INFINITY);
                    if v > best.0 {
                        best = (v, Some(grid.position(t)));
                    }
                }
                Ok((best.0, best.1, false))
            },
        )
        .collect();
    let mut out = GammaEstimate {
        radius,
        value: 0.0,
        argmax: None,
        unreachable: false,
        sources: sources.clone(),
        sampling: format!("{} ring points at radius R - h, {} Vogel-spiral points", n.div_ceil(2), n - n.div_ceil(2)),
    };
    for (s, r) in sources.iter().zip(per_source) {
        let (v, at, unreachable) = r?;
        if unreachable {
            out.value = f64::INFINITY;
            out.unreachable = true;
            out.argmax = at.map(|y| (*s, y));
            break;
        }
        if v > out.value {
            out.value = v;
            out.argmax = at.map(|y| (*s, y));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleViolation {
    pub x: Vec2,
    pub y: Vec2,
    pub z: Vec2,
    pub direct: f64,
    pub via: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleReport {
    pub checked: usize,
    pub slack: f64,
    /// Largest `tau(x,z) - tau(x,y) - tau(y,z)` over finite triples.
    pub max_excess: f64,
    pub violations: Vec<TriangleViolation>,
}

impl TriangleReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check `tau(x,z) <= tau(x,y) + tau(y,z) + 4 h (V_inf + 1)` on each triple.
pub fn verify_triangle<F: VelocityField + ?Sized>(
    field: &F,
    triples: &[(Vec2, Vec2, Vec2)],
    grid: &Grid2,
) -> Result<TriangleReport> {
    let graph = SolverGraph::new(field, *grid, DriftSign::Minus, 1.0)?;
    let slack = 4.0 * grid.spacing() * (field.speed_bound() + 1.0);
    let node = |p: Vec2| grid.nearest(p).ok_or(Error::OutsideGrid(p));
    let results: Vec<Result<(f64, f64, f64)>> = triples
        .par_iter()
        .map_init(
            || graph.workspace(),
            |ws, &(x, y, z)| {
                let (nx, ny, nz) = (node(x)?, node(y)?, node(z)?);
                graph.run(ws, &[nx], &StopRule::targets(vec![ny, nz]))?;
                let read = |ws: &Workspace, k| ws.settled_value(k).unwrap_or(f64::INFINITY);
                let (xy, xz) = (read(ws, ny), read(ws, nz));
                graph.run(ws, &[ny], &StopRule::targets(vec![nz]))?;
                Ok((xz, xy, read(ws, nz)))
            },
        )
        .collect();
    let mut report = TriangleReport { checked: triples.len(), slack, max_excess: f64::NEG_INFINITY, violations: Vec::new() };
    for (&(x, y, z), r) in triples.iter().zip(results) {
        let (direct, xy, yz) = r?;
        let via = xy + yz;
        if direct.is_finite() && via.is_finite() {
            report.max_excess = report.max_excess.max(direct - via);
        }
        if direct > via + slack {
            report.violations.push(TriangleViolation { x, y, z, direct, via });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{sample_field, FieldRealization, FieldSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn field(spec: FieldSpec, seed: u64) -> FieldRealization {
        sample_field(&spec, seed).unwrap()
    }

    /// `min { t : |y + t V| <= t }` for constant drift with `|V| < 1`.
    fn drift_oracle(v: Vec2, y: Vec2) -> f64 {
        let a = 1.0 - v.norm_sq();
        let b = -2.0 * y.dot(v);
        let c = -y.norm_sq();
        (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
    }

    #[test]
    fn metric_oracle_at_order_three() {
        let f = field(FieldSpec::zero(), 0);
        let g = Grid2::new(Vec2::ZERO, 1.0, 0.01, 3).unwrap();
        let t = solve_travel_time(&f, &[Vec2::ZERO], &g, DriftSign::Minus, 1.0).unwrap();
        let mut worst: f64 = 0.0;
        for k in 0..g.len() {
            let r = g.position(k).norm();
            if (0.5..=1.0).contains(&r) {
                worst = worst.max((t.values()[k] - r).abs() / r);
            }
        }
        assert!(worst <= 0.02, "max relative error {worst}");
    }

    #[test]
    fn drift_oracle_probes() {
        let v = Vec2::new(0.5, 0.0);
        assert!((drift_oracle(v, Vec2::new(1.0, 0.0)) - 2.0).abs() < 1e-12);
        assert!((drift_oracle(v, Vec2::new(0.0, 1.0)) - 2.0 / 3f64.sqrt()).abs() < 1e-12);
        assert!((drift_oracle(v, Vec2::new(-1.0, 0.0)) - 2.0 / 3.0).abs() < 1e-12);
        let f = field(FieldSpec::constant(0.5, 0.0), 0);
        let g = Grid2::new(Vec2::ZERO, 1.5, 0.01, 3).unwrap();
        let t = solve_travel_time(&f, &[Vec2::ZERO], &g, DriftSign::Minus, 1.0).unwrap();
        for y in [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(-1.0, 0.0)] {
            let got = t.value_nearest(y).unwrap();
            let want = drift_oracle(v, y);
            assert!((got - want).abs() / want < 0.05, "{y:?}: {got} vs {want}");
        }
    }

    #[test]
    fn trap_is_unreachable_beyond_half() {
        let f = field(FieldSpec::gradient_trap(), 0);
        let g = Grid2::new(Vec2::ZERO, 1.0, 0.01, 3).unwrap();
        let t = solve_travel_time(&f, &[Vec2::ZERO], &g, DriftSign::Minus, 1.0).unwrap();
        for k in 0..g.len() {
            let r = g.position(k).norm();
            if r >= 0.55 {
                assert_eq!(t.values()[k], f64::INFINITY);
            } else if r <= 0.45 {
                assert!(t.values()[k].is_finite());
            }
        }
    }

    #[test]
    fn sources_are_zero_and_values_nonnegative() {
        let f = field(FieldSpec::cellular(1.5), 4);
        let g = Grid2::new(Vec2::ZERO, 3.0, 0.1, 2).unwrap();
        let src = [Vec2::new(-1.0, 0.5), Vec2::new(1.2, -0.7)];
        let t = solve_travel_time(&f, &src, &g, DriftSign::Minus, 1.0).unwrap();
        for &s in t.source_nodes() {
            assert_eq!(t.values()[s], 0.0);
        }
        assert!(t.values().iter().all(|&v| v >= 0.0));
        assert!(t.lower_bound_excess() <= 0.0);
        assert!(t.is_complete());
    }

    #[test]
    fn empty_sources_rejected() {
        let f = field(FieldSpec::zero(), 0);
        let g = Grid2::new(Vec2::ZERO, 1.0, 0.1, 1).unwrap();
        assert_eq!(solve_travel_time(&f, &[], &g, DriftSign::Minus, 1.0).unwrap_err(), Error::EmptySources);
    }

    #[test]
    fn larger_stencil_never_increases_values() {
        let f = field(FieldSpec::isotropic_fourier(6, 1.2, 1.0), 2);
        let g1 = Grid2::new(Vec2::ZERO, 4.0, 0.1, 1).unwrap();
        let solve = |k| {
            solve_travel_time(&f, &[Vec2::ZERO], &g1.with_stencil(k).unwrap(), DriftSign::Minus, 1.0).unwrap()
        };
        let (t1, t2, t3) = (solve(1), solve(2), solve(3));
        for k in 0..g1.len() {
            assert!(t2.values()[k] <= t1.values()[k]);
            assert!(t3.values()[k] <= t2.values()[k]);
        }
    }

    #[test]
    fn reverse_duality() {
        let f = field(FieldSpec::cellular(2.0), 9);
        let g = Grid2::new(Vec2::ZERO, 3.0, 0.1, 3).unwrap();
        let x = Vec2::new(-1.0, 0.3);
        let fwd = solve_travel_time(&f, &[x], &g, DriftSign::Minus, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let y = g.position(rng.random_range(0..g.len()));
            let back = solve_travel_time(&f, &[y], &g, DriftSign::Plus, 1.0).unwrap();
            let a = fwd.value_nearest(y).unwrap();
            let b = back.value_nearest(x).unwrap();
            assert!(a == b || (a - b).abs() <= 1e-12 * a.max(b), "{a} vs {b}");
        }
    }

    #[test]
    fn grid_aligned_shift_is_exact() {
        let f = field(FieldSpec::isotropic_fourier(5, 1.0, 1.0), 12);
        let y = Vec2::new(1.25, -0.5);
        let g = Grid2::new(Vec2::ZERO, 2.0, 0.125, 3).unwrap();
        let gs = Grid2::new(-y, 2.0, 0.125, 3).unwrap();
        let x = Vec2::new(0.25, 0.5);
        let a = solve_travel_time(&f, &[x], &g, DriftSign::Minus, 1.0).unwrap();
        let b = solve_travel_time(&f.shift(y), &[x - y], &gs, DriftSign::Minus, 1.0).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn halved_control_is_slower() {
        let f = field(FieldSpec::cellular(0.4), 1);
        let g = Grid2::new(Vec2::ZERO, 2.0, 0.05, 3).unwrap();
        let full = solve_travel_time(&f, &[Vec2::ZERO], &g, DriftSign::Minus, 1.0).unwrap();
        let half = solve_travel_time(&f, &[Vec2::ZERO], &g, DriftSign::Minus, 0.5).unwrap();
        for k in 0..g.len() {
            assert!(half.values()[k] >= full.values()[k]);
        }
    }

    #[test]
    fn tau_basics_and_sizing() {
        let f = field(FieldSpec::zero(), 0);
        let x = Vec2::new(0.3, -0.2);
        let g = pair_grid(x, x + Vec2::new(0.6, 0.8), 0.0, 0.01, 3).unwrap();
        assert_eq!(tau(&f, x, x, &g).unwrap(), 0.0);
        let t = tau(&f, x, x + Vec2::new(0.6, 0.8), &g).unwrap();
        assert!((t - 1.0).abs() < 0.02);
        let small = Grid2::new(x, 0.5, 0.01, 3).unwrap();
        assert!(matches!(tau(&f, x, x + Vec2::new(0.6, 0.0), &small), Err(Error::GridTooSmall(_))));
    }

    #[test]
    fn gamma_examples() {
        let g = Grid2::new(Vec2::ZERO, 1.0, 0.01, 3).unwrap();
        let zero = gamma_hat(&field(FieldSpec::zero(), 0), 1.0, 8, &g).unwrap();
        assert!((zero.value - 2.0).abs() / 2.0 < 0.03, "{}", zero.value);
        let drift = gamma_hat(&field(FieldSpec::constant(0.5, 0.0), 0), 1.0, 8, &g).unwrap();
        assert!((drift.value - 4.0).abs() / 4.0 < 0.05, "{}", drift.value);
        let trap = gamma_hat(&field(FieldSpec::gradient_trap(), 0), 1.0, 8, &g).unwrap();
        assert!(trap.unreachable && trap.value == f64::INFINITY);
        let (a, b) = trap.argmax.unwrap();
        assert!(a.norm() <= 1.0 && b.norm() <= 1.0);
    }

    #[test]
    fn triangle_inequality_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut pt = || Vec2::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        let mut triples: Vec<_> = (0..100).map(|_| (pt(), pt(), pt())).collect();
        let x = triples[0].0;
        triples.push((x, x, Vec2::new(0.5, 0.5)));
        let g = Grid2::new(Vec2::ZERO, 4.0, 0.05, 3).unwrap();
        for spec in [FieldSpec::zero(), FieldSpec::cellular(2.0)] {
            let rep = verify_triangle(&field(spec, 3), &triples, &g).unwrap();
            assert!(rep.passed(), "{:?}", rep.violations.first());
        }
    }
}
