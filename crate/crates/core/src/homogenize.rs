//! Limit shape `q(p) = lim tau(0, r p) / r`, the Wulff set `{q <= 1}` and
//! the effective Hamiltonian, which is the support function of that set.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::DriftSign;
use crate::error::{Error, Result};
use crate::fields::{derive_seed, sample_field, FieldRealization, FieldSpec, VelocityField};
use crate::geometry::{convex_hull, polygon_contains, radial_extent, Vec2};
use crate::stats::{linear_fit, sample_std, Estimate};
use crate::traveltime::{Grid2, SolverGraph, StopRule};

/// How estimator grids are laid out.
///
/// The grid spans the segment (or disk) of sample points plus `pad` on every
/// side. Paths leaving it are lost, which can only raise travel times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPolicy {
    pub h: f64,
    pub stencil: u8,
    pub pad: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy { h: 0.1, stencil: 3, pad: 10.0 }
    }
}

impl GridPolicy {
    /// Grid holding the segment from 0 to `reach * p`, with 0 on a node.
    fn segment_grid(&self, p: Vec2, reach: f64) -> Result<Grid2> {
        let mid = p * (0.5 * reach);
        let center = Vec2::new((mid.x / self.h).round() * self.h, (mid.y / self.h).round() * self.h);
        let half = 0.5 * reach + self.pad + center.distance(mid);
        Grid2::covering(center, half, self.h, self.stencil)
    }

    fn disk_grid(&self, reach: f64) -> Result<Grid2> {
        Grid2::covering(Vec2::ZERO, reach + self.pad, self.h, self.stencil)
    }
}

/// Travel-time ratios `tau(0, r p) / r` for every direction and radius from
/// one solve. `[direction][radius]`; `+inf` where unreached.
pub fn ratio_table<F: VelocityField + ?Sized>(
    field: &F,
    directions: &[Vec2],
    radii: &[f64],
    policy: &GridPolicy,
) -> Result<Vec<Vec<f64>>> {
    let r_max = radii.iter().copied().fold(0.0, f64::max);
    let grid = match directions {
        [p] => policy.segment_grid(*p, r_max)?,
        _ => policy.disk_grid(r_max)?,
    };
    let graph = SolverGraph::new(field, grid, DriftSign::Minus, 1.0)?;
    let mut cells = Vec::new();
    let mut targets = Vec::new();
    for p in directions {
        for &r in radii {
            let x = *p * r;
            let (i, j, fx, fy) = grid.cell(x).ok_or(Error::OutsideGrid(x))?;
            let corners = [grid.index(i, j), grid.index(i + 1, j), grid.index(i, j + 1), grid.index(i + 1, j + 1)];
            targets.extend_from_slice(&corners);
            cells.push((corners, fx, fy, r));
        }
    }
    let source = grid.nearest(Vec2::ZERO).ok_or(Error::OutsideGrid(Vec2::ZERO))?;
    let mut ws = graph.workspace();
    graph.run(&mut ws, &[source], &StopRule::targets(targets))?;
    let value = |k: usize| ws.settled_value(k).unwrap_or(f64::INFINITY);
    let flat: Vec<f64> = cells
        .iter()
        .map(|&(c, fx, fy, r)| {
            crate::traveltime::bilinear(value(c[0]), value(c[1]), value(c[2]), value(c[3]), fx, fy) / r
        })
        .collect();
    Ok(flat.chunks(radii.len()).map(<[f64]>::to_vec).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalEstimate {
    pub direction: Vec2,
    pub radii: Vec<f64>,
    /// Seed-averaged `tau(0, r p) / r` per radius.
    pub ratios: Vec<f64>,
    pub per_seed: Vec<SeedRow>,
    /// Intercept of the fit `ratio = q + c / r`.
    pub qbar: f64,
    pub qbar_std_err: f64,
    pub slope: f64,
    pub fit_residual: f64,
    /// `1 / (1 + V_inf)`, the exact floor for every ratio.
    pub lower_bound: f64,
    /// Every per-seed ratio is at or above the floor, up to summation rounding
    /// (relative `1e-12`).
    pub lower_bound_holds: bool,
    /// Set when some sample point was unreachable: `(0, r p)`.
    pub non_homogenizing: Option<(Vec2, Vec2)>,
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.len() < 3 || radii.windows(2).any(|w| !(w[1] > w[0])) || radii[0] <= 0.0 {
        return Err(Error::InvalidArgument("need at least 3 positive, increasing radii".into()));
    }
    Ok(())
}

fn unit(p: Vec2) -> Result<Vec2> {
    let n = p.norm();
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::NonUnitDirection(n));
    }
    Ok(p)
}

fn summarize(direction: Vec2, radii: &[f64], per_seed: Vec<SeedRow>, speed_bound: f64) -> DirectionalEstimate {
    let m = radii.len();
    let ratios: Vec<f64> =
        (0..m).map(|k| per_seed.iter().map(|s| s.ratios[k]).sum::<f64>() / per_seed.len() as f64).collect();
    let lower_bound = 1.0 / (1.0 + speed_bound);
    let lower_bound_holds = per_seed.iter().all(|s| s.ratios.iter().all(|&q| q >= lower_bound * (1.0 - 1e-12)));
    let non_homogenizing = ratios.iter().position(|q| !q.is_finite()).map(|k| (Vec2::ZERO, direction * radii[k]));
    let inv: Vec<f64> = radii.iter().map(|r| 1.0 / r).collect();
    let (qbar, qbar_std_err, slope, fit_residual) = match (non_homogenizing, linear_fit(&inv, &ratios)) {
        (None, Some(fit)) => {
            // Seed-to-seed spread of the per-seed intercepts, when there are several seeds.
            let intercepts: Vec<f64> =
                per_seed.iter().filter_map(|s| linear_fit(&inv, &s.ratios)).map(|f| f.intercept).collect();
            let se = if intercepts.len() > 1 {
                Estimate::from_samples(&intercepts).std_err.max(if fit.intercept_std_err.is_nan() {
                    0.0
                } else {
                    fit.intercept_std_err
                })
            } else {
                fit.intercept_std_err
            };
            (fit.intercept, se, fit.slope, fit.rms_residual)
        }
        _ => (f64::INFINITY, f64::NAN, f64::NAN, f64::NAN),
    };
    DirectionalEstimate {
        direction,
        radii: radii.to_vec(),
        ratios,
        per_seed,
        qbar,
        qbar_std_err,
        slope,
        fit_residual,
        lower_bound,
        lower_bound_holds,
        non_homogenizing,
    }
}

/// Estimate `q(p)` from `tau(0, r p) / r` over the radii for one realization.
pub fn estimate_qbar(
    spec: &FieldSpec,
    seed: u64,
    p: Vec2,
    radii: &[f64],
    policy: &GridPolicy,
) -> Result<DirectionalEstimate> {
    estimate_qbar_seeds(spec, &[seed], p, radii, policy)
}

/// [`estimate_qbar`] averaged over several realizations.
pub fn estimate_qbar_seeds(
    spec: &FieldSpec,
    seeds: &[u64],
    p: Vec2,
    radii: &[f64],
    policy: &GridPolicy,
) -> Result<DirectionalEstimate> {
    let p = unit(p)?;
    check_radii(radii)?;
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let rows = seeds
        .par_iter()
        .map(|&seed| {
            let f = sample_field(spec, seed)?;
            let t = ratio_table(&f, &[p], radii, policy)?;
            Ok(SeedRow { seed, ratios: t.into_iter().next().unwrap_or_default() })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(p, radii, rows, spec.velocity_bound()))
}

/// Convex polygon approximating `{z : q(z) <= 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WulffSet {
    pub directions: Vec<Vec2>,
    pub qbar: Vec<f64>,
    pub qbar_std_err: Vec<f64>,
    /// `1 / q` per direction, before convexification.
    pub raw_radii: Vec<f64>,
    /// Radial extent of the convex hull along each direction.
    pub radii: Vec<f64>,
    /// Hull vertices, counter-clockwise.
    pub vertices: Vec<Vec2>,
    /// Largest relative change of a radius under convexification.
    pub convexification_change: f64,
    /// Largest relative standard error of a radius.
    pub estimator_noise: f64,
    pub speed_bound: f64,
    pub seeds: Vec<u64>,
    pub sample_radii: Vec<f64>,
}

/// Effective Hamiltonian: the support function of a Wulff set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveHamiltonian {
    pub wulff: WulffSet,
}

/// `K` equally spaced unit directions starting on the first axis.
pub fn unit_directions(k: usize) -> Vec<Vec2> {
    (0..k).map(|j| Vec2::from_angle(TAU * j as f64 / k as f64)).collect()
}

impl WulffSet {
    /// Wulff set from per-direction values of `q`.
    pub fn from_qbar(
        directions: Vec<Vec2>,
        qbar: Vec<f64>,
        qbar_std_err: Vec<f64>,
        speed_bound: f64,
    ) -> Result<WulffSet> {
        if directions.len() != qbar.len() || directions.len() < 3 {
            return Err(Error::InvalidArgument("need at least 3 directions with one q each".into()));
        }
        if let Some(j) = qbar.iter().position(|q| !(q.is_finite() && *q > 0.0)) {
            return Err(Error::NonHomogenizing { from: Vec2::ZERO, to: directions[j] });
        }
        let raw_radii: Vec<f64> = qbar.iter().map(|q| 1.0 / q).collect();
        let polar: Vec<Vec2> = directions.iter().zip(&raw_radii).map(|(p, r)| *p * *r).collect();
        let vertices = convex_hull(&polar);
        let radii: Vec<f64> = directions.iter().map(|&p| radial_extent(&vertices, p)).collect();
        let convexification_change =
            radii.iter().zip(&raw_radii).map(|(a, b)| (a - b).abs() / b).fold(0.0, f64::max);
        let estimator_noise = qbar
            .iter()
            .zip(&qbar_std_err)
            .map(|(q, se)| if se.is_finite() { se / q } else { 0.0 })
            .fold(0.0, f64::max);
        Ok(WulffSet {
            directions,
            qbar,
            qbar_std_err,
            raw_radii,
            radii,
            vertices,
            convexification_change,
            estimator_noise,
            speed_bound,
            seeds: Vec::new(),
            sample_radii: Vec::new(),
        })
    }

    /// Distance from the origin to the nearest polygon edge.
    pub fn inradius(&self) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|k| {
                let a = self.vertices[k];
                let e = self.vertices[(k + 1) % n] - a;
                e.cross(-a) / e.norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, z: Vec2, tol: f64) -> bool {
        polygon_contains(&self.vertices, z, tol)
    }

    pub fn hamiltonian(self) -> EffectiveHamiltonian {
        EffectiveHamiltonian { wulff: self }
    }
}

/// `sup { p . z : z in W }`, the maximum over the polygon vertices.
pub fn support(h: &EffectiveHamiltonian, p: Vec2) -> f64 {
    if p == Vec2::ZERO {
        return 0.0;
    }
    h.wulff.vertices.iter().map(|v| p.dot(*v)).fold(f64::NEG_INFINITY, f64::max)
}

impl EffectiveHamiltonian {
    pub fn eval(&self, p: Vec2) -> f64 {
        support(self, p)
    }
}

/// Estimate the Wulff set from `K` directions, averaging over seeds.
///
/// One solve per seed serves every direction and radius.
pub fn build_wulff(
    spec: &FieldSpec,
    seeds: &[u64],
    k: usize,
    radii: &[f64],
    policy: &GridPolicy,
) -> Result<WulffSet> {
    if k < 8 {
        return Err(Error::InvalidArgument(format!("need at least 8 directions, got {k}")));
    }
    check_radii(radii)?;
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }
    let directions = unit_directions(k);
    let tables = seeds
        .par_iter()
        .map(|&seed| ratio_table(&sample_field(spec, seed)?, &directions, radii, policy))
        .collect::<Result<Vec<_>>>()?;
    let estimates: Vec<DirectionalEstimate> = directions
        .iter()
        .enumerate()
        .map(|(j, &p)| {
            let rows = seeds
                .iter()
                .zip(&tables)
                .map(|(&seed, t)| SeedRow { seed, ratios: t[j].clone() })
                .collect();
            summarize(p, radii, rows, spec.velocity_bound())
        })
        .collect();
    if let Some(e) = estimates.iter().find(|e| e.non_homogenizing.is_some()) {
        let (from, to) = e.non_homogenizing.unwrap_or_default();
        return Err(Error::NonHomogenizing { from, to });
    }
    let mut w = WulffSet::from_qbar(
        directions,
        estimates.iter().map(|e| e.qbar).collect(),
        estimates.iter().map(|e| e.qbar_std_err).collect(),
        spec.velocity_bound(),
    )?;
    w.seeds = seeds.to_vec();
    w.sample_radii = radii.to_vec();
    Ok(w)
}

/// Base-point comparison: ratios seen from `base` versus from the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseShiftCheck {
    pub base: Vec2,
    pub radius: f64,
    pub from_origin: Estimate,
    pub from_base: Estimate,
    pub slack: f64,
    pub agree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeDiagnostics {
    pub direction: Vec2,
    pub radii: Vec<f64>,
    /// Across-seed standard deviation over mean of the ratio, per radius.
    pub dispersion: Vec<f64>,
    /// Dispersion at the largest radius is at most half that at the smallest.
    pub contracting: bool,
    pub base_shift: BaseShiftCheck,
}

/// Across-seed spread of `tau(0, r p) / r` and a base-point comparison at
/// the largest radius, with the base point at `r_max p`.
pub fn shape_diagnostics(
    spec: &FieldSpec,
    seeds: &[u64],
    p: Vec2,
    radii: &[f64],
    policy: &GridPolicy,
) -> Result<ShapeDiagnostics> {
    if seeds.len() < 5 {
        return Err(Error::InvalidArgument(format!("need at least 5 seeds, got {}", seeds.len())));
    }
    let p = unit(p)?;
    if radii.is_empty() || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("radii must increase".into()));
    }
    let r_max = *radii.last().unwrap_or(&1.0);
    let base = p * r_max;
    let rows = seeds
        .par_iter()
        .map(|&seed| {
            let f = sample_field(spec, seed)?;
            let at_origin = ratio_table(&f, &[p], radii, policy)?.remove(0);
            let shifted: FieldRealization = f.shift(base);
            let at_base = ratio_table(&shifted, &[p], &[r_max], policy)?[0][0];
            Ok((at_origin, at_base))
        })
        .collect::<Result<Vec<_>>>()?;
    let dispersion: Vec<f64> = (0..radii.len())
        .map(|k| {
            let xs: Vec<f64> = rows.iter().map(|r| r.0[k]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            if mean.is_finite() && mean > 0.0 {
                sample_std(&xs) / mean
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let first = dispersion[0];
    let last = *dispersion.last().unwrap_or(&first);
    let contracting = last <= 0.5 * first || last == 0.0;
    let origin_vals: Vec<f64> = rows.iter().map(|r| *r.0.last().unwrap_or(&f64::NAN)).collect();
    let base_vals: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let (e0, e1) = (Estimate::from_samples(&origin_vals), Estimate::from_samples(&base_vals));
    let slack = 3.0 * (e0.std_err.powi(2) + e1.std_err.powi(2)).sqrt()
        + 4.0 * policy.h * (spec.velocity_bound() + 1.0) / r_max;
    let agree = (e0.mean - e1.mean).abs() <= slack;
    Ok(ShapeDiagnostics {
        direction: p,
        radii: radii.to_vec(),
        dispersion,
        contracting,
        base_shift: BaseShiftCheck { base, radius: r_max, from_origin: e0, from_base: e1, slack, agree },
    })
}

/// Seeds `derive_seed(base, 0..n)`.
pub fn seed_list(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| derive_seed(base, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disk_wulff(k: usize) -> EffectiveHamiltonian {
        WulffSet::from_qbar(unit_directions(k), vec![1.0; k], vec![0.0; k], 0.0).unwrap().hamiltonian()
    }

    #[test]
    fn zero_field_ratios_are_one() {
        let e = estimate_qbar(
            &FieldSpec::zero(),
            0,
            Vec2::new(1.0, 0.0),
            &[2.0, 4.0, 8.0],
            &GridPolicy { h: 0.05, stencil: 3, pad: 1.0 },
        )
        .unwrap();
        for q in &e.ratios {
            assert!((q - 1.0).abs() < 0.02);
        }
        assert!((e.qbar - 1.0).abs() < 0.02);
        assert!(e.lower_bound_holds);
    }

    #[test]
    fn radii_must_be_increasing() {
        let r = estimate_qbar(&FieldSpec::zero(), 0, Vec2::new(1.0, 0.0), &[2.0, 1.0, 3.0], &GridPolicy::default());
        assert!(r.is_err());
        let r = estimate_qbar(&FieldSpec::zero(), 0, Vec2::new(1.0, 1.0), &[1.0, 2.0, 3.0], &GridPolicy::default());
        assert!(matches!(r, Err(Error::NonUnitDirection(_))));
    }

    #[test]
    fn trap_is_non_homogenizing() {
        let policy = GridPolicy { h: 0.05, stencil: 3, pad: 1.0 };
        let e = estimate_qbar(&FieldSpec::gradient_trap(), 0, Vec2::new(0.0, 1.0), &[1.0, 2.0, 3.0], &policy).unwrap();
        assert!(e.non_homogenizing.is_some());
        let w = build_wulff(&FieldSpec::gradient_trap(), &[0], 8, &[1.0, 2.0, 3.0], &policy);
        assert!(matches!(w, Err(Error::NonHomogenizing { .. })));
    }

    #[test]
    fn zero_field_wulff_is_the_unit_polygon() {
        let w = build_wulff(&FieldSpec::zero(), &[1], 16, &[2.0, 3.0, 4.0], &GridPolicy { h: 0.05, stencil: 3, pad: 1.0 })
            .unwrap();
        for r in &w.raw_radii {
            assert!((r - 1.0).abs() < 0.02, "{r}");
        }
        let h = w.hamiltonian();
        assert_eq!(support(&h, Vec2::ZERO), 0.0);
        for p in unit_directions(64) {
            assert!((support(&h, p) - 1.0).abs() < 0.02);
        }
    }

    proptest! {
        #[test]
        fn support_is_homogeneous_and_subadditive(
            a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64, d in -10.0..10.0f64
        ) {
            let h = disk_wulff(32);
            let (p, q) = (Vec2::new(a, b), Vec2::new(c, d));
            prop_assert_eq!(support(&h, p * 2.0), 2.0 * support(&h, p));
            let lhs = support(&h, p + q);
            let rhs = support(&h, p) + support(&h, q);
            prop_assert!(lhs <= rhs + 1e-12 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn convexification_flattens_a_dent() {
        let k = 16;
        let mut q = vec![1.0; k];
        q[3] = 1.5;
        let w = WulffSet::from_qbar(unit_directions(k), q, vec![0.0; k], 0.0).unwrap();
        assert_eq!(w.vertices.len(), k - 1);
        assert!(w.radii[3] > w.raw_radii[3]);
        assert!(w.convexification_change > 0.3);
        assert!(w.inradius() > 0.9);
    }

    #[test]
    fn zero_field_has_no_dispersion() {
        let d = shape_diagnostics(
            &FieldSpec::zero(),
            &seed_list(3, 5),
            Vec2::new(1.0, 0.0),
            &[2.0, 4.0],
            &GridPolicy { h: 0.1, stencil: 3, pad: 1.0 },
        )
        .unwrap();
        assert!(d.dispersion.iter().all(|&x| x == 0.0));
        assert!(d.base_shift.agree);
    }
}
