//! The eps-scaled G-equation `u_t + V(x / eps) . Du = |Du|` and its
//! homogenized limit `u_t = H(Du)`.
//!
//! Three independent solvers:
//!
//! - [`solve_geq`]: explicit monotone Lax-Friedrichs scheme.
//! - [`ueps_rep`]: the control representation, `u(t, x)` is the sup of `u0`
//!   over the points reachable from `x` within time `t` under
//!   `X' = -V(X / eps) + alpha`.
//! - [`solve_effective`]: the Hopf-Lax formula `sup { u0(y) : y in x + t W }`
//!   for a Wulff set `W`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::DriftSign;
use crate::error::{Error, Result};
use crate::fields::{sample_field, FieldSpec, VelocityField};
use crate::geometry::{polygon_contains, Vec2};
use crate::homogenize::{build_wulff, seed_list, GridPolicy, WulffSet};
use crate::traveltime::{bilinear, Grid2, SolverGraph, StopRule};

/// Samples of a scalar function on the nodes of a grid at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField2 {
    pub grid: Grid2,
    pub t: f64,
    pub values: Vec<f64>,
}

impl ScalarField2 {
    pub fn from_fn(grid: Grid2, t: f64, f: impl Fn(Vec2) -> f64 + Sync) -> ScalarField2 {
        let values = (0..grid.len()).into_par_iter().map(|k| f(grid.position(k))).collect();
        ScalarField2 { grid, t, values }
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Bilinear interpolation; NaN outside the grid.
    pub fn interp(&self, x: Vec2) -> f64 {
        match self.grid.cell(x) {
            Some((i, j, fx, fy)) => {
                let v = |a, b| self.values[self.grid.index(i + a, j + b)];
                bilinear(v(0, 0), v(1, 0), v(0, 1), v(1, 1), fx, fy)
            }
            None => f64::NAN,
        }
    }

    /// Largest `|self - other|` over nodes of `self` inside the disk `B_r(c)`.
    pub fn max_diff_in_disk(&self, other: &ScalarField2, c: Vec2, r: f64) -> f64 {
        self.grid
            .nodes_in_disk(c, r)
            .into_iter()
            .map(|k| (self.values[k] - other.interp(self.grid.position(k))).abs())
            .fold(0.0, f64::max)
    }
}

/// Bounded, uniformly continuous initial data with a known Lipschitz constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// `cos(p . x)`.
    Cosine { p: Vec2 },
    /// `height cos^2(pi |x - c| / 2 radius)` inside the disk, 0 outside.
    Bump { center: Vec2, radius: f64, height: f64 },
    /// `scale tanh(d / scale)` with `d` the signed distance to a circle,
    /// negative inside.
    DiskDistance { center: Vec2, radius: f64, scale: f64 },
    Constant { value: f64 },
    /// Bilinear interpolation of samples; constant extension outside is not
    /// provided, so evaluation points must stay inside the grid.
    Gridded { field: Box<ScalarField2> },
}

impl InitialData {
    pub fn cosine(p1: f64, p2: f64) -> InitialData {
        InitialData::Cosine { p: Vec2::new(p1, p2) }
    }

    pub fn eval(&self, x: Vec2) -> f64 {
        match self {
            InitialData::Cosine { p } => p.dot(x).cos(),
            InitialData::Bump { center, radius, height } => {
                let r = x.distance(*center);
                if r >= *radius {
                    0.0
                } else {
                    height * (0.5 * PI * r / radius).cos().powi(2)
                }
            }
            InitialData::DiskDistance { center, radius, scale } => {
                scale * ((x.distance(*center) - radius) / scale).tanh()
            }
            InitialData::Constant { value } => *value,
            InitialData::Gridded { field } => field.interp(x),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            InitialData::Cosine { p } => p.norm(),
            InitialData::Bump { radius, height, .. } => height.abs() * 0.5 * PI / radius,
            InitialData::DiskDistance { .. } => 1.0,
            InitialData::Constant { .. } => 0.0,
            InitialData::Gridded { field } => {
                let g = field.grid;
                let n = g.side();
                let mut lip: f64 = 0.0;
                for j in 0..n {
                    for i in 0..n {
                        let v = field.values[g.index(i, j)];
                        if i + 1 < n {
                            lip = lip.max((field.values[g.index(i + 1, j)] - v).abs());
                        }
                        if j + 1 < n {
                            lip = lip.max((field.values[g.index(i, j + 1)] - v).abs());
                        }
                    }
                }
                // Bilinear interpolants have gradient at most sqrt(2) times the largest axis slope.
                std::f64::consts::SQRT_2 * lip / g.spacing()
            }
        }
    }

    pub fn sup_abs(&self) -> f64 {
        match self {
            InitialData::Cosine { .. } => 1.0,
            InitialData::Bump { height, .. } => height.abs(),
            InitialData::DiskDistance { scale, .. } => scale.abs(),
            InitialData::Constant { value } => value.abs(),
            InitialData::Gridded { field } => field.sup_abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            InitialData::Cosine { p } => p.is_finite(),
            InitialData::Bump { center, radius, height } => center.is_finite() && *radius > 0.0 && height.is_finite(),
            InitialData::DiskDistance { center, radius, scale } => {
                center.is_finite() && radius.is_finite() && *scale > 0.0
            }
            InitialData::Constant { value } => value.is_finite(),
            InitialData::Gridded { field } => field.values.iter().all(|v| v.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid initial data {self:?}")))
        }
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("times must be finite, non-negative and increasing".into()));
    }
    Ok(())
}

/// Lax-Friedrichs solve of `u_t + V(x / eps) . Du - |Du| = 0` on `grid`.
///
/// The numerical Hamiltonian is `F(p_mean) - (sigma / 2) sum_i (p_i^+ - p_i^-)`
/// with one-sided differences `p^-`, `p^+` and global viscosity `sigma`,
/// `1 + V_inf` unless given; with `dt = cfl h / (2 sigma)` and `cfl <= 1` the
/// update is a monotone convex combination. Boundary ghost nodes copy their
/// neighbor. Returns one snapshot per requested time, hit exactly.
pub fn solve_geq<F: VelocityField + ?Sized>(
    field: &F,
    eps: f64,
    u0: &InitialData,
    times: &[f64],
    grid: &Grid2,
    cfl: f64,
    sigma: Option<f64>,
) -> Result<Vec<ScalarField2>> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::CflViolation(cfl));
    }
    let min_sigma = 1.0 + field.speed_bound();
    let sigma = sigma.unwrap_or(min_sigma);
    if !(sigma >= min_sigma && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("viscosity {sigma} is below the monotonicity bound {min_sigma}")));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 1], got {eps}")));
    }
    check_times(times)?;
    u0.validate()?;
    let n = grid.side();
    let h = grid.spacing();
    let dt_max = cfl * h / (2.0 * sigma);
    let vel: Vec<Vec2> = (0..grid.len()).into_par_iter().map(|k| field.velocity_at(grid.position(k) / eps)).collect();
    let mut u: Vec<f64> = match u0 {
        InitialData::Gridded { field: f } if f.grid == *grid => f.values.clone(),
        _ => (0..grid.len()).into_par_iter().map(|k| u0.eval(grid.position(k))).collect(),
    };
    let mut next = vec![0.0; u.len()];
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    for &target in times {
        while t < target {
            let remaining = target - t;
            let (dt, last) = if remaining <= dt_max * (1.0 + 1e-12) { (remaining, true) } else { (dt_max, false) };
            lax_friedrichs_step(&u, &mut next, &vel, n, h, dt, sigma);
            std::mem::swap(&mut u, &mut next);
            t = if last { target } else { t + dt };
        }
        out.push(ScalarField2 { grid: *grid, t: target, values: u.clone() });
    }
    Ok(out)
}

fn lax_friedrichs_step(u: &[f64], next: &mut [f64], vel: &[Vec2], n: usize, h: f64, dt: f64, sigma: f64) {
    next.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
        let jm = j.saturating_sub(1);
        let jp = (j + 1).min(n - 1);
        for (i, out) in row.iter_mut().enumerate() {
            let im = i.saturating_sub(1);
            let ip = (i + 1).min(n - 1);
            let c = u[j * n + i];
            let px_m = (c - u[j * n + im]) / h;
            let px_p = (u[j * n + ip] - c) / h;
            let py_m = (c - u[jm * n + i]) / h;
            let py_p = (u[jp * n + i] - c) / h;
            let px = 0.5 * (px_m + px_p);
            let py = 0.5 * (py_m + py_p);
            let v = vel[j * n + i];
            let ham = v.x * px + v.y * py - px.hypot(py);
            let visc = 0.5 * sigma * ((px_p - px_m) + (py_p - py_m));
            *out = c - dt * (ham - visc);
        }
    });
}

/// Discretization of the control representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepOptions {
    /// Lattice spacing in the fast variable `x / eps`.
    pub h: f64,
    pub stencil: u8,
}

impl Default for RepOptions {
    fn default() -> Self {
        RepOptions { h: 0.4, stencil: 3 }
    }
}

/// `u(t, x) = sup { u0(y) : tau_eps(x, y) <= t }` at every node of `eval`.
///
/// Travel times are computed in the fast variable `Y = x / eps`, where
/// `tau_eps = eps tau_1`. One graph serves every evaluation point; each point
/// runs a truncated solve and a running max of `u0` over nodes in settle
/// order yields all requested times in one pass.
pub fn ueps_rep<F: VelocityField + ?Sized>(
    field: &F,
    eps: f64,
    u0: &InitialData,
    times: &[f64],
    eval: &Grid2,
    opts: &RepOptions,
) -> Result<Vec<ScalarField2>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    check_times(times)?;
    u0.validate()?;
    let t_max = times.last().copied().unwrap_or(0.0);
    let budget = t_max / eps;
    let reach = (field.speed_bound() + 1.0) * budget + 2.0 * opts.h;
    let c = eval.center() / eps;
    let center = Vec2::new((c.x / opts.h).round() * opts.h, (c.y / opts.h).round() * opts.h);
    let half = eval.half_width() / eps + reach + center.distance(c);
    let grid = Grid2::covering(center, half, opts.h, opts.stencil)?;
    let graph = SolverGraph::new(field, grid, DriftSign::Minus, 1.0)?;
    let per_point: Vec<Result<Vec<f64>>> = (0..eval.len())
        .into_par_iter()
        .map_init(
            || graph.workspace(),
            |ws, k| {
                let y0 = eval.position(k) / eps;
                let src = grid.nearest(y0).ok_or(Error::OutsideGrid(y0))?;
                graph.run(ws, &[src], &StopRule::budget(budget))?;
                let mut sup = f64::NEG_INFINITY;
                let mut vals = vec![f64::NAN; times.len()];
                let mut next = 0;
                for (node, v) in ws.settled_order() {
                    while next < times.len() && v > times[next] / eps {
                        vals[next] = sup;
                        next += 1;
                    }
                    if next == times.len() {
                        break;
                    }
                    sup = sup.max(u0.eval(grid.position(node) * eps));
                }
                for slot in vals.iter_mut().skip(next) {
                    *slot = sup;
                }
                Ok(vals)
            },
        )
        .collect();
    let per_point = per_point.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(times
        .iter()
        .enumerate()
        .map(|(m, &t)| ScalarField2 { grid: *eval, t, values: per_point.iter().map(|v| v[m]).collect() })
        .collect())
}

/// Offsets sampling the polygon `t W` on a lattice of step `delta`, plus its
/// boundary and vertices.
fn polygon_samples(w: &WulffSet, t: f64, delta: f64) -> Vec<Vec2> {
    if t == 0.0 {
        return vec![Vec2::ZERO];
    }
    let verts: Vec<Vec2> = w.vertices.iter().map(|v| *v * t).collect();
    let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for v in &verts {
        lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
        hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
    }
    let mut out = verts.clone();
    let nx = ((hi.x - lo.x) / delta).ceil() as usize;
    let ny = ((hi.y - lo.y) / delta).ceil() as usize;
    for j in 0..=ny {
        for i in 0..=nx {
            let z = lo + Vec2::new(i as f64 * delta, j as f64 * delta);
            if polygon_contains(&verts, z, 1e-12) {
                out.push(z);
            }
        }
    }
    let m = verts.len();
    for k in 0..m {
        let (a, b) = (verts[k], verts[(k + 1) % m]);
        let steps = (a.distance(b) / delta).ceil().max(1.0) as usize;
        for s in 1..steps {
            out.push(a + (b - a) * (s as f64 / steps as f64));
        }
    }
    out
}

/// Hopf-Lax solution `sup { u0(y) : y in x + t W }` at every node of `eval`.
///
/// The polygon is sampled with step `sampling_tol / Lip(u0)`, so the result
/// is within `sampling_tol` of the exact sup.
pub fn solve_effective(
    w: &WulffSet,
    u0: &InitialData,
    times: &[f64],
    eval: &Grid2,
    sampling_tol: f64,
) -> Result<Vec<ScalarField2>> {
    check_times(times)?;
    u0.validate()?;
    if !(sampling_tol > 0.0) {
        return Err(Error::InvalidArgument("sampling tolerance must be positive".into()));
    }
    let lip = u0.lipschitz();
    let scale = w.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let delta = if lip > 0.0 { sampling_tol / lip } else { f64::INFINITY }.min(scale.max(1e-3));
    Ok(times
        .iter()
        .map(|&t| {
            let offsets = polygon_samples(w, t, delta);
            ScalarField2::from_fn(*eval, t, |x| {
                offsets.iter().map(|o| u0.eval(x + *o)).fold(f64::NEG_INFINITY, f64::max)
            })
        })
        .collect())
}

/// Settings for [`homogenization_error`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomogenizationOptions {
    /// Number of equally spaced times in `(0, T]`.
    pub time_steps: usize,
    /// Spacing of the evaluation grid over `B_R`.
    pub eval_h: f64,
    pub rep: RepOptions,
    pub wulff_directions: usize,
    pub wulff_seeds: usize,
    pub wulff_radii: Vec<f64>,
    pub wulff_pad: f64,
    pub sampling_tol: f64,
}

impl Default for HomogenizationOptions {
    fn default() -> Self {
        HomogenizationOptions {
            time_steps: 4,
            eval_h: 1.0,
            rep: RepOptions::default(),
            wulff_directions: 32,
            wulff_seeds: 4,
            wulff_radii: vec![20.0, 40.0, 80.0],
            wulff_pad: 10.0,
            sampling_tol: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogenizationReport {
    pub eps: Vec<f64>,
    /// `max |u_eps - u_bar|` over the time grid and the nodes in `B_R`.
    pub errors: Vec<f64>,
    pub times: Vec<f64>,
    pub strictly_decreasing: bool,
    /// Last error over first error.
    pub reduction: f64,
    pub wulff: WulffSet,
}

/// Distance between the control representation at each `eps` and the
/// homogenized solution built from an estimated Wulff set.
pub fn homogenization_error(
    spec: &FieldSpec,
    seed: u64,
    u0: &InitialData,
    t_end: f64,
    eps_list: &[f64],
    radius: f64,
    opts: &HomogenizationOptions,
) -> Result<HomogenizationReport> {
    if eps_list.is_empty() || eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("eps list must be non-empty and decreasing".into()));
    }
    if !(t_end > 0.0) || opts.time_steps == 0 {
        return Err(Error::InvalidArgument("need T > 0 and at least one time step".into()));
    }
    let policy = GridPolicy { h: opts.rep.h, stencil: opts.rep.stencil, pad: opts.wulff_pad };
    let wulff = build_wulff(spec, &seed_list(seed, opts.wulff_seeds), opts.wulff_directions, &opts.wulff_radii, &policy)?;
    let times: Vec<f64> = (1..=opts.time_steps).map(|k| t_end * k as f64 / opts.time_steps as f64).collect();
    let eval = Grid2::covering(Vec2::ZERO, radius, opts.eval_h, 1)?;
    let inside = eval.nodes_in_disk(Vec2::ZERO, radius);
    let effective = solve_effective(&wulff, u0, &times, &eval, opts.sampling_tol)?;
    let field = sample_field(spec, seed)?;
    let mut errors = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let rep = ueps_rep(&field, eps, u0, &times, &eval, &opts.rep)?;
        let e = rep
            .iter()
            .zip(&effective)
            .flat_map(|(a, b)| inside.iter().map(move |&k| (a.values[k] - b.values[k]).abs()))
            .fold(0.0, f64::max);
        errors.push(e);
    }
    let strictly_decreasing = errors.windows(2).all(|w| w[1] < w[0]);
    let reduction = errors.last().copied().unwrap_or(f64::NAN) / errors[0];
    Ok(HomogenizationReport { eps: eps_list.to_vec(), errors, times, strictly_decreasing, reduction, wulff })
}
