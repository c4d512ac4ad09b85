//! Empirical checks of the sufficient conditions for homogenization and of
//! the travel-time bounds behind them.
//!
//! Every check returns a [`ConditionReport`] carrying its parameters, the
//! measured quantities, a verdict and witnesses. Verdicts such as "bounded"
//! or "finite" are finite-sample evidence, never proofs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::control::DriftSign;
use crate::error::{Error, Result};
use crate::fields::{derive_seed, sample_field, FieldRealization, FieldSpec, VelocityField};
use crate::geometry::Vec2;
use crate::homogenize::{seed_list, GridPolicy};
use crate::stats::{wilson_interval, Estimate};
use crate::traveltime::{gamma_on_graph, Grid2, SolverGraph, StopRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub name: String,
    pub value: f64,
    pub std_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub note: String,
    pub seed: Option<u64>,
    pub points: Vec<Vec2>,
    pub value: f64,
}

/// Plot-ready table; one row per sample point of the check.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub id: String,
    pub params: serde_json::Value,
    pub estimates: Vec<Quantity>,
    pub table: Table,
    pub passed: bool,
    pub verdict: String,
    pub witnesses: Vec<Witness>,
}

impl ConditionReport {
    fn new(id: &str, params: serde_json::Value) -> ConditionReport {
        ConditionReport {
            id: id.into(),
            params,
            estimates: Vec::new(),
            table: Table::default(),
            passed: false,
            verdict: String::new(),
            witnesses: Vec::new(),
        }
    }

    fn put(&mut self, name: &str, value: f64) {
        self.estimates.push(Quantity { name: name.into(), value, std_err: None });
    }

    fn put_est(&mut self, name: &str, e: &Estimate) {
        self.estimates.push(Quantity { name: name.into(), value: e.mean, std_err: Some(e.std_err) });
    }

    fn witness(&mut self, note: impl Into<String>, seed: Option<u64>, points: Vec<Vec2>, value: f64) {
        self.witnesses.push(Witness { note: note.into(), seed, points, value });
    }

    /// Value of a named estimate.
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.estimates.iter().find(|q| q.name == name).map(|q| q.value)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.table.columns.iter().position(|n| n == name)?;
        Some(self.table.rows.iter().map(|r| r[c]).collect())
    }
}

/// Lattice points of spacing `step` in the closed disk `B_r(c)`.
fn disk_samples(c: Vec2, r: f64, step: f64) -> Vec<Vec2> {
    let n = (r / step).floor() as i64;
    let mut out = Vec::new();
    for j in -n..=n {
        for i in -n..=n {
            let d = Vec2::new(i as f64 * step, j as f64 * step);
            if d.norm_sq() <= r * r {
                out.push(c + d);
            }
        }
    }
    out
}

/// Cutoff profile: 0 up to `M`, a C^2 monotone bridge on `[M, M + 1]` with
/// slope at most 1/2, then `s/2 - M/2 - 1/6`.
pub fn rho(s: f64, m: f64) -> f64 {
    if s <= m {
        0.0
    } else if s >= m + 1.0 {
        0.5 * (s - m) - 1.0 / 6.0
    } else {
        let w = 1.0 - (s - m);
        0.5 * ((s - m) - 1.0 / 3.0 + w.powi(5) - 2.0 / 3.0 * w.powi(6))
    }
}

pub fn rho_prime(s: f64, m: f64) -> f64 {
    if s <= m {
        0.0
    } else if s >= m + 1.0 {
        0.5
    } else {
        let u = s - m;
        0.5 * (1.0 - (1.0 - u).powi(4) * (1.0 + 4.0 * u))
    }
}

/// `Psi + phi` with `phi(x) = rho(|x - z|, M)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModifiedStream {
    pub base: FieldRealization,
    pub center: Vec2,
    pub m: f64,
}

/// Result of checking the annulus bounds of the modified stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusCheck {
    pub k: f64,
    pub inner: f64,
    pub outer: f64,
    pub min: f64,
    pub max: f64,
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
}

pub fn modify_stream(field: &FieldRealization, z: Vec2, m: f64) -> Result<ModifiedStream> {
    if !(m > 0.0 && m.is_finite()) || !z.is_finite() {
        return Err(Error::InvalidArgument(format!("modify_stream needs M > 0, got {m}")));
    }
    if !field.spec().is_divergence_free() {
        return Err(Error::Hypothesis { at: z, reason: "field has no stream function".into() });
    }
    Ok(ModifiedStream { base: field.clone(), center: z, m })
}

impl ModifiedStream {
    pub fn phi(&self, x: Vec2) -> f64 {
        rho(x.distance(self.center), self.m)
    }

    pub fn grad_phi(&self, x: Vec2) -> Vec2 {
        let d = x - self.center;
        let r = d.norm();
        if r <= self.m {
            return Vec2::ZERO;
        }
        d * (rho_prime(r, self.m) / r)
    }

    pub fn psi(&self, x: Vec2) -> f64 {
        self.base.psi(x) + self.phi(x)
    }

    /// `V + perp(grad phi)`.
    pub fn velocity(&self, x: Vec2) -> Vec2 {
        self.base.velocity(x) + self.grad_phi(x).perp()
    }

    /// Bounds on `Psi_hat(x) - Psi_hat(z)` over `M + 1 + 4K <= |x - z| <= 3M + 1 + 4K`,
    /// valid when `|Psi - Psi(z)| <= K` on the disk of radius `3M + 5K`.
    pub fn annulus_check(&self, k: f64, step: f64) -> AnnulusCheck {
        let (inner, outer) = (self.m + 1.0 + 4.0 * k, 3.0 * self.m + 1.0 + 4.0 * k);
        let at_z = self.psi(self.center);
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in disk_samples(self.center, outer, step) {
            if x.distance(self.center) >= inner {
                let v = self.psi(x) - at_z;
                min = min.min(v);
                max = max.max(v);
            }
        }
        let (lower, upper) = (k + 1.0 / 3.0, 3.0 * k + 1.0 / 3.0 + self.m);
        AnnulusCheck { k, inner, outer, min, max, lower, upper, holds: min >= lower && max <= upper }
    }
}

impl VelocityField for ModifiedStream {
    fn velocity_at(&self, x: Vec2) -> Vec2 {
        self.velocity(x)
    }

    fn speed_bound(&self) -> f64 {
        self.base.velocity_bound() + 0.5
    }
}

/// Largest `|Psi(x) - Psi(z)|` over lattice samples of `B_r(z)`, with its location.
fn psi_deviation(field: &FieldRealization, z: Vec2, r: f64, step: f64) -> (f64, Vec2) {
    let at_z = field.psi(z);
    disk_samples(z, r, step)
        .into_iter()
        .map(|x| ((field.psi(x) - at_z).abs(), x))
        .fold((0.0, z), |a, b| if b.0 > a.0 { b } else { a })
}

/// Settings for [`check_lemma51`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma51Options {
    pub h: f64,
    pub stencil: u8,
    /// Number of sampled source points in `B_M(z)`.
    pub samples: usize,
    /// Multiplier absorbing discretization in the travel-time bounds.
    pub slack: f64,
    /// Lattice step of the dense stream-function samples.
    pub psi_step: f64,
}

impl Default for Lemma51Options {
    fn default() -> Self {
        Lemma51Options { h: 0.25, stencil: 3, samples: 50, slack: 1.1, psi_step: 0.1 }
    }
}

/// Constants of the travel-time bound `tau <= 17 R` with `R = 3M + 1 + 4K`,
/// and its refined form `C1' K + C2' |x - y|`.
pub const C1: f64 = 85.0;
pub const C2: f64 = 51.0;
pub const C1_PRIME: f64 = 2.0 * C1 + 5.0 * C2;
pub const C2_PRIME: f64 = 4.0 * C2;

/// Travel-time bound through stream growth, checked on the discrete solver.
///
/// `K` is the dense sup of `|Psi - Psi(z)|` on `B_{3M+5K}(z)`, padded by the
/// sampling error and inflated by 5%, iterated until the hypothesis holds.
/// Then, from each sampled source in `B_M(z)` to every node of `B_M(z)`:
/// `tau <= tau_hat` (modified stream, control bound 1/2, same graph),
/// `tau <= 17 R slack` and `tau <= (C1' K + C2' |x - y|) slack`.
pub fn check_lemma51(spec: &FieldSpec, seed: u64, z: Vec2, m: f64, opts: &Lemma51Options) -> Result<ConditionReport> {
    let mut rep = ConditionReport::new(
        "lemma51",
        json!({ "field": spec, "seed": seed, "z": z, "M": m, "options": opts }),
    );
    let field = sample_field(spec, seed)?;
    let ms = modify_stream(&field, z, m)?;
    let lip = spec.velocity_bound();
    let pad = lip * opts.psi_step * std::f64::consts::FRAC_1_SQRT_2;
    let mut k: f64 = 1.05;
    let mut converged = false;
    for _ in 0..60 {
        let (dev, at) = psi_deviation(&field, z, 3.0 * m + 5.0 * k, opts.psi_step);
        let sup = dev + pad;
        if sup <= k {
            converged = true;
            break;
        }
        k = (1.05 * sup).max(k * 1.05);
        if !k.is_finite() {
            return Err(Error::Hypothesis { at, reason: "stream deviation is unbounded".into() });
        }
    }
    if !converged {
        let (_, at) = psi_deviation(&field, z, 3.0 * m + 5.0 * k, opts.psi_step);
        return Err(Error::Hypothesis { at, reason: format!("no K with sup |Psi - Psi(z)| <= K found up to {k}") });
    }
    let r = 3.0 * m + 1.0 + 4.0 * k;
    rep.put("K", k);
    rep.put("R", r);

    // Identity region and gradient bound, densely sampled.
    let identity = disk_samples(z, m, opts.psi_step)
        .into_iter()
        .map(|x| (ms.psi(x) - field.psi(x)).abs().max((ms.velocity(x) - field.velocity(x)).norm()))
        .fold(0.0, f64::max);
    let grad_max = disk_samples(z, m + 2.0, opts.psi_step * 0.1)
        .into_iter()
        .map(|x| ms.grad_phi(x).norm())
        .fold(0.0, f64::max);
    let annulus = ms.annulus_check(k, opts.psi_step);
    rep.put("identity_max_diff", identity);
    rep.put("grad_phi_max", grad_max);
    rep.put("annulus_min", annulus.min);
    rep.put("annulus_max", annulus.max);

    let h = opts.h;
    let center = Vec2::new((z.x / h).round() * h, (z.y / h).round() * h);
    let grid = Grid2::covering(center, r + center.distance(z), h, opts.stencil)?;
    let graph = SolverGraph::new(&field, grid, DriftSign::Minus, 1.0)?;
    let graph_hat = SolverGraph::new(&ms, grid, DriftSign::Minus, 0.5)?;
    let targets = grid.nodes_in_disk(z, m);
    if targets.is_empty() {
        return Err(Error::GridTooSmall("no nodes inside B_M(z)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 51));
    let picks: Vec<(usize, usize)> = (0..opts.samples)
        .map(|_| (targets[rng.random_range(0..targets.len())], targets[rng.random_range(0..targets.len())]))
        .collect();
    let bound17 = 17.0 * r * opts.slack;

    struct PerSource {
        max_tau: f64,
        max_ratio: f64,
        order_violations: Vec<(usize, f64, f64)>,
        bound_violations: Vec<(usize, f64, f64)>,
        pair: (f64, f64),
        unreached: usize,
    }
    let per_source: Vec<Result<PerSource>> = picks
        .par_iter()
        .map_init(
            || (graph.workspace(), graph_hat.workspace()),
            |(ws, ws_hat), &(src, probe)| {
                graph.run(ws, &[src], &StopRule::targets(targets.clone()))?;
                graph_hat.run(ws_hat, &[src], &StopRule::targets(targets.clone()))?;
                let x = grid.position(src);
                let mut out = PerSource {
                    max_tau: 0.0,
                    max_ratio: 0.0,
                    order_violations: Vec::new(),
                    bound_violations: Vec::new(),
                    pair: (0.0, 0.0),
                    unreached: 0,
                };
                for &t in &targets {
                    let tau = ws.settled_value(t).unwrap_or(f64::INFINITY);
                    let tau_hat = ws_hat.settled_value(t).unwrap_or(f64::INFINITY);
                    if !tau.is_finite() {
                        out.unreached += 1;
                    }
                    out.max_tau = out.max_tau.max(tau);
                    if tau > tau_hat * (1.0 + 1e-12) {
                        out.order_violations.push((t, tau, tau_hat));
                    }
                    let refined = (C1_PRIME * k + C2_PRIME * x.distance(grid.position(t))) * opts.slack;
                    if tau > bound17 || tau > refined {
                        out.bound_violations.push((t, tau, refined.min(bound17)));
                    }
                    if tau > 0.0 && tau.is_finite() {
                        out.max_ratio = out.max_ratio.max(tau / (C1_PRIME * k + C2_PRIME * x.distance(grid.position(t))));
                    }
                    if t == probe {
                        out.pair = (tau, tau_hat);
                    }
                }
                Ok(out)
            },
        )
        .collect();

    rep.table.columns = ["x1", "x2", "y1", "y2", "tau", "tau_hat"].map(String::from).to_vec();
    let (mut max_tau, mut max_ratio, mut checked, mut order_bad, mut bound_bad, mut unreached) = (0.0, 0.0, 0, 0, 0, 0);
    let mut pairs_ordered = 0;
    for (&(src, probe), res) in picks.iter().zip(per_source) {
        let s = res?;
        let x = grid.position(src);
        let y = grid.position(probe);
        rep.table.rows.push(vec![x.x, x.y, y.x, y.y, s.pair.0, s.pair.1]);
        if s.pair.0 <= s.pair.1 * (1.0 + 1e-12) {
            pairs_ordered += 1;
        }
        max_tau = f64::max(max_tau, s.max_tau);
        max_ratio = f64::max(max_ratio, s.max_ratio);
        checked += targets.len();
        unreached += s.unreached;
        order_bad += s.order_violations.len();
        bound_bad += s.bound_violations.len();
        if let Some(&(t, a, b)) = s.order_violations.first() {
            rep.witness("tau exceeds tau_hat", Some(seed), vec![x, grid.position(t)], a - b);
        }
        if let Some(&(t, a, b)) = s.bound_violations.first() {
            rep.witness("tau exceeds the stream-growth bound", Some(seed), vec![x, grid.position(t)], a - b);
        }
    }
    rep.put("pairs_checked", checked as f64);
    rep.put("sampled_pairs_ordered", pairs_ordered as f64);
    rep.put("order_violations", order_bad as f64);
    rep.put("bound_violations", bound_bad as f64);
    rep.put("unreached", unreached as f64);
    rep.put("max_tau", max_tau);
    rep.put("bound_17R", bound17);
    rep.put("max_tau_over_refined", max_ratio);
    // The norm of d * rho'(r) / r can round one ulp above rho'(r).
    rep.passed = identity == 0.0
        && grad_max <= 0.5 * (1.0 + 1e-12)
        && annulus.holds
        && order_bad == 0
        && bound_bad == 0
        && unreached == 0
        && pairs_ordered == picks.len();
    rep.verdict = if rep.passed {
        format!("bounds hold on {checked} pairs (finite-sample evidence)")
    } else {
        "violated".into()
    };
    if !annulus.holds {
        rep.witness("annulus bound violated", Some(seed), vec![z], annulus.min.min(annulus.max));
    }
    Ok(rep)
}

/// Grid for the travel-time checks over `B_R`.
fn ball_grid(radius: f64, policy: &GridPolicy) -> Result<Grid2> {
    Grid2::covering(Vec2::ZERO, radius + policy.pad, policy.h, policy.stencil)
}

fn gamma_for(spec: &FieldSpec, seed: u64, radius: f64, sources: usize, policy: &GridPolicy) -> Result<crate::traveltime::GammaEstimate> {
    let field = sample_field(spec, seed)?;
    let graph = SolverGraph::new(&field, ball_grid(radius, policy)?, DriftSign::Minus, 1.0)?;
    gamma_on_graph(&graph, radius, sources)
}

/// Settings shared by the gamma-based checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaOptions {
    pub grid: GridPolicy,
    pub sources: usize,
    /// Largest allowed relative change of the last two ratios.
    pub flat_tol: f64,
}

impl Default for GammaOptions {
    fn default() -> Self {
        GammaOptions { grid: GridPolicy { h: 0.25, stencil: 3, pad: 5.0 }, sources: 8, flat_tol: 0.2 }
    }
}

/// Ratios `gamma(R) / R` per seed over a geometric radius schedule.
///
/// Bounded when no ratio is infinite and, for every seed, the last two
/// ratios differ by less than `flat_tol`.
pub fn check_taubound(spec: &FieldSpec, seeds: &[u64], radii: &[f64], opts: &GammaOptions) -> Result<ConditionReport> {
    if radii.len() < 4 || radii.windows(2).any(|w| !(w[1] > w[0])) || seeds.is_empty() {
        return Err(Error::InvalidArgument("taubound needs at least 4 increasing radii and one seed".into()));
    }
    let mut rep = ConditionReport::new(
        "taubound",
        json!({ "field": spec, "seeds": seeds, "radii": radii, "options": opts }),
    );
    rep.table.columns = ["seed", "R", "gamma", "ratio"].map(String::from).to_vec();
    let mut bounded = true;
    let mut spread: f64 = 0.0;
    let mut last_change: f64 = 0.0;
    for &seed in seeds {
        let mut ratios = Vec::with_capacity(radii.len());
        for &r in radii {
            let g = gamma_for(spec, seed, r, opts.sources, &opts.grid)?;
            if g.unreachable {
                bounded = false;
                let pts = g.argmax.map(|(a, b)| vec![a, b]).unwrap_or_default();
                rep.witness(format!("unreachable pair inside B_{r}"), Some(seed), pts, f64::INFINITY);
            }
            rep.table.rows.push(vec![seed as f64, r, g.value, g.value / r]);
            ratios.push(g.value / r);
        }
        let finite = ratios.iter().all(|v| v.is_finite());
        if finite {
            let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
            spread = spread.max(hi / lo - 1.0);
            let n = ratios.len();
            let change = (ratios[n - 1] - ratios[n - 2]).abs() / ratios[n - 2];
            last_change = last_change.max(change);
            if change >= opts.flat_tol {
                bounded = false;
                rep.witness("ratio still moving at the largest radii", Some(seed), vec![], change);
            }
        } else {
            spread = f64::INFINITY;
            last_change = f64::INFINITY;
        }
    }
    rep.put("max_last_change", last_change);
    rep.put("max_spread", spread);
    rep.passed = bounded;
    rep.verdict = if bounded { "bounded (finite-sample evidence)".into() } else { "not bounded".into() };
    Ok(rep)
}

/// Monte Carlo mean of `gamma(R)` with exceedance fractions above
/// `mean + j sd`, `j = 1, 2, 3`.
///
/// Finite when no sample is infinite and the exceedance mass decays.
pub fn check_gammaexp(spec: &FieldSpec, n: usize, base_seed: u64, radius: f64, opts: &GammaOptions) -> Result<ConditionReport> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!("gammaexp needs at least 10 seeds, got {n}")));
    }
    let mut rep = ConditionReport::new(
        "gammaexp",
        json!({ "field": spec, "n": n, "seed": base_seed, "R": radius, "options": opts }),
    );
    let seeds = seed_list(base_seed, n);
    let mut values = Vec::with_capacity(n);
    rep.table.columns = ["seed", "gamma"].map(String::from).to_vec();
    for &seed in &seeds {
        let g = gamma_for(spec, seed, radius, opts.sources, &opts.grid)?;
        if g.unreachable {
            let pts = g.argmax.map(|(a, b)| vec![a, b]).unwrap_or_default();
            rep.witness("unreachable pair", Some(seed), pts, f64::INFINITY);
        }
        rep.table.rows.push(vec![seed as f64, g.value]);
        values.push(g.value);
    }
    let finite = values.iter().all(|v| v.is_finite());
    let est = Estimate::from_samples(&values);
    rep.put_est("mean_gamma", &est);
    let sd = est.std_err * (n as f64).sqrt();
    let mut exceed = [0usize; 3];
    for (j, slot) in exceed.iter_mut().enumerate() {
        *slot = values.iter().filter(|&&v| v > est.mean + (j + 1) as f64 * sd).count();
        let (lo, hi) = wilson_interval(*slot, n, 1.96);
        rep.put(&format!("tail_{}sd", j + 1), *slot as f64 / n as f64);
        rep.put(&format!("tail_{}sd_wilson_lo", j + 1), lo);
        rep.put(&format!("tail_{}sd_wilson_hi", j + 1), hi);
    }
    let decays = exceed[0] == 0 || exceed[2] < exceed[0];
    rep.passed = finite && decays;
    rep.verdict = if rep.passed {
        "finite mean (finite-sample evidence)".into()
    } else if !finite {
        "infinite samples".into()
    } else {
        "tail does not decay".into()
    };
    Ok(rep)
}

/// Settings for [`stream_growth_integral`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamGrowthOptions {
    /// Lattice step of the dense sup.
    pub step: f64,
    /// Upper bound on the integral for the check to pass; none means no bound.
    pub max_integral: Option<f64>,
}

impl Default for StreamGrowthOptions {
    fn default() -> Self {
        StreamGrowthOptions { step: 0.05, max_integral: None }
    }
}

/// Monte Carlo estimate of `int_0^inf P(sup_{|x| <= r} |Psi(x) - Psi(0)| > r/6) dr`.
///
/// For a bounded stream, `sup |Psi(x) - Psi(0)| <= 2 ||Psi||`, so the
/// probability vanishes for `r >= 12 ||Psi||` and the integral over the
/// sampled grid is the whole integral; the grid must then reach that cutoff.
pub fn stream_growth_integral(
    spec: &FieldSpec,
    r_grid: &[f64],
    n: usize,
    seed: u64,
    opts: &StreamGrowthOptions,
) -> Result<ConditionReport> {
    if r_grid.len() < 2 || r_grid[0] != 0.0 || r_grid.windows(2).any(|w| !(w[1] > w[0])) || n == 0 {
        return Err(Error::InvalidArgument("r grid must start at 0 and increase; n > 0".into()));
    }
    let mut rep = ConditionReport::new(
        "stream-growth",
        json!({ "field": spec, "r_grid": r_grid, "n": n, "seed": seed, "options": opts }),
    );
    if !spec.is_divergence_free() {
        rep.verdict = "no stream function".into();
        return Ok(rep);
    }
    let r_max = *r_grid.last().unwrap_or(&0.0);
    let r_cut = spec.psi_bound().map(|b| 12.0 * b);
    if let Some(c) = r_cut {
        if r_max < c {
            return Err(Error::InvalidArgument(format!("r grid must reach the cutoff {c}")));
        }
    }
    let mut pts = disk_samples(Vec2::ZERO, r_max, opts.step);
    pts.sort_by(|a, b| a.norm_sq().total_cmp(&b.norm_sq()));
    let counts: Vec<Vec<bool>> = (0..n as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<bool>> {
            let f = sample_field(spec, derive_seed(seed, i))?;
            let at0 = f.psi(Vec2::ZERO);
            let mut exceed = vec![false; r_grid.len()];
            let mut sup: f64 = 0.0;
            let mut next = 0;
            for p in &pts {
                let d = p.norm();
                while next < r_grid.len() && d > r_grid[next] {
                    exceed[next] = sup > r_grid[next] / 6.0;
                    next += 1;
                }
                sup = sup.max((f.psi(*p) - at0).abs());
            }
            for k in next..r_grid.len() {
                exceed[k] = sup > r_grid[k] / 6.0;
            }
            Ok(exceed)
        })
        .collect::<Result<Vec<_>>>()?;
    rep.table.columns = ["r", "probability", "wilson_lo", "wilson_hi"].map(String::from).to_vec();
    let mut probs = Vec::with_capacity(r_grid.len());
    let mut highs = Vec::with_capacity(r_grid.len());
    for (k, &r) in r_grid.iter().enumerate() {
        let hits = counts.iter().filter(|c| c[k]).count();
        let (lo, hi) = wilson_interval(hits, n, 1.96);
        let p = hits as f64 / n as f64;
        rep.table.rows.push(vec![r, p, lo, hi]);
        probs.push(p);
        highs.push(hi);
    }
    let trapezoid = |ys: &[f64]| -> f64 { r_grid.windows(2).zip(ys.windows(2)).map(|(r, y)| 0.5 * (r[1] - r[0]) * (y[0] + y[1])).sum() };
    let integral = trapezoid(&probs);
    rep.put("integral", integral);
    rep.put("integral_wilson_hi", trapezoid(&highs));
    let tail_zero = match r_cut {
        Some(c) => {
            rep.put("r_cut", c);
            r_grid.iter().zip(&probs).filter(|(r, _)| **r >= c).all(|(_, p)| *p == 0.0)
        }
        None => false,
    };
    rep.put("tail_zero", if tail_zero { 1.0 } else { 0.0 });
    rep.passed = tail_zero && opts.max_integral.is_none_or(|m| integral <= m);
    rep.verdict = match r_cut {
        Some(_) if tail_zero => "finite: probability vanishes beyond the cutoff".into(),
        Some(_) => "sampled probability nonzero beyond the cutoff".into(),
        None => "unbounded stream: integral over the sampled range only".into(),
    };
    Ok(rep)
}

/// Monte Carlo third absolute moment of `Psi(0)`.
///
/// Requires a stationary stream function. With `expected`, passes when the
/// estimate is within `sigmas` standard errors of it.
pub fn check_moment3(spec: &FieldSpec, n: usize, seed: u64, expected: Option<f64>, sigmas: f64) -> Result<ConditionReport> {
    let mut rep = ConditionReport::new(
        "moment3",
        json!({ "field": spec, "n": n, "seed": seed, "expected": expected, "sigmas": sigmas }),
    );
    if !spec.has_stationary_stream() {
        rep.verdict = "stream function is not stationary".into();
        rep.witness("generator rejected", None, vec![], f64::NAN);
        return Ok(rep);
    }
    if n < 2 {
        return Err(Error::InvalidArgument("moment3 needs at least 2 samples".into()));
    }
    let xs: Vec<f64> = (0..n as u64)
        .into_par_iter()
        .map(|i| sample_field(spec, derive_seed(seed, i)).map(|f| f.psi(Vec2::ZERO).abs().powi(3)))
        .collect::<Result<Vec<_>>>()?;
    let est = Estimate::from_samples(&xs);
    rep.put_est("moment3", &est);
    rep.passed = est.mean.is_finite() && expected.is_none_or(|e| est.within_sigma(e, sigmas));
    rep.verdict = match expected {
        Some(e) if rep.passed => format!("finite, within {sigmas} sigma of {e}"),
        Some(e) => format!("finite, but not within {sigmas} sigma of {e}"),
        None => "finite (finite-sample evidence)".into(),
    };
    Ok(rep)
}

/// `sup_{|x| <= r} |Psi(x)| / r` over doubling radii; sublinear when the
/// last four ratios strictly decrease.
pub fn check_sublinear(spec: &FieldSpec, seed: u64, radii: &[f64], step: f64) -> Result<ConditionReport> {
    if radii.len() < 4 || radii.windows(2).any(|w| !(w[1] > w[0])) || !(step > 0.0) {
        return Err(Error::InvalidArgument("sublinear needs at least 4 increasing radii".into()));
    }
    let mut rep = ConditionReport::new(
        "sublinear",
        json!({ "field": spec, "seed": seed, "radii": radii, "step": step }),
    );
    if !spec.is_divergence_free() {
        rep.verdict = "no stream function".into();
        return Ok(rep);
    }
    if !spec.is_mean_zero() {
        rep.witness("generator has nonzero mean velocity", Some(seed), vec![], f64::NAN);
    }
    let f = sample_field(spec, seed)?;
    let ratios: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let pts = disk_samples(Vec2::ZERO, r, step);
            pts.par_iter().map(|p| f.psi(*p).abs()).reduce(|| 0.0, f64::max) / r
        })
        .collect();
    rep.table.columns = ["r", "ratio"].map(String::from).to_vec();
    for (r, q) in radii.iter().zip(&ratios) {
        rep.table.rows.push(vec![*r, *q]);
    }
    let n = ratios.len();
    let tail = &ratios[n - 4..];
    let decreasing = tail.windows(2).all(|w| w[1] < w[0]) || tail.iter().all(|&q| q == 0.0);
    let halving = ratios.windows(2).zip(radii.windows(2)).map(|(q, r)| q[1] / q[0] * r[1] / r[0]).collect::<Vec<_>>();
    let worst = halving.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    rep.put("last_ratio", ratios[n - 1]);
    rep.put("max_halving_deviation", worst);
    rep.passed = decreasing;
    rep.verdict = if decreasing { "sublinear (finite-sample evidence)".into() } else { "not sublinear".into() };
    if !decreasing {
        rep.witness("ratio fails to decrease", Some(seed), vec![], ratios[n - 1]);
    }
    Ok(rep)
}

/// Area of `{y : tau(x, y) <= t}` by node counting, against `pi t^2`.
///
/// The counted sublevel set contains the exact-time reachable set, so the
/// comparison checks the volume bound for the envelope.
pub fn check_volume_bound(
    spec: &FieldSpec,
    seed: u64,
    x: Vec2,
    times: &[f64],
    policy: &GridPolicy,
    tol: f64,
) -> Result<ConditionReport> {
    if times.is_empty() || times.iter().any(|t| !(*t > 0.0)) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("volume bound needs increasing positive times".into()));
    }
    let mut rep = ConditionReport::new(
        "volume",
        json!({ "field": spec, "seed": seed, "x": x, "times": times, "grid": policy, "tol": tol }),
    );
    if !spec.is_divergence_free() {
        rep.witness("generator is not divergence-free", Some(seed), vec![x], f64::NAN);
    }
    let f = sample_field(spec, seed)?;
    let t_max = times[times.len() - 1];
    let h = policy.h;
    let center = Vec2::new((x.x / h).round() * h, (x.y / h).round() * h);
    let reach = (f.velocity_bound() + 1.0) * t_max + policy.pad + center.distance(x);
    let grid = Grid2::covering(center, reach, h, policy.stencil)?;
    let graph = SolverGraph::new(&f, grid, DriftSign::Minus, 1.0)?;
    let mut ws = graph.workspace();
    let src = grid.nearest(x).ok_or(Error::OutsideGrid(x))?;
    graph.run(&mut ws, &[src], &StopRule::budget(t_max))?;
    let settled: Vec<f64> = ws.settled_order().map(|(_, v)| v).collect();
    rep.table.columns = ["t", "area", "area_over_pi_t2"].map(String::from).to_vec();
    let mut ok = spec.is_divergence_free();
    let mut prev = 0.0;
    let mut monotone = true;
    let mut worst = f64::INFINITY;
    for &t in times {
        let count = settled.partition_point(|&v| v <= t);
        let area = count as f64 * h * h;
        let ratio = area / (std::f64::consts::PI * t * t);
        monotone &= area >= prev;
        prev = area;
        worst = worst.min(ratio);
        if ratio < 1.0 - tol {
            ok = false;
            rep.witness(format!("area below the bound at t = {t}"), Some(seed), vec![x], ratio);
        }
        rep.table.rows.push(vec![t, area, ratio]);
    }
    rep.put("min_area_ratio", worst);
    rep.put("monotone", if monotone { 1.0 } else { 0.0 });
    rep.passed = ok && monotone;
    rep.verdict = if rep.passed { "volume bound holds".into() } else { "volume bound fails".into() };
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rho_examples() {
        let m = 5.0;
        assert_eq!(rho(m, m), 0.0);
        assert!((rho(m + 1.0, m) - 1.0 / 3.0).abs() < 1e-15);
        assert!((rho(m + 3.0, m) - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(rho(m - 2.0, m), 0.0);
    }

    #[test]
    fn rho_is_c1_with_slope_at_most_half() {
        let m = 2.0;
        let mut prev = rho(m - 0.5, m);
        for i in 1..=40000 {
            let s = m - 0.5 + i as f64 * 1e-4;
            let v = rho(s, m);
            let slope = (v - prev) / 1e-4;
            assert!((-1e-12..=0.5 + 1e-9).contains(&slope));
            assert!((slope - rho_prime(s - 5e-5, m)).abs() < 1e-6);
            prev = v;
        }
        assert!((rho(m + 1.0, m) - rho(m + 1.0 - 1e-9, m)).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn rho_bridge_bounds(u in 0.0f64..1.0, m in 0.5f64..20.0) {
            let v = rho(m + u, m);
            prop_assert!((-1e-15..=1.0 / 3.0 + 1e-15).contains(&v));
            prop_assert!((0.0..=0.5).contains(&rho_prime(m + u, m)));
        }
    }

    #[test]
    fn zero_stream_annulus_bounds() {
        let f = sample_field(&FieldSpec::zero(), 0).unwrap();
        let ms = modify_stream(&f, Vec2::new(1.0, 2.0), 3.0).unwrap();
        let a = ms.annulus_check(1.0, 0.1);
        assert!(a.holds);
        assert!(a.min >= 4.0 / 3.0 && a.max <= 10.0 / 3.0 + 3.0);
    }

    #[test]
    fn modified_stream_matches_inside_and_is_perp_gradient() {
        let f = sample_field(&FieldSpec::cellular(1.0), 2).unwrap();
        let z = Vec2::new(0.3, -0.2);
        let ms = modify_stream(&f, z, 2.0).unwrap();
        for x in disk_samples(z, 2.0, 0.05) {
            assert_eq!(ms.psi(x), f.psi(x));
            assert_eq!(ms.velocity(x), f.velocity(x));
        }
        let d = 1e-6;
        for x in [Vec2::new(2.9, 0.1), Vec2::new(-1.0, 4.0), Vec2::new(5.0, 5.0)] {
            let gx = (ms.psi(x + Vec2::new(d, 0.0)) - ms.psi(x - Vec2::new(d, 0.0))) / (2.0 * d);
            let gy = (ms.psi(x + Vec2::new(0.0, d)) - ms.psi(x - Vec2::new(0.0, d))) / (2.0 * d);
            assert!((ms.velocity(x) - Vec2::new(-gy, gx)).norm() < 1e-6);
        }
        assert!(modify_stream(&sample_field(&FieldSpec::gradient_trap(), 0).unwrap(), z, 1.0).is_err());
    }

    #[test]
    fn lemma51_zero_field() {
        let opts = Lemma51Options { samples: 6, h: 0.25, ..Default::default() };
        let rep = check_lemma51(&FieldSpec::zero(), 1, Vec2::ZERO, 2.0, &opts).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.estimate("identity_max_diff"), Some(0.0));
        // tau = |x - y| up to the stencil bias, far below C2' |x - y|.
        assert!(rep.estimate("max_tau_over_refined").unwrap() < 1.0 / C2_PRIME * 1.05);
    }

    #[test]
    fn taubound_and_gammaexp_on_zero_field() {
        let opts = GammaOptions { grid: GridPolicy { h: 0.1, stencil: 3, pad: 1.0 }, sources: 4, flat_tol: 0.2 };
        let radii = [2.0, 4.0, 8.0, 16.0];
        let rep = check_taubound(&FieldSpec::zero(), &[1], &radii, &opts).unwrap();
        assert!(rep.passed);
        // Sources sit on the ring of radius R - h.
        for (q, r) in rep.column("ratio").unwrap().iter().zip(radii) {
            assert!((q - 2.0 + 0.1 / r).abs() < 0.03, "{q}");
        }
        let rep = check_gammaexp(&FieldSpec::zero(), 10, 3, 2.0, &opts).unwrap();
        assert!(rep.passed);
        assert!(rep.estimates[0].std_err.unwrap() < 1e-12);
    }

    #[test]
    fn trap_fails_taubound_with_witness() {
        let opts = GammaOptions { grid: GridPolicy { h: 0.05, stencil: 3, pad: 0.5 }, sources: 4, flat_tol: 0.2 };
        let rep = check_taubound(&FieldSpec::gradient_trap(), &[0], &[1.0, 1.5, 2.0, 3.0], &opts).unwrap();
        assert!(!rep.passed);
        assert!(!rep.witnesses.is_empty() && rep.witnesses[0].value.is_infinite());
    }

    #[test]
    fn stream_growth_zero_and_bounded() {
        let grid: Vec<f64> = (0..=30).map(|k| k as f64 * 0.5).collect();
        let opts = StreamGrowthOptions { step: 0.1, max_integral: Some(12.0) };
        let rep = stream_growth_integral(&FieldSpec::zero(), &grid, 20, 0, &opts).unwrap();
        assert_eq!(rep.estimate("integral"), Some(0.0));
        let rep = stream_growth_integral(&FieldSpec::cellular(1.0), &grid, 50, 0, &opts).unwrap();
        assert!(rep.passed);
        assert!(rep.estimate("integral").unwrap() <= 12.0);
        assert!(stream_growth_integral(&FieldSpec::cellular(1.0), &grid[..10], 5, 0, &opts).is_err());
    }

    #[test]
    fn moment3_rejects_unstationary_and_scales_cubically() {
        let rep = check_moment3(&FieldSpec::constant(0.5, 0.0), 100, 0, None, 3.0).unwrap();
        assert!(!rep.passed);
        let zero = check_moment3(&FieldSpec::zero(), 100, 0, Some(0.0), 3.0).unwrap();
        assert_eq!(zero.estimate("moment3"), Some(0.0));
        let a1 = check_moment3(&FieldSpec::cellular(1.0), 4000, 9, None, 3.0).unwrap();
        let a2 = check_moment3(&FieldSpec::cellular(2.0), 4000, 9, None, 3.0).unwrap();
        assert!((a2.estimate("moment3").unwrap() - 8.0 * a1.estimate("moment3").unwrap()).abs() < 1e-9);
    }

    #[test]
    fn sublinear_examples() {
        let radii = [4.0, 8.0, 16.0, 32.0];
        let rep = check_sublinear(&FieldSpec::zero(), 0, &radii, 0.1).unwrap();
        assert!(rep.column("ratio").unwrap().iter().all(|q| *q == 0.0));
        assert!(rep.passed);
        let rep = check_sublinear(&FieldSpec::constant(0.5, 0.0), 0, &radii, 0.1).unwrap();
        assert!(!rep.passed);
        for q in rep.column("ratio").unwrap() {
            assert!((q - 0.5).abs() < 1e-3);
        }
        let rep = check_sublinear(&FieldSpec::cellular(1.0), 0, &radii, 0.1).unwrap();
        assert!(rep.passed);
        let d = rep.estimate("max_halving_deviation").unwrap();
        assert!(d < 0.02, "{d} {:?}", rep.table);
    }

    #[test]
    fn volume_bound_zero_field_is_the_disk() {
        let policy = GridPolicy { h: 0.01, stencil: 3, pad: 0.1 };
        let rep = check_volume_bound(&FieldSpec::zero(), 0, Vec2::ZERO, &[0.5, 1.0], &policy, 0.05).unwrap();
        assert!(rep.passed);
        for q in rep.column("area_over_pi_t2").unwrap() {
            assert!((q - 1.0).abs() < 0.02, "{q}");
        }
    }
}
