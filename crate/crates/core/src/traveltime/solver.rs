use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{stencil_offsets, Grid2, Offset};
use crate::control::{max_speed_unchecked, DriftSign};
use crate::error::{Error, Result};
use crate::fields::VelocityField;
use crate::geometry::Vec2;

const NO_PRED: u8 = u8::MAX;

/// Stencil graph of a grid with velocities cached at every edge midpoint.
///
/// Every midpoint of a stencil edge lies on the half-spaced lattice, so the
/// cache is a dense `(2n - 1)^2` array. The graph is immutable and can be
/// shared by many concurrent solves, each with its own [`Workspace`].
#[derive(Debug, Clone)]
pub struct SolverGraph {
    grid: Grid2,
    offsets: Vec<Offset>,
    half_side: usize,
    lattice: Vec<Vec2>,
    drift: DriftSign,
    bound: f64,
    speed_bound: f64,
}

impl SolverGraph {
    pub fn new<F: VelocityField + ?Sized>(field: &F, grid: Grid2, drift: DriftSign, bound: f64) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::InvalidArgument(format!("control bound must be positive, got {bound}")));
        }
        let half_side = 2 * grid.side() - 1;
        let mut lattice = vec![Vec2::ZERO; half_side * half_side];
        lattice.par_chunks_mut(half_side).enumerate().for_each(|(hj, row)| {
            for (hi, v) in row.iter_mut().enumerate() {
                *v = field.velocity_at(grid.half_point(hi, hj));
            }
        });
        Ok(SolverGraph {
            grid,
            offsets: stencil_offsets(grid.stencil()),
            half_side,
            lattice,
            drift,
            bound,
            speed_bound: field.speed_bound(),
        })
    }

    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn drift(&self) -> DriftSign {
        self.drift
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn speed_bound(&self) -> f64 {
        self.speed_bound
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self.grid.len())
    }

    /// Cost of the edge leaving node `(i, j)` along offset `o`, if feasible.
    #[inline]
    fn edge_cost(&self, i: usize, j: usize, o: &Offset) -> Option<f64> {
        let hi = (2 * i as i64 + o.di as i64) as usize;
        let hj = (2 * j as i64 + o.dj as i64) as usize;
        let v = self.lattice[hj * self.half_side + hi];
        max_speed_unchecked(v, o.unit, self.drift, self.bound).map(|s| o.len * self.grid.spacing() / s)
    }

    /// Label-setting shortest paths from `sources` (node indices, value 0).
    pub fn run(&self, ws: &mut Workspace, sources: &[usize], stop: &StopRule) -> Result<RunSummary> {
        if sources.is_empty() {
            return Err(Error::EmptySources);
        }
        ws.reset();
        let n = self.grid.side();
        for &s in sources {
            if ws.values[s] != 0.0 {
                ws.values[s] = 0.0;
                ws.touched.push(s as u32);
                ws.heap.push(Reverse((0, s as u32)));
            }
        }
        ws.epoch = ws.epoch.wrapping_add(1).max(1);
        let mut remaining = 0usize;
        for &t in &stop.targets {
            if ws.mark[t] != ws.epoch {
                ws.mark[t] = ws.epoch;
                remaining += 1;
            }
        }
        let use_targets = !stop.targets.is_empty();
        let mut budget_hit = false;
        while let Some(Reverse((key, idx))) = ws.heap.pop() {
            let idx = idx as usize;
            if ws.settled[idx] {
                continue;
            }
            let val = f64::from_bits(key);
            if val > stop.max_time {
                budget_hit = true;
                break;
            }
            ws.settled[idx] = true;
            ws.order.push(idx as u32);
            if use_targets && ws.mark[idx] == ws.epoch {
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
            let (i, j) = (idx % n, idx / n);
            for (k, o) in self.offsets.iter().enumerate() {
                let ni = i as i64 + o.di as i64;
                let nj = j as i64 + o.dj as i64;
                if ni < 0 || nj < 0 || ni >= n as i64 || nj >= n as i64 {
                    continue;
                }
                let nidx = nj as usize * n + ni as usize;
                if ws.settled[nidx] {
                    continue;
                }
                let Some(cost) = self.edge_cost(i, j, o) else { continue };
                let nv = val + cost;
                if nv < ws.values[nidx] {
                    if ws.values[nidx] == f64::INFINITY {
                        ws.touched.push(nidx as u32);
                    }
                    ws.values[nidx] = nv;
                    ws.pred[nidx] = k as u8;
                    ws.heap.push(Reverse((nv.to_bits(), nidx as u32)));
                }
            }
        }
        let exhausted = ws.heap.is_empty() && !budget_hit && (!use_targets || remaining > 0);
        Ok(RunSummary { settled: ws.order.len(), targets_left: remaining, exhausted })
    }

    /// Full solve packaged as a [`TravelTimeField`].
    pub fn solve(&self, sources: &[Vec2], stop: &StopRule) -> Result<TravelTimeField> {
        let nodes = self.source_nodes(sources)?;
        let mut ws = self.workspace();
        let summary = self.run(&mut ws, &nodes, stop)?;
        Ok(self.collect(&ws, sources.to_vec(), nodes, summary.exhausted))
    }

    pub fn source_nodes(&self, sources: &[Vec2]) -> Result<Vec<usize>> {
        if sources.is_empty() {
            return Err(Error::EmptySources);
        }
        sources.iter().map(|&s| self.grid.nearest(s).ok_or(Error::OutsideGrid(s))).collect()
    }

    /// Copy the settled values out of a workspace; unsettled nodes become +inf.
    pub fn collect(&self, ws: &Workspace, sources: Vec<Vec2>, source_nodes: Vec<usize>, complete: bool) -> TravelTimeField {
        let mut values = vec![f64::INFINITY; self.grid.len()];
        let mut pred = vec![NO_PRED; self.grid.len()];
        for &k in &ws.order {
            let k = k as usize;
            values[k] = ws.values[k];
            pred[k] = ws.pred[k];
        }
        TravelTimeField {
            grid: self.grid,
            values,
            pred,
            sources,
            source_nodes,
            drift: self.drift,
            bound: self.bound,
            speed_bound: self.speed_bound,
            complete,
        }
    }
}

/// When a solve may stop early.
#[derive(Debug, Clone, PartialEq)]
pub struct StopRule {
    /// Stop once all of these nodes are settled (ignored when empty).
    pub targets: Vec<usize>,
    /// Never settle nodes with values above this.
    pub max_time: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { targets: Vec::new(), max_time: f64::INFINITY }
    }
}

impl StopRule {
    pub fn targets(targets: Vec<usize>) -> StopRule {
        StopRule { targets, ..StopRule::default() }
    }

    pub fn budget(max_time: f64) -> StopRule {
        StopRule { targets: Vec::new(), max_time }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub settled: usize,
    pub targets_left: usize,
    /// The queue ran dry: every node not settled is unreachable.
    pub exhausted: bool,
}

/// Reusable buffers for one solve at a time.
///
/// Only touched entries are reset between runs, so repeated small solves on
/// a large grid cost time proportional to the region they explore.
#[derive(Debug, Clone)]
pub struct Workspace {
    values: Vec<f64>,
    pred: Vec<u8>,
    settled: Vec<bool>,
    mark: Vec<u32>,
    epoch: u32,
    touched: Vec<u32>,
    order: Vec<u32>,
    heap: BinaryHeap<Reverse<(u64, u32)>>,
}

impl Workspace {
    fn new(len: usize) -> Workspace {
        Workspace {
            values: vec![f64::INFINITY; len],
            pred: vec![NO_PRED; len],
            settled: vec![false; len],
            mark: vec![0; len],
            epoch: 0,
            touched: Vec::new(),
            order: Vec::new(),
            heap: BinaryHeap::new(),
        }
    }

    fn reset(&mut self) {
        for &k in &self.touched {
            let k = k as usize;
            self.values[k] = f64::INFINITY;
            self.pred[k] = NO_PRED;
            self.settled[k] = false;
        }
        self.touched.clear();
        self.order.clear();
        self.heap.clear();
    }

    /// Value of node `k` if it was settled in the last run.
    #[inline]
    pub fn settled_value(&self, k: usize) -> Option<f64> {
        self.settled[k].then(|| self.values[k])
    }

    /// Nodes settled in the last run, in non-decreasing order of value.
    pub fn settled_order(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.order.iter().map(|&k| (k as usize, self.values[k as usize]))
    }
}

/// First-arrival values on a grid; `+inf` marks nodes not reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelTimeField {
    grid: Grid2,
    values: Vec<f64>,
    #[serde(skip)]
    pred: Vec<u8>,
    sources: Vec<Vec2>,
    source_nodes: Vec<usize>,
    drift: DriftSign,
    bound: f64,
    speed_bound: f64,
    /// False when the solve stopped early; unsettled nodes then hold +inf
    /// although their true value is merely larger than every settled one.
    complete: bool,
}

impl TravelTimeField {
    pub fn grid(&self) -> &Grid2 {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sources(&self) -> &[Vec2] {
        &self.sources
    }

    pub fn source_nodes(&self) -> &[usize] {
        &self.source_nodes
    }

    pub fn drift(&self) -> DriftSign {
        self.drift
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn speed_bound(&self) -> f64 {
        self.speed_bound
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn value_nearest(&self, x: Vec2) -> Result<f64> {
        self.grid.nearest(x).map(|k| self.values[k]).ok_or(Error::OutsideGrid(x))
    }

    /// Bilinear interpolation; +inf when any cell corner is unreached.
    pub fn value_interp(&self, x: Vec2) -> Result<f64> {
        let (i, j, fx, fy) = self.grid.cell(x).ok_or(Error::OutsideGrid(x))?;
        let v = |a, b| self.values[self.grid.index(i + a, j + b)];
        Ok(bilinear(v(0, 0), v(1, 0), v(0, 1), v(1, 1), fx, fy))
    }

    pub fn predecessor(&self, k: usize) -> Option<usize> {
        let p = *self.pred.get(k)?;
        if p == NO_PRED {
            return None;
        }
        let o = stencil_offsets(self.grid.stencil())[p as usize];
        let (i, j) = self.grid.coords(k);
        Some(self.grid.index((i as i64 - o.di as i64) as usize, (j as i64 - o.dj as i64) as usize))
    }

    /// Source node reached by following stored predecessors back from `k`.
    pub fn terminal_source(&self, k: usize) -> Option<usize> {
        if !self.values.get(k)?.is_finite() {
            return None;
        }
        let offsets = stencil_offsets(self.grid.stencil());
        let mut cur = k;
        while self.values[cur] > 0.0 {
            let p = self.pred[cur];
            if p == NO_PRED {
                return None;
            }
            let o = offsets[p as usize];
            let (i, j) = self.grid.coords(cur);
            cur = self.grid.index((i as i64 - o.di as i64) as usize, (j as i64 - o.dj as i64) as usize);
        }
        Some(cur)
    }

    /// Reached neighbors `m` of node `k` with the cost of the edge `m -> k`.
    pub fn incoming_edges<F: VelocityField + ?Sized>(&self, field: &F, k: usize) -> Vec<(usize, f64)> {
        let (i, j) = self.grid.coords(k);
        let n = self.grid.side() as i64;
        let h = self.grid.spacing();
        let mut out = Vec::new();
        for o in stencil_offsets(self.grid.stencil()) {
            let (mi, mj) = (i as i64 - o.di as i64, j as i64 - o.dj as i64);
            if mi < 0 || mj < 0 || mi >= n || mj >= n {
                continue;
            }
            let m = self.grid.index(mi as usize, mj as usize);
            if !self.values[m].is_finite() {
                continue;
            }
            let mid = self.grid.half_point((2 * mi + o.di as i64) as usize, (2 * mj + o.dj as i64) as usize);
            if let Some(s) = max_speed_unchecked(field.velocity_at(mid), o.unit, self.drift, self.bound) {
                out.push((m, o.len * h / s));
            }
        }
        out
    }

    /// Largest amount by which any finite value undercuts the finite-speed
    /// bound `dist(y, sources) / (V_inf + b)`; non-positive when the bound holds.
    pub fn lower_bound_excess(&self) -> f64 {
        let c = self.speed_bound + self.bound;
        let src: Vec<Vec2> = self.source_nodes.iter().map(|&s| self.grid.position(s)).collect();
        (0..self.grid.len())
            .filter(|&k| self.values[k].is_finite())
            .map(|k| {
                let y = self.grid.position(k);
                let d = src.iter().map(|s| s.distance(y)).fold(f64::INFINITY, f64::min);
                d / c - self.values[k]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn bilinear(v00: f64, v10: f64, v01: f64, v11: f64, fx: f64, fy: f64) -> f64 {
    if !(v00.is_finite() && v10.is_finite() && v01.is_finite() && v11.is_finite()) {
        return f64::INFINITY;
    }
    let a = v00 + (v10 - v00) * fx;
    let b = v01 + (v11 - v01) * fx;
    a + (b - a) * fy
}

/// Travel times from `sources` over the whole grid.
pub fn solve_travel_time<F: VelocityField + ?Sized>(
    field: &F,
    sources: &[Vec2],
    grid: &Grid2,
    drift: DriftSign,
    bound: f64,
) -> Result<TravelTimeField> {
    if sources.is_empty() {
        return Err(Error::EmptySources);
    }
    SolverGraph::new(field, *grid, drift, bound)?.solve(sources, &StopRule::default())
}
