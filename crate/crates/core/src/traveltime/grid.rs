use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Largest supported number of nodes per side.
pub const MAX_SIDE: usize = 4097;

/// Square lattice `center + [-L, L]^2` with spacing `h` and an edge stencil.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridParams", into = "GridParams")]
pub struct Grid2 {
    center: Vec2,
    half_width: f64,
    h: f64,
    stencil: u8,
    side: usize,
    origin: Vec2,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridParams {
    pub center: Vec2,
    pub half_width: f64,
    pub h: f64,
    pub stencil: u8,
}

impl TryFrom<GridParams> for Grid2 {
    type Error = Error;

    fn try_from(p: GridParams) -> Result<Grid2> {
        Grid2::new(p.center, p.half_width, p.h, p.stencil)
    }
}

impl From<Grid2> for GridParams {
    fn from(g: Grid2) -> GridParams {
        GridParams { center: g.center, half_width: g.half_width, h: g.h, stencil: g.stencil }
    }
}

impl Grid2 {
    pub fn new(center: Vec2, half_width: f64, h: f64, stencil: u8) -> Result<Grid2> {
        if !(h > 0.0 && h.is_finite()) || !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid needs positive spacing and half-width (h = {h}, L = {half_width})"
            )));
        }
        if !center.is_finite() {
            return Err(Error::InvalidArgument("grid center must be finite".into()));
        }
        if !(1..=3).contains(&stencil) {
            return Err(Error::InvalidArgument(format!("stencil order must be 1, 2 or 3, got {stencil}")));
        }
        let ratio = half_width / h;
        let cells = ratio.round();
        if (ratio - cells).abs() > 1e-9 * ratio.max(1.0) || cells < 1.0 {
            return Err(Error::InvalidArgument(format!("half-width {half_width} is not a multiple of h = {h}")));
        }
        let side = 2 * cells as usize + 1;
        if side > MAX_SIDE {
            return Err(Error::InvalidArgument(format!("grid has {side} nodes per side, limit is {MAX_SIDE}")));
        }
        let half_width = cells * h;
        Ok(Grid2 { center, half_width, h, stencil, side, origin: center - Vec2::new(half_width, half_width) })
    }

    /// Smallest grid with spacing `h` whose half-width is at least `radius`.
    pub fn covering(center: Vec2, radius: f64, h: f64, stencil: u8) -> Result<Grid2> {
        let cells = (radius / h - 1e-9).ceil().max(1.0);
        Grid2::new(center, cells * h, h, stencil)
    }

    pub fn center(&self) -> Vec2 {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn stencil(&self) -> u8 {
        self.stencil
    }

    pub fn with_stencil(&self, stencil: u8) -> Result<Grid2> {
        Grid2::new(self.center, self.half_width, self.h, stencil)
    }

    /// Nodes per side.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.side * self.side
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.side + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.side, idx / self.side)
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new(i as f64 * self.h, j as f64 * self.h)
    }

    #[inline]
    pub fn position(&self, idx: usize) -> Vec2 {
        let (i, j) = self.coords(idx);
        self.node(i, j)
    }

    /// Point of the half-spaced lattice with indices `(hi, hj)`; even indices are nodes.
    #[inline]
    pub fn half_point(&self, hi: usize, hj: usize) -> Vec2 {
        let half = 0.5 * self.h;
        self.origin + Vec2::new(hi as f64 * half, hj as f64 * half)
    }

    pub fn contains(&self, x: Vec2) -> bool {
        let d = x - self.center;
        let tol = 1e-12 * self.half_width.max(1.0);
        d.x.abs() <= self.half_width + tol && d.y.abs() <= self.half_width + tol
    }

    /// Whether the closed disk of radius `r` about `c` lies inside the grid square.
    pub fn contains_disk(&self, c: Vec2, r: f64) -> bool {
        let d = c - self.center;
        d.x.abs() + r <= self.half_width * (1.0 + 1e-12) && d.y.abs() + r <= self.half_width * (1.0 + 1e-12)
    }

    pub fn nearest(&self, x: Vec2) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let max = (self.side - 1) as f64;
        let i = ((x.x - self.origin.x) / self.h).round().clamp(0.0, max) as usize;
        let j = ((x.y - self.origin.y) / self.h).round().clamp(0.0, max) as usize;
        Some(self.index(i, j))
    }

    /// Lower-left node of the cell holding `x` and the fractional offsets in it.
    pub fn cell(&self, x: Vec2) -> Option<(usize, usize, f64, f64)> {
        if !self.contains(x) {
            return None;
        }
        let last = (self.side - 2) as f64;
        let u = ((x.x - self.origin.x) / self.h).max(0.0);
        let v = ((x.y - self.origin.y) / self.h).max(0.0);
        let (i, j) = (u.floor().min(last), v.floor().min(last));
        Some((i as usize, j as usize, (u - i).clamp(0.0, 1.0), (v - j).clamp(0.0, 1.0)))
    }

    /// Node indices whose positions lie in the closed disk of radius `r` about `c`.
    pub fn nodes_in_disk(&self, c: Vec2, r: f64) -> Vec<usize> {
        let r2 = r * r * (1.0 + 1e-12);
        (0..self.len()).filter(|&k| (self.position(k) - c).norm_sq() <= r2).collect()
    }
}

/// Lattice direction of a stencil edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Offset {
    pub di: i32,
    pub dj: i32,
    /// Euclidean length in lattice units.
    pub len: f64,
    pub unit: Vec2,
}

/// Offsets with coprime components and max-norm at most `k`, sorted by angle.
///
/// Orders 1, 2 and 3 give 8, 16 and 32 directions.
pub fn stencil_offsets(k: u8) -> Vec<Offset> {
    fn gcd(a: i32, b: i32) -> i32 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    let k = k as i32;
    let mut out = Vec::new();
    for dj in -k..=k {
        for di in -k..=k {
            if (di, dj) != (0, 0) && gcd(di.abs(), dj.abs()) == 1 {
                let len = ((di * di + dj * dj) as f64).sqrt();
                out.push(Offset { di, dj, len, unit: Vec2::new(di as f64 / len, dj as f64 / len) });
            }
        }
    }
    out.sort_by(|a, b| {
        let ta = (a.dj as f64).atan2(a.di as f64);
        let tb = (b.dj as f64).atan2(b.di as f64);
        ta.total_cmp(&tb)
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencil_sizes() {
        assert_eq!(stencil_offsets(1).len(), 8);
        assert_eq!(stencil_offsets(2).len(), 16);
        assert_eq!(stencil_offsets(3).len(), 32);
    }

    #[test]
    fn stencil_is_symmetric_under_lattice_symmetries() {
        for k in 1..=3 {
            let offs: Vec<(i32, i32)> = stencil_offsets(k).iter().map(|o| (o.di, o.dj)).collect();
            for &(a, b) in &offs {
                for img in [(-a, b), (a, -b), (b, a), (-b, -a)] {
                    assert!(offs.contains(&img));
                }
            }
        }
    }

    #[test]
    fn half_width_must_be_multiple_of_h() {
        assert!(Grid2::new(Vec2::ZERO, 1.0, 0.3, 3).is_err());
        let g = Grid2::new(Vec2::ZERO, 1.0, 0.25, 3).unwrap();
        assert_eq!(g.side(), 9);
        assert_eq!(g.position(g.index(4, 4)), Vec2::ZERO);
        assert!(Grid2::new(Vec2::ZERO, 1.0, 0.25, 4).is_err());
    }

    #[test]
    fn nearest_and_cell() {
        let g = Grid2::new(Vec2::new(1.0, -1.0), 2.0, 0.5, 1).unwrap();
        let k = g.nearest(Vec2::new(1.2, -0.9)).unwrap();
        assert_eq!(g.position(k), Vec2::new(1.0, -1.0));
        assert!(g.nearest(Vec2::new(3.5, 0.0)).is_none());
        let (i, j, fx, fy) = g.cell(Vec2::new(3.0, 1.0)).unwrap();
        assert_eq!((i, j), (7, 7));
        assert_eq!((fx, fy), (1.0, 1.0));
        assert_eq!(g.half_point(2, 4), g.node(1, 2));
    }

    #[test]
    fn params_round_trip() {
        let g = Grid2::new(Vec2::new(0.5, 0.0), 3.0, 0.1, 2).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        let back: Grid2 = serde_json::from_str(&text).unwrap();
        assert_eq!(g, back);
    }
}
