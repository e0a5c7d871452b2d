//! Geometry of the discrete torus `T^{d,n}` and of `Z^d`.
//!
//! Vertices are coordinate tuples, canonical (each coordinate in `[0, n)`) on
//! the torus and unbounded on `Z^d`. Every undirected edge has exactly one
//! [`EdgeId`]: its base vertex plus the axis along which it points in the
//! positive direction.
//!
//! Directions are numbered `0..2d`: direction `2a` is a step of `-1` along
//! axis `a`, direction `2a + 1` is `+1` along axis `a`. All neighbor lists use
//! this order so seeded runs are reproducible.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

/// Dimensions up to this value keep vertex coordinates inline (no heap).
pub const INLINE_DIM: usize = 4;

pub type Coords = SmallVec<[i64; INLINE_DIM]>;

/// A deterministically ordered set of vertices.
pub type VertexSet = BTreeSet<Vertex>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("torus side must be at least 3, got {0}")]
    SideTooSmall(u64),
    #[error("vertex has {got} coordinates, geometry has dimension {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("vertices {0} and {1} are not lattice neighbors")]
    NotAdjacent(Vertex, Vertex),
    #[error("operation requires a torus geometry")]
    NotTorus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Extent {
    Torus(u32),
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Geometry {
    dim: usize,
    extent: Extent,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex(pub Coords);

impl Vertex {
    pub fn new(coords: &[i64]) -> Self {
        Vertex(Coords::from_slice(coords))
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Canonical undirected edge: `base` to `base + e_axis`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeId {
    pub base: Vertex,
    pub axis: usize,
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}+e{}", self.base, self.axis)
    }
}

/// Axis and sign of a direction index.
#[inline]
pub fn direction_parts(dir: usize) -> (usize, i64) {
    (dir / 2, if dir.is_multiple_of(2) { -1 } else { 1 })
}

impl Geometry {
    pub fn torus(dim: usize, n: u32) -> Result<Self, LatticeError> {
        if dim == 0 {
            return Err(LatticeError::ZeroDimension);
        }
        if n < 3 {
            return Err(LatticeError::SideTooSmall(n as u64));
        }
        Ok(Geometry {
            dim,
            extent: Extent::Torus(n),
        })
    }

    pub fn infinite(dim: usize) -> Result<Self, LatticeError> {
        if dim == 0 {
            return Err(LatticeError::ZeroDimension);
        }
        Ok(Geometry {
            dim,
            extent: Extent::Infinite,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> Extent {
        self.extent
    }

    pub fn side(&self) -> Option<i64> {
        match self.extent {
            Extent::Torus(n) => Some(n as i64),
            Extent::Infinite => None,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.extent, Extent::Torus(_))
    }

    /// `n^d` on the torus.
    pub fn vertex_count(&self) -> Option<usize> {
        self.side().map(|n| (n as usize).pow(self.dim as u32))
    }

    /// `d * n^d` on the torus.
    pub fn edge_count(&self) -> Option<usize> {
        self.vertex_count().map(|v| v * self.dim)
    }

    pub fn degree(&self) -> usize {
        2 * self.dim
    }

    pub fn origin(&self) -> Vertex {
        Vertex(smallvec::smallvec![0; self.dim])
    }

    /// Builds a canonical vertex, reducing coordinates mod `n` on the torus.
    pub fn vertex(&self, coords: &[i64]) -> Result<Vertex, LatticeError> {
        if coords.len() != self.dim {
            return Err(LatticeError::DimensionMismatch {
                got: coords.len(),
                want: self.dim,
            });
        }
        Ok(match self.side() {
            Some(n) => Vertex(coords.iter().map(|c| c.rem_euclid(n)).collect()),
            None => Vertex::new(coords),
        })
    }

    /// Neighbor of `v` in direction `dir` (see module docs for numbering).
    #[inline]
    pub fn step(&self, v: &Vertex, dir: usize) -> Vertex {
        let (axis, sign) = direction_parts(dir);
        let mut out = v.clone();
        let c = &mut out.0[axis];
        match self.side() {
            Some(n) => *c = (*c + sign).rem_euclid(n),
            None => *c = c.checked_add(sign).expect("lattice coordinate overflow"),
        }
        out
    }

    /// The `2d` lattice neighbors, axis ascending, minus before plus.
    pub fn neighbors(&self, v: &Vertex) -> Vec<Vertex> {
        (0..self.degree()).map(|dir| self.step(v, dir)).collect()
    }

    /// Edge crossed when stepping from `v` in direction `dir`.
    #[inline]
    pub fn edge_toward(&self, v: &Vertex, dir: usize) -> EdgeId {
        let (axis, sign) = direction_parts(dir);
        if sign > 0 {
            EdgeId {
                base: v.clone(),
                axis,
            }
        } else {
            EdgeId {
                base: self.step(v, dir),
                axis,
            }
        }
    }

    /// The `2d` edges incident to `v`, in direction order.
    pub fn adjacent_edges(&self, v: &Vertex) -> Vec<EdgeId> {
        (0..self.degree()).map(|dir| self.edge_toward(v, dir)).collect()
    }

    pub fn edge_between(&self, u: &Vertex, v: &Vertex) -> Result<EdgeId, LatticeError> {
        for dir in 0..self.degree() {
            if self.step(u, dir) == *v {
                return Ok(self.edge_toward(u, dir));
            }
        }
        Err(LatticeError::NotAdjacent(u.clone(), v.clone()))
    }

    pub fn edge_endpoints(&self, e: &EdgeId) -> (Vertex, Vertex) {
        (e.base.clone(), self.step(&e.base, 2 * e.axis + 1))
    }

    pub fn graph_distance(&self, u: &Vertex, v: &Vertex) -> u64 {
        let n = self.side();
        u.0.iter()
            .zip(v.0.iter())
            .map(|(a, b)| {
                let diff = (a - b).unsigned_abs();
                match n {
                    Some(n) => diff.min(n as u64 - diff),
                    None => diff,
                }
            })
            .sum()
    }

    /// All vertices within graph distance `k` of some vertex of `set`.
    pub fn neighborhood(&self, set: &VertexSet, k: u64) -> VertexSet {
        let mut seen: VertexSet = set.clone();
        let mut frontier: VecDeque<(Vertex, u64)> = set.iter().map(|v| (v.clone(), 0)).collect();
        while let Some((v, depth)) = frontier.pop_front() {
            if depth == k {
                continue;
            }
            for w in self.neighbors(&v) {
                if seen.insert(w.clone()) {
                    frontier.push_back((w, depth + 1));
                }
            }
        }
        seen
    }

    /// Row-major index of a torus vertex; axis 0 varies fastest.
    pub fn vertex_index(&self, v: &Vertex) -> usize {
        let n = self.side().expect("vertex_index requires a torus") as usize;
        v.0.iter()
            .rev()
            .fold(0usize, |acc, &c| acc * n + c as usize)
    }

    pub fn vertex_from_index(&self, mut idx: usize) -> Vertex {
        let n = self.side().expect("vertex_from_index requires a torus") as usize;
        let mut coords = Coords::with_capacity(self.dim);
        for _ in 0..self.dim {
            coords.push((idx % n) as i64);
            idx /= n;
        }
        Vertex(coords)
    }

    /// `vertex_index(base) * d + axis`.
    pub fn edge_index(&self, e: &EdgeId) -> usize {
        self.vertex_index(&e.base) * self.dim + e.axis
    }

    pub fn edge_from_index(&self, idx: usize) -> EdgeId {
        EdgeId {
            base: self.vertex_from_index(idx / self.dim),
            axis: idx % self.dim,
        }
    }

    /// Torus vertices in index order.
    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        let count = self.vertex_count().unwrap_or(0);
        (0..count).map(move |i| self.vertex_from_index(i))
    }

    /// Torus edges in index order.
    pub fn edges(&self) -> impl Iterator<Item = EdgeId> + '_ {
        let count = self.edge_count().unwrap_or(0);
        (0..count).map(move |i| self.edge_from_index(i))
    }

    /// Index-level neighbor of vertex `idx` in direction `dir` (torus only).
    #[inline]
    pub fn step_index(&self, idx: usize, dir: usize) -> usize {
        let n = self.side().expect("step_index requires a torus") as usize;
        let (axis, sign) = direction_parts(dir);
        let stride = n.pow(axis as u32);
        let c = (idx / stride) % n;
        let c2 = if sign > 0 { (c + 1) % n } else { (c + n - 1) % n };
        idx - c * stride + c2 * stride
    }

    /// Index of the edge crossed from vertex `idx` in direction `dir` (torus only).
    #[inline]
    pub fn edge_index_toward(&self, idx: usize, dir: usize) -> usize {
        let (axis, sign) = direction_parts(dir);
        let base = if sign > 0 { idx } else { self.step_index(idx, dir) };
        base * self.dim + axis
    }
}
