//! Static bond percolation on the torus: sampling, clusters, the spread
//! operator `F -> F^alpha`, and exponential tail fits.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::lattice::{EdgeId, Geometry, Vertex, VertexSet};
use crate::rng::uniform;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PercolationError {
    #[error("percolation utilities are defined on the torus only")]
    NotTorus,
    #[error("probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("edge vector has {got} entries, geometry has {want} edges")]
    WrongLength { got: usize, want: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid fit range [{0}, {1}]")]
    InvalidRange(u64, u64),
}

/// Open/closed state of every torus edge, indexed by [`Geometry::edge_index`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeConfig {
    geometry: Geometry,
    open: Vec<bool>,
}

impl EdgeConfig {
    pub fn new(geometry: Geometry, open: Vec<bool>) -> Result<Self, PercolationError> {
        let want = geometry.edge_count().ok_or(PercolationError::NotTorus)?;
        if open.len() != want {
            return Err(PercolationError::WrongLength {
                got: open.len(),
                want,
            });
        }
        Ok(EdgeConfig { geometry, open })
    }

    pub fn uniform_state(geometry: Geometry, open: bool) -> Result<Self, PercolationError> {
        let count = geometry.edge_count().ok_or(PercolationError::NotTorus)?;
        Ok(EdgeConfig {
            geometry,
            open: vec![open; count],
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn is_open(&self, e: &EdgeId) -> bool {
        self.open[self.geometry.edge_index(e)]
    }

    pub fn set(&mut self, e: &EdgeId, open: bool) {
        let idx = self.geometry.edge_index(e);
        self.open[idx] = open;
    }

    pub fn states(&self) -> &[bool] {
        &self.open
    }

    pub fn open_fraction(&self) -> f64 {
        self.open.iter().filter(|&&o| o).count() as f64 / self.open.len() as f64
    }
}

fn check_probability(p: f64) -> Result<(), PercolationError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(PercolationError::InvalidProbability(p))
    }
}

/// Independent Bernoulli(p) edges, drawn in edge-index order.
pub fn sample_config<R: Rng + ?Sized>(
    g: &Geometry,
    p: f64,
    rng: &mut R,
) -> Result<EdgeConfig, PercolationError> {
    check_probability(p)?;
    let count = g.edge_count().ok_or(PercolationError::NotTorus)?;
    let open = (0..count).map(|_| uniform(rng) < p).collect();
    Ok(EdgeConfig {
        geometry: *g,
        open,
    })
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }

    pub fn size_of(&mut self, x: usize) -> usize {
        let r = self.find(x);
        self.size[r]
    }
}

fn union_open_edges(cfg: &EdgeConfig) -> UnionFind {
    let g = &cfg.geometry;
    let d = g.dim();
    let mut uf = UnionFind::new(g.vertex_count().unwrap());
    for (idx, &open) in cfg.open.iter().enumerate() {
        if open {
            let base = idx / d;
            let axis = idx % d;
            uf.union(base, g.step_index(base, 2 * axis + 1));
        }
    }
    uf
}

/// Partition of the vertex indices into clusters, ordered by smallest member.
pub fn clusters(cfg: &EdgeConfig) -> Vec<Vec<usize>> {
    let mut uf = union_open_edges(cfg);
    let nv = cfg.geometry.vertex_count().unwrap();
    let mut slot = vec![usize::MAX; nv];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for v in 0..nv {
        let r = uf.find(v);
        if slot[r] == usize::MAX {
            slot[r] = out.len();
            out.push(Vec::new());
        }
        out[slot[r]].push(v);
    }
    out
}

pub fn cluster_of(cfg: &EdgeConfig, x: &Vertex) -> VertexSet {
    let g = &cfg.geometry;
    let mut uf = union_open_edges(cfg);
    let root = uf.find(g.vertex_index(x));
    (0..g.vertex_count().unwrap())
        .filter(|&v| uf.find(v) == root)
        .map(|v| g.vertex_from_index(v))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterStats {
    pub sizes: Vec<usize>,
    pub diameters: Vec<u64>,
}

/// Cluster sizes, ordered as [`clusters`].
pub fn cluster_sizes(cfg: &EdgeConfig) -> Vec<usize> {
    clusters(cfg).iter().map(Vec::len).collect()
}

/// Sizes and diameters (largest pairwise graph distance) of all clusters.
pub fn cluster_stats(cfg: &EdgeConfig) -> ClusterStats {
    let g = &cfg.geometry;
    let mut stats = ClusterStats::default();
    for members in clusters(cfg) {
        let coords: Vec<Vertex> = members.iter().map(|&v| g.vertex_from_index(v)).collect();
        let mut diam = 0;
        for i in 0..coords.len() {
            for j in (i + 1)..coords.len() {
                diam = diam.max(g.graph_distance(&coords[i], &coords[j]));
            }
        }
        stats.sizes.push(members.len());
        stats.diameters.push(diam);
    }
    stats
}

/// Vertices reachable from `f` through open edges of `E \ (f x f)`, where
/// `is_open` decides each edge (by edge index) the first time it is examined.
pub fn spread_with<F>(g: &Geometry, f: &VertexSet, mut is_open: F) -> Result<VertexSet, PercolationError>
where
    F: FnMut(usize) -> bool,
{
    let nv = g.vertex_count().ok_or(PercolationError::NotTorus)?;
    let mut reached = vec![false; nv];
    let mut queue = VecDeque::new();
    for v in f {
        let idx = g.vertex_index(v);
        reached[idx] = true;
        queue.push_back(idx);
    }
    while let Some(u) = queue.pop_front() {
        for dir in 0..g.degree() {
            let w = g.step_index(u, dir);
            // Each edge is examined at most once: from its first reached endpoint.
            if !reached[w] && is_open(g.edge_index_toward(u, dir)) {
                reached[w] = true;
                queue.push_back(w);
            }
        }
    }
    Ok(reached
        .iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(i, _)| g.vertex_from_index(i))
        .collect())
}

/// One application of `F -> F^alpha` with fresh alpha-percolation.
pub fn spread<R: Rng + ?Sized>(
    g: &Geometry,
    f: &VertexSet,
    alpha: f64,
    rng: &mut R,
) -> Result<VertexSet, PercolationError> {
    check_probability(alpha)?;
    spread_with(g, f, |_| uniform(rng) < alpha)
}

/// `L` independent applications of [`spread`].
pub fn iterated_spread<R: Rng + ?Sized>(
    g: &Geometry,
    f: &VertexSet,
    alpha: f64,
    levels: usize,
    rng: &mut R,
) -> Result<VertexSet, PercolationError> {
    let mut current = f.clone();
    for _ in 0..levels {
        current = spread(g, &current, alpha, rng)?;
    }
    Ok(current)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailFit {
    /// Minus the slope of `ln P(X >= r)` against `r`.
    pub rate: f64,
    pub r_squared: f64,
    /// Number of `r` values that entered the fit.
    pub points: usize,
}

/// Minimum number of samples with `X >= r` for `r` to enter a tail fit.
pub const MIN_SURVIVORS: usize = 10;

/// Least-squares fit of `ln P(X >= r)` against `r` over `[r_min, r_max]`.
pub fn tail_fit(samples: &[u64], r_min: u64, r_max: u64) -> Result<TailFit, PercolationError> {
    if r_min >= r_max {
        return Err(PercolationError::InvalidRange(r_min, r_max));
    }
    if samples.len() < 100 {
        return Err(PercolationError::InsufficientData(format!(
            "{} samples, need at least 100",
            samples.len()
        )));
    }
    let total = samples.len() as f64;
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in r_min..=r_max {
        let survivors = sorted.len() - sorted.partition_point(|&x| x < r);
        if survivors < MIN_SURVIVORS {
            break;
        }
        xs.push(r as f64);
        ys.push((survivors as f64 / total).ln());
    }
    if xs.len() < 5 {
        return Err(PercolationError::InsufficientData(format!(
            "only {} tail points with at least {MIN_SURVIVORS} survivors",
            xs.len()
        )));
    }
    let (slope, _, r_squared) = linear_fit(&xs, &ys);
    if !r_squared.is_finite() {
        return Err(PercolationError::InsufficientData("degenerate tail".into()));
    }
    Ok(TailFit {
        rate: -slope,
        r_squared,
        points: xs.len(),
    })
}

/// Ordinary least squares; returns (slope, intercept, r_squared).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { f64::NAN } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r_squared)
}

/// Mean fraction of vertices in the largest cluster on `T^{d,n}`.
pub fn estimate_theta<R: Rng + ?Sized>(
    d: usize,
    p: f64,
    n: u32,
    replicas: usize,
    rng: &mut R,
) -> Result<f64, PercolationError> {
    let g = Geometry::torus(d, n).map_err(|_| PercolationError::NotTorus)?;
    let nv = g.vertex_count().unwrap() as f64;
    let mut total = 0.0;
    for _ in 0..replicas.max(1) {
        let cfg = sample_config(&g, p, rng)?;
        let largest = cluster_sizes(&cfg).into_iter().max().unwrap_or(0);
        total += largest as f64 / nv;
    }
    Ok(total / replicas.max(1) as f64)
}
