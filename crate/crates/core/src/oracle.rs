//! Exact analysis of the full chain `(X_t, eta_t)` on tiny tori.
//!
//! States are `(vertex, edge bitmask)` pairs indexed vertex-major,
//! `index = vertex_index * 2^|E| + mask`, where bit `k` of the mask is the
//! state of the edge with [`Geometry::edge_index`] `k`. Distributions are row
//! vectors and evolve as `pi_t = pi_0 exp(tQ)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::lattice::{Geometry, LatticeError};

pub const MAX_ORACLE_EDGES: usize = 24;
pub const MAX_ORACLE_STATES: usize = 1 << 22;
pub const MAX_SPECTRAL_STATES: usize = 4096;

/// Default truncation error of [`marginal_at`].
pub const UNIFORMIZATION_TOLERANCE: f64 = 1e-12;

// Largest Poisson mean handled in one uniformization chunk.
const CHUNK_RATE: f64 = 32.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("state space too large: {what} = {value}, limit {limit}")]
    TooLarge {
        what: &'static str,
        value: usize,
        limit: usize,
    },
    #[error("invalid rates: p = {p}, mu = {mu}")]
    InvalidRates { p: f64, mu: f64 },
    #[error("initial distribution has length {got}, expected {want}")]
    WrongLength { got: usize, want: usize },
    #[error("initial distribution sums to {0}, expected 1")]
    NotNormalized(f64),
    #[error("time must be nonnegative and finite, got {0}")]
    InvalidTime(f64),
    #[error("target vertex {0} out of range")]
    InvalidTarget(usize),
    #[error("hitting-time system is singular")]
    Singular,
}

/// Generator of the full chain. Transitions are computed on demand from the
/// state encoding, so memory stays linear in the state count.
#[derive(Debug, Clone)]
pub struct FullChainGenerator {
    geometry: Geometry,
    p: f64,
    mu: f64,
    edges: usize,
    vertices: usize,
    /// `neighbor[v][dir]` and `edge[v][dir]` by direction.
    neighbor: Vec<Vec<usize>>,
    edge: Vec<Vec<usize>>,
}

pub fn build_generator(d: usize, n: u32, p: f64, mu: f64) -> Result<FullChainGenerator, OracleError> {
    let geometry = Geometry::torus(d, n)?;
    if !(p > 0.0 && p < 1.0 && mu > 0.0 && mu.is_finite()) {
        return Err(OracleError::InvalidRates { p, mu });
    }
    let edges = geometry.edge_count().unwrap();
    if edges > MAX_ORACLE_EDGES {
        return Err(OracleError::TooLarge {
            what: "edge count",
            value: edges,
            limit: MAX_ORACLE_EDGES,
        });
    }
    let vertices = geometry.vertex_count().unwrap();
    let states = vertices << edges;
    if states > MAX_ORACLE_STATES {
        return Err(OracleError::TooLarge {
            what: "state count",
            value: states,
            limit: MAX_ORACLE_STATES,
        });
    }
    let dirs = 0..geometry.degree();
    let neighbor = (0..vertices)
        .map(|v| dirs.clone().map(|dir| geometry.step_index(v, dir)).collect())
        .collect();
    let edge = (0..vertices)
        .map(|v| dirs.clone().map(|dir| geometry.edge_index_toward(v, dir)).collect())
        .collect();
    Ok(FullChainGenerator {
        geometry,
        p,
        mu,
        edges,
        vertices,
        neighbor,
        edge,
    })
}

impl FullChainGenerator {
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn state_count(&self) -> usize {
        self.vertices << self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn state_index(&self, vertex: usize, mask: usize) -> usize {
        (vertex << self.edges) | mask
    }

    /// `(vertex index, bitmask)` of a state.
    pub fn decode(&self, state: usize) -> (usize, usize) {
        (state >> self.edges, state & ((1 << self.edges) - 1))
    }

    #[inline]
    fn flip_rate(&self, open: bool) -> f64 {
        if open {
            (1.0 - self.p) * self.mu
        } else {
            self.p * self.mu
        }
    }

    fn move_rate(&self) -> f64 {
        1.0 / self.geometry.degree() as f64
    }

    /// Calls `f(target, rate)` for every off-diagonal transition out of `state`:
    /// edge flips in edge order, then walker moves in direction order.
    #[inline]
    pub fn for_each_transition<F: FnMut(usize, f64)>(&self, state: usize, mut f: F) {
        let (v, mask) = self.decode(state);
        for k in 0..self.edges {
            f(state ^ (1 << k), self.flip_rate(mask >> k & 1 == 1));
        }
        let rate = self.move_rate();
        for (dir, &e) in self.edge[v].iter().enumerate() {
            if mask >> e & 1 == 1 {
                f(self.state_index(self.neighbor[v][dir], mask), rate);
            }
        }
    }

    pub fn off_diagonal(&self, state: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(self.edges + self.geometry.degree());
        self.for_each_transition(state, |j, r| out.push((j, r)));
        out
    }

    /// `Q_ii = -sum_j Q_ij`.
    pub fn diagonal(&self, state: usize) -> f64 {
        let mut total = 0.0;
        self.for_each_transition(state, |_, r| total += r);
        -total
    }

    /// `Q_ij`, including the diagonal.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diagonal(i);
        }
        let (vi, mi) = self.decode(i);
        let (vj, mj) = self.decode(j);
        if vi == vj {
            let diff = mi ^ mj;
            if diff.count_ones() == 1 {
                return self.flip_rate(mi & diff != 0);
            }
            return 0.0;
        }
        if mi != mj {
            return 0.0;
        }
        let mut rate = 0.0;
        for (dir, &e) in self.edge[vi].iter().enumerate() {
            if self.neighbor[vi][dir] == vj && mi >> e & 1 == 1 {
                rate += self.move_rate();
            }
        }
        rate
    }

    fn env_weight(&self, mask: usize) -> f64 {
        let open = mask.count_ones() as i32;
        self.p.powi(open) * (1.0 - self.p).powi(self.edges as i32 - open)
    }

    /// `u x pi_p`.
    pub fn stationary(&self) -> Vec<f64> {
        let u = 1.0 / self.vertices as f64;
        (0..self.state_count())
            .map(|s| u * self.env_weight(self.decode(s).1))
            .collect()
    }

    /// Walker at `vertex`, environment from `pi_p`.
    pub fn walker_at_stationary_env(&self, vertex: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.state_count()];
        for mask in 0..(1usize << self.edges) {
            out[self.state_index(vertex, mask)] = self.env_weight(mask);
        }
        out
    }

    pub fn point_mass(&self, state: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.state_count()];
        out[state] = 1.0;
        out
    }

    /// Sums a state distribution over bitmasks.
    pub fn walker_marginal(&self, dist: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.vertices];
        for (s, &m) in dist.iter().enumerate() {
            out[s >> self.edges] += m;
        }
        out
    }

    /// Row vector times generator: `(pi Q)_j`.
    pub fn apply(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; pi.len()];
        for (i, &mass) in pi.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let mut exit = 0.0;
            self.for_each_transition(i, |j, r| {
                out[j] += mass * r;
                exit += r;
            });
            out[i] -= mass * exit;
        }
        out
    }

    /// Largest exit rate, the uniformization constant.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.state_count()).fold(0.0f64, |m, s| m.max(-self.diagonal(s)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityCheck {
    /// `max_j |(pi Q)_j|`.
    pub stationary: f64,
    /// `max_{i != j} |pi_i Q_ij - pi_j Q_ji|`.
    pub detailed_balance: f64,
}

pub fn stationary_residual(gen: &FullChainGenerator) -> StationarityCheck {
    residual_of(gen, &gen.stationary())
}

/// Stationarity and detailed-balance residuals of an arbitrary candidate.
pub fn residual_of(gen: &FullChainGenerator, pi: &[f64]) -> StationarityCheck {
    let stationary = gen.apply(pi).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut detailed_balance = 0.0f64;
    for (i, &mass) in pi.iter().enumerate() {
        gen.for_each_transition(i, |j, r| {
            let diff = (mass * r - pi[j] * gen.rate(j, i)).abs();
            detailed_balance = detailed_balance.max(diff);
        });
    }
    StationarityCheck {
        stationary,
        detailed_balance,
    }
}

fn check_distribution(gen: &FullChainGenerator, init: &[f64]) -> Result<(), OracleError> {
    if init.len() != gen.state_count() {
        return Err(OracleError::WrongLength {
            got: init.len(),
            want: gen.state_count(),
        });
    }
    let total: f64 = init.iter().sum();
    if (total - 1.0).abs() > 1e-9 || init.iter().any(|&x| x < 0.0) {
        return Err(OracleError::NotNormalized(total));
    }
    Ok(())
}

/// `init exp(tQ)` with the default truncation tolerance.
pub fn marginal_at(gen: &FullChainGenerator, init: &[f64], t: f64) -> Result<Vec<f64>, OracleError> {
    marginal_with_tolerance(gen, init, t, UNIFORMIZATION_TOLERANCE)
}

/// `init exp(tQ)` by uniformization, split into chunks of Poisson mean at
/// most 32; the truncated Poisson mass summed over chunks is below `tol`.
pub fn marginal_with_tolerance(
    gen: &FullChainGenerator,
    init: &[f64],
    t: f64,
    tol: f64,
) -> Result<Vec<f64>, OracleError> {
    check_distribution(gen, init)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(OracleError::InvalidTime(t));
    }
    let lambda = gen.max_exit_rate();
    let mut current = init.to_vec();
    if t == 0.0 || lambda == 0.0 {
        return Ok(current);
    }
    let total = lambda * t;
    let chunks = (total / CHUNK_RATE).ceil().max(1.0) as usize;
    let rate = total / chunks as f64;
    let chunk_tol = tol / chunks as f64;
    let k_max = (rate + 12.0 * rate.sqrt() + 60.0) as usize;
    for _ in 0..chunks {
        let mut term = current.clone();
        let mut weight = (-rate).exp();
        let mut acc: Vec<f64> = term.iter().map(|x| weight * x).collect();
        let mut covered = weight;
        let mut k = 0usize;
        while 1.0 - covered > chunk_tol && k < k_max {
            k += 1;
            term = uniformized_step(gen, &term, lambda);
            weight *= rate / k as f64;
            covered += weight;
            for (a, x) in acc.iter_mut().zip(&term) {
                *a += weight * x;
            }
        }
        current = acc;
    }
    Ok(current)
}

/// `v (I + Q / lambda)`.
fn uniformized_step(gen: &FullChainGenerator, v: &[f64], lambda: f64) -> Vec<f64> {
    let q = gen.apply(v);
    v.iter().zip(q).map(|(a, b)| a + b / lambda).collect()
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Worst-case TV distance to stationarity at time `t` over `inits`.
pub fn tv_to_stationary(gen: &FullChainGenerator, inits: &[Vec<f64>], t: f64) -> Result<f64, OracleError> {
    let pi = gen.stationary();
    let mut worst = 0.0f64;
    for init in inits {
        let dist = marginal_at(gen, init, t)?;
        worst = worst.max(total_variation(&dist, &pi));
    }
    Ok(worst)
}

/// `inf { t : max_init TV(init exp(tQ), pi) <= epsilon }`, by doubling then
/// bisection to relative precision 1e-6. TV to stationarity is
/// non-increasing in `t`, which makes the bisection valid.
pub fn exact_tv_mix(gen: &FullChainGenerator, epsilon: f64, inits: &[Vec<f64>]) -> Result<f64, OracleError> {
    let f = |t: f64| tv_to_stationary(gen, inits, t);
    if f(0.0)? <= epsilon {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while f(hi)? > epsilon {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(OracleError::InvalidTime(hi));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if f(mid)? <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Smallest nonzero eigenvalue of `-Q`, via the symmetrization
/// `S_ij = sqrt(pi_i / pi_j) Q_ij` which is symmetric for a reversible chain.
pub fn spectral_gap(gen: &FullChainGenerator) -> Result<f64, OracleError> {
    let ns = gen.state_count();
    if ns > MAX_SPECTRAL_STATES {
        return Err(OracleError::TooLarge {
            what: "state count",
            value: ns,
            limit: MAX_SPECTRAL_STATES,
        });
    }
    let root: Vec<f64> = gen.stationary().iter().map(|x| x.sqrt()).collect();
    let mut s = DMatrix::<f64>::zeros(ns, ns);
    for i in 0..ns {
        s[(i, i)] = -gen.diagonal(i);
        gen.for_each_transition(i, |j, r| {
            let v = -0.5 * r * root[i] / root[j];
            s[(i, j)] += v;
            s[(j, i)] += v;
        });
    }
    let mut eig: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    Ok(eig[1])
}

/// Expected first time the walker stands on `target`, from each state;
/// one dense solve over the states with the walker elsewhere.
pub fn expected_hitting_times(gen: &FullChainGenerator, target: usize) -> Result<Vec<f64>, OracleError> {
    let ns = gen.state_count();
    if ns > MAX_SPECTRAL_STATES {
        return Err(OracleError::TooLarge {
            what: "state count",
            value: ns,
            limit: MAX_SPECTRAL_STATES,
        });
    }
    if target >= gen.vertex_count() {
        return Err(OracleError::InvalidTarget(target));
    }
    let free: Vec<usize> = (0..ns).filter(|&s| gen.decode(s).0 != target).collect();
    let mut slot = vec![usize::MAX; ns];
    for (k, &s) in free.iter().enumerate() {
        slot[s] = k;
    }
    let m = free.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (k, &s) in free.iter().enumerate() {
        a[(k, k)] = gen.diagonal(s);
        gen.for_each_transition(s, |j, r| {
            if slot[j] != usize::MAX {
                a[(k, slot[j])] += r;
            }
        });
    }
    let rhs = DVector::<f64>::from_element(m, -1.0);
    let h = a.lu().solve(&rhs).ok_or(OracleError::Singular)?;
    let mut out = vec![0.0; ns];
    for (k, &s) in free.iter().enumerate() {
        out[s] = h[k];
    }
    Ok(out)
}

/// Mean hitting time of `target` under the initial law `init`.
pub fn expected_hitting_time(gen: &FullChainGenerator, init: &[f64], target: usize) -> Result<f64, OracleError> {
    if init.len() != gen.state_count() {
        return Err(OracleError::WrongLength {
            got: init.len(),
            want: gen.state_count(),
        });
    }
    let h = expected_hitting_times(gen, target)?;
    Ok(init.iter().zip(&h).map(|(a, b)| a * b).sum())
}
