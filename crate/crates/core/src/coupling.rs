//! Lazy simple random walk coupling on the torus and the simultaneous
//! regeneration time of two independent copies of the process.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::estimators::{mean_ci, EstimatorError, Result};
use crate::lattice::{Geometry, Vertex};
use crate::rng::{uniform, Ensemble};
use crate::simulator::{Engine, SimParams, SimState};

/// Two lazy simple random walks on a torus moved by the coordinate-wise
/// coupling. A step picks a coordinate uniformly. If the walkers agree
/// there, both stay with probability 1/2 or move together by +1 or -1 with
/// probability 1/4 each. Otherwise one of them, chosen uniformly, moves by
/// +1 or -1 with probability 1/2 each and the other stays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoupledPair {
    geometry: Geometry,
    pub walker_a: Vertex,
    pub walker_b: Vertex,
    pub steps: u64,
    pub meet_time: Option<u64>,
}

impl CoupledPair {
    pub fn new(geometry: Geometry, a: Vertex, b: Vertex) -> Result<Self> {
        if !geometry.is_torus() {
            return Err(EstimatorError::InvalidInput("the LSRW coupling needs a torus".into()));
        }
        for v in [&a, &b] {
            if geometry.vertex(v.coords()).ok().as_ref() != Some(v) {
                return Err(EstimatorError::InvalidInput(format!("{v} is not a canonical vertex")));
            }
        }
        let meet_time = (a == b).then_some(0);
        Ok(CoupledPair {
            geometry,
            walker_a: a,
            walker_b: b,
            steps: 0,
            meet_time,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn is_met(&self) -> bool {
        self.meet_time.is_some()
    }

    /// One coupled step; returns the direction each walker moved, if any.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (Option<usize>, Option<usize>) {
        let g = self.geometry;
        let axis = rng.random_range(0..g.dim());
        let u = uniform(rng);
        let (da, db) = if self.walker_a.coords()[axis] == self.walker_b.coords()[axis] {
            let dir = if u < 0.5 {
                None
            } else if u < 0.75 {
                Some(2 * axis + 1)
            } else {
                Some(2 * axis)
            };
            (dir, dir)
        } else {
            let dir = if ((u * 4.0) as u32).is_multiple_of(2) { 2 * axis + 1 } else { 2 * axis };
            if u < 0.5 {
                (Some(dir), None)
            } else {
                (None, Some(dir))
            }
        };
        if let Some(dir) = da {
            self.walker_a = g.step(&self.walker_a, dir);
        }
        if let Some(dir) = db {
            self.walker_b = g.step(&self.walker_b, dir);
        }
        self.steps += 1;
        if self.meet_time.is_none() && self.walker_a == self.walker_b {
            self.meet_time = Some(self.steps);
        }
        (da, db)
    }
}

/// Steps of the coupling until the two walkers coincide.
pub fn lsrw_coupled_meet<R: Rng + ?Sized>(g: &Geometry, starts: (&Vertex, &Vertex), rng: &mut R) -> Result<u64> {
    let mut pair = CoupledPair::new(*g, starts.0.clone(), starts.1.clone())?;
    while !pair.is_met() {
        pair.step(rng);
    }
    Ok(pair.meet_time.unwrap())
}

/// Exact expected meeting time on the cycle of side `n` from separation
/// `k`: the difference performs a symmetric walk on `0..=n` absorbed at both
/// ends, solved here as a tridiagonal linear system.
pub fn exact_meet_time_1d(n: u32, k: u32) -> f64 {
    let k = k % n;
    if k == 0 {
        return 0.0;
    }
    // h(j) - (h(j-1) + h(j+1)) / 2 = 1, h(0) = h(n) = 0; Thomas algorithm.
    let m = (n - 1) as usize;
    let (a, b, c) = (-0.5, 1.0, -0.5);
    let mut cp = vec![0.0; m];
    let mut dp = vec![0.0; m];
    cp[0] = c / b;
    dp[0] = 1.0 / b;
    for i in 1..m {
        let denom = b - a * cp[i - 1];
        cp[i] = c / denom;
        dp[i] = (1.0 - a * dp[i - 1]) / denom;
    }
    let mut h = vec![0.0; m];
    h[m - 1] = dp[m - 1];
    for i in (0..m - 1).rev() {
        h[i] = dp[i] - cp[i] * h[i + 1];
    }
    h[k as usize - 1]
}

/// Chi-square p-value of each walker's one-step law against the lazy simple
/// random walk (stay 1/2, each of the 2d directions 1/(4d)) over `steps`
/// coupled steps from `starts`.
pub fn lsrw_marginal_pvalues<R: Rng + ?Sized>(
    g: &Geometry,
    starts: (&Vertex, &Vertex),
    steps: u64,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let mut pair = CoupledPair::new(*g, starts.0.clone(), starts.1.clone())?;
    let cells = g.degree() + 1;
    let mut counts = vec![vec![0u64; cells]; 2];
    for _ in 0..steps {
        let (a, b) = pair.step(rng);
        counts[0][a.unwrap_or(cells - 1)] += 1;
        counts[1][b.unwrap_or(cells - 1)] += 1;
    }
    let mut probs = vec![1.0 / (2.0 * g.degree() as f64); cells];
    probs[cells - 1] = 0.5;
    let chi = ChiSquared::new((cells - 1) as f64).expect("positive degrees of freedom");
    let pvalue = |c: &[u64]| {
        let stat: f64 = c
            .iter()
            .zip(&probs)
            .map(|(&o, p)| {
                let e = p * steps as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        chi.sf(stat)
    };
    Ok((pvalue(&counts[0]), pvalue(&counts[1])))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stage1Estimate {
    /// Mean of the first block index `k >= 1` at which both copies are regenerative.
    pub mean_blocks: f64,
    pub ci_half: f64,
    pub pairs: usize,
    pub samples: Vec<u64>,
}

/// First block `k >= 1` at which two independent copies are regenerative
/// at the same observation time `k * block_constant / mu`.
pub fn simultaneous_regeneration_block(
    params_a: &SimParams,
    params_b: &SimParams,
    block_constant: f64,
    max_blocks: u64,
) -> Result<Option<u64>> {
    let mut a = SimState::init(params_a)?;
    let mut b = SimState::init(params_b)?;
    let block = block_constant / params_a.mu;
    for k in 1..=max_blocks {
        let t = k as f64 * block;
        a.run_until(t)?;
        b.run_until(t)?;
        if a.is_regenerative() && b.is_regenerative() {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Mean simultaneous-regeneration time over `ens.replicas` independent pairs.
pub fn simultaneous_regeneration_time(
    params: &SimParams,
    block_constant: f64,
    max_blocks: u64,
    ens: &Ensemble,
) -> Result<Stage1Estimate> {
    if !params.geometry.is_torus() {
        return Err(EstimatorError::InvalidInput("simultaneous regeneration needs a torus".into()));
    }
    if !(block_constant > 0.0) {
        return Err(EstimatorError::InvalidInput("block constant must be positive".into()));
    }
    params.validate()?;
    let results: Vec<Option<u64>> = (0..ens.replicas as u64)
        .into_par_iter()
        .map(|r| {
            simultaneous_regeneration_block(
                &params.with_seed(ens.replica_seed("couple-a", r)),
                &params.with_seed(ens.replica_seed("couple-b", r)),
                block_constant,
                max_blocks,
            )
        })
        .collect::<Result<_>>()?;
    let samples: Vec<u64> = results.iter().flatten().copied().collect();
    if samples.len() < results.len() {
        return Err(EstimatorError::Timeout {
            collected: samples.len(),
            budget: max_blocks,
        });
    }
    let values: Vec<f64> = samples.iter().map(|&k| k as f64).collect();
    let (mean_blocks, ci_half) = mean_ci(&values);
    Ok(Stage1Estimate {
        mean_blocks,
        ci_half,
        pairs: ens.replicas,
        samples,
    })
}
