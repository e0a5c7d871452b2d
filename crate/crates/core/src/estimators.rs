//! Ensemble Monte Carlo estimators built on the lazy engine.
//!
//! Every estimator is a deterministic function of its parameters and the
//! [`Ensemble`] seeding: replica `r` runs on the stream derived from
//! `(master seed, experiment id, grid index, r)` and results are merged in
//! replica order, so thread count never changes the output.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::lattice::{Geometry, Vertex};
use crate::percolation::PercolationError;
use crate::rng::{stream, Ensemble};
use crate::simulator::{Engine, InitialCondition, SimError, SimParams, SimState};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Percolation(#[from] PercolationError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no TV crossing below {epsilon} within the grid (last time {last_time})")]
    GridTooCoarse { epsilon: f64, last_time: f64 },
    #[error("budget of {budget} blocks exhausted after {collected} records")]
    Timeout { collected: usize, budget: u64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

pub type Result<T> = std::result::Result<T, EstimatorError>;

/// A statistic on a time grid with 95% normal confidence half-widths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveEstimate {
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub ci_half_width: Vec<f64>,
    pub replicas: usize,
}

impl CurveEstimate {
    /// Builds the curve from `samples[replica][grid point]`.
    pub fn from_samples(grid: &[f64], samples: &[Vec<f64>]) -> Self {
        let mut mean = Vec::with_capacity(grid.len());
        let mut ci = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let column: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            let (m, h) = mean_ci(&column);
            mean.push(m);
            ci.push(h);
        }
        CurveEstimate {
            grid: grid.to_vec(),
            mean,
            ci_half_width: ci,
            replicas: samples.len(),
        }
    }
}

/// Sample mean and `Z95 * sd / sqrt(n)`.
pub fn mean_ci(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z95 * (var / n).sqrt())
}

/// Unbiased sample variance.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(values: &[f64]) -> f64 {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var: f64 = values.iter().map(|x| (x - mean).powi(2)).sum();
    let cov: f64 = values
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum();
    cov / var
}

fn run_replicas<T, F>(ens: &Ensemble, experiment: &str, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    (0..ens.replicas as u64)
        .into_par_iter()
        .map(|r| job(ens.replica_seed(experiment, r)))
        .collect()
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(EstimatorError::InvalidInput("empty time grid".into()));
    }
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(EstimatorError::InvalidInput(
            "time grid must be nonnegative and nondecreasing".into(),
        ));
    }
    Ok(())
}

fn require_torus(g: &Geometry, what: &str) -> Result<()> {
    if g.is_torus() {
        Ok(())
    } else {
        Err(EstimatorError::InvalidInput(format!("{what} needs a torus geometry")))
    }
}

/// Stationary probability that an edge is open at some time in `[0, beta/mu]`:
/// `1 - (1 - p) exp(-p beta)`.
pub fn open_window_probability(p: f64, beta: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(beta >= 0.0) {
        return Err(EstimatorError::InvalidInput(format!(
            "need p in (0,1) and beta >= 0, got p = {p}, beta = {beta}"
        )));
    }
    Ok(1.0 - (1.0 - p) * (-p * beta).exp())
}

// ---------------------------------------------------------------------------
// Mean squared displacement

/// Distance from the start and attempt count at each grid time, one replica.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DisplacementPath {
    pub distance: Vec<u64>,
    pub attempts: Vec<u64>,
}

pub fn displacement_path(params: &SimParams, grid: &[f64]) -> Result<DisplacementPath> {
    let mut s = SimState::init(params)?;
    let g = *s.geometry();
    let start = s.walker().clone();
    let mut path = DisplacementPath {
        distance: Vec::with_capacity(grid.len()),
        attempts: Vec::with_capacity(grid.len()),
    };
    for &t in grid {
        s.run_until(t)?;
        path.distance.push(g.graph_distance(s.walker(), &start));
        path.attempts.push(s.counters().attempts);
    }
    Ok(path)
}

pub fn msd_paths(params: &SimParams, grid: &[f64], ens: &Ensemble) -> Result<Vec<DisplacementPath>> {
    check_grid(grid)?;
    params.validate()?;
    run_replicas(ens, "msd", |seed| displacement_path(&params.with_seed(seed), grid))
}

/// Mean of `dist(X_t, X_0)^2` on the grid.
pub fn estimate_msd(params: &SimParams, grid: &[f64], ens: &Ensemble) -> Result<CurveEstimate> {
    if ens.replicas < 2 {
        return Err(EstimatorError::InvalidInput("need at least 2 replicas".into()));
    }
    let paths = msd_paths(params, grid, ens)?;
    Ok(msd_from_paths(grid, &paths))
}

pub fn msd_from_paths(grid: &[f64], paths: &[DisplacementPath]) -> CurveEstimate {
    let samples: Vec<Vec<f64>> = paths
        .iter()
        .map(|p| p.distance.iter().map(|&d| (d * d) as f64).collect())
        .collect();
    CurveEstimate::from_samples(grid, &samples)
}

// ---------------------------------------------------------------------------
// Walker total-variation profile

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TvProfile {
    /// Baseline-corrected TV (`mean`) with its CI.
    pub curve: CurveEstimate,
    pub tv_raw: Vec<f64>,
    /// Mean empirical TV of a true uniform sample of the same size.
    pub baseline: f64,
    pub epsilon: f64,
    /// First grid time with corrected TV at most `epsilon`.
    pub crossing: Option<f64>,
    pub warnings: Vec<String>,
}

impl TvProfile {
    pub fn crossing_time(&self) -> Result<f64> {
        self.crossing.ok_or(EstimatorError::GridTooCoarse {
            epsilon: self.epsilon,
            last_time: self.curve.grid.last().copied().unwrap_or(0.0),
        })
    }
}

/// `0.5 * sum_x |counts[x]/total - 1/states|`, over all `states` cells.
pub fn empirical_tv_to_uniform(counts: &[u64], total: u64) -> f64 {
    let u = 1.0 / counts.len() as f64;
    0.5 * counts
        .iter()
        .map(|&c| (c as f64 / total as f64 - u).abs())
        .sum::<f64>()
}

/// Mean and standard deviation of the empirical TV of `samples` uniform
/// draws over `states` cells, over `trials` independent trials.
pub fn uniform_tv_baseline<R: Rng + ?Sized>(
    states: usize,
    samples: usize,
    trials: usize,
    rng: &mut R,
) -> (f64, f64) {
    let values: Vec<f64> = (0..trials)
        .map(|_| {
            let mut counts = vec![0u64; states];
            for _ in 0..samples {
                counts[rng.random_range(0..states)] += 1;
            }
            empirical_tv_to_uniform(&counts, samples as u64)
        })
        .collect();
    let mean = values.iter().sum::<f64>() / trials as f64;
    (mean, sample_variance(&values).sqrt())
}

pub const BASELINE_TRIALS: usize = 64;

/// Walker vertex index at each grid time, one replica.
pub fn walker_positions(params: &SimParams, grid: &[f64]) -> Result<Vec<u32>> {
    let mut s = SimState::init(params)?;
    let g = *s.geometry();
    grid.iter()
        .map(|&t| {
            s.run_until(t)?;
            Ok(g.vertex_index(s.walker()) as u32)
        })
        .collect()
}

/// Empirical TV of the walker law to uniform, walker started at the origin
/// in a stationary environment. The reported curve subtracts the
/// empirical-TV bias of a same-size uniform sample; its CI half-width is
/// `Z95` times that baseline's trial-to-trial standard deviation.
pub fn estimate_tv_profile(params: &SimParams, epsilon: f64, grid: &[f64], ens: &Ensemble) -> Result<TvProfile> {
    check_grid(grid)?;
    let g = params.geometry;
    require_torus(&g, "estimate_tv_profile")?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(EstimatorError::InvalidInput(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    let params = params.with_initial(InitialCondition::origin(&g));
    let mut warnings = params.validate()?;
    let states = g.vertex_count().unwrap();
    if ens.replicas < 20 * states {
        warnings.push(format!(
            "{} replicas is below 20 * n^d = {}",
            ens.replicas,
            20 * states
        ));
    }
    let positions = run_replicas(ens, "mix", |seed| walker_positions(&params.with_seed(seed), grid))?;
    let mut rng = stream(ens.replica_seed("mix-baseline", 0));
    let (baseline, baseline_sd) = uniform_tv_baseline(states, ens.replicas, BASELINE_TRIALS, &mut rng);
    let mut raw = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let mut counts = vec![0u64; states];
        for p in &positions {
            counts[p[k] as usize] += 1;
        }
        raw.push(empirical_tv_to_uniform(&counts, ens.replicas as u64));
    }
    let corrected: Vec<f64> = raw.iter().map(|t| t - baseline).collect();
    let crossing = grid
        .iter()
        .zip(&corrected)
        .find(|(_, &tv)| tv <= epsilon)
        .map(|(&t, _)| t);
    Ok(TvProfile {
        curve: CurveEstimate {
            grid: grid.to_vec(),
            mean: corrected,
            ci_half_width: vec![Z95 * baseline_sd; grid.len()],
            replicas: ens.replicas,
        },
        tv_raw: raw,
        baseline,
        epsilon,
        crossing,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Hitting times

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingEstimate {
    pub target: Vertex,
    pub mean_time: f64,
    pub ci: f64,
    pub replicas: usize,
    pub truncation_horizon: f64,
    pub truncated_fraction: f64,
}

/// The vertex `(floor(n/2), ..., floor(n/2))`, farthest from the origin.
pub fn antipode(g: &Geometry) -> Option<Vertex> {
    g.side().map(|n| Vertex(smallvec::smallvec![n / 2; g.dim()]))
}

/// `50 * max(n^d, n^2) / mu`.
pub fn default_hitting_horizon(g: &Geometry, mu: f64) -> Option<f64> {
    let n = g.side()? as f64;
    let volume = n.powi(g.dim() as i32);
    Some(50.0 * volume.max(n * n) / mu)
}

/// Hitting time of `target` from the origin in a stationary environment,
/// `None` when the horizon passes first.
pub fn hitting_time(params: &SimParams, target: &Vertex, horizon: f64) -> Result<Option<f64>> {
    let mut s = SimState::init(&params.with_initial(InitialCondition::origin(&params.geometry)))?;
    Ok(s.run_until_hit(target, horizon)?)
}

pub fn hitting_times(
    params: &SimParams,
    target: &Vertex,
    horizon: f64,
    ens: &Ensemble,
) -> Result<Vec<Option<f64>>> {
    run_replicas(ens, "hit", |seed| hitting_time(&params.with_seed(seed), target, horizon))
}

/// Mean first hitting time; truncated replicas count as the horizon.
pub fn estimate_hitting(
    params: &SimParams,
    target: Option<Vertex>,
    horizon: Option<f64>,
    ens: &Ensemble,
) -> Result<HittingEstimate> {
    let g = params.geometry;
    require_torus(&g, "estimate_hitting")?;
    params.validate()?;
    let target = target.unwrap_or_else(|| antipode(&g).unwrap());
    if g.vertex(target.coords()).ok().as_ref() != Some(&target) {
        return Err(EstimatorError::InvalidInput(format!("target {target} is not a canonical vertex")));
    }
    let horizon = horizon.unwrap_or_else(|| default_hitting_horizon(&g, params.mu).unwrap());
    let times = hitting_times(params, &target, horizon, ens)?;
    let truncated = times.iter().filter(|t| t.is_none()).count();
    let values: Vec<f64> = times.iter().map(|t| t.unwrap_or(horizon)).collect();
    let (mean, ci) = mean_ci(&values);
    Ok(HittingEstimate {
        target,
        mean_time: mean,
        ci,
        replicas: ens.replicas,
        truncation_horizon: horizon,
        truncated_fraction: truncated as f64 / ens.replicas as f64,
    })
}

// ---------------------------------------------------------------------------
// Regenerations and excursions

/// One excursion between consecutive regenerations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExcursionRecord {
    /// Observation blocks between the two regenerations.
    pub gap: u64,
    /// Walker displacement over the excursion, lifted to `Z^d`.
    pub increment: Vec<i64>,
    /// Walker attempts during the excursion.
    pub attempts: u64,
    /// Largest lifted distance from the excursion's starting point.
    pub span: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcursionSettings {
    /// Observation blocks last `block_constant / mu`.
    pub block_constant: f64,
    pub count: usize,
    /// Total observation blocks allowed.
    pub max_blocks: u64,
    /// Critical probability used to reject supercritical runs, if known.
    pub pc_reference: Option<f64>,
}

impl Default for ExcursionSettings {
    fn default() -> Self {
        ExcursionSettings {
            block_constant: 1.0,
            count: 1000,
            max_blocks: 100_000_000,
            pc_reference: None,
        }
    }
}

fn excursion_record(s: &SimState, gap: u64, last_lifted: &[i64], last_attempts: u64) -> ExcursionRecord {
    ExcursionRecord {
        gap,
        increment: s.lifted().iter().zip(last_lifted).map(|(a, b)| a - b).collect(),
        attempts: s.counters().attempts - last_attempts,
        span: s.span(),
    }
}

/// Observes one trajectory at `k * block_constant / mu`, `k = 0, 1, ...`,
/// testing for a regenerative state (walker's edges all closed, nothing
/// else revealed) each time, and records the excursions between successive
/// regenerations, starting from the first one.
pub fn collect_excursions(params: &SimParams, settings: &ExcursionSettings) -> Result<Vec<ExcursionRecord>> {
    let g = params.geometry;
    require_torus(&g, "collect_excursions")?;
    if !(settings.block_constant > 0.0) {
        return Err(EstimatorError::InvalidInput("block constant must be positive".into()));
    }
    if let Some(pc) = settings.pc_reference {
        if params.p >= pc {
            return Err(EstimatorError::InvalidInput(format!(
                "p = {} is not below the reference p_c = {pc}",
                params.p
            )));
        }
    }
    let block = settings.block_constant / params.mu;
    let mut s = SimState::init(params)?;
    let mut records = Vec::with_capacity(settings.count);
    let mut last: Option<(u64, Vec<i64>, u64)> = None;
    let mut k = 0u64;
    while records.len() < settings.count {
        if k >= settings.max_blocks {
            return Err(EstimatorError::Timeout {
                collected: records.len(),
                budget: settings.max_blocks,
            });
        }
        s.run_until(k as f64 * block)?;
        if s.is_regenerative() {
            if let Some((k_prev, lifted, attempts)) = &last {
                records.push(excursion_record(&s, k - k_prev, lifted, *attempts));
            }
            last = Some((k, s.lifted().to_vec(), s.counters().attempts));
            s.reset_span();
        }
        k += 1;
    }
    Ok(records)
}

/// Regenerations on `Z^d` at integer times where the revealed set is empty.
/// The walker starts at the origin in a stationary environment, which is a
/// regeneration at time 0.
pub fn collect_unit_regenerations(params: &SimParams, count: usize, max_blocks: u64) -> Result<Vec<ExcursionRecord>> {
    let g = params.geometry;
    if g.is_torus() {
        return Err(EstimatorError::InvalidInput(
            "unit regenerations are defined on Z^d".into(),
        ));
    }
    let mut s = SimState::init(&params.with_initial(InitialCondition::origin(&g)))?;
    let mut records = Vec::with_capacity(count);
    let mut last_k = 0u64;
    let mut last_lifted = s.lifted().to_vec();
    let mut last_attempts = 0;
    let mut k = 0u64;
    while records.len() < count {
        k += 1;
        if k > max_blocks {
            return Err(EstimatorError::Timeout {
                collected: records.len(),
                budget: max_blocks,
            });
        }
        s.run_until(k as f64)?;
        if s.revealed_count() == 0 {
            records.push(excursion_record(&s, k - last_k, &last_lifted, last_attempts));
            last_k = k;
            last_lifted = s.lifted().to_vec();
            last_attempts = s.counters().attempts;
            s.reset_span();
        }
    }
    Ok(records)
}

pub const MIN_SIGMA2_RECORDS: usize = 1000;

/// `Var(U^(1)) / E[tau]` from unit-block regeneration records.
pub fn sigma2_regeneration(records: &[ExcursionRecord]) -> Result<f64> {
    if records.len() < MIN_SIGMA2_RECORDS {
        return Err(EstimatorError::InsufficientData(format!(
            "{} records, need at least {MIN_SIGMA2_RECORDS}",
            records.len()
        )));
    }
    let first: Vec<f64> = records.iter().map(|r| r.increment[0] as f64).collect();
    let mean_gap = records.iter().map(|r| r.gap as f64).sum::<f64>() / records.len() as f64;
    Ok(sample_variance(&first) / mean_gap)
}

// ---------------------------------------------------------------------------
// Returns, freezing, revealed-set traces

/// Fraction of replicas that have returned to the start by each horizon.
/// A return is a visit to the start vertex after the first move away.
pub fn return_profile(params: &SimParams, horizons: &[f64], ens: &Ensemble) -> Result<CurveEstimate> {
    check_grid(horizons)?;
    let g = params.geometry;
    if g.is_torus() || !(1..=3).contains(&g.dim()) {
        return Err(EstimatorError::InvalidInput(
            "return profiles are defined on Z^d for d in 1..=3".into(),
        ));
    }
    let params = params.with_initial(InitialCondition::origin(&g));
    params.validate()?;
    let last = *horizons.last().unwrap();
    let returns = run_replicas(ens, "return", |seed| {
        let mut s = SimState::init(&params.with_seed(seed))?;
        Ok(s.run_until_return(last)?)
    })?;
    let samples: Vec<Vec<f64>> = returns
        .iter()
        .map(|r| {
            horizons
                .iter()
                .map(|&h| matches!(r, Some(t) if *t <= h) as u8 as f64)
                .collect()
        })
        .collect();
    Ok(CurveEstimate::from_samples(horizons, &samples))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreezeEstimate {
    pub probability: f64,
    pub ci_half: f64,
    pub replicas: usize,
    pub horizon: f64,
    pub warnings: Vec<String>,
}

/// `P(dist(X_{c/mu}, 0) <= kappa)` from the origin in a stationary environment.
pub fn freeze_probability(params: &SimParams, kappa: u64, c: f64, ens: &Ensemble) -> Result<FreezeEstimate> {
    let g = params.geometry;
    require_torus(&g, "freeze_probability")?;
    if !(c >= 0.0) {
        return Err(EstimatorError::InvalidInput("c must be nonnegative".into()));
    }
    let params = params.with_initial(InitialCondition::origin(&g));
    let mut warnings = params.validate()?;
    let n = g.side().unwrap() as f64;
    if params.mu * n * n > 1.0 {
        warnings.push(format!("mu * n^2 = {} exceeds 1", params.mu * n * n));
    }
    let horizon = c / params.mu;
    let origin = g.origin();
    let inside = run_replicas(ens, "freeze", |seed| {
        let mut s = SimState::init(&params.with_seed(seed))?;
        s.run_until(horizon)?;
        Ok((g.graph_distance(s.walker(), &origin) <= kappa) as u8 as f64)
    })?;
    let (probability, ci_half) = mean_ci(&inside);
    Ok(FreezeEstimate {
        probability,
        ci_half,
        replicas: ens.replicas,
        horizon,
        warnings,
    })
}

/// Mean revealed-set size at block boundaries `k * block_constant / mu`,
/// `k = 0..=n_blocks`.
pub fn revealed_trace(params: &SimParams, block_constant: f64, n_blocks: usize, ens: &Ensemble) -> Result<CurveEstimate> {
    if !(block_constant > 0.0) {
        return Err(EstimatorError::InvalidInput("block constant must be positive".into()));
    }
    params.validate()?;
    let block = block_constant / params.mu;
    let grid: Vec<f64> = (0..=n_blocks).map(|k| k as f64 * block).collect();
    let samples = run_replicas(ens, "trace", |seed| {
        let mut s = SimState::init(&params.with_seed(seed))?;
        grid.iter()
            .map(|&t| {
                s.run_until(t)?;
                Ok(s.revealed_count() as f64)
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(CurveEstimate::from_samples(&grid, &samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{exp_variate, uniform};

    fn torus_params(d: usize, n: u32, p: f64, mu: f64) -> SimParams {
        let g = Geometry::torus(d, n).unwrap();
        SimParams::new(g, p, mu, 1, InitialCondition::StationaryUniformWalker)
    }

    #[test]
    fn open_window_closed_form() {
        assert!((open_window_probability(0.3, 0.0).unwrap() - 0.3).abs() < 1e-15);
        let v = open_window_probability(0.3, 1.0).unwrap();
        assert!((v - 0.4814).abs() < 1e-4, "{v}");
        assert!((open_window_probability(0.3, 1e3).unwrap() - 1.0).abs() < 1e-12);
        assert!(open_window_probability(1.0, 1.0).is_err());
    }

    #[test]
    fn open_window_matches_single_edge_simulation() {
        // Refresh-and-resample chain for one edge over [0, beta/mu].
        let (p, beta, mu) = (0.3, 1.0, 0.7);
        let mut rng = stream(5);
        let reps = 200_000;
        let mut hits = 0;
        for _ in 0..reps {
            let mut open = uniform(&mut rng) < p;
            let mut t = 0.0;
            loop {
                if open {
                    hits += 1;
                    break;
                }
                t += exp_variate(&mut rng, mu);
                if t > beta / mu {
                    break;
                }
                open = uniform(&mut rng) < p;
            }
        }
        let f = hits as f64 / reps as f64;
        let exact = open_window_probability(p, beta).unwrap();
        assert!((f - exact).abs() < 0.005, "{f} vs {exact}");
    }

    #[test]
    fn mean_ci_basics() {
        let (m, h) = mean_ci(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((h - Z95 * (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
        assert!(lag1_autocorrelation(&[1.0, -1.0, 1.0, -1.0, 1.0, -1.0]) < -0.8);
    }

    #[test]
    fn msd_zero_at_time_zero() {
        let params = torus_params(1, 16, 0.5, 0.5);
        let c = estimate_msd(&params, &[0.0, 1.0], &Ensemble::new(3, 50)).unwrap();
        assert_eq!(c.mean[0], 0.0);
        assert_eq!(c.ci_half_width[0], 0.0);
        assert!(c.mean[1] <= 2.0 + 3.0 * c.ci_half_width[1]);
        assert!(estimate_msd(&params, &[0.0], &Ensemble::new(3, 1)).is_err());
        assert!(estimate_msd(&params, &[2.0, 1.0], &Ensemble::new(3, 5)).is_err());
    }

    #[test]
    fn tv_of_point_mass() {
        let mut counts = vec![0u64; 16];
        counts[3] = 10;
        assert!((empirical_tv_to_uniform(&counts, 10) - 15.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn tv_profile_starts_at_point_mass() {
        let params = torus_params(1, 8, 0.3, 0.25);
        let prof = estimate_tv_profile(&params, 0.25, &[0.0, 5.0], &Ensemble::new(2, 100)).unwrap();
        assert!((prof.tv_raw[0] - 7.0 / 8.0).abs() < 1e-12);
        assert!(prof.warnings.iter().any(|w| w.contains("below 20")));
        assert!(matches!(prof.crossing_time(), Err(EstimatorError::GridTooCoarse { .. })));
    }

    #[test]
    fn uniform_baseline_shrinks_with_samples() {
        let mut rng = stream(1);
        let (small, _) = uniform_tv_baseline(16, 100, 32, &mut rng);
        let (large, _) = uniform_tv_baseline(16, 10_000, 32, &mut rng);
        assert!(small > 3.0 * large);
    }

    #[test]
    fn hitting_self_is_zero() {
        let params = torus_params(1, 8, 0.5, 0.5);
        let g = params.geometry;
        let h = estimate_hitting(&params, Some(g.origin()), None, &Ensemble::new(1, 10)).unwrap();
        assert_eq!(h.mean_time, 0.0);
        assert_eq!(h.truncated_fraction, 0.0);
        assert_eq!(antipode(&g), Some(Vertex::new(&[4])));
        assert_eq!(default_hitting_horizon(&g, 0.5), Some(50.0 * 64.0 / 0.5));
    }

    #[test]
    fn hitting_truncation_is_reported() {
        let params = torus_params(1, 32, 0.5, 0.5);
        let h = estimate_hitting(&params, None, Some(1.0), &Ensemble::new(1, 20)).unwrap();
        assert_eq!(h.truncated_fraction, 1.0);
        assert_eq!(h.mean_time, 1.0);
    }

    #[test]
    fn excursion_gaps_positive_and_deterministic() {
        let params = torus_params(1, 16, 0.5, 1.0);
        let settings = ExcursionSettings {
            count: 300,
            pc_reference: Some(1.0),
            ..Default::default()
        };
        let a = collect_excursions(&params, &settings).unwrap();
        assert_eq!(a.len(), 300);
        assert!(a.iter().all(|r| r.gap >= 1));
        assert!(a.iter().all(|r| r.increment.iter().map(|x| x.unsigned_abs()).sum::<u64>() <= r.span));
        assert_eq!(a, collect_excursions(&params, &settings).unwrap());
    }

    #[test]
    fn excursion_validation() {
        let params = torus_params(2, 16, 0.7, 1.0);
        let settings = ExcursionSettings {
            pc_reference: Some(0.5),
            ..Default::default()
        };
        assert!(matches!(
            collect_excursions(&params, &settings),
            Err(EstimatorError::InvalidInput(_))
        ));
        let settings = ExcursionSettings {
            count: 10,
            max_blocks: 1,
            ..Default::default()
        };
        let params = torus_params(1, 16, 0.5, 1.0);
        assert!(matches!(
            collect_excursions(&params, &settings),
            Err(EstimatorError::Timeout { .. })
        ));
    }

    #[test]
    fn sigma2_edge_cases() {
        let zero = vec![
            ExcursionRecord {
                gap: 2,
                increment: vec![0],
                attempts: 3,
                span: 0
            };
            1000
        ];
        assert_eq!(sigma2_regeneration(&zero).unwrap(), 0.0);
        assert!(matches!(
            sigma2_regeneration(&zero[..10]),
            Err(EstimatorError::InsufficientData(_))
        ));
    }

    #[test]
    fn unit_regenerations_positive_sigma2() {
        let g = Geometry::infinite(1).unwrap();
        let params = SimParams::new(g, 0.5, 1.0, 4, InitialCondition::origin(&g));
        let recs = collect_unit_regenerations(&params, 2000, 1_000_000).unwrap();
        assert!(recs.iter().all(|r| r.gap >= 1));
        assert!(sigma2_regeneration(&recs).unwrap() > 0.0);
    }

    #[test]
    fn return_profile_basics() {
        let g = Geometry::infinite(1).unwrap();
        let params = SimParams::new(g, 0.5, 0.5, 4, InitialCondition::origin(&g));
        let c = return_profile(&params, &[0.0, 10.0, 100.0, 1000.0], &Ensemble::new(2, 300)).unwrap();
        assert_eq!(c.mean[0], 0.0);
        assert!(c.mean.windows(2).all(|w| w[1] >= w[0]));
        assert!(c.mean[3] > 0.8);
    }

    #[test]
    fn freeze_trivial_cases() {
        let params = torus_params(2, 8, 0.7, 1e-3);
        let ens = Ensemble::new(1, 20);
        assert_eq!(freeze_probability(&params, 0, 0.0, &ens).unwrap().probability, 1.0);
        assert_eq!(freeze_probability(&params, 8, 0.05, &ens).unwrap().probability, 1.0);
    }

    #[test]
    fn trace_from_stationary_starts_empty() {
        let params = torus_params(1, 16, 0.5, 0.5);
        let c = revealed_trace(&params, 1.0, 3, &Ensemble::new(1, 20)).unwrap();
        assert_eq!(c.mean[0], 0.0);
        assert_eq!(c.grid, vec![0.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn estimators_are_seed_deterministic() {
        let params = torus_params(1, 8, 0.5, 0.5);
        let ens = Ensemble::new(9, 64);
        let a = estimate_msd(&params, &[1.0, 5.0], &ens).unwrap();
        let b = estimate_msd(&params, &[1.0, 5.0], &ens).unwrap();
        assert_eq!(a, b);
        let c = estimate_msd(&params, &[1.0, 5.0], &ens.at_grid_point(1)).unwrap();
        assert_ne!(a, c);
    }
}
