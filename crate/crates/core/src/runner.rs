//! Dispatches configs to estimators and writes CSV, JSON summary and
//! manifest files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, CouplingMode, ExperimentConfig, ExperimentKind};
use crate::coupling::{
    exact_meet_time_1d, lsrw_coupled_meet, lsrw_marginal_pvalues, simultaneous_regeneration_block,
    simultaneous_regeneration_time,
};
use crate::estimators::{self as est, EstimatorError, ExcursionSettings};
use crate::lattice::Geometry;
use crate::oracle::{self, OracleError};
use crate::percolation::{self as perc, PercolationError};
use crate::rng::{derive_seed, stream, Ensemble, SEED_RULE_ID};
use crate::simulator::{Engine, SimParams, SimState};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_SCHEMA: &str = "dynperc-csv-v1";
pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{experiment}: {source}")]
    Estimator {
        experiment: &'static str,
        source: EstimatorError,
    },
    #[error("{experiment}: {source}")]
    Oracle {
        experiment: &'static str,
        source: OracleError,
    },
    #[error("{experiment}: {source}")]
    Percolation {
        experiment: &'static str,
        source: PercolationError,
    },
    #[error("i/o error at {path}: {message}")]
    Io { path: String, message: String },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("verification failed: {0}")]
    Verify(String),
}

type Result<T> = std::result::Result<T, RunError>;

/// Raw table plus summary of one experiment at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub summary: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotCheck {
    pub grid_index: u64,
    pub replica0_seed: Option<u64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub csv_schema: String,
    pub library_version: String,
    pub seed_rule: String,
    pub master_seed: u64,
    pub experiment: String,
    pub config: String,
    pub wall_time_seconds: f64,
    pub files: Vec<String>,
    pub spot_checks: Vec<SpotCheck>,
}

fn est_err(kind: ExperimentKind) -> impl Fn(EstimatorError) -> RunError {
    move |source| RunError::Estimator {
        experiment: kind.id(),
        source,
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn json_f64(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn sim_params(cfg: &ExperimentConfig, g: Geometry, seed: u64) -> SimParams {
    SimParams::new(g, cfg.p, cfg.mu, seed, cfg.initial_condition(&g))
}

/// Experiment id under which replica streams are derived.
pub fn stream_id(cfg: &ExperimentConfig) -> Option<&'static str> {
    Some(match cfg.experiment {
        ExperimentKind::Msd => "msd",
        ExperimentKind::Mix => "mix",
        ExperimentKind::Hit => "hit",
        ExperimentKind::Excursions => "excursions",
        ExperimentKind::Sigma2 => "sigma2",
        ExperimentKind::Oracle => return None,
        ExperimentKind::Perc => "perc",
        ExperimentKind::Couple => match cfg.coupling {
            CouplingMode::Stage1 => "couple-a",
            CouplingMode::Lsrw => "lsrw",
        },
        ExperimentKind::Freeze => "freeze",
        ExperimentKind::Trace => "trace",
    })
}

fn excursion_settings(cfg: &ExperimentConfig) -> ExcursionSettings {
    ExcursionSettings {
        block_constant: cfg.c_obs.unwrap_or(1.0),
        count: cfg.count.unwrap_or(1000),
        max_blocks: cfg.max_blocks.unwrap_or(100_000_000),
        pc_reference: cfg.pc_reference,
    }
}

const DEFAULT_KAPPA: u64 = 10;
const DEFAULT_FREEZE_C: f64 = 0.05;
const DEFAULT_EPSILON: f64 = 0.25;
const DEFAULT_TRACE_BLOCKS: usize = 20;
const DEFAULT_SIGMA2_RECORDS: usize = 10_000;
const DEFAULT_COUPLE_BLOCKS: u64 = 1_000_000;
const LSRW_MARGINAL_STEPS: u64 = 100_000;

fn lsrw_starts(cfg: &ExperimentConfig, g: &Geometry) -> Result<(crate::lattice::Vertex, crate::lattice::Vertex)> {
    let b = match cfg.target_vertex(g)? {
        Some(v) => v,
        None => est::antipode(g).expect("torus"),
    };
    Ok((g.origin(), b))
}

/// Runs one grid point. Call inside the desired worker pool.
pub fn execute(cfg: &ExperimentConfig, grid_index: u64) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let g = cfg.geometry()?;
    let ens = Ensemble::new(cfg.seed, cfg.replicas).at_grid_point(grid_index);
    let kind = cfg.experiment;
    let e = est_err(kind);
    let base = sim_params(cfg, g, 0);
    let times = cfg.times();
    let strings = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    Ok(match kind {
        ExperimentKind::Msd => {
            let c = est::estimate_msd(&base, &times, &ens).map_err(e)?;
            let rows = (0..c.grid.len())
                .map(|k| vec![fmt(c.grid[k]), fmt(c.mean[k]), fmt(c.ci_half_width[k]), c.replicas.to_string()])
                .collect();
            let slope = (c.grid.len() >= 2).then(|| perc::linear_fit(&c.grid, &c.mean).0);
            ExperimentOutput {
                header: strings(&["t", "mean_sq_dist", "ci_half", "replicas"]),
                rows,
                summary: json!({
                    "mean_sq_dist": c.mean,
                    "ci_half": c.ci_half_width,
                    "t": c.grid,
                    "linear_slope": slope,
                    "replicas": c.replicas,
                }),
            }
        }
        ExperimentKind::Mix => {
            let eps = cfg.epsilon.unwrap_or(DEFAULT_EPSILON);
            let prof = est::estimate_tv_profile(&base, eps, &times, &ens).map_err(e)?;
            let mut warnings = prof.warnings.clone();
            if prof.crossing.is_none() {
                warnings.push(format!("no TV crossing below {eps} within the grid"));
            }
            let rows = (0..times.len())
                .map(|k| {
                    vec![
                        fmt(times[k]),
                        fmt(prof.tv_raw[k]),
                        fmt(prof.curve.mean[k]),
                        fmt(prof.curve.ci_half_width[k]),
                    ]
                })
                .collect();
            ExperimentOutput {
                header: strings(&["t", "tv_raw", "tv_corrected", "ci_half"]),
                rows,
                summary: json!({
                    "epsilon": eps,
                    "crossing_time": prof.crossing,
                    "baseline": prof.baseline,
                    "replicas": cfg.replicas,
                    "warnings": warnings,
                }),
            }
        }
        ExperimentKind::Hit => {
            let target = cfg.target_vertex(&g)?;
            let h = est::estimate_hitting(&base, target, cfg.horizon, &ens).map_err(e)?;
            ExperimentOutput {
                header: strings(&["target", "mean", "ci_half", "truncated_fraction"]),
                rows: vec![vec![
                    h.target.to_string(),
                    fmt(h.mean_time),
                    fmt(h.ci),
                    fmt(h.truncated_fraction),
                ]],
                summary: json!({
                    "target": h.target.coords(),
                    "mean": h.mean_time,
                    "ci_half": h.ci,
                    "replicas": h.replicas,
                    "truncation_horizon": h.truncation_horizon,
                    "truncated_fraction": h.truncated_fraction,
                }),
            }
        }
        ExperimentKind::Excursions => {
            let params = base.with_seed(ens.replica_seed("excursions", 0));
            let recs = est::collect_excursions(&params, &excursion_settings(cfg)).map_err(e)?;
            let mut header = strings(&["j", "gap"]);
            header.extend((1..=g.dim()).map(|i| format!("du_{i}")));
            let rows = recs
                .iter()
                .enumerate()
                .map(|(j, r)| {
                    let mut row = vec![(j + 1).to_string(), r.gap.to_string()];
                    row.extend(r.increment.iter().map(|x| x.to_string()));
                    row
                })
                .collect();
            let gaps: Vec<f64> = recs.iter().map(|r| r.gap as f64).collect();
            let (mean_gap, gap_ci) = est::mean_ci(&gaps);
            let increments: Vec<Value> = (0..g.dim())
                .map(|i| {
                    let xs: Vec<f64> = recs.iter().map(|r| r.increment[i] as f64).collect();
                    let (m, ci) = est::mean_ci(&xs);
                    json!({"mean": m, "ci_half": ci, "lag1": json_f64(est::lag1_autocorrelation(&xs))})
                })
                .collect();
            ExperimentOutput {
                header,
                rows,
                summary: json!({
                    "count": recs.len(),
                    "mean_gap": mean_gap,
                    "gap_ci_half": gap_ci,
                    "gap_lag1": json_f64(est::lag1_autocorrelation(&gaps)),
                    "increments": increments,
                    "c_obs": cfg.c_obs.unwrap_or(1.0),
                }),
            }
        }
        ExperimentKind::Sigma2 => {
            let params = base.with_seed(ens.replica_seed("sigma2", 0));
            let count = cfg.count.unwrap_or(DEFAULT_SIGMA2_RECORDS);
            let recs = est::collect_unit_regenerations(&params, count, cfg.max_blocks.unwrap_or(100_000_000))
                .map_err(&e)?;
            let sigma2 = est::sigma2_regeneration(&recs).map_err(&e)?;
            let gaps: Vec<f64> = recs.iter().map(|r| r.gap as f64).collect();
            let first: Vec<f64> = recs.iter().map(|r| r.increment[0] as f64).collect();
            let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
            let var = est::sample_variance(&first);
            ExperimentOutput {
                header: strings(&["sigma2", "records", "mean_gap", "var_increment"]),
                rows: vec![vec![fmt(sigma2), recs.len().to_string(), fmt(mean_gap), fmt(var)]],
                summary: json!({
                    "sigma2": sigma2,
                    "records": recs.len(),
                    "mean_gap": mean_gap,
                    "var_increment": var,
                }),
            }
        }
        ExperimentKind::Oracle => {
            let n = g.side().expect("torus") as u32;
            let oe = |source| RunError::Oracle {
                experiment: kind.id(),
                source,
            };
            let gen = oracle::build_generator(g.dim(), n, cfg.p, cfg.mu).map_err(oe)?;
            let check = oracle::stationary_residual(&gen);
            let pi = gen.stationary();
            let init = gen.walker_at_stationary_env(0);
            let uniform = vec![1.0 / gen.vertex_count() as f64; gen.vertex_count()];
            let mut rows = Vec::new();
            let mut dist = init.clone();
            let mut now = 0.0;
            for &t in &times {
                dist = oracle::marginal_at(&gen, &dist, t - now).map_err(oe)?;
                now = t;
                let walker = gen.walker_marginal(&dist);
                rows.push(vec![
                    fmt(t),
                    fmt(oracle::total_variation(&walker, &uniform)),
                    fmt(oracle::total_variation(&dist, &pi)),
                ]);
            }
            let gap = match oracle::spectral_gap(&gen) {
                Ok(v) => Some(v),
                Err(OracleError::TooLarge { .. }) => None,
                Err(other) => return Err(oe(other)),
            };
            let mix = match cfg.epsilon {
                Some(eps) => Some(oracle::exact_tv_mix(&gen, eps, &[init]).map_err(oe)?),
                None => None,
            };
            ExperimentOutput {
                header: strings(&["t", "walker_tv", "full_tv"]),
                rows,
                summary: json!({
                    "states": gen.state_count(),
                    "stationary_residual": check.stationary,
                    "detailed_balance_residual": check.detailed_balance,
                    "spectral_gap": gap,
                    "tv_mix_from_origin": mix,
                    "epsilon": cfg.epsilon,
                }),
            }
        }
        ExperimentKind::Perc => {
            let pe = |source| RunError::Percolation {
                experiment: kind.id(),
                source,
            };
            let stats: Vec<(perc::ClusterStats, f64)> = {
                use rayon::prelude::*;
                (0..cfg.replicas as u64)
                    .into_par_iter()
                    .map(|r| {
                        let mut rng = stream(ens.replica_seed("perc", r));
                        let c = perc::sample_config(&g, cfg.p, &mut rng).map_err(pe)?;
                        Ok((perc::cluster_stats(&c), c.open_fraction()))
                    })
                    .collect::<Result<_>>()?
            };
            let rows = stats
                .iter()
                .enumerate()
                .map(|(r, (s, f))| {
                    vec![
                        r.to_string(),
                        s.sizes.len().to_string(),
                        s.sizes.iter().max().copied().unwrap_or(0).to_string(),
                        s.diameters.iter().max().copied().unwrap_or(0).to_string(),
                        fmt(*f),
                    ]
                })
                .collect();
            let sizes: Vec<u64> = stats.iter().flat_map(|(s, _)| s.sizes.iter().map(|&x| x as u64)).collect();
            let diameters: Vec<u64> = stats.iter().flat_map(|(s, _)| s.diameters.iter().copied()).collect();
            let (r_min, r_max) = (cfg.r_min.unwrap_or(1), cfg.r_max.unwrap_or(20));
            let fit_json = |samples: &[u64]| match perc::tail_fit(samples, r_min, r_max) {
                Ok(f) => json!({"rate": f.rate, "r_squared": json_f64(f.r_squared), "points": f.points}),
                Err(err) => json!({"error": err.to_string()}),
            };
            ExperimentOutput {
                header: strings(&["replica", "clusters", "largest_size", "largest_diameter", "open_fraction"]),
                rows,
                summary: json!({
                    "replicas": cfg.replicas,
                    "clusters": sizes.len(),
                    "size_tail": fit_json(&sizes),
                    "diameter_tail": fit_json(&diameters),
                    "r_min": r_min,
                    "r_max": r_max,
                }),
            }
        }
        ExperimentKind::Couple => match cfg.coupling {
            CouplingMode::Stage1 => {
                let est1 = simultaneous_regeneration_time(
                    &base,
                    cfg.c_obs.unwrap_or(1.0),
                    cfg.max_blocks.unwrap_or(DEFAULT_COUPLE_BLOCKS),
                    &ens,
                )
                .map_err(e)?;
                ExperimentOutput {
                    header: strings(&["pair", "t1_blocks"]),
                    rows: est1
                        .samples
                        .iter()
                        .enumerate()
                        .map(|(i, k)| vec![i.to_string(), k.to_string()])
                        .collect(),
                    summary: json!({
                        "mean_blocks": est1.mean_blocks,
                        "ci_half": est1.ci_half,
                        "pairs": est1.pairs,
                    }),
                }
            }
            CouplingMode::Lsrw => {
                let (a, b) = lsrw_starts(cfg, &g)?;
                let meets: Vec<u64> = {
                    use rayon::prelude::*;
                    (0..cfg.replicas as u64)
                        .into_par_iter()
                        .map(|r| lsrw_coupled_meet(&g, (&a, &b), &mut stream(ens.replica_seed("lsrw", r))))
                        .collect::<std::result::Result<_, _>>()
                        .map_err(&e)?
                };
                let values: Vec<f64> = meets.iter().map(|&m| m as f64).collect();
                let (mean, ci) = est::mean_ci(&values);
                let exact = (g.dim() == 1).then(|| {
                    exact_meet_time_1d(g.side().unwrap() as u32, g.graph_distance(&a, &b) as u32)
                });
                let mut rng = stream(ens.replica_seed("lsrw-marginal", 0));
                let (pa, pb) = lsrw_marginal_pvalues(&g, (&a, &b), LSRW_MARGINAL_STEPS, &mut rng).map_err(&e)?;
                ExperimentOutput {
                    header: strings(&["pair", "meet_steps"]),
                    rows: meets
                        .iter()
                        .enumerate()
                        .map(|(i, m)| vec![i.to_string(), m.to_string()])
                        .collect(),
                    summary: json!({
                        "mean_steps": mean,
                        "ci_half": ci,
                        "exact_mean_1d": exact,
                        "marginal_pvalues": [pa, pb],
                        "pairs": cfg.replicas,
                    }),
                }
            }
        },
        ExperimentKind::Freeze => {
            let kappa = cfg.kappa.unwrap_or(DEFAULT_KAPPA);
            let c = cfg.c.unwrap_or(DEFAULT_FREEZE_C);
            let f = est::freeze_probability(&base, kappa, c, &ens).map_err(e)?;
            ExperimentOutput {
                header: strings(&["kappa", "c", "probability", "ci_half", "replicas"]),
                rows: vec![vec![
                    kappa.to_string(),
                    fmt(c),
                    fmt(f.probability),
                    fmt(f.ci_half),
                    f.replicas.to_string(),
                ]],
                summary: json!({
                    "probability": f.probability,
                    "ci_half": f.ci_half,
                    "horizon": f.horizon,
                    "replicas": f.replicas,
                    "warnings": f.warnings,
                }),
            }
        }
        ExperimentKind::Trace => {
            let blocks = cfg.n_blocks.unwrap_or(DEFAULT_TRACE_BLOCKS);
            let c = est::revealed_trace(&base, cfg.c_obs.unwrap_or(1.0), blocks, &ens).map_err(e)?;
            let rows = (0..c.grid.len())
                .map(|k| vec![k.to_string(), fmt(c.grid[k]), fmt(c.mean[k]), fmt(c.ci_half_width[k])])
                .collect();
            ExperimentOutput {
                header: strings(&["block", "t", "mean_revealed", "ci_half"]),
                rows,
                summary: json!({
                    "mean_revealed": c.mean,
                    "replicas": c.replicas,
                }),
            }
        }
    })
}

/// Replica 0's raw value at one grid point, recomputed from its derived
/// seed alone; stored in the manifest and re-derived by `verify`.
pub fn spot_value(cfg: &ExperimentConfig, grid_index: u64) -> Result<f64> {
    let g = cfg.geometry()?;
    let ens = Ensemble::new(cfg.seed, cfg.replicas).at_grid_point(grid_index);
    let kind = cfg.experiment;
    let e = est_err(kind);
    let times = cfg.times();
    let seed = stream_id(cfg).map(|id| ens.replica_seed(id, 0)).unwrap_or(0);
    let params = sim_params(cfg, g, seed);
    let last = *times.last().unwrap();
    Ok(match kind {
        ExperimentKind::Msd => {
            let path = est::displacement_path(&params, &[last]).map_err(e)?;
            (path.distance[0] * path.distance[0]) as f64
        }
        ExperimentKind::Mix => {
            let origin = params.with_initial(crate::simulator::InitialCondition::origin(&g));
            est::walker_positions(&origin, &[last]).map_err(e)?[0] as f64
        }
        ExperimentKind::Hit => {
            let target = cfg.target_vertex(&g)?.unwrap_or_else(|| est::antipode(&g).unwrap());
            let horizon = cfg
                .horizon
                .unwrap_or_else(|| est::default_hitting_horizon(&g, cfg.mu).unwrap());
            est::hitting_time(&params, &target, horizon).map_err(e)?.unwrap_or(horizon)
        }
        ExperimentKind::Excursions => {
            let settings = ExcursionSettings {
                count: 1,
                ..excursion_settings(cfg)
            };
            est::collect_excursions(&params, &settings).map_err(e)?[0].gap as f64
        }
        ExperimentKind::Sigma2 => {
            est::collect_unit_regenerations(&params, 1, cfg.max_blocks.unwrap_or(100_000_000)).map_err(e)?[0].gap
                as f64
        }
        ExperimentKind::Oracle => {
            let gen = oracle::build_generator(g.dim(), g.side().unwrap() as u32, cfg.p, cfg.mu).map_err(|source| {
                RunError::Oracle {
                    experiment: kind.id(),
                    source,
                }
            })?;
            oracle::stationary_residual(&gen).stationary
        }
        ExperimentKind::Perc => {
            let mut rng = stream(seed);
            let c = perc::sample_config(&g, cfg.p, &mut rng).map_err(|source| RunError::Percolation {
                experiment: kind.id(),
                source,
            })?;
            perc::cluster_sizes(&c).into_iter().max().unwrap_or(0) as f64
        }
        ExperimentKind::Couple => match cfg.coupling {
            CouplingMode::Stage1 => {
                let b = params.with_seed(ens.replica_seed("couple-b", 0));
                let max = cfg.max_blocks.unwrap_or(DEFAULT_COUPLE_BLOCKS);
                simultaneous_regeneration_block(&params, &b, cfg.c_obs.unwrap_or(1.0), max)
                    .map_err(e)?
                    .map_or(f64::NAN, |k| k as f64)
            }
            CouplingMode::Lsrw => {
                let (a, b) = lsrw_starts(cfg, &g)?;
                lsrw_coupled_meet(&g, (&a, &b), &mut stream(seed)).map_err(e)? as f64
            }
        },
        ExperimentKind::Freeze => {
            let origin = params.with_initial(crate::simulator::InitialCondition::origin(&g));
            let mut s = SimState::init(&origin).map_err(|x| e(x.into()))?;
            s.run_until(cfg.c.unwrap_or(DEFAULT_FREEZE_C) / cfg.mu).map_err(|x| e(x.into()))?;
            g.graph_distance(s.walker(), &g.origin()) as f64
        }
        ExperimentKind::Trace => {
            let blocks = cfg.n_blocks.unwrap_or(DEFAULT_TRACE_BLOCKS);
            let mut s = SimState::init(&params).map_err(|x| e(x.into()))?;
            s.run_until(blocks as f64 * cfg.c_obs.unwrap_or(1.0) / cfg.mu)
                .map_err(|x| e(x.into()))?;
            s.revealed_count() as f64
        }
    })
}

/// RFC 4180 text for a header and rows.
pub fn csv_string(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |err: csv::Error| RunError::Io {
        path: "<csv>".into(),
        message: err.to_string(),
    };
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|err| RunError::Io {
        path: "<csv>".into(),
        message: err.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn with_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = workers {
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|err| RunError::Pool(err.to_string()))?;
    Ok(pool.install(job))
}

/// Files written so far; removed again unless committed.
struct OutputGuard {
    created: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    fn new() -> Self {
        OutputGuard {
            created: Vec::new(),
            committed: false,
        }
    }

    fn write(&mut self, path: PathBuf, contents: &str) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.exists() {
                fs::create_dir_all(parent).map_err(|err| RunError::Io {
                    path: parent.display().to_string(),
                    message: err.to_string(),
                })?;
                self.created.push(parent.to_path_buf());
            }
        }
        fs::write(&path, contents).map_err(|err| RunError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        })?;
        self.created.push(path);
        Ok(())
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in self.created.iter().rev() {
            if p.is_dir() {
                let _ = fs::remove_dir(p);
            } else {
                let _ = fs::remove_file(p);
            }
        }
    }
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

fn manifest_for(cfg: &ExperimentConfig, spots: Vec<SpotCheck>, files: Vec<String>, started: Instant) -> RunManifest {
    RunManifest {
        schema_version: SCHEMA_VERSION,
        csv_schema: CSV_SCHEMA.into(),
        library_version: LIBRARY_VERSION.into(),
        seed_rule: SEED_RULE_ID.into(),
        master_seed: cfg.seed,
        experiment: cfg.experiment.id().into(),
        config: cfg.to_toml_string(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        files,
        spot_checks: spots,
    }
}

fn spot_check(cfg: &ExperimentConfig, grid_index: u64) -> Result<SpotCheck> {
    Ok(SpotCheck {
        grid_index,
        replica0_seed: stream_id(cfg).map(|id| derive_seed(cfg.seed, id, grid_index, 0)),
        value: spot_value(cfg, grid_index)?,
    })
}

/// Runs a single config (ignoring any sweep lists) into `out`:
/// `results.csv`, `summary.json`, `manifest.json`.
pub fn run_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    let started = Instant::now();
    let mut single = cfg.clone();
    single.sweep = None;
    let (output, spot) = with_pool(cfg.workers, || -> Result<_> { Ok((execute(&single, 0)?, spot_check(&single, 0)?)) })??;
    let mut guard = OutputGuard::new();
    guard.write(out.join("results.csv"), &csv_string(&output.header, &output.rows)?)?;
    let summary = json!({
        "experiment": cfg.experiment.id(),
        "csv_schema": CSV_SCHEMA,
        "summary": output.summary,
    });
    guard.write(out.join("summary.json"), &pretty(&summary))?;
    let files = vec!["results.csv".into(), "summary.json".into()];
    let manifest = manifest_for(&single, vec![spot], files, started);
    guard.write(out.join("manifest.json"), &pretty(&manifest))?;
    guard.committed = true;
    Ok(manifest)
}

/// Runs every point of the sweep grid into `out/point_NNN/` and writes a
/// combined long-format `results.csv` with leading grid columns.
pub fn sweep_to_dir(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    if cfg.sweep.as_ref().is_none_or(|s| s.is_empty()) {
        return run_to_dir(cfg, out);
    }
    cfg.validate()?;
    let started = Instant::now();
    let points = cfg.sweep_points();
    let results = with_pool(cfg.workers, || -> Result<Vec<_>> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| Ok((execute(p, i as u64)?, spot_check(p, i as u64)?)))
            .collect()
    })??;
    let mut guard = OutputGuard::new();
    let mut files = Vec::new();
    let mut combined_rows = Vec::new();
    let mut summaries = Vec::new();
    let mut spots = Vec::new();
    let mut combined_header = vec!["grid_index".to_string(), "d".into(), "n".into(), "p".into(), "mu".into()];
    for (i, ((output, spot), p)) in results.into_iter().zip(&points).enumerate() {
        if i == 0 {
            combined_header.extend(output.header.iter().cloned());
        }
        let dir = format!("point_{i:03}");
        guard.write(out.join(&dir).join("results.csv"), &csv_string(&output.header, &output.rows)?)?;
        let point_summary = json!({
            "grid_index": i,
            "d": p.d,
            "n": p.n.to_string(),
            "p": p.p,
            "mu": p.mu,
            "summary": output.summary,
        });
        guard.write(out.join(&dir).join("summary.json"), &pretty(&point_summary))?;
        files.push(format!("{dir}/results.csv"));
        files.push(format!("{dir}/summary.json"));
        for row in output.rows {
            let mut r = vec![i.to_string(), p.d.to_string(), p.n.to_string(), fmt(p.p), fmt(p.mu)];
            r.extend(row);
            combined_rows.push(r);
        }
        summaries.push(point_summary);
        spots.push(spot);
    }
    guard.write(out.join("results.csv"), &csv_string(&combined_header, &combined_rows)?)?;
    let summary = json!({
        "experiment": cfg.experiment.id(),
        "csv_schema": CSV_SCHEMA,
        "points": summaries,
    });
    guard.write(out.join("summary.json"), &pretty(&summary))?;
    files.insert(0, "summary.json".into());
    files.insert(0, "results.csv".into());
    let manifest = manifest_for(cfg, spots, files, started);
    guard.write(out.join("manifest.json"), &pretty(&manifest))?;
    guard.committed = true;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checked: usize,
}

/// Re-derives replica-0 seeds and spot values of a finished run in `out`
/// and compares them, bit for bit, with its manifest.
pub fn verify_dir(cfg: &ExperimentConfig, out: &Path) -> Result<VerifyReport> {
    let path = out.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|err| RunError::Io {
        path: path.display().to_string(),
        message: err.to_string(),
    })?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|err| RunError::Io {
        path: path.display().to_string(),
        message: err.to_string(),
    })?;
    if manifest.seed_rule != SEED_RULE_ID {
        return Err(RunError::Verify(format!(
            "manifest uses seed rule {}, this build uses {SEED_RULE_ID}",
            manifest.seed_rule
        )));
    }
    let stored = ExperimentConfig::from_toml_str(&manifest.config)?;
    let mut expected = cfg.clone();
    if manifest.spot_checks.len() == 1 && stored.sweep.is_none() {
        expected.sweep = None;
    }
    if stored != expected {
        return Err(RunError::Verify("config differs from the manifest's config echo".into()));
    }
    let points = stored.sweep_points();
    if points.len() != manifest.spot_checks.len() {
        return Err(RunError::Verify(format!(
            "manifest lists {} spot checks for {} grid points",
            manifest.spot_checks.len(),
            points.len()
        )));
    }
    for (point, stored_spot) in points.iter().zip(&manifest.spot_checks) {
        let fresh = with_pool(stored.workers, || spot_check(point, stored_spot.grid_index))??;
        let same_value = fresh.value.to_bits() == stored_spot.value.to_bits() || fresh.value.is_nan() && stored_spot.value.is_nan();
        if fresh.replica0_seed != stored_spot.replica0_seed || !same_value {
            return Err(RunError::Verify(format!(
                "grid point {}: stored ({:?}, {}) vs recomputed ({:?}, {})",
                stored_spot.grid_index, stored_spot.replica0_seed, stored_spot.value, fresh.replica0_seed, fresh.value
            )));
        }
    }
    Ok(VerifyReport {
        checked: manifest.spot_checks.len(),
    })
}
