//! Monte Carlo estimates against exact finite-chain quantities.

use dynperc::estimators::{estimate_hitting, estimate_tv_profile};
use dynperc::lattice::Geometry;
use dynperc::oracle::{build_generator, expected_hitting_time, marginal_at, total_variation};
use dynperc::rng::Ensemble;
use dynperc::simulator::{InitialCondition, SimParams};

#[test]
fn hitting_time_matches_linear_solve() {
    for (i, mu) in [0.5, 0.25].into_iter().enumerate() {
        let n = 6;
        let g = Geometry::torus(1, n).unwrap();
        let gen = build_generator(1, n, 0.5, mu).unwrap();
        let exact = expected_hitting_time(&gen, &gen.walker_at_stationary_env(0), 3).unwrap();
        let params = SimParams::new(g, 0.5, mu, 0, InitialCondition::origin(&g));
        let est = estimate_hitting(&params, None, None, &Ensemble::new(40 + i as u64, 20_000)).unwrap();
        assert!(
            (est.mean_time - exact).abs() <= 1.5 * est.ci,
            "mu = {mu}: {} +- {} vs {exact}",
            est.mean_time,
            est.ci
        );
    }
}

#[test]
fn tv_profile_tracks_exact_walker_marginal() {
    let (n, p, mu) = (5u32, 0.3, 0.5);
    let g = Geometry::torus(1, n).unwrap();
    let gen = build_generator(1, n, p, mu).unwrap();
    let init = gen.walker_at_stationary_env(0);
    let uniform = vec![1.0 / n as f64; n as usize];
    let grid = [0.0, 2.0, 5.0, 10.0];
    let params = SimParams::new(g, p, mu, 0, InitialCondition::StationaryUniformWalker);
    let prof = estimate_tv_profile(&params, 0.1, &grid, &Ensemble::new(3, 50_000)).unwrap();
    for (k, &t) in grid.iter().enumerate() {
        let exact = total_variation(&gen.walker_marginal(&marginal_at(&gen, &init, t).unwrap()), &uniform);
        assert!((prof.tv_raw[k] - exact).abs() < 0.01, "t = {t}: {} vs {exact}", prof.tv_raw[k]);
    }
}
