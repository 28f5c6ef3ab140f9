//! Cross-checks of the exact sampler against the balance-equation oracle on
//! small instances of the other built-in models (the acceptance suite covers
//! the exclusion fixtures).

use std::sync::Arc;

use animalia_cli::oracle::{CapPolicy, CtmcOracle};
use animalia_core::clan::{self, ClanLimits, ClanStatus};
use animalia_core::environment::{sample_environment, DisorderKind, DisorderSpec, Marginal, RateMap};
use animalia_core::lattice::Region;
use animalia_core::models::{self, FMap};
use animalia_core::stats::BinomialEstimate;

#[test]
fn erlang_single_link_occupancy() {
    // one link with capacity 1 at rate w: occupied with probability w/(1+w)
    let region = Region::new(&[0], &[1]).unwrap();
    let spec = models::loss_network_model(1, 1, Some(1)).unwrap();
    let model = Arc::new(spec.instantiate(region).unwrap());
    assert_eq!(model.n_animals(), 1);
    let w = 0.8;
    let dspec = DisorderSpec {
        kind: DisorderKind::SiteLink,
        marginal: Marginal::Degenerate { value: 1.0 },
        link_marginal: Some(Marginal::Degenerate { value: w }),
        rate_map: RateMap::LinkProduct,
    };
    let env = sample_environment(&model, &dspec, 1).unwrap();
    assert_eq!(env.rate(0), w);

    let oracle = CtmcOracle::build(&env, 12, CapPolicy::Error).unwrap();
    assert!(oracle.residual() < 1e-10);
    let empty = oracle.index_of(&env.model().empty_config()).unwrap();
    let expect = w / (1.0 + w);
    assert!((1.0 - oracle.stationary[empty] - expect).abs() < 1e-12);

    let n = 30_000u64;
    let limits = ClanLimits::default_for(env.region());
    let mut occupied = 0u64;
    for rep in 0..n {
        let s = clan::perfect_sample(&env, &region, limits, rep).unwrap();
        assert_eq!(s.status, ClanStatus::Closed);
        occupied += u64::from(s.config.count(0) == 1);
    }
    let est = BinomialEstimate::new(occupied, n);
    assert!(est.within_sigma_of(expect, 3.5), "{} vs {expect}", est.p_hat());
}

#[test]
fn strauss_pair_matches_balance() {
    // two sites within the interaction radius, geometric penalty: a genuine
    // stochastic (non-deterministic) acceptance through the whole pipeline
    let region = Region::new(&[0], &[1]).unwrap();
    let spec = models::strauss_model(1, 1, FMap::Geometric { beta: 0.5 }).unwrap();
    let model = Arc::new(spec.instantiate(region).unwrap());
    let env = sample_environment(&model, &DisorderSpec::homogeneous(0.6), 2).unwrap();

    // the truncated chain is an approximation; cap high enough that the
    // truncation error sits far below the Monte Carlo resolution
    let oracle = CtmcOracle::build(&env, 60, CapPolicy::Truncate).unwrap();
    assert!(oracle.residual() < 1e-10);

    let n = 30_000u64;
    let limits = ClanLimits::default_for(env.region());
    let mut empty_hits = 0u64;
    let mut occupancy = [0u64; 2];
    for rep in 0..n {
        let s = clan::perfect_sample(&env, &region, limits, rep).unwrap();
        assert_eq!(s.status, ClanStatus::Closed);
        empty_hits += u64::from(s.config.is_empty());
        for (id, occ) in occupancy.iter_mut().enumerate() {
            *occ += u64::from(s.config.count(id as u32) > 0);
        }
    }
    let empty_target = oracle.index_of(&env.model().empty_config()).unwrap();
    let p_empty = oracle.stationary[empty_target];
    let est = BinomialEstimate::new(empty_hits, n);
    assert!(
        est.within_sigma_of(p_empty, 3.5),
        "empty-state probability {} vs oracle {p_empty}",
        est.p_hat()
    );
    // per-site occupancy from the oracle states
    for (id, &occ) in occupancy.iter().enumerate() {
        let p: f64 = oracle
            .states
            .iter()
            .zip(&oracle.stationary)
            .filter(|(s, _)| s.count(id as u32) > 0)
            .map(|(_, pi)| pi)
            .sum();
        let est = BinomialEstimate::new(occ, n);
        assert!(est.within_sigma_of(p, 3.5), "site {id}: {} vs {p}", est.p_hat());
    }
}
