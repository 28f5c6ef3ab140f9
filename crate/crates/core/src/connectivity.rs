//! Open-path connectivity between space-time points and its Monte Carlo
//! estimators: the connectivity function (global and in-box), boundary sums
//! for boxes, and regularity verdicts.
//!
//! An open path is a sequence of cylinders with pairwise-consecutive
//! incompatibility and strictly decreasing births; a point Y is connected to
//! X when some open path starts in a cylinder covering X and ends in one
//! covering Y. Connectivity is equivalently membership of Y in the ancestor
//! clan of X, so the reachable set of the birth-ordered search below doubles
//! as the clan of X inside a fixed configuration.

use std::collections::HashMap;

use serde::Serialize;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::free_process::{sample_window, CylinderConfiguration};
use crate::lattice::{sup_dist, Region, Site};
use crate::parallel;
use crate::rng::{self, tag};
use crate::stats::{BinomialEstimate, Moments};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpaceTimePoint {
    pub x: Site,
    pub t: f64,
}

/// A space-time box `Λ[x;L] × [t-T, t]` with its boundary-shell width.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SpaceTimeBox {
    pub center: SpaceTimePoint,
    pub l: i32,
    pub t_height: f64,
    pub delta: f64,
}

impl SpaceTimeBox {
    pub fn spatial(&self, d: usize) -> Region {
        Region::ball(self.center.x, self.l, d)
    }

    pub fn t_top(&self) -> f64 {
        self.center.t
    }

    pub fn t_bottom(&self) -> f64 {
        self.center.t - self.t_height
    }
}

// --- path search ---------------------------------------------------------------

struct SearchIndex<'c> {
    cfg: &'c CylinderConfiguration,
    by_animal: HashMap<u32, Vec<usize>>,
}

impl<'c> SearchIndex<'c> {
    fn new(cfg: &'c CylinderConfiguration) -> Self {
        let mut by_animal: HashMap<u32, Vec<usize>> = HashMap::new();
        for (i, c) in cfg.cylinders.iter().enumerate() {
            by_animal.entry(c.animal).or_default().push(i);
        }
        SearchIndex { cfg, by_animal }
    }

    /// Ancestor-step edges: incompatible basis, overlapping life, earlier
    /// birth (lexicographic tie-break on the measure-zero equal-birth case).
    fn edges_from(&self, i: usize, blocked: Option<&[bool]>) -> Vec<usize> {
        let c = &self.cfg.cylinders[i];
        let model = self.cfg.model();
        let mut out = Vec::new();
        for &theta in model.incompatible_ids(c.animal) {
            if let Some(list) = self.by_animal.get(&theta) {
                for &j in list {
                    if let Some(b) = blocked {
                        if b[j] {
                            continue;
                        }
                    }
                    let cj = &self.cfg.cylinders[j];
                    if cj.order_key() < c.order_key() && cj.life_overlaps(c) {
                        out.push(j);
                    }
                }
            }
        }
        out
    }

    fn covering(&self, p: SpaceTimePoint, blocked: Option<&[bool]>) -> Vec<usize> {
        let model = self.cfg.model();
        let mut out = Vec::new();
        for &g in model.enumerate_containing(p.x) {
            if let Some(list) = self.by_animal.get(&g) {
                for &j in list {
                    if let Some(b) = blocked {
                        if b[j] {
                            continue;
                        }
                    }
                    if self.cfg.cylinders[j].alive_at(p.t) {
                        out.push(j);
                    }
                }
            }
        }
        out
    }
}

/// All cylinders reachable from X by open paths (the clan of X within the
/// fixed configuration). Pure in (configuration, X); search order cannot
/// change the set.
pub fn reachable_from_point(cfg: &CylinderConfiguration, p: SpaceTimePoint) -> Vec<usize> {
    let index = SearchIndex::new(cfg);
    let mut visited = vec![false; cfg.cylinders.len()];
    let mut queue: Vec<usize> = index.covering(p, None);
    for &i in &queue {
        visited[i] = true;
    }
    let mut head = 0;
    while head < queue.len() {
        let i = queue[head];
        head += 1;
        for j in index.edges_from(i, None) {
            if !visited[j] {
                visited[j] = true;
                queue.push(j);
            }
        }
    }
    queue.sort_unstable();
    queue
}

/// Whether Y is connected to X in the configuration. Requires `t_Y ≤ t_X`.
pub fn connected(cfg: &CylinderConfiguration, x: SpaceTimePoint, y: SpaceTimePoint) -> Result<bool> {
    if y.t > x.t {
        return Err(Error::ArgumentOrder);
    }
    let model = cfg.model();
    let reach = reachable_from_point(cfg, x);
    Ok(reach.iter().any(|&i| {
        let c = &cfg.cylinders[i];
        c.alive_at(y.t) && model.support(c.animal).contains(&y.x)
    }))
}

/// Disjoint occurrence of two connection events: both hold with
/// cylinder-disjoint witness paths. Decided exactly by bounded enumeration
/// of simple witness paths for the first event; intended for the small
/// configurations of the inequality spot-checks.
pub fn disjoint_connected(
    cfg: &CylinderConfiguration,
    a: (SpaceTimePoint, SpaceTimePoint),
    b: (SpaceTimePoint, SpaceTimePoint),
) -> Result<bool> {
    if a.1.t > a.0.t || b.1.t > b.0.t {
        return Err(Error::ArgumentOrder);
    }
    const PATH_CAP: usize = 200_000;
    let index = SearchIndex::new(cfg);
    let model = cfg.model();
    let covers = |i: usize, p: SpaceTimePoint| {
        let c = &cfg.cylinders[i];
        c.alive_at(p.t) && model.support(c.animal).contains(&p.x)
    };
    // DFS over simple paths for event A; for each, test B with the path
    // removed
    let starts = index.covering(a.0, None);
    let mut stack: Vec<(usize, Vec<usize>)> =
        starts.into_iter().map(|s| (s, vec![s])).collect();
    let mut examined = 0usize;
    let mut blocked = vec![false; cfg.cylinders.len()];
    while let Some((i, path)) = stack.pop() {
        examined += 1;
        if examined > PATH_CAP {
            return Err(Error::EnumerationTooLarge(
                "too many witness paths; shrink the box".into(),
            ));
        }
        if covers(i, a.1) {
            for &k in &path {
                blocked[k] = true;
            }
            let ok_b = connected_avoiding(&index, b.0, b.1, &blocked);
            for &k in &path {
                blocked[k] = false;
            }
            if ok_b {
                return Ok(true);
            }
        }
        for j in index.edges_from(i, None) {
            if !path.contains(&j) {
                let mut next = path.clone();
                next.push(j);
                stack.push((j, next));
            }
        }
    }
    Ok(false)
}

fn connected_avoiding(
    index: &SearchIndex<'_>,
    x: SpaceTimePoint,
    y: SpaceTimePoint,
    blocked: &[bool],
) -> bool {
    let cfg = index.cfg;
    let model = cfg.model();
    let covers = |i: usize| {
        let c = &cfg.cylinders[i];
        c.alive_at(y.t) && model.support(c.animal).contains(&y.x)
    };
    let mut visited = vec![false; cfg.cylinders.len()];
    let mut queue: Vec<usize> = index.covering(x, Some(blocked));
    for &i in &queue {
        visited[i] = true;
    }
    let mut head = 0;
    while head < queue.len() {
        let i = queue[head];
        head += 1;
        if covers(i) {
            return true;
        }
        for j in index.edges_from(i, Some(blocked)) {
            if !visited[j] {
                visited[j] = true;
                queue.push(j);
            }
        }
    }
    false
}

// --- estimators ----------------------------------------------------------------

/// Monte Carlo estimate of the connectivity function between X and Y,
/// optionally restricted to a box. Without a box the replica window covers
/// `[t_Y - pad, t_X]` on the full environment region; paths dipping more
/// than `pad` below t_Y are missed, which `pad` controls explicitly.
#[allow(clippy::too_many_arguments)]
pub fn estimate_g(
    env: &Environment,
    x: SpaceTimePoint,
    y: SpaceTimePoint,
    in_box: Option<SpaceTimeBox>,
    replicas: u32,
    seed: u64,
    workers: usize,
    pad: f64,
) -> Result<BinomialEstimate> {
    Ok(estimate_g_many(env, x, &[y], in_box, replicas, seed, workers, pad)?
        .pop()
        .expect("one target"))
}

/// Same as [`estimate_g`] for several targets, sharing one path search per
/// replica.
#[allow(clippy::too_many_arguments)]
pub fn estimate_g_many(
    env: &Environment,
    x: SpaceTimePoint,
    ys: &[SpaceTimePoint],
    in_box: Option<SpaceTimeBox>,
    replicas: u32,
    seed: u64,
    workers: usize,
    pad: f64,
) -> Result<Vec<BinomialEstimate>> {
    if replicas < 100 {
        return Err(Error::InvalidParameter("estimators need at least 100 replicas".into()));
    }
    for y in ys {
        if y.t > x.t {
            return Err(Error::ArgumentOrder);
        }
    }
    let d = env.model().d();
    let (region, t0, t1) = match in_box {
        Some(b) => {
            let r = b.spatial(d);
            if !env.region().contains_region(&r) {
                return Err(Error::RegionMargin("box exceeds the environment region".into()));
            }
            (r, b.t_bottom(), b.t_top())
        }
        None => {
            let t_min = ys.iter().map(|y| y.t).fold(x.t, f64::min);
            (*env.region(), t_min - pad, x.t)
        }
    };
    let model = env.model().clone();
    let hits = parallel::map_indexed(replicas as usize, workers, |rep| -> Result<Vec<bool>> {
        let cfg = sample_window(env, region, t0, t1, rng::derive_chain(seed, &[tag::CONNECTIVITY, rep as u64]))?;
        let reach = reachable_from_point(&cfg, x);
        Ok(ys
            .iter()
            .map(|y| {
                reach.iter().any(|&i| {
                    let c = &cfg.cylinders[i];
                    c.alive_at(y.t) && model.support(c.animal).contains(&y.x)
                })
            })
            .collect())
    });
    let mut counts = vec![0u64; ys.len()];
    for h in hits {
        for (c, hit) in counts.iter_mut().zip(h?) {
            *c += u64::from(hit);
        }
    }
    Ok(counts
        .into_iter()
        .map(|c| BinomialEstimate::new(c, replicas as u64))
        .collect())
}

/// Merged time intervals during which X connects to the site `z` within the
/// configuration.
pub fn connection_intervals(
    cfg: &CylinderConfiguration,
    reach: &[usize],
    z: Site,
    t_lo: f64,
    t_hi: f64,
) -> Vec<(f64, f64)> {
    let model = cfg.model();
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for &i in reach {
        let c = &cfg.cylinders[i];
        if model.support(c.animal).contains(&z) {
            let lo = c.birth.max(t_lo);
            let hi = c.death.min(t_hi);
            if hi >= lo {
                intervals.push((lo, hi));
            }
        }
    }
    intervals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in intervals {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    merged
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub replicas: u32,
}

impl MeanEstimate {
    pub fn ci(&self, z: f64) -> (f64, f64) {
        (self.mean - z * self.stderr, self.mean + z * self.stderr)
    }
}

/// Estimate the boundary sum of the box `Λ[x;L+δ] × [-T, 0]`: the sum over
/// the horizontal face of the in-box connectivity from (x, 0), plus the time
/// integral over the vertical shell. The integral is evaluated per replica
/// as the exact Lebesgue measure of the connection intervals, never by time
/// discretization.
pub fn boundary_sum(
    env: &Environment,
    x: Site,
    l: i32,
    t_height: f64,
    replicas: u32,
    seed: u64,
    workers: usize,
) -> Result<MeanEstimate> {
    if replicas < 100 {
        return Err(Error::InvalidParameter("estimators need at least 100 replicas".into()));
    }
    let d = env.model().d();
    let delta = env.model().geometry().delta;
    let l_outer = l + delta.floor() as i32;
    let outer = Region::ball(x, l_outer, d);
    if !env.region().contains_region(&outer) {
        return Err(Error::RegionMargin(format!(
            "box radius {l_outer} exceeds the environment region"
        )));
    }
    let root = SpaceTimePoint { x, t: 0.0 };
    let values = parallel::map_indexed(replicas as usize, workers, |rep| -> Result<f64> {
        let cfg = sample_window(
            env,
            outer,
            -t_height,
            0.0,
            rng::derive_chain(seed, &[tag::CONNECTIVITY, 1, rep as u64]),
        )?;
        let reach = reachable_from_point(&cfg, root);
        let model = cfg.model();
        let mut total = 0.0f64;
        for z in outer.iter() {
            let shell = sup_dist(z, x, d) > l;
            // horizontal face: connection to (z, -T)
            let bottom_hit = reach.iter().any(|&i| {
                let c = &cfg.cylinders[i];
                c.alive_at(-t_height) && model.support(c.animal).contains(&z)
            });
            total += f64::from(u8::from(bottom_hit));
            if shell {
                // vertical face: Lebesgue measure of connection times
                for (lo, hi) in connection_intervals(&cfg, &reach, z, -t_height, 0.0) {
                    total += hi - lo;
                }
            }
        }
        Ok(total)
    });
    let mut m = Moments::default();
    for v in values {
        m.push(v?);
    }
    Ok(MeanEstimate { mean: m.mean(), stderr: m.stderr(), replicas })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Regular,
    Singular,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RegularityVerdict {
    pub site: Site,
    pub m: f64,
    pub l: i32,
    pub t_height: f64,
    pub estimate: MeanEstimate,
    pub threshold: f64,
    pub verdict: Verdict,
}

impl RegularityVerdict {
    /// Downstream counts inconclusive verdicts as singular (conservative).
    pub fn counts_as_regular(&self) -> bool {
        self.verdict == Verdict::Regular
    }
}

/// Decide (m, L)-regularity of a site: the boundary sum of its box must stay
/// below `exp(-m (L+δ))`. Regular when the upper confidence bound is below
/// the threshold, singular when the lower bound exceeds it, inconclusive
/// otherwise.
#[allow(clippy::too_many_arguments)]
pub fn is_regular(
    env: &Environment,
    x: Site,
    m: f64,
    l: i32,
    t_height: f64,
    replicas: u32,
    confidence_z: f64,
    seed: u64,
    workers: usize,
) -> Result<RegularityVerdict> {
    if !(m > 0.0) || l <= 1 {
        return Err(Error::InvalidParameter("need m > 0 and L > 1".into()));
    }
    let delta = env.model().geometry().delta;
    let estimate = boundary_sum(env, x, l, t_height, replicas, seed, workers)?;
    let threshold = (-m * (l as f64 + delta)).exp();
    let (lo, hi) = estimate.ci(confidence_z);
    let verdict = if hi <= threshold {
        Verdict::Regular
    } else if lo > threshold {
        Verdict::Singular
    } else {
        Verdict::Inconclusive
    };
    Ok(RegularityVerdict { site: x, m, l, t_height, estimate, threshold, verdict })
}

/// Analytic comparator for connectivity inside an (m, L)-regular region:
/// `exp(-m (L+δ) N)` where N is the integer part of
/// `min(dist(x, Λ^c)/(L+δ), max(‖x-y‖/(L+δ), |t_X - t_Y|/T))`.
#[allow(clippy::too_many_arguments)]
pub fn regular_path_bound(
    x: Site,
    y: Site,
    d: usize,
    t_x: f64,
    t_y: f64,
    l: f64,
    t_height: f64,
    delta: f64,
    m: f64,
    dist_to_complement: f64,
) -> f64 {
    let step = l + delta;
    let spatial = sup_dist(x, y, d) as f64 / step;
    let temporal = (t_x - t_y).abs() / t_height;
    let n = (dist_to_complement / step).min(spatial.max(temporal)).floor().max(0.0);
    (-m * step * n).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_environment, DisorderSpec};
    use crate::free_process::Cylinder;
    use crate::models;
    use std::sync::Arc;

    fn pt(x: &[i32], t: f64) -> SpaceTimePoint {
        SpaceTimePoint { x: Site::new(x), t }
    }

    fn strauss_env(w: f64, radius: i32) -> Environment {
        let region = Region::ball(Site::origin(), radius, 1);
        let spec = models::strauss_model(1, 1, models::FMap::HardCore).unwrap();
        let model = Arc::new(spec.instantiate(region).unwrap());
        sample_environment(&model, &DisorderSpec::homogeneous(w), 23).unwrap()
    }

    /// Hand-built configuration over a 1-d Strauss(r=1) environment.
    fn fixture(env: &Environment, cyls: Vec<(i32, f64, f64, u32)>) -> CylinderConfiguration {
        let mut cfg = sample_window(env, *env.region(), -10.0, 0.0, 1).unwrap();
        cfg.cylinders.clear();
        for (site, birth, death, seq) in cyls {
            let animal = env.model().enumerate_containing(Site::new(&[site]))[0];
            cfg.cylinders.push(Cylinder {
                animal,
                birth,
                death,
                mark: 0.5,
                truncated: false,
                seq,
            });
        }
        cfg.cylinders
            .sort_by(|a, b| a.order_key().partial_cmp(&b.order_key()).unwrap());
        cfg
    }

    #[test]
    fn self_connection_through_one_cylinder() {
        let env = strauss_env(0.5, 3);
        let cfg = fixture(&env, vec![(0, -1.0, 0.5, 0)]);
        assert!(connected(&cfg, pt(&[0], 0.0), pt(&[0], 0.0)).unwrap());
        assert!(connected(&cfg, pt(&[0], 0.0), pt(&[0], -0.5)).unwrap());
    }

    #[test]
    fn empty_configuration_has_no_connections() {
        let env = strauss_env(0.5, 3);
        let cfg = fixture(&env, vec![]);
        assert!(!connected(&cfg, pt(&[0], 0.0), pt(&[1], -1.0)).unwrap());
    }

    #[test]
    fn argument_order_enforced() {
        let env = strauss_env(0.5, 3);
        let cfg = fixture(&env, vec![]);
        assert!(matches!(
            connected(&cfg, pt(&[0], 0.0), pt(&[0], 1.0)),
            Err(Error::ArgumentOrder)
        ));
    }

    #[test]
    fn three_cylinder_chain() {
        let env = strauss_env(0.5, 3);
        // chain 0 -> 1 -> 2 with decreasing births and overlapping lives
        let chain = vec![(0, -1.0, 0.5, 0), (1, -2.0, -0.8, 0), (2, -3.0, -1.5, 0)];
        let cfg = fixture(&env, chain.clone());
        assert!(connected(&cfg, pt(&[0], 0.0), pt(&[2], -2.0)).unwrap());
        // removing the middle cylinder breaks the path
        let broken = fixture(&env, vec![chain[0], chain[2]]);
        assert!(!connected(&broken, pt(&[0], 0.0), pt(&[2], -2.0)).unwrap());
    }

    #[test]
    fn births_must_strictly_decrease() {
        let env = strauss_env(0.5, 3);
        // second cylinder born *after* the first: not an ancestor step
        let cfg = fixture(&env, vec![(0, -1.0, 0.5, 0), (1, -0.5, 0.5, 0)]);
        assert!(!connected(&cfg, pt(&[0], 0.0), pt(&[1], -0.4)).unwrap());
    }

    #[test]
    fn connection_is_increasing_in_the_configuration() {
        // thinning cylinders can only destroy connections
        let env = strauss_env(0.6, 4);
        for rep in 0..300u64 {
            let cfg = sample_window(&env, *env.region(), -6.0, 0.0, rep).unwrap();
            let mut thin = cfg.clone();
            thin.cylinders.retain(|c| c.mark <= 0.6);
            for target in [-3, 0, 3] {
                let x = pt(&[0], 0.0);
                let y = pt(&[target], -1.0);
                if connected(&thin, x, y).unwrap() {
                    assert!(connected(&cfg, x, y).unwrap());
                }
            }
        }
    }

    #[test]
    fn estimate_zero_rate_is_zero() {
        let env = strauss_env(0.0, 3);
        let e = estimate_g(&env, pt(&[0], 0.0), pt(&[1], 0.0), None, 200, 1, 1, 5.0).unwrap();
        assert_eq!(e.p_hat(), 0.0);
    }

    #[test]
    fn self_connectivity_matches_poisson_oracle() {
        // G(X, X) = P(some cylinder covers (x,0)) = 1 - e^{-Υ(x)}
        let env = strauss_env(0.5, 2);
        let ups = crate::environment::upsilon(&env, &Region::ball(Site::origin(), 0, 1)).unwrap();
        let e = estimate_g(&env, pt(&[0], 0.0), pt(&[0], 0.0), None, 40_000, 3, 2, 5.0).unwrap();
        let p0 = 1.0 - (-ups).exp();
        assert!(e.within_sigma_of(p0, 3.5), "estimate {} vs {}", e.p_hat(), p0);
    }

    #[test]
    fn in_box_estimate_below_global() {
        let env = strauss_env(0.7, 5);
        let x = pt(&[0], 0.0);
        let y = pt(&[2], -0.5);
        let g_box = estimate_g(
            &env,
            x,
            y,
            Some(SpaceTimeBox { center: x, l: 2, t_height: 1.0, delta: 0.0 }),
            20_000,
            5,
            2,
            5.0,
        )
        .unwrap();
        let g_full = estimate_g(&env, x, y, None, 20_000, 5, 2, 5.0).unwrap();
        let slack = 3.0 * (g_box.stderr() + g_full.stderr());
        assert!(
            g_box.p_hat() <= g_full.p_hat() + slack,
            "restriction must not add paths: {} vs {}",
            g_box.p_hat(),
            g_full.p_hat()
        );
    }

    #[test]
    fn boundary_sum_zero_rate_and_margin_error() {
        let env = strauss_env(0.0, 6);
        let b = boundary_sum(&env, Site::origin(), 2, 1.0, 200, 1, 1).unwrap();
        assert_eq!(b.mean, 0.0);
        assert!(matches!(
            boundary_sum(&env, Site::origin(), 10, 1.0, 200, 1, 1),
            Err(Error::RegionMargin(_))
        ));
    }

    #[test]
    fn boundary_sum_agrees_with_pointwise_estimates() {
        // cross-estimator agreement on a small box: boundary sum vs the sum
        // of pointwise G estimates over the horizontal face plus integrated
        // vertical-face estimates
        let env = strauss_env(0.4, 6);
        let l = 1;
        let t = 1.0;
        let delta = env.model().geometry().delta; // 3 for strauss r=1
        let l_outer = l + delta as i32;
        let bs = boundary_sum(&env, Site::origin(), l, t, 30_000, 7, 2).unwrap();

        // pointwise oracle with shared replicas
        let outer = Region::ball(Site::origin(), l_outer, 1);
        let n = 30_000u32;
        let mut acc = Moments::default();
        for rep in 0..n {
            let cfg = sample_window(
                &env,
                outer,
                -t,
                0.0,
                rng::derive_chain(999, &[rep as u64]),
            )
            .unwrap();
            let reach = reachable_from_point(&cfg, pt(&[0], 0.0));
            let model = cfg.model();
            let mut v = 0.0;
            for z in outer.iter() {
                let hit = reach.iter().any(|&i| {
                    let c = &cfg.cylinders[i];
                    c.alive_at(-t) && model.support(c.animal).contains(&z)
                });
                v += f64::from(u8::from(hit));
                if sup_dist(z, Site::origin(), 1) > l {
                    for (lo, hi) in connection_intervals(&cfg, &reach, z, -t, 0.0) {
                        v += hi - lo;
                    }
                }
            }
            acc.push(v);
        }
        let diff = (bs.mean - acc.mean()).abs();
        assert!(
            diff <= 3.5 * (bs.stderr + acc.stderr()),
            "boundary sums disagree: {} vs {}",
            bs.mean,
            acc.mean()
        );
    }

    #[test]
    fn regularity_zero_rate_is_regular() {
        let env = strauss_env(0.0, 8);
        for (m, l) in [(0.1, 2), (0.5, 3), (1.0, 4)] {
            let v = is_regular(&env, Site::origin(), m, l, 2.0, 200, 1.96, 1, 1).unwrap();
            assert_eq!(v.verdict, Verdict::Regular);
            assert_eq!(v.estimate.mean, 0.0);
        }
    }

    #[test]
    fn regularity_threshold_arithmetic() {
        // e^{-m(L+δ)} with m=0.1, L=10, δ=3
        let env = strauss_env(0.0, 14);
        let v = is_regular(&env, Site::origin(), 0.1, 10, 1.0, 200, 1.96, 1, 1).unwrap();
        assert!((v.threshold - (-1.3f64).exp()).abs() < 1e-12);
        assert!((v.threshold - 0.2725317930340126).abs() < 1e-10);
    }

    #[test]
    fn supercritical_box_is_singular() {
        // strong rates percolate to the boundary at small L
        let env = strauss_env(3.0, 6);
        let v = is_regular(&env, Site::origin(), 0.5, 2, 2.0, 2_000, 1.96, 3, 2).unwrap();
        assert_eq!(v.verdict, Verdict::Singular);
    }

    #[test]
    fn path_bound_arithmetic() {
        let x = Site::origin();
        // N = 0 gives bound 1
        assert_eq!(
            regular_path_bound(x, x, 1, 0.0, 0.0, 2.0, 5.0, 1.0, 0.3, 0.0),
            1.0
        );
        // spatial branch: ‖x-y‖ = 5(L+δ), far from the complement
        let y = Site::new(&[15]);
        let b = regular_path_bound(x, y, 1, 0.0, -0.1, 2.0, 5.0, 1.0, 0.3, 100.0);
        assert!((b - (-0.3f64 * 3.0 * 5.0).exp()).abs() < 1e-12);
        // temporal branch: |t| = 3T with ‖x-y‖ = 0
        let b = regular_path_bound(x, x, 1, 0.0, -15.0, 2.0, 5.0, 1.0, 0.3, 100.0);
        assert!((b - (-0.3f64 * 3.0 * 3.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn disjoint_connection_requires_two_witnesses() {
        let env = strauss_env(0.5, 3);
        // one shared cylinder: A and B hold but not disjointly
        let cfg = fixture(&env, vec![(0, -1.0, 0.0, 0)]);
        let a = (pt(&[0], 0.0), pt(&[0], -0.5));
        assert!(connected(&cfg, a.0, a.1).unwrap());
        assert!(!disjoint_connected(&cfg, a, a).unwrap());
        // two parallel cylinders: disjoint witnesses exist
        let cfg2 = fixture(&env, vec![(0, -1.0, 0.0, 0), (0, -1.1, 0.0, 1)]);
        assert!(disjoint_connected(&cfg2, a, a).unwrap());
    }

    #[test]
    fn bk_spot_check_disjoint_occurrence() {
        // P(A ∘ B) ≤ P(A) P(B) + 3σ for same-direction connection events
        let env = strauss_env(0.5, 2);
        let a = (pt(&[0], 0.0), pt(&[0], -1.0));
        let b = (pt(&[1], 0.0), pt(&[1], -1.0));
        let n = 20_000u64;
        let (mut pa, mut pb, mut pab) = (0u64, 0u64, 0u64);
        for rep in 0..n {
            let cfg = sample_window(&env, *env.region(), -3.0, 0.0, rep).unwrap();
            let ea = connected(&cfg, a.0, a.1).unwrap();
            let eb = connected(&cfg, b.0, b.1).unwrap();
            let eab = disjoint_connected(&cfg, a, b).unwrap();
            if eab {
                assert!(ea && eb, "disjoint occurrence implies both events");
            }
            pa += u64::from(ea);
            pb += u64::from(eb);
            pab += u64::from(eab);
        }
        let (pa, pb, pab) =
            (pa as f64 / n as f64, pb as f64 / n as f64, pab as f64 / n as f64);
        let sigma = (pab.max(1e-4) * (1.0 - pab) / n as f64).sqrt();
        assert!(
            pab <= pa * pb + 3.0 * sigma,
            "BK violated: {pab} > {} + 3σ",
            pa * pb
        );
    }
}
