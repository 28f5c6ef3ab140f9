//! Cross-module statistical invariants that need more machinery than the
//! per-module unit tests: the box-crossing bound relating global and in-box
//! connectivity, estimated with independent replica batches on both sides.

use std::sync::Arc;

use animalia_core::connectivity::{connected, reachable_from_point, SpaceTimePoint};
use animalia_core::environment::{sample_environment, DisorderSpec, Environment};
use animalia_core::free_process::{sample_window, CylinderConfiguration};
use animalia_core::lattice::{Region, Site};
use animalia_core::models::{self, FMap};
use animalia_core::stats::BinomialEstimate;

fn pt(x: &[i32], t: f64) -> SpaceTimePoint {
    SpaceTimePoint { x: Site::new(x), t }
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    env: &Environment,
    region: Region,
    t0: f64,
    t1: f64,
    x: SpaceTimePoint,
    y: SpaceTimePoint,
    n: u64,
    seed: u64,
) -> BinomialEstimate {
    let mut hits = 0u64;
    for rep in 0..n {
        let cfg = sample_window(env, region, t0, t1, seed.wrapping_mul(0x9E37).wrapping_add(rep))
            .unwrap();
        hits += u64::from(connected(&cfg, x, y).unwrap());
    }
    BinomialEstimate::new(hits, n)
}

/// Temporal split of a connection at a box bottom: the in-box leg and the
/// onward leg are both increasing events, and they share any cylinder that
/// spans the split time, so they are positively associated. A naive product
/// factorization therefore *underestimates* their joint probability; this
/// pins the FKG direction of the split (the boundary-sum bound used by the
/// regularity machinery carries a full sum over the boundary, tested in the
/// spatial instance below).
#[test]
fn temporal_split_is_positively_associated() {
    let region = Region::new(&[0], &[0]).unwrap();
    let model = Arc::new(models::single_site_model(1).instantiate(region).unwrap());
    let env = sample_environment(&model, &DisorderSpec::homogeneous(0.8), 3).unwrap();

    let n = 30_000u64;
    let x = pt(&[0], 0.0);
    let z = pt(&[0], -2.0);
    let y = pt(&[0], -5.0);
    let (mut ca, mut cb, mut cab) = (0u64, 0u64, 0u64);
    for rep in 0..n {
        let cfg = sample_window(&env, region, -6.0, 0.0, rep).unwrap();
        // in-box leg evaluated on the restriction, onward leg on the window
        let boxed = cfg.restrict(region, -2.0, 0.0).unwrap();
        let a = connected(&boxed, x, z).unwrap();
        let b = connected(&cfg, z, y).unwrap();
        ca += u64::from(a);
        cb += u64::from(b);
        cab += u64::from(a && b);
    }
    let (pa, pb, pab) = (
        ca as f64 / n as f64,
        cb as f64 / n as f64,
        cab as f64 / n as f64,
    );
    let sigma = (pab * (1.0 - pab) / n as f64).sqrt().max(1e-4);
    assert!(
        pab >= pa * pb - 3.0 * sigma,
        "FKG direction violated: {pab} < {}",
        pa * pb
    );
    // the association is strictly positive here (shared spanning cylinders)
    assert!(
        pab > pa * pb + 3.0 * sigma,
        "expected strictly positive association, got {pab} vs {}",
        pa * pb
    );
}

/// Step function from interval samples: coverage fraction over `n` replicas.
struct Coverage {
    events: Vec<(f64, f64)>, // (time, +1/-1)
    n: f64,
}

impl Coverage {
    fn new(n: u64) -> Self {
        Coverage { events: Vec::new(), n: n as f64 }
    }

    fn add_interval(&mut self, lo: f64, hi: f64) {
        if hi > lo {
            self.events.push((lo, 1.0));
            self.events.push((hi, -1.0));
        }
    }

    /// ∫ f(s) g(s) ds over [lo, hi] for two coverage step functions.
    fn product_integral(&self, other: &Coverage, lo: f64, hi: f64) -> f64 {
        let mut breaks: Vec<f64> = vec![lo, hi];
        breaks.extend(self.events.iter().map(|e| e.0));
        breaks.extend(other.events.iter().map(|e| e.0));
        breaks.retain(|&b| (lo..=hi).contains(&b));
        breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breaks.dedup();
        let value_at = |cov: &Coverage, s: f64| -> f64 {
            let mut acc = 0.0;
            for &(t, delta) in &cov.events {
                if t <= s {
                    acc += delta;
                }
            }
            acc / cov.n
        };
        let mut total = 0.0;
        for w in breaks.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            total += value_at(self, mid) * value_at(other, mid) * (w[1] - w[0]);
        }
        total
    }
}

/// Cylinders from which an open path reaches `y` (reverse reachability).
fn reaches_target(cfg: &CylinderConfiguration, y: SpaceTimePoint) -> Vec<bool> {
    let model = cfg.model();
    let n = cfg.cylinders.len();
    let mut reach = vec![false; n];
    // forward edges i -> j (j is an ancestor-step of i)
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, ci) in cfg.cylinders.iter().enumerate() {
        for (j, cj) in cfg.cylinders.iter().enumerate() {
            if i == j {
                continue;
            }
            if cj.order_key() < ci.order_key()
                && cj.life_overlaps(ci)
                && model
                    .incompatible_ids(ci.animal)
                    .binary_search(&cj.animal)
                    .is_ok()
            {
                incoming[j].push(i); // path through i can continue to j
            }
        }
    }
    let mut queue: Vec<usize> = (0..n)
        .filter(|&i| {
            let c = &cfg.cylinders[i];
            c.alive_at(y.t) && model.support(c.animal).contains(&y.x)
        })
        .collect();
    for &i in &queue {
        reach[i] = true;
    }
    let mut head = 0;
    while head < queue.len() {
        let j = queue[head];
        head += 1;
        for &i in &incoming[j] {
            if !reach[i] {
                reach[i] = true;
                queue.push(i);
            }
        }
    }
    reach
}

/// Spatial instance of the crossing bound with the boundary sum over the
/// horizontal face plus the exact-interval time integral over the vertical
/// shell, both sides Monte Carlo with independent batches.
#[test]
fn crossing_bound_spatial() {
    let d = 1;
    let region = Region::new(&[-6], &[6]).unwrap();
    let spec = models::strauss_model(1, 1, FMap::HardCore).unwrap();
    let model = Arc::new(spec.instantiate(region).unwrap());
    let env = sample_environment(&model, &DisorderSpec::homogeneous(0.55), 9).unwrap();

    let x = pt(&[0], 0.0);
    // target at the bottom of W so the clamped target never varies
    let t_w = 4.0;
    let y = pt(&[5], -t_w);
    let l = 1; // box radius; shell = distances 2..=4 (delta = 3 for r = 1)
    let delta = model.geometry().delta as i32;
    let l_outer = l + delta;
    let t_box = 1.5;
    let box_region = Region::ball(Site::origin(), l_outer, d);

    let n1 = 20_000u64;
    let n2 = 20_000u64;

    // LHS: G_W(X, Y)
    let lhs = estimate(&env, region, -t_w, 0.0, x, y, n1, 11);

    // batch 1: in-box connections from X (face indicator plus exact
    // connection intervals on the shell)
    let sites: Vec<Site> = box_region.sites();
    let mut box_cov: Vec<Coverage> = sites.iter().map(|_| Coverage::new(n1)).collect();
    let mut face_hits = vec![0u64; sites.len()];
    for rep in 0..n1 {
        let cfg = sample_window(&env, box_region, -t_box, 0.0, 7_000 + rep).unwrap();
        let reach = reachable_from_point(&cfg, x);
        for (si, &z) in sites.iter().enumerate() {
            let shell = animalia_core::lattice::sup_dist(z, Site::origin(), d) > l;
            let mut face = false;
            for (lo, hi) in
                animalia_core::connectivity::connection_intervals(&cfg, &reach, z, -t_box, 0.0)
            {
                if lo <= -t_box {
                    face = true;
                }
                if shell {
                    box_cov[si].add_interval(lo, hi);
                }
            }
            face_hits[si] += u64::from(face);
        }
    }

    // batch 2: connections to Y within W
    let mut to_y_face = vec![0u64; sites.len()];
    let mut w_cov: Vec<Coverage> = sites.iter().map(|_| Coverage::new(n2)).collect();
    for rep in 0..n2 {
        let cfg = sample_window(&env, region, -t_w, 0.0, 90_000 + rep).unwrap();
        let reach = reaches_target(&cfg, y);
        for (si, &z) in sites.iter().enumerate() {
            let shell = animalia_core::lattice::sup_dist(z, Site::origin(), d) > l;
            let mut face = false;
            for (i, c) in cfg.cylinders.iter().enumerate() {
                if reach[i] && model.support(c.animal).contains(&z) {
                    if c.alive_at(-t_box) {
                        face = true;
                    }
                    if shell {
                        w_cov[si].add_interval(c.birth.max(-t_box), c.death.min(0.0));
                    }
                }
            }
            to_y_face[si] += u64::from(face);
        }
    }

    // assemble the boundary sum
    let mut rhs = 0.0;
    for (si, &z) in sites.iter().enumerate() {
        let g1 = face_hits[si] as f64 / n1 as f64;
        let g2 = to_y_face[si] as f64 / n2 as f64;
        rhs += g1 * g2;
        if animalia_core::lattice::sup_dist(z, Site::origin(), d) > l {
            rhs += box_cov[si].product_integral(&w_cov[si], -t_box, 0.0);
        }
    }

    // conservative slack: three sigmas on the left plus a relative margin
    // on the Monte Carlo product sum
    let slack = 3.0 * lhs.stderr() + 0.15 * rhs + 3e-3;
    assert!(
        lhs.p_hat() <= rhs + slack,
        "spatial crossing bound violated: {} > {rhs} + {slack}",
        lhs.p_hat()
    );
    assert!(lhs.p_hat() > 0.0, "instance should be non-trivial");
}

/// Crossing bound with the target clamp active: the target time lies above
/// the box bottom, so boundary points below it connect to the clamped
/// target (y, min(t_Y, t_Z)) — for vertical-face points below t_Y this is
/// an equal-time, s-dependent target.
#[test]
fn crossing_bound_with_target_clamp() {
    let d = 1;
    let region = Region::new(&[-6], &[6]).unwrap();
    let spec = models::strauss_model(1, 1, FMap::HardCore).unwrap();
    let model = Arc::new(spec.instantiate(region).unwrap());
    let env = sample_environment(&model, &DisorderSpec::homogeneous(0.55), 21).unwrap();

    let x = pt(&[0], 0.0);
    let y_site = Site::new(&[5]);
    let t_y = -1.0;
    let t_w = 4.0;
    let l = 1;
    let delta = model.geometry().delta as i32; // 3
    let l_outer = l + delta; // 4 < |x - y| = 5, so Y is outside the box
    let t_box = 1.5; // box bottom -1.5 lies below t_Y
    let box_region = Region::ball(Site::origin(), l_outer, d);
    let sites: Vec<Site> = box_region.sites();

    let n1 = 20_000u64;
    let n2 = 20_000u64;

    let lhs = estimate(&env, region, -t_w, 0.0, x, pt(&[5], t_y), n1, 31);

    // batch 1: in-box connections from X (unchanged by the clamp)
    let mut box_cov: Vec<Coverage> = sites.iter().map(|_| Coverage::new(n1)).collect();
    let mut face_hits = vec![0u64; sites.len()];
    for rep in 0..n1 {
        let cfg = sample_window(&env, box_region, -t_box, 0.0, 17_000 + rep).unwrap();
        let reach = reachable_from_point(&cfg, x);
        for (si, &z) in sites.iter().enumerate() {
            let shell = animalia_core::lattice::sup_dist(z, Site::origin(), d) > l;
            let mut face = false;
            for (lo, hi) in
                animalia_core::connectivity::connection_intervals(&cfg, &reach, z, -t_box, 0.0)
            {
                if lo <= -t_box {
                    face = true;
                }
                if shell {
                    box_cov[si].add_interval(lo, hi);
                }
            }
            face_hits[si] += u64::from(face);
        }
    }

    // batch 2: connections to the clamped target within W.
    // For s ≥ t_Y the target is (y, t_Y) fixed; for s < t_Y it is (y, s),
    // and the witness set is a union of life-interval intersections of
    // (start ∋ z, end ∋ y) pairs joined by a path — a fixed pair reaches
    // every s in Life(start) ∩ Life(end).
    let mut to_y_face = vec![0u64; sites.len()];
    let mut w_cov: Vec<Coverage> = sites.iter().map(|_| Coverage::new(n2)).collect();
    for rep in 0..n2 {
        let cfg = sample_window(&env, region, -t_w, 0.0, 190_000 + rep).unwrap();
        let n = cfg.cylinders.len();
        // pairwise reachability via the ancestor-step relation
        let mut reach_from: Vec<Vec<bool>> = vec![vec![false; n]; n];
        for (start, row) in reach_from.iter_mut().enumerate() {
            let mut queue = vec![start];
            row[start] = true;
            let mut head = 0;
            while head < queue.len() {
                let i = queue[head];
                head += 1;
                let ci = &cfg.cylinders[i];
                for (j, cj) in cfg.cylinders.iter().enumerate() {
                    if !row[j]
                        && cj.order_key() < ci.order_key()
                        && cj.life_overlaps(ci)
                        && model
                            .incompatible_ids(ci.animal)
                            .binary_search(&cj.animal)
                            .is_ok()
                    {
                        row[j] = true;
                        queue.push(j);
                    }
                }
            }
        }
        let fixed_target_reach = reaches_target(&cfg, pt(&[5], t_y));
        for (si, &z) in sites.iter().enumerate() {
            let shell = animalia_core::lattice::sup_dist(z, Site::origin(), d) > l;
            let mut face = false;
            for (start, cs) in cfg.cylinders.iter().enumerate() {
                if !model.support(cs.animal).contains(&z) {
                    continue;
                }
                // fixed-target part: s in Life(start) ∩ [t_Y, 0]
                if fixed_target_reach[start] {
                    let lo = cs.birth.max(t_y);
                    let hi = cs.death.min(0.0);
                    if cs.alive_at(-t_box) && -t_box >= t_y {
                        face = true;
                    }
                    if shell && hi > lo {
                        w_cov[si].add_interval(lo, hi);
                    }
                }
                // clamped part: s in Life(start) ∩ Life(end) ∩ [-T_box, t_Y)
                for (end, ce) in cfg.cylinders.iter().enumerate() {
                    if !reach_from[start][end] || !model.support(ce.animal).contains(&y_site) {
                        continue;
                    }
                    let lo = cs.birth.max(ce.birth).max(-t_w);
                    let hi = cs.death.min(ce.death).min(t_y);
                    if lo <= -t_box && -t_box <= hi {
                        face = true;
                    }
                    if shell && hi > lo {
                        w_cov[si].add_interval(lo.max(-t_box), hi.min(0.0));
                    }
                }
            }
            to_y_face[si] += u64::from(face);
        }
    }

    let mut rhs = 0.0;
    for (si, &z) in sites.iter().enumerate() {
        let g1 = face_hits[si] as f64 / n1 as f64;
        let g2 = to_y_face[si] as f64 / n2 as f64;
        rhs += g1 * g2;
        if animalia_core::lattice::sup_dist(z, Site::origin(), d) > l {
            rhs += box_cov[si].product_integral(&w_cov[si], -t_box, 0.0);
        }
    }
    let slack = 3.0 * lhs.stderr() + 0.15 * rhs + 3e-3;
    assert!(
        lhs.p_hat() <= rhs + slack,
        "clamped crossing bound violated: {} > {rhs} + {slack}",
        lhs.p_hat()
    );
    assert!(lhs.p_hat() > 0.0, "instance should be non-trivial");
}
