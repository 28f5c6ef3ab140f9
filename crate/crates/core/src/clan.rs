//! Ancestor clans and the perfect sampler.
//!
//! The lazy free process realizes, per animal, the stationary cylinder
//! process on `(-∞, anchor]` by simulating its time reversal: the cylinders
//! alive at the anchor (a Poisson count with exponential ages) followed by a
//! Poisson stream of deaths walking into the past. Reversibility of the
//! per-animal birth-death dynamics makes this an exact construction, and a
//! per-animal counter stream keyed by (seed, animal) means extending the
//! exploration window backward only ever *extends* the same realization —
//! no run is ever discarded, which is what makes the sampler exact.
//!
//! A clan is explored breadth-first: the first generation of a space-time
//! point is the set of cylinders containing it, and each next generation
//! consists of the incompatible cylinders alive at the births of the current
//! one. Closed clans are cleaned by the keep/erase recursion; the sections
//! of the kept cylinders at time zero are an exact draw from the invariant
//! measure of the interacting process on the environment window.

use std::collections::HashMap;
use std::sync::Arc;

use serde::Serialize;

use crate::animal_model::{AnimalConfiguration, AnimalId, ModelInstance};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::free_process::Cylinder;
use crate::lattice::{Region, Site};
use crate::parallel;
use crate::rng::{self, tag, Stream};
use crate::stats::{BinomialEstimate, Moments};

/// Exploration budgets. Exceeding one is not an error: it is reported in the
/// clan status and excluded-with-count from estimators.
#[derive(Clone, Copy, Debug)]
pub struct ClanLimits {
    /// Spatial radius around the root beyond which exploration stops.
    pub max_radius: i32,
    /// How far below the anchor the exploration may reach in time.
    pub max_depth_time: f64,
    pub max_cylinders: usize,
}

impl ClanLimits {
    /// Spatial budget = region half-width, cylinder budget 10^6.
    pub fn default_for(region: &Region) -> Self {
        let half = (0..region.d())
            .map(|i| (region.hi()[i] - region.lo()[i]) / 2)
            .max()
            .unwrap_or(0)
            .max(1);
        ClanLimits { max_radius: half, max_depth_time: 1e6, max_cylinders: 1_000_000 }
    }

    pub fn unbounded_radius(mut self) -> Self {
        self.max_radius = i32::MAX;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClanStatus {
    Closed,
    EscapedSpace,
    EscapedTime,
    BudgetExceeded,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct ClanStats {
    /// Time length: anchor minus the earliest birth in the clan.
    pub tl: f64,
    /// Spatial diameter of the union of the bases.
    pub sd: i32,
    /// Number of distinct sites in the union of the bases.
    pub ss: usize,
    pub n_cylinders: usize,
    pub n_generations: usize,
}

/// One clan member with its discovery generation and ancestor edges
/// (indices into the member list).
#[derive(Clone, Debug)]
pub struct ClanCylinder {
    pub cyl: Cylinder,
    pub generation: u32,
    pub ancestors: Vec<u32>,
}

/// The explored ancestor clan of a space-time point (or of a set of seed
/// cylinders for the perfect sampler).
#[derive(Clone, Debug)]
pub struct Clan {
    pub root_site: Site,
    pub root_time: f64,
    pub members: Vec<ClanCylinder>,
    /// Discovery layers: `generations[n]` holds indices discovered at
    /// generation n+1.
    pub generations: Vec<Vec<u32>>,
    pub status: ClanStatus,
    pub stats: ClanStats,
    /// Minimal distance from clan bases to the environment boundary
    /// (`i32::MAX` for an empty clan).
    pub boundary_margin: i32,
}

impl Clan {
    pub fn is_closed(&self) -> bool {
        self.status == ClanStatus::Closed
    }

    /// Line-oriented dump sharing the cylinder text format plus the
    /// discovery generation: `animal_id birth lifetime mark truncated gen`.
    pub fn dump(&self, d: usize) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# clan root=({:?}, {:.16e}) status={:?} cylinders={}",
            self.root_site.coords(d),
            self.root_time,
            self.status,
            self.members.len()
        );
        let mut ordered: Vec<&ClanCylinder> = self.members.iter().collect();
        ordered.sort_by(|a, b| a.cyl.order_key().partial_cmp(&b.cyl.order_key()).unwrap());
        for m in ordered {
            // lives are censored at the anchor (cylinders alive there
            // extend above it)
            let life = m.cyl.death.min(self.root_time) - m.cyl.birth;
            let _ = writeln!(
                out,
                "{} {:.16e} {:.16e} {:.16e} {} {}",
                m.cyl.animal,
                m.cyl.birth,
                life,
                m.cyl.mark,
                u8::from(m.cyl.truncated),
                m.generation
            );
        }
        out
    }
}

// --- lazy backward free process ----------------------------------------------

struct Timeline {
    animal: AnimalId,
    cylinders: Vec<Cylinder>,
    next_arrival_u: f64,
    next_seq: u32,
    stream: Stream,
    rate: f64,
}

impl Timeline {
    fn new(env: &Environment, animal: AnimalId, anchor: f64, seed: u64) -> Self {
        let rate = env.rate(animal);
        let mut stream = Stream::scoped(seed, tag::CLAN, &[animal as u64]);
        let mut cylinders = Vec::new();
        let mut next_seq = 0u32;
        if rate > 0.0 {
            // stationary state at the anchor: Poisson count, exponential ages
            let n0 = stream.poisson(rate);
            for _ in 0..n0 {
                let age = stream.exp(1.0);
                let mark = stream.uniform();
                cylinders.push(Cylinder {
                    animal,
                    birth: anchor - age,
                    death: f64::INFINITY,
                    mark,
                    truncated: false,
                    seq: next_seq,
                });
                next_seq += 1;
            }
        }
        let next_arrival_u = if rate > 0.0 { stream.exp(rate) } else { f64::INFINITY };
        Timeline { animal, cylinders, next_arrival_u, next_seq, stream, rate }
    }

    /// Materialize all deaths down to backward time `u`. Walking into the
    /// past, deaths arrive at the birth rate and each cylinder extends one
    /// service time further back.
    fn extend_to(&mut self, anchor: f64, u: f64) {
        while self.next_arrival_u <= u {
            let death = anchor - self.next_arrival_u;
            let service = self.stream.exp(1.0);
            let mark = self.stream.uniform();
            self.cylinders.push(Cylinder {
                animal: self.animal,
                birth: death - service,
                death,
                mark,
                truncated: false,
                seq: self.next_seq,
            });
            self.next_seq += 1;
            self.next_arrival_u += self.stream.exp(self.rate);
        }
    }
}

/// Lazily explorable realization of the free process on `(-∞, anchor]`,
/// one consistent timeline per animal.
pub struct LazyFreeProcess<'e> {
    env: &'e Environment,
    anchor: f64,
    seed: u64,
    timelines: HashMap<AnimalId, Timeline>,
}

impl<'e> LazyFreeProcess<'e> {
    pub fn new(env: &'e Environment, anchor: f64, seed: u64) -> Self {
        LazyFreeProcess { env, anchor, seed, timelines: HashMap::new() }
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn model(&self) -> &Arc<ModelInstance> {
        self.env.model()
    }

    /// All cylinders of `animal` alive at time `t ≤ anchor`.
    pub fn alive_at(&mut self, animal: AnimalId, t: f64) -> Vec<Cylinder> {
        assert!(t <= self.anchor, "queries must lie at or below the anchor");
        let anchor = self.anchor;
        let env = self.env;
        let seed = self.seed;
        let timeline = self
            .timelines
            .entry(animal)
            .or_insert_with(|| Timeline::new(env, animal, anchor, seed));
        timeline.extend_to(anchor, anchor - t);
        timeline.cylinders.iter().filter(|c| c.alive_at(t)).copied().collect()
    }
}

/// First generation of ancestors of a cylinder: every incompatible cylinder
/// alive at its birth (equivalently: born no later, with overlapping life).
/// Simultaneous distinct births are ordered lexicographically by
/// (birth, animal, seq); the earlier one is the ancestor.
pub fn first_generation(source: &mut LazyFreeProcess<'_>, c: &Cylinder) -> Vec<Cylinder> {
    let model = Arc::clone(source.model());
    let mut out = Vec::new();
    for &theta in model.incompatible_ids(c.animal) {
        for cand in source.alive_at(theta, c.birth) {
            if cand.order_key() < c.order_key() {
                out.push(cand);
            }
        }
    }
    out.sort_by(|a, b| a.order_key().partial_cmp(&b.order_key()).unwrap());
    out
}

struct Exploration<'e> {
    source: LazyFreeProcess<'e>,
    members: Vec<ClanCylinder>,
    index: HashMap<(AnimalId, u32), u32>,
    generations: Vec<Vec<u32>>,
    status: ClanStatus,
    limits: ClanLimits,
    center: Site,
}

impl<'e> Exploration<'e> {
    fn new(env: &'e Environment, anchor: f64, center: Site, limits: ClanLimits, seed: u64) -> Self {
        Exploration {
            source: LazyFreeProcess::new(env, anchor, seed),
            members: Vec::new(),
            index: HashMap::new(),
            generations: Vec::new(),
            status: ClanStatus::Closed,
            limits,
            center,
        }
    }

    fn within_limits(&mut self, c: &Cylinder) -> bool {
        let model = Arc::clone(self.source.model());
        if self.members.len() >= self.limits.max_cylinders {
            self.status = ClanStatus::BudgetExceeded;
            return false;
        }
        if self.source.anchor() - c.birth > self.limits.max_depth_time {
            self.status = ClanStatus::EscapedTime;
            return false;
        }
        if self.limits.max_radius != i32::MAX {
            let d = model.d();
            let too_far = model
                .support(c.animal)
                .iter()
                .any(|&s| crate::lattice::sup_dist(s, self.center, d) > self.limits.max_radius);
            if too_far {
                self.status = ClanStatus::EscapedSpace;
                return false;
            }
        }
        true
    }

    /// Insert a cylinder if new; returns its index, or None when a limit
    /// was hit.
    fn insert(&mut self, c: Cylinder, generation: u32) -> Option<u32> {
        if let Some(&i) = self.index.get(&(c.animal, c.seq)) {
            return Some(i);
        }
        if !self.within_limits(&c) {
            return None;
        }
        let i = self.members.len() as u32;
        self.members.push(ClanCylinder { cyl: c, generation, ancestors: Vec::new() });
        self.index.insert((c.animal, c.seq), i);
        if self.generations.len() < generation as usize {
            self.generations.push(Vec::new());
        }
        self.generations[generation as usize - 1].push(i);
        Some(i)
    }

    /// Breadth-first backward exploration from the given seed cylinders.
    fn run(&mut self, seeds: Vec<Cylinder>) {
        let mut frontier: Vec<u32> = Vec::new();
        for c in seeds {
            match self.insert(c, 1) {
                Some(i) => frontier.push(i),
                None => return,
            }
        }
        let mut generation = 1u32;
        while !frontier.is_empty() {
            generation += 1;
            let mut next: Vec<u32> = Vec::new();
            for &i in &frontier {
                let c = self.members[i as usize].cyl;
                let ancestors = first_generation(&mut self.source, &c);
                for anc in ancestors {
                    let known = self.index.contains_key(&(anc.animal, anc.seq));
                    match self.insert(anc, generation) {
                        Some(j) => {
                            self.members[i as usize].ancestors.push(j);
                            if !known {
                                next.push(j);
                            }
                        }
                        None => return,
                    }
                }
            }
            frontier = next;
        }
    }

    fn finish(self, root_site: Site, root_time: f64) -> Clan {
        let env_region = *self.source.env.region();
        let model = Arc::clone(self.source.model());
        let mut union_sites: Vec<Site> = Vec::new();
        let mut min_birth = f64::INFINITY;
        let mut margin = i32::MAX;
        for m in &self.members {
            min_birth = min_birth.min(m.cyl.birth);
            for &s in model.support(m.cyl.animal) {
                union_sites.push(s);
                margin = margin.min(env_region.dist_to_complement(s));
            }
        }
        union_sites.sort();
        union_sites.dedup();
        let stats = ClanStats {
            tl: if self.members.is_empty() { 0.0 } else { root_time - min_birth },
            sd: crate::lattice::diameter(&union_sites, model.d()),
            ss: union_sites.len(),
            n_cylinders: self.members.len(),
            n_generations: self.generations.iter().filter(|g| !g.is_empty()).count(),
        };
        Clan {
            root_site,
            root_time,
            members: self.members,
            generations: self.generations,
            status: self.status,
            stats,
            boundary_margin: margin,
        }
    }
}

/// Explore the ancestor clan of the space-time point `(x, t)`.
pub fn clan_of_point(env: &Environment, x: Site, t: f64, limits: ClanLimits, seed: u64) -> Clan {
    let mut ex = Exploration::new(env, t, x, limits, seed);
    let mut seeds = Vec::new();
    for &gamma in env.model().enumerate_containing(x) {
        seeds.extend(ex.source.alive_at(gamma, t));
    }
    seeds.sort_by(|a, b| a.order_key().partial_cmp(&b.order_key()).unwrap());
    ex.run(seeds);
    ex.finish(x, t)
}

/// Kept/erased split of a closed clan.
#[derive(Clone, Debug)]
pub struct KeepErasePartition {
    pub kept: Vec<Cylinder>,
    pub erased: Vec<Cylinder>,
}

/// The cleaning recursion. Cylinders without ancestors are kept; a cylinder
/// at ancestor depth n is kept iff its mark does not exceed the acceptance
/// probability evaluated on the bases of already-kept cylinders alive at its
/// birth. Deterministic interactions reduce to a 0/1 threshold on the same
/// rule.
pub fn keep_erase(clan: &Clan, model: &ModelInstance) -> Result<KeepErasePartition> {
    if clan.status != ClanStatus::Closed {
        return Err(Error::ContractViolation(
            "keep/erase requires a closed clan".into(),
        ));
    }
    let n = clan.members.len();
    // ancestor depth = longest chain below each member; ancestors precede
    // their descendants in (birth, animal, seq) order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        clan.members[a]
            .cyl
            .order_key()
            .partial_cmp(&clan.members[b].cyl.order_key())
            .unwrap()
    });
    let mut depth = vec![0u32; n];
    for &i in &order {
        let mut d = 0;
        for &a in &clan.members[i].ancestors {
            d = d.max(depth[a as usize] + 1);
        }
        depth[i] = d;
    }
    let max_depth = depth.iter().copied().max().unwrap_or(0);
    let mut kept_flag = vec![false; n];
    let mut decided = vec![false; n];
    for level in 0..=max_depth {
        for &i in &order {
            if depth[i] != level {
                continue;
            }
            let c = &clan.members[i].cyl;
            let mut cfg = AnimalConfiguration::new(model);
            for &j in &order {
                if decided[j] && kept_flag[j] && clan.members[j].cyl.alive_at(c.birth) {
                    cfg.add_id(clan.members[j].cyl.animal, 1);
                }
            }
            kept_flag[i] = c.mark <= model.interaction(c.animal, &cfg);
            decided[i] = true;
        }
    }
    let mut kept = Vec::new();
    let mut erased = Vec::new();
    for &i in &order {
        if kept_flag[i] {
            kept.push(clan.members[i].cyl);
        } else {
            erased.push(clan.members[i].cyl);
        }
    }
    Ok(KeepErasePartition { kept, erased })
}

/// Result of one perfect-sampling run.
#[derive(Clone, Debug)]
pub struct PerfectSample {
    /// Time-zero section of the kept cylinders, restricted to animals
    /// meeting the target window. Meaningful only when `status` is closed.
    pub config: AnimalConfiguration,
    pub status: ClanStatus,
    pub clan_cylinders: usize,
    /// Whether the exploration stayed at least ℓ0 away from the boundary
    /// of the environment window, so the draw also represents the
    /// infinite-volume measure on the target window.
    pub boundary_clear: bool,
    /// Suggested additional margin (sites) when not clear.
    pub required_enlargement: Option<i32>,
}

/// Draw an exact sample of the invariant measure at time zero, restricted
/// to animals whose support meets `lambda`.
///
/// The animal universe is the environment window, so the draw is exact for
/// the finite-window invariant measure unconditionally; `boundary_clear`
/// reports whether it is also a draw from the infinite-volume measure
/// (the clan never came within ℓ0 of the window boundary).
pub fn perfect_sample(
    env: &Environment,
    lambda: &Region,
    limits: ClanLimits,
    seed: u64,
) -> Result<PerfectSample> {
    let model = Arc::clone(env.model());
    if !env.region().contains_region(lambda) {
        return Err(Error::RegionMargin(
            "target window must lie inside the environment window".into(),
        ));
    }
    if !env.total_rate().is_finite() {
        return Err(Error::RateOverflow);
    }
    let mut ex = Exploration::new(env, 0.0, Site::origin(), limits.unbounded_radius(), seed);
    // seed animals: support meets lambda
    let mut seed_ids: Vec<AnimalId> = Vec::new();
    for x in lambda.iter() {
        seed_ids.extend_from_slice(model.enumerate_containing(x));
    }
    seed_ids.sort_unstable();
    seed_ids.dedup();
    let mut seeds = Vec::new();
    for id in seed_ids {
        seeds.extend(ex.source.alive_at(id, 0.0));
    }
    seeds.sort_by(|a, b| a.order_key().partial_cmp(&b.order_key()).unwrap());
    ex.run(seeds);
    let clan = ex.finish(Site::origin(), 0.0);

    let mut config = AnimalConfiguration::new(&model);
    if clan.status == ClanStatus::Closed {
        let partition = keep_erase(&clan, &model)?;
        for c in &partition.kept {
            if c.alive_at(0.0)
                && model.support(c.animal).iter().any(|s| lambda.contains(*s))
            {
                config.add_id(c.animal, 1);
            }
        }
    }
    let ell0 = model.geometry().ell0();
    let boundary_clear = clan.boundary_margin == i32::MAX || clan.boundary_margin >= ell0;
    Ok(PerfectSample {
        config,
        status: clan.status,
        clan_cylinders: clan.stats.n_cylinders,
        boundary_clear,
        required_enlargement: if boundary_clear {
            None
        } else {
            Some(ell0 - clan.boundary_margin)
        },
    })
}

// --- tail estimates ----------------------------------------------------------

#[derive(Clone, Debug)]
pub struct TailThresholds {
    pub tl: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailRow {
    pub stat: &'static str,
    pub threshold: f64,
    pub exceed: u64,
    pub replicas: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TailTable {
    pub rows: Vec<TailRow>,
    pub mean_ss: f64,
    pub mean_ss_stderr: f64,
    pub closed: u64,
    /// Runs that hit a budget or escaped; excluded from the estimates.
    pub excluded: u64,
}

/// Empirical tail probabilities of the clan statistics of `(x, 0)` over
/// independent replicas.
pub fn clan_tail_estimates(
    env: &Environment,
    x: Site,
    thresholds: &TailThresholds,
    replicas: u32,
    seed: u64,
    workers: usize,
) -> Result<TailTable> {
    if replicas < 100 {
        return Err(Error::InvalidParameter("tail estimates need at least 100 replicas".into()));
    }
    let limits = ClanLimits::default_for(env.region());
    let stats: Vec<(ClanStatus, ClanStats)> =
        parallel::map_indexed(replicas as usize, workers, |i| {
            let clan = clan_of_point(env, x, 0.0, limits, rng::derive_chain(seed, &[i as u64]));
            (clan.status, clan.stats)
        });
    let closed: Vec<&ClanStats> = stats
        .iter()
        .filter(|(st, _)| *st == ClanStatus::Closed)
        .map(|(_, s)| s)
        .collect();
    let excluded = stats.len() as u64 - closed.len() as u64;
    let n = closed.len() as u64;
    let mut rows = Vec::new();
    for &t in &thresholds.tl {
        let exceed = closed.iter().filter(|s| s.tl > t).count() as u64;
        let b = BinomialEstimate::new(exceed, n);
        let (lo, hi) = b.ci(1.96);
        rows.push(TailRow {
            stat: "TL",
            threshold: t,
            exceed,
            replicas: n,
            estimate: b.p_hat(),
            ci_low: lo,
            ci_high: hi,
        });
    }
    for &l in &thresholds.sd {
        let exceed = closed.iter().filter(|s| (s.sd as f64) > l).count() as u64;
        let b = BinomialEstimate::new(exceed, n);
        let (lo, hi) = b.ci(1.96);
        rows.push(TailRow {
            stat: "SD",
            threshold: l,
            exceed,
            replicas: n,
            estimate: b.p_hat(),
            ci_low: lo,
            ci_high: hi,
        });
    }
    let mut ss = Moments::default();
    for s in &closed {
        ss.push(s.ss as f64);
    }
    Ok(TailTable {
        rows,
        mean_ss: ss.mean(),
        mean_ss_stderr: ss.stderr(),
        closed: n,
        excluded,
    })
}
