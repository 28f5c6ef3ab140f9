//! Animals, their geometry, the interaction contract and halos.
//!
//! A *model instance* is a concrete model (see [`crate::models`]) enumerated
//! on a finite region: every animal whose support fits inside the region gets
//! a dense integer id, and the instance precomputes, per animal, the list of
//! incompatible animals (from the model's closed form) and the halo — the
//! site set every incompatible animal must intersect. Instances are immutable
//! after construction and can be shared across threads.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{diameter, Link, Region, Site};
use crate::models::ModelSpec;
use crate::rng::{tag, Stream};

pub type AnimalId = u32;

static NEXT_TOKEN: AtomicU64 = AtomicU64::new(1);

/// Handle to an animal of a specific model instance.
///
/// The token ties the handle to the instance that produced it; operations
/// reject handles from other instances.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Animal {
    pub(crate) token: u64,
    pub id: AnimalId,
}

/// Support, kind and (for graph models) link set of one animal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnimalData {
    /// Sorted, deduplicated vertex set V(γ).
    pub support: Vec<Site>,
    /// Distinguishes animals with equal support; the support map is
    /// finite-to-one.
    pub kind: u32,
    /// Links of the animal (empty for point models).
    pub links: Vec<Link>,
}

impl AnimalData {
    pub fn diameter(&self, d: usize) -> i32 {
        diameter(&self.support, d)
    }
}

/// Derived geometric constants of a model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelGeometry {
    pub d: usize,
    /// Maximal animal diameter.
    pub ell1: i32,
    /// Incompatibility range: animals farther apart are compatible.
    pub ell2: i32,
    /// Boundary-shell width used by box boundaries and regularity.
    pub delta: f64,
}

impl ModelGeometry {
    pub fn ell0(&self) -> i32 {
        self.ell1 + self.ell2
    }

    /// Safe default shell width: three times the reach of one chain step.
    pub fn default_delta(ell1: i32, ell2: i32) -> f64 {
        3.0 * (ell1 + ell2) as f64
    }

    /// The tighter shell width 3(ℓ0-2)/(2(d-1)), only defined for d ≥ 2.
    /// It is not guaranteed to satisfy the crossing property for every
    /// ℓ1/ℓ2 split; run [`verify_delta`] before relying on it.
    pub fn alternative_delta(d: usize, ell0: i32) -> Result<f64> {
        if d < 2 {
            return Err(Error::InvalidParameter(
                "the alternative shell width is undefined for d = 1".into(),
            ));
        }
        Ok(3.0 * (ell0 as f64 - 2.0) / (2.0 * (d as f64 - 1.0)))
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    /// Checks the standing assumptions of the multiscale machinery
    /// (ℓ0 > d+1 and a usable shell width). Plain sampling does not need
    /// them, so they are enforced here rather than at model construction.
    pub fn multiscale_ready(&self) -> Result<()> {
        if self.ell0() as f64 <= self.d as f64 + 1.0 {
            return Err(Error::InvalidParameter(format!(
                "multiscale analysis assumes ell0 > d+1; got ell0 = {} for d = {}",
                self.ell0(),
                self.d
            )));
        }
        if self.delta <= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "multiscale analysis needs a shell width > 1; got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Size functions weight animals in the subcriticality sum. Values are
/// always ≥ 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeFunction {
    /// |V(γ)| — the usual choice.
    #[default]
    SupportSize,
    Unit,
}

/// A finite multiset of animals (the state of the process on a region).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct AnimalConfiguration {
    pub(crate) token: u64,
    counts: BTreeMap<AnimalId, u32>,
}

impl AnimalConfiguration {
    pub fn new(model: &ModelInstance) -> Self {
        AnimalConfiguration { token: model.token, counts: BTreeMap::new() }
    }

    pub fn add(&mut self, animal: Animal, mult: u32) -> Result<()> {
        if animal.token != self.token {
            return Err(Error::ModelMismatch);
        }
        self.add_id(animal.id, mult);
        Ok(())
    }

    pub fn remove(&mut self, animal: Animal, mult: u32) -> Result<()> {
        if animal.token != self.token {
            return Err(Error::ModelMismatch);
        }
        self.remove_id(animal.id, mult);
        Ok(())
    }

    pub(crate) fn add_id(&mut self, id: AnimalId, mult: u32) {
        if mult == 0 {
            return;
        }
        *self.counts.entry(id).or_insert(0) += mult;
    }

    pub(crate) fn remove_id(&mut self, id: AnimalId, mult: u32) {
        if let Some(c) = self.counts.get_mut(&id) {
            *c = c.saturating_sub(mult);
            if *c == 0 {
                self.counts.remove(&id);
            }
        }
    }

    pub fn count(&self, id: AnimalId) -> u32 {
        self.counts.get(&id).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    /// Present animals with their multiplicities.
    pub fn present(&self) -> impl Iterator<Item = (AnimalId, u32)> + '_ {
        self.counts.iter().map(|(&id, &c)| (id, c))
    }

    pub fn to_sparse(&self) -> Vec<(AnimalId, u32)> {
        self.present().collect()
    }
}

/// A model enumerated on a finite region, with frozen lookup tables.
#[derive(Debug)]
pub struct ModelInstance {
    spec: ModelSpec,
    geometry: ModelGeometry,
    region: Region,
    token: u64,
    animals: Vec<AnimalData>,
    by_site: HashMap<Site, Vec<AnimalId>>,
    incompat: Vec<Vec<AnimalId>>,
    halos: Vec<Vec<Site>>,
}

impl ModelInstance {
    pub(crate) fn assemble(
        spec: ModelSpec,
        geometry: ModelGeometry,
        region: Region,
        animals: Vec<AnimalData>,
    ) -> Result<Self> {
        let mut by_site: HashMap<Site, Vec<AnimalId>> = HashMap::new();
        for (id, a) in animals.iter().enumerate() {
            for &s in &a.support {
                by_site.entry(s).or_default().push(id as AnimalId);
            }
        }
        for v in by_site.values_mut() {
            v.sort_unstable();
        }
        let mut model = ModelInstance {
            spec,
            geometry,
            region,
            token: NEXT_TOKEN.fetch_add(1, Ordering::Relaxed),
            animals,
            by_site,
            incompat: Vec::new(),
            halos: Vec::new(),
        };
        model.freeze_tables()?;
        Ok(model)
    }

    /// Precompute per-animal halos and incompatibility adjacency. Candidates
    /// are animals intersecting the halo; the model closed form decides.
    fn freeze_tables(&mut self) -> Result<()> {
        let n = self.animals.len();
        let mut halos = Vec::with_capacity(n);
        for id in 0..n {
            halos.push(self.spec.halo(&self.animals[id], self.geometry.d));
        }
        let mut incompat = vec![Vec::new(); n];
        for id in 0..n as AnimalId {
            let mut cands: Vec<AnimalId> = Vec::new();
            for s in &halos[id as usize] {
                if let Some(list) = self.by_site.get(s) {
                    cands.extend_from_slice(list);
                }
            }
            cands.sort_unstable();
            cands.dedup();
            let list: Vec<AnimalId> = cands
                .into_iter()
                .filter(|&other| {
                    self.spec.incompatible_closed_form(
                        &self.animals[id as usize],
                        &self.animals[other as usize],
                        self.geometry.d,
                    )
                })
                .collect();
            incompat[id as usize] = list;
        }
        self.halos = halos;
        self.incompat = incompat;
        Ok(())
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn geometry(&self) -> ModelGeometry {
        self.geometry
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn d(&self) -> usize {
        self.geometry.d
    }

    pub fn n_animals(&self) -> usize {
        self.animals.len()
    }

    pub fn animal(&self, id: AnimalId) -> Result<Animal> {
        if (id as usize) < self.animals.len() {
            Ok(Animal { token: self.token, id })
        } else {
            Err(Error::ModelMismatch)
        }
    }

    pub fn animal_ids(&self) -> impl Iterator<Item = AnimalId> {
        0..self.animals.len() as AnimalId
    }

    fn check(&self, animal: Animal) -> Result<AnimalId> {
        if animal.token != self.token || animal.id as usize >= self.animals.len() {
            return Err(Error::ModelMismatch);
        }
        Ok(animal.id)
    }

    pub fn data(&self, id: AnimalId) -> &AnimalData {
        &self.animals[id as usize]
    }

    pub fn support(&self, id: AnimalId) -> &[Site] {
        &self.animals[id as usize].support
    }

    /// Exactly the animals γ with x ∈ V(γ) and V(γ) inside the region.
    pub fn enumerate_containing(&self, x: Site) -> &[AnimalId] {
        self.by_site.get(&x).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Binary incompatibility from the model's closed form. Animals from a
    /// different instance are a model mismatch.
    pub fn incompatible(&self, a: Animal, b: Animal) -> Result<bool> {
        let ia = self.check(a)?;
        let ib = self.check(b)?;
        Ok(self.incompat[ia as usize].binary_search(&ib).is_ok())
    }

    /// All animals incompatible with `id` (may include `id` itself).
    pub fn incompatible_ids(&self, id: AnimalId) -> &[AnimalId] {
        &self.incompat[id as usize]
    }

    /// The halo H(γ): a finite site set every animal incompatible with γ
    /// intersects. For the exclusion-flavoured built-ins this is V(γ).
    pub fn halo(&self, a: Animal) -> Result<&[Site]> {
        let id = self.check(a)?;
        Ok(&self.halos[id as usize])
    }

    pub fn halo_of(&self, id: AnimalId) -> &[Site] {
        &self.halos[id as usize]
    }

    /// The acceptance probability M(γ | ξ) in [0, 1].
    pub fn interaction(&self, id: AnimalId, cfg: &AnimalConfiguration) -> f64 {
        debug_assert_eq!(cfg.token, self.token);
        let m = self.spec.interaction(self, id, cfg);
        debug_assert!((0.0..=1.0).contains(&m));
        m
    }

    /// Whether M only takes the values 0 and 1.
    pub fn deterministic(&self) -> bool {
        self.spec.deterministic()
    }

    pub fn size(&self, id: AnimalId, f: SizeFunction) -> f64 {
        match f {
            SizeFunction::SupportSize => self.animals[id as usize].support.len() as f64,
            SizeFunction::Unit => 1.0,
        }
    }

    pub fn empty_config(&self) -> AnimalConfiguration {
        AnimalConfiguration::new(self)
    }
}

/// Randomized check of the boundary-shell crossing property: every chain of
/// pairwise-incompatible animals from inside Λ[x;L] to outside Λ[x;L+δ]
/// must have at least two animals fully contained in the shell.
///
/// Chains are simulated in the 1-d projection along the crossing direction:
/// animal extents up to ℓ1, gaps between consecutive animals up to ℓ2, with
/// half the steps taken adversarially at full reach. Returns false as soon
/// as one simulated crossing has fewer than two shell-contained animals.
pub fn verify_delta(geometry: &ModelGeometry, trials: u32, seed: u64) -> bool {
    assert!(trials >= 1);
    let l1 = geometry.ell1 as i64;
    let l2 = geometry.ell2 as i64;
    if l1 + l2 == 0 {
        // chains cannot move, so no chain crosses any annulus
        return true;
    }
    let mut s = Stream::scoped(seed, tag::VERIFY_DELTA, &[]);
    let shell_width = geometry.delta.floor() as i64;
    for _ in 0..trials {
        let box_l = (l1 + l2) * (2 + s.index(4) as i64);
        let shell_hi = box_l + shell_width;
        // first animal touches the inside: min coordinate ≤ box_l
        let mut len = pick_extent(&mut s, l1);
        let mut min = box_l - s.index((len + 1) as usize) as i64;
        let mut max = min + len;
        let mut inside_count = 0i64;
        let mut steps = 0;
        while max <= shell_hi {
            if min > box_l && max <= shell_hi {
                inside_count += 1;
            }
            // next animal: within distance ℓ2, biased toward crossing
            let gap = pick_extent(&mut s, l2);
            len = pick_extent(&mut s, l1);
            min = max + gap;
            max = min + len;
            steps += 1;
            if steps > 100_000 {
                break; // cannot cross; nothing to check on this trial
            }
        }
        if max > shell_hi && inside_count < 2 {
            return false;
        }
    }
    true
}

fn pick_extent(s: &mut Stream, cap: i64) -> i64 {
    if cap == 0 {
        return 0;
    }
    if s.bernoulli(0.5) {
        cap // adversarial full-reach step
    } else {
        s.index((cap + 1) as usize) as i64
    }
}
