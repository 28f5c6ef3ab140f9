//! Built-in animal models.
//!
//! Each model supplies, in closed form, everything the engine needs:
//! enumeration of its animals on a region, the interaction function M, the
//! binary incompatibility relation, halos, derived geometry and the disorder
//! binding it expects. The closed forms are validated against the defining
//! sup-over-configurations test on small instances in the test suite.
//!
//! Not implemented: contour-style models whose animals are closed plaquette
//! surfaces with rates of the form exp(-β Σ_x J(x)) over the plaquette
//! centers. The adjacency-exclusion rule fits the framework, but enumerating
//! plaquette surfaces in general dimension is out of scope; the rate shape
//! is expressible with [`crate::environment::RateMap::SiteProduct`] over
//! exponentiated couplings should such an enumeration be added.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashSet};

use crate::animal_model::{AnimalConfiguration, AnimalData, AnimalId, ModelGeometry, ModelInstance};
use crate::environment::DisorderKind;
use crate::error::{Error, Result};
use crate::lattice::{sup_dist, Link, Region, Site};

const MAX_ANIMALS: usize = 2_000_000;

/// A map N → [0, 1] used as acceptance-probability profile. Restricted to
/// constant or strictly monotone shapes so that binary incompatibility has
/// an exact closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FMap {
    Const { value: f64 },
    /// 1 at 0, 0 elsewhere.
    HardCore,
    /// beta^n with beta in [0, 1).
    Geometric { beta: f64 },
    /// Explicit values for 0..len, continued with the last entry; must be
    /// constant or strictly monotone.
    Table { values: Vec<f64> },
}

impl FMap {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("interaction profile: {msg}")));
        match self {
            FMap::Const { value } => {
                if !(0.0..=1.0).contains(value) {
                    return bad("constant outside [0,1]");
                }
            }
            FMap::HardCore => {}
            FMap::Geometric { beta } => {
                if !(0.0..1.0).contains(beta) {
                    return bad("geometric base outside [0,1)");
                }
            }
            FMap::Table { values } => {
                if values.is_empty() {
                    return bad("empty table");
                }
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return bad("table value outside [0,1]");
                }
                let inc = values.windows(2).all(|w| w[0] < w[1]);
                let dec = values.windows(2).all(|w| w[0] > w[1]);
                let cst = values.windows(2).all(|w| w[0] == w[1]);
                if !(inc || dec || cst) {
                    return bad("table must be constant or strictly monotone");
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, n: u32) -> f64 {
        match self {
            FMap::Const { value } => *value,
            FMap::HardCore => {
                if n == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            FMap::Geometric { beta } => beta.powi(n as i32),
            FMap::Table { values } => values[(n as usize).min(values.len() - 1)],
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            FMap::Const { .. } => true,
            FMap::HardCore => false,
            FMap::Geometric { beta } => *beta == 1.0,
            FMap::Table { values } => values.windows(2).all(|w| w[0] == w[1]),
        }
    }

    pub fn deterministic(&self) -> bool {
        match self {
            FMap::Const { value } => *value == 0.0 || *value == 1.0,
            FMap::HardCore => true,
            FMap::Geometric { beta } => *beta == 0.0,
            FMap::Table { values } => values.iter().all(|&v| v == 0.0 || v == 1.0),
        }
    }
}

/// Serializable model description; instantiate on a region to work with it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Volume exclusion between translates of the given shapes (offset
    /// lists). Shape index is the animal kind; two animals are incompatible
    /// exactly when their supports overlap. A single one-site shape is the
    /// single-site self-exclusion model.
    Exclusion { d: usize, shapes: Vec<Vec<Vec<i32>>> },
    /// Grains x+G with acceptance F(|(x+G) ∩ (A⊕G)|).
    AreaInteraction { d: usize, grain: Vec<Vec<i32>>, f: FMap },
    /// Single-site animals; acceptance depends on the number of present
    /// points within distance r.
    Strauss { d: usize, r: i32, penalty: FMap },
    /// Calls: connected nearest-neighbor link sets with at most `max_len`
    /// links; a birth is blocked when it would push a link beyond capacity.
    /// `capacity: None` means unbounded (free process).
    LossNetwork { d: usize, max_len: u32, capacity: Option<u32> },
    /// Clusters: connected subgraphs of diameter ≤ ell1 with vertex-
    /// disjointness incompatibility; pair with the random-cluster rate map.
    RandomCluster { d: usize, ell1: i32 },
}

fn normalize_shape(d: usize, shape: &[Vec<i32>]) -> Result<Vec<Site>> {
    if shape.is_empty() {
        return Err(Error::InvalidParameter("shape with empty support".into()));
    }
    let mut sites: Vec<Site> = Vec::with_capacity(shape.len());
    for off in shape {
        if off.len() != d {
            return Err(Error::InvalidParameter(format!(
                "shape offset of dimension {} in a d = {d} model",
                off.len()
            )));
        }
        sites.push(Site::new(off));
    }
    sites.sort();
    sites.dedup();
    // anchor min corner at the origin so translates are uniquely labelled
    let mut mins = vec![i32::MAX; d];
    for s in &sites {
        for (i, m) in mins.iter_mut().enumerate() {
            *m = (*m).min(s.coord(i));
        }
    }
    let neg: Vec<i32> = mins.iter().map(|m| -m).collect();
    Ok(sites.into_iter().map(|s| s.translate(&neg)).collect())
}

// --- builders ---------------------------------------------------------------

/// Volume-exclusion model over a list of shapes (each a list of offsets).
pub fn exclusion_model(d: usize, shapes: Vec<Vec<Vec<i32>>>) -> Result<ModelSpec> {
    if shapes.is_empty() {
        return Err(Error::InvalidParameter("exclusion model needs at least one shape".into()));
    }
    for s in &shapes {
        normalize_shape(d, s)?;
    }
    Ok(ModelSpec::Exclusion { d, shapes })
}

/// The d=2 horizontal/vertical two-site animal model.
pub fn domino_model() -> ModelSpec {
    exclusion_model(2, vec![vec![vec![0, 0], vec![1, 0]], vec![vec![0, 0], vec![0, 1]]])
        .expect("static shapes are valid")
}

/// Single-site self-exclusion: animals at every site, each incompatible
/// only with copies of itself.
pub fn single_site_model(d: usize) -> ModelSpec {
    exclusion_model(d, vec![vec![vec![0; d]]]).expect("static shapes are valid")
}

/// Area-interaction grains x+G with acceptance profile F.
pub fn area_interaction_model(d: usize, grain: Vec<Vec<i32>>, f: FMap) -> Result<ModelSpec> {
    f.validate()?;
    normalize_shape(d, &grain)?;
    Ok(ModelSpec::AreaInteraction { d, grain, f })
}

/// Strauss-type model with penalty as a function of the number of present
/// points within distance `r`.
pub fn strauss_model(d: usize, r: i32, penalty: FMap) -> Result<ModelSpec> {
    if r < 1 {
        return Err(Error::InvalidParameter("threshold radius must be ≥ 1".into()));
    }
    penalty.validate()?;
    Ok(ModelSpec::Strauss { d, r, penalty })
}

/// Fixed-routing loss network on nearest-neighbor links.
pub fn loss_network_model(d: usize, max_len: u32, capacity: Option<u32>) -> Result<ModelSpec> {
    if max_len < 1 {
        return Err(Error::InvalidParameter("calls need at least one link".into()));
    }
    if capacity == Some(0) {
        return Err(Error::InvalidParameter("capacities must be ≥ 1".into()));
    }
    Ok(ModelSpec::LossNetwork { d, max_len, capacity })
}

/// Random-cluster animals: connected subgraphs with vertex exclusion. Use
/// together with [`crate::environment::RateMap::RandomClusterWeights`].
pub fn random_cluster_model(d: usize, ell1: i32) -> Result<ModelSpec> {
    if ell1 < 0 {
        return Err(Error::InvalidParameter("diameter bound must be ≥ 0".into()));
    }
    Ok(ModelSpec::RandomCluster { d, ell1 })
}

// --- spec methods ------------------------------------------------------------

impl ModelSpec {
    pub fn d(&self) -> usize {
        match self {
            ModelSpec::Exclusion { d, .. }
            | ModelSpec::AreaInteraction { d, .. }
            | ModelSpec::Strauss { d, .. }
            | ModelSpec::LossNetwork { d, .. }
            | ModelSpec::RandomCluster { d, .. } => *d,
        }
    }

    /// Disorder binding this model expects.
    pub fn required_disorder(&self) -> DisorderKind {
        match self {
            ModelSpec::LossNetwork { .. } | ModelSpec::RandomCluster { .. } => DisorderKind::SiteLink,
            _ => DisorderKind::Site,
        }
    }

    /// Maximal animal diameter ℓ1 (analytic, verified against the
    /// enumeration in debug builds).
    pub fn ell1(&self) -> Result<i32> {
        Ok(match self {
            ModelSpec::Exclusion { d, shapes } => {
                let mut m = 0;
                for s in shapes {
                    m = m.max(crate::lattice::diameter(&normalize_shape(*d, s)?, *d));
                }
                m
            }
            ModelSpec::AreaInteraction { d, grain, .. } => {
                crate::lattice::diameter(&normalize_shape(*d, grain)?, *d)
            }
            ModelSpec::Strauss { .. } => 0,
            ModelSpec::LossNetwork { max_len, .. } => *max_len as i32,
            ModelSpec::RandomCluster { ell1, .. } => *ell1,
        })
    }

    /// Incompatibility range ℓ2 matching the closed form; tightness is
    /// property-tested.
    pub fn ell2(&self) -> i32 {
        match self {
            ModelSpec::Strauss { r, penalty, .. } => {
                if penalty.is_constant() {
                    0
                } else {
                    *r
                }
            }
            // overlap/shared-link incompatibilities act at distance zero
            _ => 0,
        }
    }

    pub fn geometry(&self) -> Result<ModelGeometry> {
        let ell1 = self.ell1()?;
        let ell2 = self.ell2();
        Ok(ModelGeometry {
            d: self.d(),
            ell1,
            ell2,
            delta: ModelGeometry::default_delta(ell1, ell2),
        })
    }

    /// Enumerate the model's animals inside `region` and freeze an instance.
    pub fn instantiate(&self, region: Region) -> Result<ModelInstance> {
        self.instantiate_with_delta(region, None)
    }

    pub fn instantiate_with_delta(&self, region: Region, delta: Option<f64>) -> Result<ModelInstance> {
        if region.d() != self.d() {
            return Err(Error::InvalidParameter(format!(
                "region dimension {} does not match model dimension {}",
                region.d(),
                self.d()
            )));
        }
        let mut geometry = self.geometry()?;
        if let Some(dl) = delta {
            if dl < 0.0 {
                return Err(Error::InvalidParameter("shell width must be ≥ 0".into()));
            }
            geometry = geometry.with_delta(dl);
        }
        let animals = self.enumerate(&region)?;
        if animals.len() > MAX_ANIMALS {
            return Err(Error::EnumerationTooLarge(format!(
                "{} animals on the region (cap {MAX_ANIMALS})",
                animals.len()
            )));
        }
        debug_assert!(animals
            .iter()
            .all(|a| a.diameter(self.d()) <= geometry.ell1));
        ModelInstance::assemble(self.clone(), geometry, region, animals)
    }

    fn enumerate(&self, region: &Region) -> Result<Vec<AnimalData>> {
        match self {
            ModelSpec::Exclusion { d, shapes } => {
                let normalized: Vec<Vec<Site>> =
                    shapes.iter().map(|s| normalize_shape(*d, s)).collect::<Result<_>>()?;
                let mut out = Vec::new();
                for x in region.iter() {
                    for (k, shape) in normalized.iter().enumerate() {
                        let support: Vec<Site> =
                            shape.iter().map(|s| s.translate(x.coords(*d))).collect();
                        if region.contains_all(&support) {
                            out.push(AnimalData { support, kind: k as u32, links: vec![] });
                        }
                    }
                }
                Ok(out)
            }
            ModelSpec::AreaInteraction { d, grain, .. } => {
                let g = normalize_shape(*d, grain)?;
                let mut out = Vec::new();
                for x in region.iter() {
                    let support: Vec<Site> = g.iter().map(|s| s.translate(x.coords(*d))).collect();
                    if region.contains_all(&support) {
                        out.push(AnimalData { support, kind: 0, links: vec![] });
                    }
                }
                Ok(out)
            }
            ModelSpec::Strauss { .. } => Ok(region
                .iter()
                .map(|x| AnimalData { support: vec![x], kind: 0, links: vec![] })
                .collect()),
            ModelSpec::LossNetwork { d, max_len, .. } => {
                enumerate_connected_link_sets(region, *d, |links, _| links.len() <= *max_len as usize)
            }
            ModelSpec::RandomCluster { d, ell1 } => {
                let mut out = enumerate_connected_link_sets(region, *d, |_, support| {
                    crate::lattice::diameter(support, *d) <= *ell1
                })?;
                // single vertices are clusters too
                out.extend(
                    region
                        .iter()
                        .map(|x| AnimalData { support: vec![x], kind: 0, links: vec![] }),
                );
                Ok(sort_and_kind(out))
            }
        }
    }

    /// Binary incompatibility in closed form, equivalent on the shipped
    /// profiles to "∃ ξ with M(a|ξ) ≠ M(a|ξ+δ_b)".
    pub(crate) fn incompatible_closed_form(&self, a: &AnimalData, b: &AnimalData, d: usize) -> bool {
        match self {
            ModelSpec::Exclusion { .. } => supports_overlap(a, b),
            ModelSpec::AreaInteraction { f, .. } => !f.is_constant() && supports_overlap(a, b),
            ModelSpec::Strauss { r, penalty, .. } => {
                !penalty.is_constant() && sup_dist(a.support[0], b.support[0], d) <= *r
            }
            ModelSpec::LossNetwork { capacity, .. } => {
                capacity.is_some() && links_overlap(a, b)
            }
            ModelSpec::RandomCluster { .. } => supports_overlap(a, b),
        }
    }

    /// The halo H(γ): minimal region every incompatible animal intersects.
    pub(crate) fn halo(&self, a: &AnimalData, d: usize) -> Vec<Site> {
        match self {
            ModelSpec::Strauss { r, penalty, .. } => {
                if penalty.is_constant() {
                    a.support.clone()
                } else {
                    Region::ball(a.support[0], *r, d).sites()
                }
            }
            _ => a.support.clone(),
        }
    }

    pub(crate) fn interaction(&self, model: &ModelInstance, id: AnimalId, cfg: &AnimalConfiguration) -> f64 {
        match self {
            ModelSpec::Exclusion { .. } | ModelSpec::RandomCluster { .. } => {
                let mine: BTreeSet<Site> = model.support(id).iter().copied().collect();
                for (other, _) in cfg.present() {
                    if model.support(other).iter().any(|s| mine.contains(s)) {
                        return 0.0;
                    }
                }
                1.0
            }
            ModelSpec::AreaInteraction { f, .. } => {
                let mut covered: BTreeSet<Site> = BTreeSet::new();
                for (other, _) in cfg.present() {
                    covered.extend(model.support(other).iter().copied());
                }
                let n = model.support(id).iter().filter(|s| covered.contains(s)).count();
                f.eval(n as u32)
            }
            ModelSpec::Strauss { r, penalty, .. } => {
                let center = model.support(id)[0];
                let mut n = 0u32;
                for (other, mult) in cfg.present() {
                    if sup_dist(center, model.support(other)[0], model.d()) <= *r {
                        n += mult;
                    }
                }
                penalty.eval(n)
            }
            ModelSpec::LossNetwork { capacity, .. } => {
                let Some(cap) = capacity else { return 1.0 };
                for link in &model.data(id).links {
                    let mut usage = 0u32;
                    for (other, mult) in cfg.present() {
                        if model.data(other).links.binary_search(link).is_ok() {
                            usage += mult;
                        }
                    }
                    if usage >= *cap {
                        return 0.0;
                    }
                }
                1.0
            }
        }
    }

    pub(crate) fn deterministic(&self) -> bool {
        match self {
            ModelSpec::Exclusion { .. } | ModelSpec::LossNetwork { .. } | ModelSpec::RandomCluster { .. } => true,
            ModelSpec::AreaInteraction { f, .. } => f.deterministic(),
            ModelSpec::Strauss { penalty, .. } => penalty.deterministic(),
        }
    }
}

fn supports_overlap(a: &AnimalData, b: &AnimalData) -> bool {
    // supports are sorted: merge scan
    let (mut i, mut j) = (0, 0);
    while i < a.support.len() && j < b.support.len() {
        match a.support[i].cmp(&b.support[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

fn links_overlap(a: &AnimalData, b: &AnimalData) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.links.len() && j < b.links.len() {
        match a.links[i].cmp(&b.links[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Enumerate connected nearest-neighbor link sets inside a region, filtered
/// by `keep(links, support)`; canonical-form hashing deduplicates translates
/// and growth orders.
fn enumerate_connected_link_sets(
    region: &Region,
    d: usize,
    keep: impl Fn(&[Link], &[Site]) -> bool,
) -> Result<Vec<AnimalData>> {
    let mut all_links: Vec<Link> = Vec::new();
    for x in region.iter() {
        for axis in 0..d {
            let y = x.step(axis, 1);
            if region.contains(y) {
                all_links.push(Link { from: x, axis });
            }
        }
    }
    let mut seen: HashSet<Vec<Link>> = HashSet::new();
    let mut out: Vec<AnimalData> = Vec::new();

    // BFS over link sets, growing by adjacent links
    let mut frontier: Vec<Vec<Link>> = Vec::new();
    for &l in &all_links {
        let set = vec![l];
        if consider(&set, d, &keep, &mut seen, &mut out) {
            frontier.push(set);
        }
        if out.len() > MAX_ANIMALS {
            return Err(Error::EnumerationTooLarge("connected link sets".into()));
        }
    }
    while let Some(set) = frontier.pop() {
        let support = link_support(&set);
        for &cand in &all_links {
            if set.binary_search(&cand).is_ok() {
                continue;
            }
            let (a, b) = cand.endpoints();
            if !support.contains(&a) && !support.contains(&b) {
                continue; // not adjacent, would be disconnected
            }
            let mut grown = set.clone();
            let pos = grown.binary_search(&cand).unwrap_err();
            grown.insert(pos, cand);
            if consider(&grown, d, &keep, &mut seen, &mut out) {
                frontier.push(grown);
            }
            if out.len() > MAX_ANIMALS {
                return Err(Error::EnumerationTooLarge("connected link sets".into()));
            }
        }
    }
    Ok(sort_and_kind(out))
}

fn link_support(links: &[Link]) -> BTreeSet<Site> {
    let mut s = BTreeSet::new();
    for l in links {
        let (a, b) = l.endpoints();
        s.insert(a);
        s.insert(b);
    }
    s
}

fn consider(
    set: &[Link],
    _d: usize,
    keep: &impl Fn(&[Link], &[Site]) -> bool,
    seen: &mut HashSet<Vec<Link>>,
    out: &mut Vec<AnimalData>,
) -> bool {
    if seen.contains(set) {
        return false;
    }
    let support: Vec<Site> = link_support(set).into_iter().collect();
    if !keep(set, &support) {
        return false;
    }
    seen.insert(set.to_vec());
    out.push(AnimalData { support, kind: 0, links: set.to_vec() });
    true
}

/// Deterministic ordering plus kind assignment: animals sharing a support
/// get consecutive kinds in link-set order.
fn sort_and_kind(mut animals: Vec<AnimalData>) -> Vec<AnimalData> {
    animals.sort_by(|a, b| (&a.support, &a.links).cmp(&(&b.support, &b.links)));
    let mut kind = 0u32;
    for i in 0..animals.len() {
        if i > 0 && animals[i].support == animals[i - 1].support {
            kind += 1;
        } else {
            kind = 0;
        }
        animals[i].kind = kind;
    }
    animals
}
