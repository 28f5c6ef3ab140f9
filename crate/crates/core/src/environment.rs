//! Quenched random environments: sampling of birth-rate realizations and the
//! disorder diagnostics used by the ergodicity criteria.
//!
//! A [`DisorderSpec`] draws one independent variable per site (and per link
//! for site-link disorder) and maps the variables local to an animal to its
//! birth rate. Independence of the variables, together with rates depending
//! only on the animal's own sites and links, makes rates of compatible
//! animals independent.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::animal_model::{AnimalId, ModelInstance, SizeFunction};
use crate::error::{Error, Result};
use crate::lattice::{Link, Region, Site};
use crate::parallel;
use crate::rng::{self, tag, Stream};
use crate::stats::Moments;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisorderKind {
    Site,
    SiteLink,
}

impl std::fmt::Display for DisorderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DisorderKind::Site => write!(f, "site"),
            DisorderKind::SiteLink => write!(f, "site-link"),
        }
    }
}

/// Marginal law of one disorder variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Marginal {
    Degenerate { value: f64 },
    Uniform { lo: f64, hi: f64 },
    Exponential { mean: f64 },
    LogNormal { mu: f64, sigma: f64 },
    /// `hi` with probability `p`, else `lo`.
    BernoulliMix { p: f64, hi: f64, lo: f64 },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match *self {
            Marginal::Degenerate { value } => {
                if !value.is_finite() {
                    return bad("degenerate value must be finite".into());
                }
            }
            Marginal::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return bad(format!("uniform bounds out of order: [{lo}, {hi}]"));
                }
            }
            Marginal::Exponential { mean } => {
                if !(mean > 0.0) || !mean.is_finite() {
                    return bad(format!("exponential mean must be positive, got {mean}"));
                }
            }
            Marginal::LogNormal { mu, sigma } => {
                if !mu.is_finite() || !(sigma >= 0.0) || !sigma.is_finite() {
                    return bad(format!("lognormal parameters invalid: mu={mu} sigma={sigma}"));
                }
            }
            Marginal::BernoulliMix { p, hi, lo } => {
                if !(0.0..=1.0).contains(&p) || !hi.is_finite() || !lo.is_finite() {
                    return bad("bernoulli mixture parameters invalid".into());
                }
            }
        }
        Ok(())
    }

    pub fn sample(&self, s: &mut Stream) -> f64 {
        match *self {
            Marginal::Degenerate { value } => value,
            Marginal::Uniform { lo, hi } => s.uniform_in(lo, hi),
            Marginal::Exponential { mean } => s.exp(1.0 / mean),
            Marginal::LogNormal { mu, sigma } => (mu + sigma * s.normal()).exp(),
            Marginal::BernoulliMix { p, hi, lo } => {
                if s.bernoulli(p) {
                    hi
                } else {
                    lo
                }
            }
        }
    }
}

/// How an animal's rate derives from its local disorder variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateMap {
    /// rate ≡ value, ignoring the variables (homogeneous environment).
    Constant { value: f64 },
    /// Value at the animal's first (lexicographically smallest) site.
    SiteValue,
    /// Product of the site values over V(γ).
    SiteProduct,
    /// Mean of the site values over V(γ).
    SiteMean,
    /// Product of the link values over L(γ); 1 for animals without links.
    LinkProduct,
    /// Π_links J/(1-J) · Π_sites 1/J; link values must lie in (0,1) and
    /// site values must be positive.
    RandomClusterWeights,
    /// Deterministic per-kind rates (homogeneous in space).
    PerKind { values: Vec<f64> },
}

impl RateMap {
    fn needs_links(&self) -> bool {
        matches!(self, RateMap::LinkProduct | RateMap::RandomClusterWeights)
    }
}

/// Full description of the quenched disorder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisorderSpec {
    pub kind: DisorderKind,
    pub marginal: Marginal,
    /// Marginal for link variables; defaults to `marginal`.
    #[serde(default)]
    pub link_marginal: Option<Marginal>,
    pub rate_map: RateMap,
}

impl DisorderSpec {
    pub fn homogeneous(value: f64) -> Self {
        DisorderSpec {
            kind: DisorderKind::Site,
            marginal: Marginal::Degenerate { value },
            link_marginal: None,
            rate_map: RateMap::Constant { value },
        }
    }

    pub fn site(marginal: Marginal, rate_map: RateMap) -> Self {
        DisorderSpec { kind: DisorderKind::Site, marginal, link_marginal: None, rate_map }
    }

    pub fn validate(&self) -> Result<()> {
        self.marginal.validate()?;
        if let Some(lm) = &self.link_marginal {
            lm.validate()?;
        }
        if self.rate_map.needs_links() && self.kind != DisorderKind::SiteLink {
            return Err(Error::DisorderKindMismatch {
                required: DisorderKind::SiteLink.to_string(),
                got: self.kind.to_string(),
            });
        }
        Ok(())
    }
}

/// One realization of the disorder over a model instance's region, with
/// derived per-animal rates.
#[derive(Clone, Debug)]
pub struct Environment {
    model: Arc<ModelInstance>,
    spec: DisorderSpec,
    seed: u64,
    site_values: HashMap<Site, f64>,
    link_values: HashMap<Link, f64>,
    rates: Vec<f64>,
}

impl Environment {
    pub fn model(&self) -> &Arc<ModelInstance> {
        &self.model
    }

    pub fn spec(&self) -> &DisorderSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn region(&self) -> &Region {
        self.model.region()
    }

    pub fn rate(&self, id: AnimalId) -> f64 {
        self.rates[id as usize]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn site_value(&self, s: Site) -> Option<f64> {
        self.site_values.get(&s).copied()
    }

    /// Total rate over the region; finiteness is the sampling precondition
    /// of the free process.
    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    /// Multiply every rate by c ≥ 0 (diagnostics scale linearly with it).
    pub fn scale_rates(&self, c: f64) -> Result<Environment> {
        if !(c >= 0.0) {
            return Err(Error::InvalidParameter("scale factor must be ≥ 0".into()));
        }
        let mut out = self.clone();
        for r in &mut out.rates {
            *r *= c;
        }
        Ok(out)
    }

    /// Versioned snapshot for replay.
    pub fn snapshot(&self) -> EnvironmentSnapshot {
        let mut site_values: Vec<(Site, f64)> =
            self.site_values.iter().map(|(&k, &v)| (k, v)).collect();
        site_values.sort_by_key(|e| e.0);
        let mut link_values: Vec<(Link, f64)> =
            self.link_values.iter().map(|(&k, &v)| (k, v)).collect();
        link_values.sort_by_key(|e| e.0);
        EnvironmentSnapshot {
            version: 1,
            spec: self.spec.clone(),
            model: self.model.spec().clone(),
            region_lo: self.region().lo().to_vec(),
            region_hi: self.region().hi().to_vec(),
            seed: self.seed,
            site_values,
            link_values,
        }
    }
}

/// Serializable environment state (spec, seed, realized values).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvironmentSnapshot {
    pub version: u32,
    pub spec: DisorderSpec,
    pub model: crate::models::ModelSpec,
    pub region_lo: Vec<i32>,
    pub region_hi: Vec<i32>,
    pub seed: u64,
    pub site_values: Vec<(Site, f64)>,
    pub link_values: Vec<(Link, f64)>,
}

impl EnvironmentSnapshot {
    pub fn restore(&self) -> Result<Environment> {
        let region = Region::new(&self.region_lo, &self.region_hi)?;
        let model = Arc::new(self.model.instantiate(region)?);
        let mut env = Environment {
            model,
            spec: self.spec.clone(),
            seed: self.seed,
            site_values: self.site_values.iter().copied().collect(),
            link_values: self.link_values.iter().copied().collect(),
            rates: Vec::new(),
        };
        env.rates = derive_rates(&env.model, &env.spec, &env.site_values, &env.link_values)?;
        Ok(env)
    }
}

/// Draw a fresh environment: independent variables for every site (and
/// link) of the region dilated by ℓ1, then derived per-animal rates.
///
/// Values are keyed by site coordinates, so the same (spec, seed) yields
/// identical values on overlapping windows.
pub fn sample_environment(
    model: &Arc<ModelInstance>,
    spec: &DisorderSpec,
    seed: u64,
) -> Result<Environment> {
    spec.validate()?;
    let required = model.spec().required_disorder();
    if required == DisorderKind::SiteLink && spec.kind != DisorderKind::SiteLink {
        return Err(Error::DisorderKindMismatch {
            required: required.to_string(),
            got: spec.kind.to_string(),
        });
    }
    let dilated = model.region().dilate(model.geometry().ell1);
    let mut site_values = HashMap::new();
    for x in dilated.iter() {
        let mut s = Stream::scoped(seed, tag::ENVIRONMENT, &[1, x.label()]);
        site_values.insert(x, spec.marginal.sample(&mut s));
    }
    let mut link_values = HashMap::new();
    if spec.kind == DisorderKind::SiteLink {
        let lm = spec.link_marginal.as_ref().unwrap_or(&spec.marginal);
        for x in dilated.iter() {
            for axis in 0..model.d() {
                let link = Link { from: x, axis };
                if dilated.contains(link.endpoints().1) {
                    let mut s = Stream::scoped(seed, tag::ENVIRONMENT, &[2, link.label()]);
                    link_values.insert(link, lm.sample(&mut s));
                }
            }
        }
    }
    let rates = derive_rates(model, spec, &site_values, &link_values)?;
    Ok(Environment {
        model: Arc::clone(model),
        spec: spec.clone(),
        seed,
        site_values,
        link_values,
        rates,
    })
}

fn derive_rates(
    model: &ModelInstance,
    spec: &DisorderSpec,
    site_values: &HashMap<Site, f64>,
    link_values: &HashMap<Link, f64>,
) -> Result<Vec<f64>> {
    let mut rates = Vec::with_capacity(model.n_animals());
    for id in model.animal_ids() {
        let data = model.data(id);
        let rate = match &spec.rate_map {
            RateMap::Constant { value } => {
                if *value < 0.0 {
                    return Err(Error::RateDomain("constant rate must be ≥ 0".into()));
                }
                *value
            }
            RateMap::SiteValue => site_values[&data.support[0]],
            RateMap::SiteProduct => data.support.iter().map(|s| site_values[s]).product(),
            RateMap::SiteMean => {
                data.support.iter().map(|s| site_values[s]).sum::<f64>()
                    / data.support.len() as f64
            }
            RateMap::LinkProduct => data.links.iter().map(|l| link_values[l]).product(),
            RateMap::RandomClusterWeights => {
                let mut w = 1.0;
                for l in &data.links {
                    let j = link_values[l];
                    if !(j > 0.0 && j < 1.0) {
                        return Err(Error::RateDomain(format!(
                            "link value {j} outside (0,1) for the random-cluster weights"
                        )));
                    }
                    w *= j / (1.0 - j);
                }
                for s in &data.support {
                    let j = site_values[s];
                    if !(j > 0.0) {
                        return Err(Error::RateDomain(format!(
                            "site value {j} must be positive for the random-cluster weights"
                        )));
                    }
                    w /= j;
                }
                w
            }
            RateMap::PerKind { values } => {
                let k = data.kind as usize;
                *values.get(k).ok_or_else(|| {
                    Error::RateDomain(format!("no rate configured for animal kind {k}"))
                })?
            }
        };
        if rate < 0.0 || rate.is_nan() {
            return Err(Error::RateDomain(format!("derived rate {rate} for animal {id}")));
        }
        rates.push(rate);
    }
    Ok(rates)
}

// --- diagnostics -------------------------------------------------------------

/// Υ on the window: max over sites of the total rate of animals containing
/// the site. A lower bound for the full-lattice supremum; exact at interior
/// sites of translation-invariant specs.
pub fn upsilon(env: &Environment, region: &Region) -> Result<f64> {
    upsilon_at(env, region).map(|(v, _)| v)
}

pub fn upsilon_at(env: &Environment, region: &Region) -> Result<(f64, Site)> {
    if !env.region().contains_region(region) {
        return Err(Error::RegionMargin("diagnostic region outside the environment".into()));
    }
    let mut best = f64::NEG_INFINITY;
    let mut arg = None;
    for x in region.iter() {
        let v: f64 = env
            .model
            .enumerate_containing(x)
            .iter()
            .map(|&id| env.rate(id))
            .sum();
        if v > best {
            best = v;
            arg = Some(x);
        }
    }
    let arg = arg.ok_or(Error::EmptyRegion)?;
    Ok((best, arg))
}

/// Ψ on the window: max over animals of the size-weighted rate of
/// incompatible animals, normalized by the animal's own size.
pub fn psi(env: &Environment, size_fn: SizeFunction, region: &Region) -> Result<f64> {
    if !env.region().contains_region(region) {
        return Err(Error::RegionMargin("diagnostic region outside the environment".into()));
    }
    let model = &env.model;
    let mut best: Option<f64> = None;
    for id in model.animal_ids() {
        if !region.contains_all(model.support(id)) {
            continue;
        }
        let s_gamma = model.size(id, size_fn);
        let sum: f64 = model
            .incompatible_ids(id)
            .iter()
            .map(|&theta| model.size(theta, size_fn) * env.rate(theta))
            .sum();
        let v = sum / s_gamma;
        best = Some(best.map_or(v, |b: f64| b.max(v)));
    }
    best.ok_or(Error::EmptyRegion)
}

/// Ξ on the window: max over sites of the halo-weighted rate of animals
/// containing the site.
pub fn xi(env: &Environment, region: &Region) -> Result<f64> {
    if !env.region().contains_region(region) {
        return Err(Error::RegionMargin("diagnostic region outside the environment".into()));
    }
    let mut best: Option<f64> = None;
    for x in region.iter() {
        let v: f64 = env
            .model
            .enumerate_containing(x)
            .iter()
            .map(|&id| env.model.halo_of(id).len() as f64 * env.rate(id))
            .sum();
        best = Some(best.map_or(v, |b: f64| b.max(v)));
    }
    best.ok_or(Error::EmptyRegion)
}

/// Halo/size ratios (u1, u2) over the model's animals.
pub fn halo_size_ratios(model: &ModelInstance, size_fn: SizeFunction) -> (f64, f64) {
    let mut u1 = f64::INFINITY;
    let mut u2 = 0.0f64;
    for id in model.animal_ids() {
        let ratio = model.halo_of(id).len() as f64 / model.size(id, size_fn);
        u1 = u1.min(ratio);
        u2 = u2.max(ratio);
    }
    (u1, u2)
}

/// The window diagnostics of one environment in a single bundle. The
/// values always satisfy Υ ≤ Ξ and Ψ ≤ (u2/u1) Ξ.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DisorderDiagnostics {
    pub upsilon: f64,
    pub psi: f64,
    pub xi: f64,
    pub u1: f64,
    pub u2: f64,
}

pub fn diagnostics(env: &Environment, size_fn: SizeFunction, region: &Region) -> Result<DisorderDiagnostics> {
    let (u1, u2) = halo_size_ratios(env.model(), size_fn);
    Ok(DisorderDiagnostics {
        upsilon: upsilon(env, region)?,
        psi: psi(env, size_fn, region)?,
        xi: xi(env, region)?,
        u1,
        u2,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EstimateWithCi {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub stderr: f64,
    pub replicas: u32,
}

impl EstimateWithCi {
    fn from_moments(m: &Moments, z: f64) -> Self {
        let (lo, hi) = m.ci(z);
        EstimateWithCi {
            mean: m.mean(),
            ci_low: lo,
            ci_high: hi,
            stderr: m.stderr(),
            replicas: m.n() as u32,
        }
    }
}

/// Monte Carlo estimate of the a-th logarithmic moment of 1 + Υ over fresh
/// environments, with a normal-approximation interval.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AlephEstimate {
    pub estimate: EstimateWithCi,
    /// Replicas whose Υ was not finite; flagged, estimate still reported
    /// over the finite ones.
    pub non_finite: u32,
}

pub fn aleph_estimate(
    model: &Arc<ModelInstance>,
    spec: &DisorderSpec,
    a: f64,
    region: &Region,
    replicas: u32,
    seed: u64,
    workers: usize,
) -> Result<AlephEstimate> {
    if !(a > 0.0) {
        return Err(Error::InvalidParameter("exponent must be positive".into()));
    }
    if replicas < 2 {
        return Err(Error::InvalidParameter("need at least 2 replicas".into()));
    }
    let values = parallel::map_indexed(replicas as usize, workers, |i| -> Result<f64> {
        let env = sample_environment(model, spec, rng::derive_chain(seed, &[tag::DIAGNOSTICS, i as u64]))?;
        let (ups, _) = upsilon_at(&env, region)?;
        Ok((1.0 + ups).ln().powf(a))
    });
    let mut moments = Moments::default();
    let mut non_finite = 0u32;
    for v in values {
        let v = v?;
        if v.is_finite() {
            moments.push(v);
        } else {
            non_finite += 1;
        }
    }
    Ok(AlephEstimate { estimate: EstimateWithCi::from_moments(&moments, 1.96), non_finite })
}

/// The admissible-exponent threshold 2d²(1 + √(1+1/d) + 1/(2d)).
pub fn a_threshold(d: usize) -> f64 {
    let d = d as f64;
    2.0 * d * d * (1.0 + (1.0 + 1.0 / d).sqrt() + 1.0 / (2.0 * d))
}

/// Hypothesis report: the two disorder conditions behind ergodicity (a
/// finite logarithmic moment of the local rate supremum, and a small mean
/// weighted incompatible-rate supremum) plus the halo-based sufficient
/// route.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub d: usize,
    pub a_threshold: f64,
    /// Exponent used for the logarithmic moment (1.01 × threshold unless
    /// overridden).
    pub a: f64,
    pub aleph: AlephEstimate,
    pub epsilon: f64,
    pub mean_psi: EstimateWithCi,
    pub psi_condition_pass: bool,
    pub mean_xi: EstimateWithCi,
    pub u1: f64,
    pub u2: f64,
    /// E[Ψ] ≤ (u2/u1) E[Ξ] route usable (u1 > 0, u2 finite).
    pub ratio_route_ok: bool,
    /// Window the suprema were restricted to; the reported values are lower
    /// bounds for the full-lattice suprema.
    pub window_lo: Vec<i32>,
    pub window_hi: Vec<i32>,
    pub replicas: u32,
}

#[allow(clippy::too_many_arguments)]
pub fn check_hypotheses(
    model: &Arc<ModelInstance>,
    spec: &DisorderSpec,
    size_fn: SizeFunction,
    epsilon: f64,
    a: Option<f64>,
    replicas: u32,
    seed: u64,
    workers: usize,
) -> Result<HypothesisReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    let d = model.d();
    let thr = a_threshold(d);
    let a = a.unwrap_or(1.01 * thr);
    let region = *model.region();
    let aleph = aleph_estimate(model, spec, a, &region, replicas, seed, workers)?;

    let rows = parallel::map_indexed(replicas as usize, workers, |i| -> Result<(f64, f64)> {
        let env = sample_environment(model, spec, rng::derive_chain(seed, &[tag::DIAGNOSTICS, 1, i as u64]))?;
        Ok((psi(&env, size_fn, &region)?, xi(&env, &region)?))
    });
    let mut psi_m = Moments::default();
    let mut xi_m = Moments::default();
    for r in rows {
        let (p, x) = r?;
        psi_m.push(p);
        xi_m.push(x);
    }
    let (u1, u2) = halo_size_ratios(model, size_fn);
    let mean_psi = EstimateWithCi::from_moments(&psi_m, 1.96);
    Ok(HypothesisReport {
        d,
        a_threshold: thr,
        a,
        aleph,
        epsilon,
        psi_condition_pass: mean_psi.ci_high <= epsilon,
        mean_psi,
        mean_xi: EstimateWithCi::from_moments(&xi_m, 1.96),
        u1,
        u2,
        ratio_route_ok: u1 > 0.0 && u2.is_finite(),
        window_lo: region.lo().to_vec(),
        window_hi: region.hi().to_vec(),
        replicas,
    })
}
