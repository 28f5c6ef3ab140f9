//! Multiscale machinery: the admissible-parameter chain of the
//! change-of-scale argument, scaled sequences with stretched-exponential
//! box heights, the strip blocking probability K_Δ, the scale events over a
//! box, and the empirical regularity probes.
//!
//! Scales grow as L_{k+1} = L_k^α and box heights as T(L) = exp(L^ν).
//! T(L_1) already overflows double precision for modest L_0, so scales are
//! carried in log10 and every comparison involving T happens in log space.
//! Boxes beyond k = 1 are reported symbolically and refused for simulation.

use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::animal_model::{ModelInstance, SizeFunction};
use crate::connectivity::{is_regular, RegularityVerdict};
use crate::environment::{psi, sample_environment, DisorderSpec, Environment};
use crate::error::{Error, Result};
use crate::lattice::{Region, Site};
use crate::parallel;
use crate::rng::{self, tag};
use crate::stats::BinomialEstimate;

pub use crate::environment::a_threshold;

/// The exponent choice minimizing the admissible a: α = d + √(d² + d).
pub fn optimal_alpha(d: usize) -> f64 {
    let d = d as f64;
    d + (d * d + d).sqrt()
}

/// The full parameter tuple of the change-of-scale argument.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiscaleParameters {
    pub d: usize,
    pub alpha: f64,
    pub a: f64,
    pub nu: f64,
    pub p: f64,
    pub kappa: f64,
    pub b: f64,
    pub eta: f64,
    pub tau: f64,
    pub theta: f64,
    pub theta0: f64,
    pub m0: f64,
    pub m_inf: f64,
    pub q: f64,
    pub q0: f64,
    /// Number of singular balls allowed in the scale event.
    pub r_balls: u32,
    /// Default strip height at the desk probe scale l = 2 (use
    /// [`MultiscaleParameters::delta_at`] for other scales; deeper scales
    /// underflow and must be handled in log space via η).
    pub delta: f64,
}

impl MultiscaleParameters {
    /// Scale-dependent strip height Δ = exp(-l^η).
    pub fn delta_at(&self, l: f64) -> f64 {
        (-l.powf(self.eta)).exp()
    }
}

#[derive(Clone, Debug, Serialize)]
pub enum Feasibility {
    Feasible(MultiscaleParameters),
    Infeasible { first_violation: String },
}

impl Feasibility {
    pub fn unwrap(self) -> MultiscaleParameters {
        match self {
            Feasibility::Feasible(p) => p,
            Feasibility::Infeasible { first_violation } => {
                panic!("parameters infeasible: {first_violation}")
            }
        }
    }
}

/// Solve the parameter constraint chain for dimension `d`, picking
/// midpoints of the feasible intervals. With `a` omitted, a is set to
/// 1.01 × the admissible threshold 2d²(1 + √(1+1/d) + 1/(2d)).
///
/// κ and b are placed with explicit slack toward their extremes instead of
/// naive midpoints: the interval available to η collapses otherwise.
pub fn feasible_parameters(d: usize, a: Option<f64>) -> Feasibility {
    let infeasible = |s: String| Feasibility::Infeasible { first_violation: s };
    if d < 1 {
        return infeasible("dimension must be ≥ 1".into());
    }
    let df = d as f64;
    let alpha = optimal_alpha(d);
    let thr = a_threshold(d);
    let a = a.unwrap_or(1.01 * thr);
    if a <= thr {
        return infeasible(format!(
            "a = {a} is not above the admissible threshold {thr:.6} for d = {d}"
        ));
    }
    // ν must exceed αd(α+a+1)/(a(α-d+αd)) = 1/q0 for the p-interval to open
    let span = alpha - df + alpha * df;
    let q0 = a * span / (alpha * df * (alpha + a + 1.0));
    let nu_lo = 1.0 / q0;
    if nu_lo >= 1.0 {
        return infeasible(format!("no admissible ν: lower bound {nu_lo} ≥ 1"));
    }
    let nu = 0.5 * (nu_lo + 1.0);
    let theta0 = (alpha - 1.0).min(alpha * (1.0 - nu));

    let p_lo = alpha * df;
    let p_hi = (a * (nu * span - alpha * df) - alpha * df) / alpha;
    if p_hi <= p_lo {
        return infeasible(format!("empty p-interval ({p_lo}, {p_hi})"));
    }
    let p = 0.5 * (p_lo + p_hi);

    let eta_min = alpha * (p + df) / a;
    let kappa_min = 1.0f64.max(nu + theta0);
    let gap = alpha * nu - kappa_min * df;
    if gap <= eta_min {
        return infeasible(format!(
            "no room for η: α ν - κ_min d = {gap} ≤ α(p+d)/a = {eta_min}"
        ));
    }
    // allocate the slack: x = b - κ d sits midway between η_min and the gap
    let x = 0.5 * (eta_min + gap);
    let kappa = 0.5 * (kappa_min + (alpha * nu - x) / df);
    let b = kappa * df + x;
    let eta = 0.5 * (eta_min + x);

    let tau_hi = (kappa - theta0).min(alpha * nu);
    if tau_hi <= nu {
        return infeasible(format!("empty τ-interval ({nu}, {tau_hi})"));
    }
    let tau = 0.5 * (nu + tau_hi);
    let theta = 0.5 * theta0;
    let q = 1.0 / nu;

    let r_ratio = alpha * p / (p - alpha * df);
    let r_balls = (r_ratio.floor() as u32) + 1;

    let params = MultiscaleParameters {
        d,
        alpha,
        a,
        nu,
        p,
        kappa,
        b,
        eta,
        tau,
        theta,
        theta0,
        m0: 1.0,
        m_inf: 0.5,
        q,
        q0,
        r_balls,
        delta: (-2f64.powf(eta)).exp(),
    };
    match verify_parameters(&params) {
        Ok(()) => Feasibility::Feasible(params),
        Err(violations) => infeasible(violations[0].clone()),
    }
}

/// Independent re-check of every inequality of the constraint chain (a
/// separate function from the solver on purpose).
pub fn verify_parameters(p: &MultiscaleParameters) -> std::result::Result<(), Vec<String>> {
    let mut v: Vec<String> = Vec::new();
    let df = p.d as f64;
    let span = p.alpha - df + p.alpha * df;
    let mut check = |ok: bool, msg: String| {
        if !ok {
            v.push(msg);
        }
    };
    check(
        (p.alpha - optimal_alpha(p.d)).abs() < 1e-12,
        format!("alpha {} is not d + sqrt(d^2+d)", p.alpha),
    );
    check(
        p.a > a_threshold(p.d),
        format!("a {} not above the threshold {}", p.a, a_threshold(p.d)),
    );
    check(
        p.nu > p.alpha * df / span && p.nu < 1.0,
        format!("nu {} outside (alpha d/(alpha-d+alpha d), 1)", p.nu),
    );
    check(
        p.p > p.alpha * df && p.p < (p.a * (p.nu * span - p.alpha * df) - p.alpha * df) / p.alpha,
        format!("p {} outside its interval", p.p),
    );
    check(
        (p.theta0 - (p.alpha - 1.0).min(p.alpha * (1.0 - p.nu))).abs() < 1e-12,
        format!("theta0 {} is not min(alpha-1, alpha(1-nu))", p.theta0),
    );
    check(
        p.kappa > 1.0f64.max(p.nu + p.theta0),
        format!("kappa {} not above max(1, nu+theta0)", p.kappa),
    );
    check(
        p.kappa < p.b / df && p.b / df < p.alpha * p.nu / df,
        format!("kappa {} < b/d < alpha nu/d violated (b = {})", p.kappa, p.b),
    );
    check(
        p.eta > 0.0 && p.eta < p.b - p.kappa * df,
        format!("eta {} outside (0, b - kappa d)", p.eta),
    );
    check(
        p.a > p.alpha * (p.p + df) / p.eta,
        format!("a {} not above alpha(p+d)/eta = {}", p.a, p.alpha * (p.p + df) / p.eta),
    );
    check(
        p.tau > p.nu && p.tau < (p.kappa - p.theta0).min(p.alpha * p.nu),
        format!("tau {} outside (nu, min(kappa-theta0, alpha nu))", p.tau),
    );
    check(
        p.theta > 0.0 && p.theta < p.theta0,
        format!("theta {} outside (0, theta0)", p.theta),
    );
    check((p.q * p.nu - 1.0).abs() < 1e-12, format!("q nu = {} is not 1", p.q * p.nu));
    check(
        (p.q0 - p.a * span / (p.alpha * df * (p.alpha + p.a + 1.0))).abs() < 1e-12,
        format!("q0 {} does not match its formula", p.q0),
    );
    check(p.q > 1.0 && p.q < p.q0, format!("q {} outside (1, q0 = {})", p.q, p.q0));
    check(
        p.m_inf > 0.0 && p.m_inf < p.m0,
        format!("need 0 < m_inf < m0, got ({}, {})", p.m_inf, p.m0),
    );
    check(
        f64::from(p.r_balls) > p.alpha * p.p / (p.p - p.alpha * df),
        format!("R = {} not above alpha p/(p - alpha d)", p.r_balls),
    );
    check(p.delta > 0.0 && p.delta <= 1.0, format!("Delta {} outside (0, 1]", p.delta));
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

/// Probability that an animal at rate `w` blocks a strip of height `delta`:
/// no copy present at the strip bottom survives it (at the animal level) and
/// no birth occurs inside the strip.
pub fn k_delta(w: f64, delta: f64) -> f64 {
    assert!(w >= 0.0 && delta > 0.0);
    (-(1.0 + delta) * w).exp()
        + (1.0 - (-w).exp()) * (1.0 - (-delta).exp()) * (-delta * w).exp()
}

/// Analytic floor (1 - e^{-Δ}) e^{-Δw} of [`k_delta`].
pub fn k_delta_lower_bound(w: f64, delta: f64) -> f64 {
    (1.0 - (-delta).exp()) * (-delta * w).exp()
}

/// ln(1/K_Δ(w)), evaluated in a form stable for large rates.
pub fn ln_inv_k_delta(w: f64, delta: f64) -> f64 {
    let inner = (-w).exp() + (1.0 - (-w).exp()) * (1.0 - (-delta).exp());
    delta * w - inner.ln()
}

/// A scaled sequence (L_0, α, ν): sizes L_{k+1} = L_k^α, box heights
/// T(L) = exp(L^ν). Scales live in log10; heights as log10 of ln T.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScaledSequence {
    pub l0: f64,
    pub alpha: f64,
    pub nu: f64,
}

impl ScaledSequence {
    pub fn new(l0: f64, alpha: f64, nu: f64) -> Result<Self> {
        if !(l0 > 1.0) || !(alpha > 1.0) || !(nu > 0.0 && nu < 1.0) {
            return Err(Error::InvalidParameter(
                "scaled sequence needs L0 > 1, alpha > 1, nu in (0,1)".into(),
            ));
        }
        Ok(ScaledSequence { l0, alpha, nu })
    }

    /// log10 of L_k (exact recursion in the represented arithmetic).
    pub fn log10_scale(&self, k: u32) -> f64 {
        self.l0.log10() * self.alpha.powi(k as i32)
    }

    pub fn scale(&self, k: u32) -> Option<f64> {
        let lg = self.log10_scale(k);
        (lg < 300.0).then(|| 10f64.powf(lg))
    }

    /// ln T(L_k) = L_k^ν, as a log10 value.
    pub fn log10_ln_t(&self, k: u32) -> f64 {
        self.nu * self.log10_scale(k)
    }

    pub fn ln_t(&self, k: u32) -> Option<f64> {
        let lg = self.log10_ln_t(k);
        (lg < 300.0).then(|| 10f64.powf(lg))
    }

    pub fn t(&self, k: u32) -> Option<f64> {
        self.ln_t(k).and_then(|lnt| (lnt < 700.0).then(|| lnt.exp()))
    }

    /// Concrete (L_k, T_k) for simulation. Boxes beyond k = 1 (or with
    /// heights beyond the cap) are refused with an explicit message; they
    /// are still available symbolically through the log-domain accessors.
    pub fn simulatable(&self, k: u32, t_cap: f64) -> Result<(f64, f64)> {
        if k > 1 {
            return Err(Error::ScaleNotSimulatable(format!(
                "scale k = {k} has log10 ln T(L_k) ≈ {:.3}; empirical runs are limited to k in {{0, 1}}",
                self.log10_ln_t(k)
            )));
        }
        let l = self.scale(k).ok_or_else(|| {
            Error::ScaleNotSimulatable(format!("L_{k} overflows double precision"))
        })?;
        let t = self.t(k).filter(|&t| t <= t_cap).ok_or_else(|| {
            Error::ScaleNotSimulatable(format!(
                "T(L_{k}) = exp({l:.6e}^{}) exceeds the simulation cap {t_cap:.1e}",
                self.nu
            ))
        })?;
        Ok((l, t))
    }
}

/// Outcome of the defective-region blocking event over a buffer region:
/// the product of K_Δ over its animals must beat exp(-l^b).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EventBOutcome {
    pub holds: bool,
    /// l^b - Σ ln(1/K_Δ); nonnegative iff the event holds.
    pub log_margin: f64,
    pub sum_ln_inv_k: f64,
    pub animals: usize,
}

/// The buffer region around the singular-cover centers: balls of radius
/// `floor(l^κ)` clipped to the box, ready to feed the blocking event.
pub fn buffer_region(centers: &[Site], box_region: &Region, l: f64, kappa: f64) -> Vec<Region> {
    let radius = l.powf(kappa).floor().max(0.0) as i32;
    centers
        .iter()
        .filter_map(|&c| Region::ball(c, radius, box_region.d()).intersect(box_region))
        .collect()
}

/// Check Π_{γ in the buffer} K_Δ(w(γ)) ≥ exp(-l^b) on a union of regions.
pub fn event_b_check(
    env: &Environment,
    tilde_lambda: &[Region],
    delta: f64,
    l: f64,
    b: f64,
) -> Result<EventBOutcome> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter("strip height must be positive".into()));
    }
    let model = env.model();
    let mut sum = 0.0;
    let mut animals = 0usize;
    for id in model.animal_ids() {
        let support = model.support(id);
        let inside = tilde_lambda.iter().any(|r| r.contains_all(support));
        if inside {
            sum += ln_inv_k_delta(env.rate(id), delta);
            animals += 1;
        }
    }
    let budget = l.powf(b);
    Ok(EventBOutcome { holds: sum <= budget, log_margin: budget - sum, sum_ln_inv_k: sum, animals })
}

/// Outcome of the singular-cover event: all singular sites of the box fit
/// inside `r_balls` balls of radius 2(l+δ)+1.
#[derive(Clone, Debug, Serialize)]
pub struct EventAOutcome {
    pub holds: bool,
    /// Ball centers (defines the buffer region of the blocking event).
    pub centers: Vec<Site>,
    pub singular_sites: usize,
}

/// Greedy ball cover with an exact backtracking fallback for small singular
/// sets. A failed cover is conservative: the check may declare an actually
/// coverable constellation uncovered, never the opposite.
pub fn event_a_check(
    verdicts: &[RegularityVerdict],
    box_region: &Region,
    l: i32,
    delta: f64,
    r_balls: u32,
) -> Result<EventAOutcome> {
    for x in box_region.iter() {
        if !verdicts.iter().any(|v| v.site == x) {
            return Err(Error::InvalidParameter(format!(
                "verdicts do not cover the box (missing {:?})",
                x.coords(box_region.d())
            )));
        }
    }
    let d = box_region.d();
    let radius = (2.0 * (l as f64 + delta) + 1.0).floor() as i32;
    let singular: Vec<Site> = verdicts
        .iter()
        .filter(|v| box_region.contains(v.site) && !v.counts_as_regular())
        .map(|v| v.site)
        .collect();
    if singular.is_empty() {
        return Ok(EventAOutcome { holds: true, centers: vec![], singular_sites: 0 });
    }

    let clamp = |s: Site| -> Site {
        let mut coords = Vec::with_capacity(d);
        for i in 0..d {
            coords.push(s.coord(i).clamp(box_region.lo()[i], box_region.hi()[i]));
        }
        Site::new(&coords)
    };

    // greedy: cover the first uncovered singular site with a ball shifted
    // forward by the radius
    let mut centers: Vec<Site> = Vec::new();
    let mut uncovered: Vec<Site> = {
        let mut s = singular.clone();
        s.sort();
        s.dedup();
        s
    };
    while let Some(&s) = uncovered.first() {
        let shift = vec![radius; d];
        let c = clamp(s.translate(&shift));
        centers.push(c);
        uncovered.retain(|&q| crate::lattice::sup_dist(q, c, d) > radius);
        if centers.len() > 4 * (r_balls as usize + 4) {
            break; // hopeless; fall through to the exact search
        }
    }
    if uncovered.is_empty() && centers.len() <= r_balls as usize {
        return Ok(EventAOutcome { holds: true, centers, singular_sites: singular.len() });
    }

    // exact fallback for small singular sets
    let mut points = singular.clone();
    points.sort();
    points.dedup();
    if points.len() <= 16 {
        if let Some(centers) = exact_cover(&points, d, radius, r_balls as usize, &clamp) {
            return Ok(EventAOutcome { holds: true, centers, singular_sites: singular.len() });
        }
    }
    Ok(EventAOutcome { holds: false, centers: vec![], singular_sites: singular.len() })
}

fn exact_cover(
    points: &[Site],
    d: usize,
    radius: i32,
    r_balls: usize,
    clamp: &impl Fn(Site) -> Site,
) -> Option<Vec<Site>> {
    // candidate centers: per-axis coordinates shifted by ±radius, clamped
    let mut axis_vals: Vec<Vec<i32>> = vec![Vec::new(); d];
    for p in points {
        for (i, vals) in axis_vals.iter_mut().enumerate() {
            vals.push(p.coord(i) + radius);
            vals.push(p.coord(i) - radius);
            vals.push(p.coord(i));
        }
    }
    for vals in &mut axis_vals {
        vals.sort_unstable();
        vals.dedup();
    }
    let mut candidates: Vec<Site> = vec![Site::origin()];
    for (i, vals) in axis_vals.iter().enumerate() {
        let mut next = Vec::new();
        for c in &candidates {
            for &v in vals {
                let mut coords: Vec<i32> = (0..d).map(|j| c.coord(j)).collect();
                coords[i] = v;
                next.push(Site::new(&coords));
            }
        }
        candidates = next;
    }
    let candidates: Vec<Site> = {
        let mut cs: Vec<Site> = candidates.into_iter().map(clamp).collect();
        cs.sort();
        cs.dedup();
        cs
    };
    fn recurse(
        points: &[Site],
        covered: u32,
        d: usize,
        radius: i32,
        budget: usize,
        candidates: &[Site],
        chosen: &mut Vec<Site>,
    ) -> bool {
        let first = (0..points.len()).find(|&i| covered & (1 << i) == 0);
        let Some(first) = first else { return true };
        if budget == 0 {
            return false;
        }
        for &c in candidates {
            if crate::lattice::sup_dist(points[first], c, d) > radius {
                continue;
            }
            let mut now = covered;
            for (i, &p) in points.iter().enumerate() {
                if crate::lattice::sup_dist(p, c, d) <= radius {
                    now |= 1 << i;
                }
            }
            chosen.push(c);
            if recurse(points, now, d, radius, budget - 1, candidates, chosen) {
                return true;
            }
            chosen.pop();
        }
        false
    }
    let mut chosen = Vec::new();
    recurse(points, 0, d, radius, r_balls, &candidates, &mut chosen).then_some(chosen)
}

/// Empirical probability that the origin is (m, L)-regular over fresh
/// environments, against the target 1 - L^{-p}.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GoodProbability {
    pub successes: u64,
    pub env_replicas: u32,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub target: f64,
    pub meets_target: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn empirical_good_probability(
    model: &Arc<ModelInstance>,
    disorder: &DisorderSpec,
    m: f64,
    l: i32,
    t_height: f64,
    p: f64,
    env_replicas: u32,
    mc_replicas: u32,
    seed: u64,
    workers: usize,
) -> Result<GoodProbability> {
    if env_replicas < 30 {
        return Err(Error::InvalidParameter("need at least 30 environment replicas".into()));
    }
    let results = parallel::map_indexed(env_replicas as usize, workers, |i| -> Result<bool> {
        let env = sample_environment(
            model,
            disorder,
            rng::derive_chain(seed, &[tag::MULTISCALE, i as u64]),
        )?;
        let verdict = is_regular(
            &env,
            Site::origin(),
            m,
            l,
            t_height,
            mc_replicas,
            1.96,
            rng::derive_chain(seed, &[tag::MULTISCALE, 1, i as u64]),
            1,
        )?;
        // inconclusive counts as singular
        Ok(verdict.counts_as_regular())
    });
    let mut good = 0u64;
    for r in results {
        good += u64::from(r?);
    }
    let est = BinomialEstimate::new(good, env_replicas as u64);
    let (lo, hi) = est.ci(1.96);
    let target = 1.0 - (l as f64).powf(-p);
    Ok(GoodProbability {
        successes: good,
        env_replicas,
        estimate: est.p_hat(),
        ci_low: lo,
        ci_high: hi,
        target,
        meets_target: hi >= target,
    })
}

/// Initial-scale probe: estimate P{Ψ > ρ} over fresh environments; passes
/// when the upper confidence bound stays below `epsilon_rho`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct InitialScaleProbe {
    pub exceed: u64,
    pub replicas: u32,
    pub estimate: f64,
    pub ci_high: f64,
    pub pass: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn initial_scale_probe(
    model: &Arc<ModelInstance>,
    disorder: &DisorderSpec,
    size_fn: SizeFunction,
    rho: f64,
    epsilon_rho: f64,
    replicas: u32,
    seed: u64,
    workers: usize,
) -> Result<InitialScaleProbe> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter("rho must lie in [0, 1)".into()));
    }
    let region = *model.region();
    let exceeds = parallel::map_indexed(replicas as usize, workers, |i| -> Result<bool> {
        let env = sample_environment(
            model,
            disorder,
            rng::derive_chain(seed, &[tag::MULTISCALE, 2, i as u64]),
        )?;
        Ok(psi(&env, size_fn, &region)? > rho)
    });
    let mut count = 0u64;
    for e in exceeds {
        count += u64::from(e?);
    }
    let est = BinomialEstimate::new(count, replicas as u64);
    let (_, hi) = est.ci(1.96);
    Ok(InitialScaleProbe {
        exceed: count,
        replicas,
        estimate: est.p_hat(),
        ci_high: hi,
        pass: hi < epsilon_rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::{MeanEstimate, Verdict};
    use crate::environment::{DisorderKind, Marginal, RateMap};
    use crate::models;

    #[test]
    fn alpha_and_threshold_values() {
        assert!((optimal_alpha(1) - 2.414214).abs() < 1e-6);
        assert!((optimal_alpha(2) - 4.449490).abs() < 1e-6);
        assert!((a_threshold(1) - 5.828427).abs() < 1e-6);
        assert!((a_threshold(2) - 19.797959).abs() < 1e-6);
    }

    #[test]
    fn feasible_parameters_pass_the_independent_verifier() {
        for d in 1..=3 {
            match feasible_parameters(d, None) {
                Feasibility::Feasible(p) => {
                    verify_parameters(&p).unwrap_or_else(|v| {
                        panic!("d = {d}: violations {v:?}");
                    });
                }
                Feasibility::Infeasible { first_violation } => {
                    panic!("d = {d} unexpectedly infeasible: {first_violation}");
                }
            }
        }
    }

    #[test]
    fn below_threshold_is_infeasible() {
        match feasible_parameters(1, Some(5.0)) {
            Feasibility::Infeasible { first_violation } => {
                assert!(first_violation.contains("threshold"));
            }
            Feasibility::Feasible(_) => panic!("a = 5 must be infeasible in d = 1"),
        }
    }

    #[test]
    fn verifier_rejects_corrupted_tuples() {
        let mut p = feasible_parameters(2, None).unwrap();
        p.nu = 0.5; // far below the admissible range for the default a
        assert!(verify_parameters(&p).is_err());
    }

    #[test]
    fn k_delta_values() {
        // empty-rate animals never block
        assert_eq!(k_delta(0.0, 0.7), 1.0);
        // Δ → 0 recovers the vacancy probability e^{-w}
        for &w in &[0.3, 1.0, 2.5] {
            assert!((k_delta(w, 1e-12) - (-w).exp()).abs() < 1e-9);
        }
        // spot value at w = Δ = 1 (equals e^{-1} - e^{-2} + e^{-3})
        let spot = (-1.0f64).exp() - (-2.0f64).exp() + (-3.0f64).exp();
        assert!((k_delta(1.0, 1.0) - spot).abs() < 1e-15);
        assert!((k_delta(1.0, 1.0) - 0.2823312263026936).abs() < 1e-12);
    }

    #[test]
    fn k_delta_bounds_and_monotonicity() {
        let mut prev: Option<f64> = None;
        for i in 0..60 {
            let w = i as f64 * 0.25;
            for j in 1..=40 {
                let delta = j as f64 * 0.025;
                let k = k_delta(w, delta);
                assert!(k > 0.0 && k <= 1.0, "K({w},{delta}) = {k}");
                assert!(k >= k_delta_lower_bound(w, delta) - 1e-15);
            }
            let k_fixed = k_delta(w, 0.5);
            if let Some(p) = prev {
                assert!(k_fixed <= p + 1e-15, "K must not increase in w");
            }
            prev = Some(k_fixed);
        }
    }

    #[test]
    fn ln_inv_k_is_stable_for_large_rates() {
        let v = ln_inv_k_delta(1e6, 0.5);
        assert!(v.is_finite() && v > 0.0);
        // matches the direct formula where that one is representable
        for &w in &[0.1, 1.0, 5.0] {
            assert!((ln_inv_k_delta(w, 0.3) - (1.0 / k_delta(w, 0.3)).ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn scaled_sequence_arithmetic() {
        let s = ScaledSequence::new(10.0, 2.0, 0.5).unwrap();
        assert!((s.scale(0).unwrap() - 10.0).abs() < 1e-12);
        assert!((s.scale(1).unwrap() - 100.0).abs() < 1e-9);
        // L_{k+1} = L_k^alpha in log10 arithmetic, exactly
        for k in 0..5 {
            assert_eq!(s.log10_scale(k + 1), s.log10_scale(k) * 2.0);
        }
        // T grows faster than any power: ln T - n ln L diverges on the grid
        for n in 1..=10 {
            let mut prev = f64::NEG_INFINITY;
            let mut increased = 0;
            for k in 0..6 {
                let lnl = s.log10_scale(k) * std::f64::consts::LN_10;
                let lnt = 10f64.powf(s.log10_ln_t(k));
                let gap = lnt - n as f64 * lnl;
                if gap > prev {
                    increased += 1;
                }
                prev = gap;
            }
            assert!(increased >= 5, "power {n} not dominated");
        }
    }

    #[test]
    fn deep_scales_are_symbolic_only() {
        let p = feasible_parameters(2, None).unwrap();
        let s = ScaledSequence::new(10.0, p.alpha, p.nu).unwrap();
        assert!(s.simulatable(2, 1e6).is_err());
        // even k = 1 is far beyond the height cap here
        assert!(s.simulatable(1, 1e6).is_err());
        // a desk-scale sequence is simulatable at k = 0
        let desk = ScaledSequence::new(3.0, p.alpha, p.nu).unwrap();
        let (l, t) = desk.simulatable(0, 1e6).unwrap();
        assert_eq!(l, 3.0);
        assert!(t > 1.0);
    }

    fn homogeneous_env(w: f64, radius: i32) -> Environment {
        let model = Arc::new(
            models::single_site_model(1)
                .instantiate(Region::ball(Site::origin(), radius, 1))
                .unwrap(),
        );
        sample_environment(&model, &DisorderSpec::homogeneous(w), 5).unwrap()
    }

    #[test]
    fn event_b_zero_rates() {
        let env = homogeneous_env(0.0, 3);
        let out = event_b_check(&env, &[*env.region()], 0.5, 4.0, 1.2).unwrap();
        assert!(out.holds);
        assert!((out.log_margin - 4.0f64.powf(1.2)).abs() < 1e-9);
        assert_eq!(out.sum_ln_inv_k, 0.0);
    }

    #[test]
    fn event_b_direct_comparison() {
        // one animal whose blocking cost exceeds the budget
        let env = homogeneous_env(1.0, 0);
        let cost = ln_inv_k_delta(1.0, 0.5);
        // budget below the cost: l^b = cost/2
        let l = 2.0f64;
        let b = (cost / 2.0).ln() / l.ln();
        let out = event_b_check(&env, &[*env.region()], 0.5, l, b).unwrap();
        assert!(!out.holds);
        assert!(out.log_margin < 0.0);
        // homogeneous window: sum = |window| ln(1/K)
        let env7 = homogeneous_env(0.7, 3);
        let out7 = event_b_check(&env7, &[*env7.region()], 0.25, 10.0, 1.0).unwrap();
        let expect = 7.0 * ln_inv_k_delta(0.7, 0.25);
        assert!((out7.sum_ln_inv_k - expect).abs() < 1e-9);
    }

    fn verdict_at(x: &[i32], regular: bool) -> RegularityVerdict {
        RegularityVerdict {
            site: Site::new(x),
            m: 0.5,
            l: 1,
            t_height: 1.0,
            estimate: MeanEstimate { mean: 0.0, stderr: 0.0, replicas: 1 },
            threshold: 0.5,
            verdict: if regular { Verdict::Regular } else { Verdict::Singular },
        }
    }

    #[test]
    fn event_a_no_singular_sites() {
        let region = Region::new(&[-3], &[3]).unwrap();
        let verdicts: Vec<_> = region.iter().map(|s| verdict_at(s.coords(1), true)).collect();
        let out = event_a_check(&verdicts, &region, 1, 1.0, 2).unwrap();
        assert!(out.holds);
        assert!(out.centers.is_empty());
    }

    #[test]
    fn event_a_single_cluster_one_center() {
        let region = Region::new(&[-8], &[8]).unwrap();
        let verdicts: Vec<_> = region
            .iter()
            .map(|s| verdict_at(s.coords(1), !(s.coord(0) >= 0 && s.coord(0) <= 2)))
            .collect();
        let out = event_a_check(&verdicts, &region, 1, 1.0, 3).unwrap();
        assert!(out.holds);
        assert_eq!(out.centers.len(), 1);
    }

    #[test]
    fn event_a_pigeonhole_failure() {
        // R+1 singular sites pairwise farther apart than a ball diameter
        let l = 1;
        let delta = 1.0;
        let radius = (2.0 * (l as f64 + delta) + 1.0) as i32; // 5
        let spread = 2 * radius + 2;
        let region = Region::new(&[0], &[3 * spread]).unwrap();
        let singular: Vec<i32> = (0..3).map(|i| i * spread).collect();
        let verdicts: Vec<_> = region
            .iter()
            .map(|s| verdict_at(s.coords(1), !singular.contains(&s.coord(0))))
            .collect();
        let out = event_a_check(&verdicts, &region, l, delta, 2).unwrap();
        assert!(!out.holds, "three spread-out singular sites cannot fit in two balls");
        let ok = event_a_check(&verdicts, &region, l, delta, 3).unwrap();
        assert!(ok.holds);
    }

    #[test]
    fn cover_centers_feed_the_blocking_event() {
        // full pipeline: regularity verdicts -> singular cover -> buffer
        // region -> blocking check. The buffer ball radius l^kappa must
        // dominate the cover ball radius 2(l+delta)+1 for the buffer to
        // absorb the defect set, which pins the scales used here.
        let region = Region::new(&[-30], &[30]).unwrap();
        let (l, delta, kappa) = (9.0f64, 1.0, 1.4);
        assert!(l.powf(kappa) >= 2.0 * (l + delta) + 1.0);
        let verdicts: Vec<_> = region
            .iter()
            .map(|s| verdict_at(s.coords(1), s.coord(0) != 3))
            .collect();
        let cover = event_a_check(&verdicts, &region, l as i32, delta, 2).unwrap();
        assert!(cover.holds);
        assert_eq!(cover.centers.len(), 1);
        let buffer = buffer_region(&cover.centers, &region, l, kappa);
        assert_eq!(buffer.len(), 1);
        assert!(buffer[0].contains(Site::new(&[3])), "buffer must cover the singular site");
        let env = homogeneous_env(0.3, 30);
        let out = event_b_check(&env, &buffer, 0.5, l, 1.2).unwrap();
        assert!(out.animals >= 1);
        assert!(out.holds);
    }

    #[test]
    fn event_a_inconclusive_counts_as_singular() {
        let region = Region::new(&[0], &[1]).unwrap();
        let mut verdicts = vec![verdict_at(&[0], true), verdict_at(&[1], true)];
        verdicts[1].verdict = Verdict::Inconclusive;
        let out = event_a_check(&verdicts, &region, 1, 1.0, 1).unwrap();
        assert_eq!(out.singular_sites, 1);
        assert!(out.holds);
    }

    #[test]
    fn good_probability_zero_rates() {
        let model = Arc::new(
            models::single_site_model(1)
                .instantiate(Region::ball(Site::origin(), 8, 1))
                .unwrap(),
        );
        let g = empirical_good_probability(
            &model,
            &DisorderSpec::homogeneous(0.0),
            0.5,
            2,
            1.5,
            3.0,
            30,
            100,
            1,
            2,
        )
        .unwrap();
        assert_eq!(g.estimate, 1.0);
        // target arithmetic: 1 - L^{-p}
        assert!((g.target - (1.0 - 2f64.powf(-3.0))).abs() < 1e-12);
    }

    #[test]
    fn good_probability_target_value() {
        let model = Arc::new(
            models::single_site_model(1)
                .instantiate(Region::ball(Site::origin(), 14, 1))
                .unwrap(),
        );
        let g = empirical_good_probability(
            &model,
            &DisorderSpec::homogeneous(0.0),
            0.1,
            10,
            1.0,
            3.0,
            30,
            100,
            1,
            2,
        )
        .unwrap();
        assert!((g.target - 0.999).abs() < 1e-12);
    }

    #[test]
    fn initial_scale_probe_degenerate() {
        let model = Arc::new(
            models::single_site_model(1)
                .instantiate(Region::ball(Site::origin(), 2, 1))
                .unwrap(),
        );
        // Ψ ≡ 0.5 < ρ = 0.9: estimate 0, pass
        let p = initial_scale_probe(
            &model,
            &DisorderSpec::homogeneous(0.5),
            SizeFunction::SupportSize,
            0.9,
            0.05,
            200,
            1,
            2,
        )
        .unwrap();
        assert_eq!(p.estimate, 0.0);
        assert!(p.pass);
        // Ψ ≡ 0.95 > ρ: estimate 1, fail
        let p = initial_scale_probe(
            &model,
            &DisorderSpec::homogeneous(0.95),
            SizeFunction::SupportSize,
            0.9,
            0.05,
            200,
            1,
            2,
        )
        .unwrap();
        assert_eq!(p.estimate, 1.0);
        assert!(!p.pass);
    }

    #[test]
    fn initial_scale_probe_exponential_tail() {
        // single site, Exp(1) rate: P(Ψ > ρ) = e^{-ρ}
        let model = Arc::new(
            models::single_site_model(1)
                .instantiate(Region::new(&[0], &[0]).unwrap())
                .unwrap(),
        );
        let dspec = DisorderSpec {
            kind: DisorderKind::Site,
            marginal: Marginal::Exponential { mean: 1.0 },
            link_marginal: None,
            rate_map: RateMap::SiteValue,
        };
        let p = initial_scale_probe(
            &model,
            &dspec,
            SizeFunction::SupportSize,
            0.8,
            1.0,
            20_000,
            3,
            2,
        )
        .unwrap();
        let oracle = (-0.8f64).exp();
        let sigma = (oracle * (1.0 - oracle) / 20_000.0).sqrt();
        assert!((p.estimate - oracle).abs() < 3.5 * sigma, "{} vs {oracle}", p.estimate);
    }
}
