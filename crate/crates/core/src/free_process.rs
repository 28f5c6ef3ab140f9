//! The free (non-interacting) cylinder process on finite space-time windows.
//!
//! Every animal runs an independent marked Poisson process: births at its
//! quenched rate, unit-mean exponential lifetimes, uniform marks. A window
//! realization consists of the cylinders alive at the window bottom — drawn
//! from the stationary law, with fresh residual lifetimes and a truncation
//! flag — plus the births inside the window. Per-animal counter streams make
//! realizations replay-identical whether generated eagerly or animal by
//! animal.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::animal_model::{AnimalId, ModelInstance};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::lattice::Region;
use crate::rng::{tag, Stream};

/// A space-time cylinder: an animal with a birth time, closed life interval
/// and a uniform mark used by the acceptance test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cylinder {
    pub animal: AnimalId,
    pub birth: f64,
    pub death: f64,
    pub mark: f64,
    /// The true birth lies before the window bottom.
    pub truncated: bool,
    /// Per-animal draw index; (animal, seq) identifies the cylinder.
    pub seq: u32,
}

impl Cylinder {
    pub fn lifetime(&self) -> f64 {
        self.death - self.birth
    }

    /// Closed-interval convention: alive at both endpoints.
    pub fn alive_at(&self, t: f64) -> bool {
        self.birth <= t && t <= self.death
    }

    pub fn life_overlaps(&self, other: &Cylinder) -> bool {
        self.birth <= other.death && other.birth <= self.death
    }

    /// Deterministic order for simultaneous births (a measure-zero event).
    pub fn order_key(&self) -> (f64, AnimalId, u32) {
        (self.birth, self.animal, self.seq)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeWindow {
    pub t0: f64,
    pub t1: f64,
}

/// A realization of the free process on `region × [t0, t1]`.
#[derive(Clone, Debug)]
pub struct CylinderConfiguration {
    model: Arc<ModelInstance>,
    pub window: TimeWindow,
    pub region: Region,
    /// Sorted by (birth, animal, seq).
    pub cylinders: Vec<Cylinder>,
    pub seed: u64,
}

impl CylinderConfiguration {
    pub fn model(&self) -> &Arc<ModelInstance> {
        &self.model
    }

    pub fn is_empty(&self) -> bool {
        self.cylinders.is_empty()
    }

    /// Cylinders whose closed life contains `t`, in deterministic order.
    pub fn alive_at(&self, t: f64) -> Vec<&Cylinder> {
        self.cylinders.iter().filter(|c| c.alive_at(t)).collect()
    }

    /// Restriction to a sub-box: keeps cylinders with support inside
    /// `sub_region`, clips lives to `[a, b]`, drops cylinders whose clipped
    /// life is empty. Clipping at the bottom marks the cylinder truncated.
    pub fn restrict(&self, sub_region: Region, a: f64, b: f64) -> Result<CylinderConfiguration> {
        if !(self.window.t0 <= a && b <= self.window.t1 && a <= b)
            || !self.region.contains_region(&sub_region)
        {
            return Err(Error::BoxOutsideWindow);
        }
        let mut cylinders = Vec::new();
        for c in &self.cylinders {
            if !sub_region.contains_all(self.model.support(c.animal)) {
                continue;
            }
            let birth = c.birth.max(a);
            let death = c.death.min(b);
            if death < birth {
                continue;
            }
            cylinders.push(Cylinder {
                animal: c.animal,
                birth,
                death,
                mark: c.mark,
                truncated: c.truncated || c.birth < a,
                seq: c.seq,
            });
        }
        cylinders.sort_by(|x, y| x.order_key().partial_cmp(&y.order_key()).unwrap());
        Ok(CylinderConfiguration {
            model: Arc::clone(&self.model),
            window: TimeWindow { t0: a, t1: b },
            region: sub_region,
            cylinders,
            seed: self.seed,
        })
    }

    /// Line-oriented text dump: `animal_id birth lifetime mark truncated`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# free-process window t0={:.16e} t1={:.16e} seed={} region_lo={:?} region_hi={:?}",
            self.window.t0,
            self.window.t1,
            self.seed,
            self.region.lo(),
            self.region.hi()
        );
        for c in &self.cylinders {
            let _ = writeln!(
                out,
                "{} {:.16e} {:.16e} {:.16e} {}",
                c.animal,
                c.birth,
                c.lifetime(),
                c.mark,
                u8::from(c.truncated)
            );
        }
        out
    }
}

/// Generate one animal's cylinders on the window. Draw order within the
/// animal's stream is fixed (initial count, residuals and marks, then
/// birth gaps), so lazy per-animal generation replays identically.
/// Lives are recorded clipped to the window top; a death equal to `t1`
/// means censored there, not an actual death time.
pub fn sample_animal(env: &Environment, animal: AnimalId, t0: f64, t1: f64, seed: u64) -> Vec<Cylinder> {
    let rate = env.rate(animal);
    let mut out = Vec::new();
    if rate == 0.0 {
        return out;
    }
    let mut s = Stream::scoped(seed, tag::FREE_PROCESS, &[animal as u64]);
    let mut seq = 0u32;
    // stationary initial state: Poisson count with fresh exponential
    // residual lifetimes (memorylessness)
    let n0 = s.poisson(rate);
    for _ in 0..n0 {
        let residual = s.exp(1.0);
        let mark = s.uniform();
        out.push(Cylinder {
            animal,
            birth: t0,
            death: (t0 + residual).min(t1),
            mark,
            truncated: true,
            seq,
        });
        seq += 1;
    }
    // fresh births on (t0, t1]
    let mut t = t0 + s.exp(rate);
    while t <= t1 {
        let life = s.exp(1.0);
        let mark = s.uniform();
        out.push(Cylinder {
            animal,
            birth: t,
            death: (t + life).min(t1),
            mark,
            truncated: false,
            seq,
        });
        seq += 1;
        t += s.exp(rate);
    }
    out
}

/// Sample the free process on `region × [t0, t1]` with stationary initial
/// conditions at `t0`.
pub fn sample_window(
    env: &Environment,
    region: Region,
    t0: f64,
    t1: f64,
    seed: u64,
) -> Result<CylinderConfiguration> {
    if !(t0 < t1) {
        return Err(Error::InvalidParameter(format!("window must satisfy t0 < t1, got [{t0}, {t1}]")));
    }
    if !env.region().contains_region(&region) {
        return Err(Error::RegionMargin("sampling region outside the environment".into()));
    }
    let model = Arc::clone(env.model());
    let mut total_rate = 0.0f64;
    let mut cylinders = Vec::new();
    for id in model.animal_ids() {
        if !region.contains_all(model.support(id)) {
            continue;
        }
        total_rate += env.rate(id);
        if !total_rate.is_finite() {
            return Err(Error::RateOverflow);
        }
        cylinders.extend(sample_animal(env, id, t0, t1, seed));
    }
    cylinders.sort_by(|x, y| x.order_key().partial_cmp(&y.order_key()).unwrap());
    Ok(CylinderConfiguration {
        model,
        window: TimeWindow { t0, t1 },
        region,
        cylinders,
        seed,
    })
}
