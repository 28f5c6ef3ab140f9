//! Reference oracles for the acceptance suite.
//!
//! The continuous-time Markov chain oracle enumerates the acceptable
//! configurations of a tiny instance, builds the generator (birth rate
//! M(γ|η) w(γ), unit death rate per copy) and solves for the stationary
//! vector by dense elimination. It shares nothing with the clan sampler
//! beyond the model definitions, which is what makes the comparison a real
//! check.

use animalia_core::animal_model::AnimalConfiguration;
use animalia_core::environment::Environment;
use animalia_core::error::{Error, Result};
use animalia_core::rng::{tag, Stream};

/// What to do when the reachable state space exceeds the cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CapPolicy {
    /// Fail with a state-space overflow.
    Error,
    /// Drop births that would leave the enumerated set (e.g. the truncated
    /// birth-death chain of a free animal).
    Truncate,
}

pub struct CtmcOracle {
    pub states: Vec<AnimalConfiguration>,
    /// Dense generator; rows sum to zero.
    pub generator: Vec<Vec<f64>>,
    pub stationary: Vec<f64>,
    pub truncated: bool,
}

impl CtmcOracle {
    /// Enumerate reachable acceptable configurations from the empty one and
    /// solve the balance equations.
    pub fn build(env: &Environment, cap: usize, policy: CapPolicy) -> Result<Self> {
        let model = env.model();
        let mut states: Vec<AnimalConfiguration> = vec![model.empty_config()];
        let mut truncated = false;

        // breadth-first closure under births (with positive acceptance) and
        // deaths
        let mut head = 0;
        while head < states.len() {
            let current = states[head].clone();
            head += 1;
            for id in model.animal_ids() {
                if env.rate(id) > 0.0 && model.interaction(id, &current) > 0.0 {
                    let mut next = current.clone();
                    next.add(model.animal(id)?, 1)?;
                    if !states.contains(&next) {
                        if states.len() >= cap {
                            match policy {
                                CapPolicy::Error => {
                                    return Err(Error::StateSpaceOverflow { cap });
                                }
                                CapPolicy::Truncate => {
                                    truncated = true;
                                    continue;
                                }
                            }
                        }
                        states.push(next);
                    }
                }
                if current.count(id) > 0 {
                    let mut next = current.clone();
                    next.remove(model.animal(id)?, 1)?;
                    if !states.contains(&next) {
                        states.push(next);
                    }
                }
            }
        }

        let n = states.len();
        let mut generator = vec![vec![0.0f64; n]; n];
        let index = |cfg: &AnimalConfiguration, states: &[AnimalConfiguration]| {
            states.iter().position(|s| s == cfg)
        };
        for (i, state) in states.iter().enumerate() {
            for id in model.animal_ids() {
                let m = model.interaction(id, state);
                let birth_rate = m * env.rate(id);
                if birth_rate > 0.0 {
                    let mut next = state.clone();
                    next.add(model.animal(id)?, 1)?;
                    if let Some(j) = index(&next, &states) {
                        generator[i][j] += birth_rate;
                        generator[i][i] -= birth_rate;
                    }
                    // births leaving the enumerated set are truncated
                }
                let copies = state.count(id);
                if copies > 0 {
                    let mut next = state.clone();
                    next.remove(model.animal(id)?, 1)?;
                    let j = index(&next, &states).expect("death target enumerated");
                    generator[i][j] += f64::from(copies);
                    generator[i][i] -= f64::from(copies);
                }
            }
        }
        let stationary = solve_stationary(&generator)?;
        Ok(CtmcOracle { states, generator, stationary, truncated })
    }

    pub fn index_of(&self, cfg: &AnimalConfiguration) -> Option<usize> {
        self.states.iter().position(|s| s == cfg)
    }

    /// ‖πA‖∞ — the self-test residual of the balance equations.
    pub fn residual(&self) -> f64 {
        let n = self.states.len();
        let mut worst = 0.0f64;
        for j in 0..n {
            let mut v = 0.0;
            for i in 0..n {
                v += self.stationary[i] * self.generator[i][j];
            }
            worst = worst.max(v.abs());
        }
        worst
    }
}

/// Solve πA = 0, Σπ = 1 by Gaussian elimination on Aᵀ with the
/// normalization replacing the last equation.
fn solve_stationary(generator: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = generator.len();
    let mut m = vec![vec![0.0f64; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = generator[j][i]; // transpose
        }
    }
    m[n - 1][..=n].fill(1.0);

    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        if m[pivot][col].abs() < 1e-14 {
            return Err(Error::ContractViolation("singular balance system".into()));
        }
        m.swap(col, pivot);
        let p = m[col][col];
        for v in m[col][col..=n].iter_mut() {
            *v /= p;
        }
        let pivot_row = m[col].clone();
        for (row, r) in m.iter_mut().enumerate() {
            if row != col && r[col] != 0.0 {
                let f = r[col];
                for (v, pv) in r[col..=n].iter_mut().zip(&pivot_row[col..=n]) {
                    *v -= f * pv;
                }
            }
        }
    }
    Ok((0..n).map(|i| m[i][n]).collect())
}

/// Monte Carlo probability of the strip event behind the blocking formula:
/// the animal is absent at the strip bottom, or present but its survival
/// clock expires inside the strip, and no birth occurs in the strip. The
/// survival clock is a single unit-rate exponential at the animal level,
/// matching the event algebra that defines the formula.
pub fn strip_event_probability(w: f64, delta: f64, strips: u32, seed: u64) -> f64 {
    let mut s = Stream::scoped(seed, tag::ORACLE, &[]);
    let mut hits = 0u64;
    for _ in 0..strips {
        let present = s.poisson(w) >= 1;
        let e1_or_e2 = if present { s.exp(1.0) <= delta } else { true };
        let births = s.poisson(w * delta);
        if e1_or_e2 && births == 0 {
            hits += 1;
        }
    }
    hits as f64 / f64::from(strips)
}
