//! Synthetic fused datasets with a known treatment effect.
//!
//! Covariates `X₁, X₂, X₃` and an unobserved `U` are i.i.d. `N(1, 1)`; the
//! confounder `C = (1-β) X₁ + β U` drives both study selection
//! (`P(S=1) = expit(-C)`) and treatment in the observational study
//! (`P(T=1 | S=0) = expit(C)`), while the experimental study randomizes with
//! probability 0.5. Outcomes are `Y(0) = 100 + X₂`,
//! `Y(1) = Y(0) + 12C - 10X₃ + τ`, observed with `N(0, 1)` noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, NuisanceEstimates, Unit};
use crate::rng::{self, open_unit, standard_normal};
use crate::stats::expit;

const MAX_REDRAWS: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub beta: f64,
    pub tau: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Scenario::Base.config(2500, 0)
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::InvalidArgument(format!("n must be at least 4, got {}", self.n)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::InvalidArgument(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if !self.tau.is_finite() {
            return Err(Error::InvalidArgument("tau must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    Base,
    LargerTau,
    SmallerTau,
    LargerU,
    SmallerU,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Base,
        Scenario::LargerTau,
        Scenario::SmallerTau,
        Scenario::LargerU,
        Scenario::SmallerU,
    ];

    /// `(β, τ)` of the scenario.
    pub fn parameters(&self) -> (f64, f64) {
        match self {
            Scenario::Base => (0.4, 5.0),
            Scenario::LargerTau => (0.4, 8.0),
            Scenario::SmallerTau => (0.4, 2.0),
            Scenario::LargerU => (0.6, 5.0),
            Scenario::SmallerU => (0.2, 5.0),
        }
    }

    pub fn config(&self, n: usize, seed: u64) -> SimConfig {
        let (beta, tau) = self.parameters();
        SimConfig { n, beta, tau, seed }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Base => "base",
            Scenario::LargerTau => "larger-tau",
            Scenario::SmallerTau => "smaller-tau",
            Scenario::LargerU => "larger-u",
            Scenario::SmallerU => "smaller-u",
        }
    }

    /// Accepts names case-insensitively with or without `-`/`_` separators.
    pub fn parse(name: &str) -> Result<Scenario> {
        let key: String = name
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        Scenario::ALL
            .into_iter()
            .find(|s| s.name().replace('-', "") == key)
            .ok_or_else(|| Error::UnknownScenario(name.to_string()))
    }
}

/// Per-unit latent variables that are never exported as covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Internals {
    pub u: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub dataset: Dataset,
    pub internals: Option<Internals>,
    pub config: SimConfig,
    /// Whole-sample redraws needed before an acceptable sample appeared.
    pub redraws: u64,
}

impl SimulatedData {
    pub fn without_internals(mut self) -> SimulatedData {
        self.internals = None;
        self
    }
}

fn draw(config: &SimConfig, attempt: u64) -> (Vec<Unit>, Internals) {
    let mut r = rng::stream(config.seed, "simulate", attempt);
    let n = config.n;
    let beta = config.beta;
    let mut units = Vec::with_capacity(n);
    let mut u_all = Vec::with_capacity(n);
    let mut c_all = Vec::with_capacity(n);
    for _ in 0..n {
        let x1 = 1.0 + standard_normal(&mut r);
        let x2 = 1.0 + standard_normal(&mut r);
        let x3 = 1.0 + standard_normal(&mut r);
        let u = 1.0 + standard_normal(&mut r);
        let c = (1.0 - beta) * x1 + beta * u;
        let s = u8::from(open_unit(&mut r) < expit(-c));
        let p_t = if s == 1 { 0.5 } else { expit(c) };
        let t = u8::from(open_unit(&mut r) < p_t);
        let eps = standard_normal(&mut r);
        let y0 = 100.0 + x2;
        let y1 = y0 + 12.0 * c - 10.0 * x3 + config.tau;
        let y = if t == 1 { y1 } else { y0 } + eps;
        units.push(Unit { x: vec![x1, x2, x3], s, t, y });
        u_all.push(u);
        c_all.push(c);
    }
    (units, Internals { u: u_all, c: c_all })
}

pub fn covariate_names() -> Vec<String> {
    vec!["x1".into(), "x2".into(), "x3".into()]
}

/// Draws a dataset. A sample with a non-positive outcome or an empty
/// `(s, t)` cell is discarded whole and redrawn from the next stream.
pub fn simulate_dataset(config: &SimConfig) -> Result<SimulatedData> {
    config.validate()?;
    for attempt in 0..=MAX_REDRAWS {
        let (units, internals) = draw(config, attempt);
        if units.iter().any(|u| u.y <= 0.0) {
            continue;
        }
        match Dataset::from_units(units, covariate_names()) {
            Ok(dataset) => {
                return Ok(SimulatedData {
                    dataset,
                    internals: Some(internals),
                    config: *config,
                    redraws: attempt,
                })
            }
            Err(Error::EmptyCell { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::DegenerateDraw { attempts: MAX_REDRAWS as usize + 1 })
}

/// True average treatment effect `E[12C - 10X₃ + τ] = τ + 2`.
pub fn oracle_ate(config: &SimConfig) -> f64 {
    config.tau + 2.0
}

/// The data-generating nuisance functions evaluated at each unit, using the
/// retained confounder `C`.
pub fn oracle_nuisances(data: &SimulatedData, clip_epsilon: f64) -> Result<NuisanceEstimates> {
    let internals = data.internals.as_ref().ok_or(Error::InternalsUnavailable)?;
    let units = data.dataset.units();
    let clip = |p: f64| p.clamp(clip_epsilon, 1.0 - clip_epsilon);
    let tau = data.config.tau;
    let mut mu0 = Vec::with_capacity(units.len());
    let mut mu1 = Vec::with_capacity(units.len());
    for (unit, &c) in units.iter().zip(&internals.c) {
        let base = 100.0 + unit.x[1];
        mu0.push(base);
        mu1.push(base + 12.0 * c - 10.0 * unit.x[2] + tau);
    }
    Ok(NuisanceEstimates {
        g1: internals.c.iter().map(|&c| clip(expit(-c))).collect(),
        e1_s0: internals.c.iter().map(|&c| clip(expit(c))).collect(),
        e1_s1: vec![clip(0.5); units.len()],
        mu: [[mu0.clone(), mu1.clone()], [mu0, mu1]],
        fold_id: vec![0; units.len()],
        clip_epsilon,
        models: vec![],
    })
}
