//! Treatment-effect bounds under joint violations of unconfoundedness and
//! study exchangeability.
//!
//! For arm `t` the unidentified mean `E[Y(t) | x, S=0]` is bracketed by two
//! estimable functions:
//!
//! * `v(x,t,γ) = (1+γ) μ(x,1,t)`, from the experimental study;
//! * `w(x,t,ρ) = μ(x,0,t) (1 + ρ e_{1-t}(x,0))`, from the observational study.
//!
//! The hard bounds take the max of the two lower and the min of the two upper
//! envelopes. The smooth bounds replace max/min with a Boltzmann-weighted
//! average `λ₁v + λ₂w` (scale `+α` approaches the max, `-α` the min), which
//! is differentiable and admits an efficient influence function. Bias
//! correction adds the sample mean of that influence function to the
//! plug-in estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    BoundEstimate, Dataset, Interval, NuisanceEstimates, NuisanceRow, SensitivityPair, Unit,
    VarianceMethod,
};
use crate::nuisance::{cross_fit, CrossFitConfig};
use crate::rng;
use crate::stats::{expit, mean, population_variance, sample_variance, two_sided_z};

/// Experimental-side envelope `(1 + γ') μ(x,1,t)`.
pub fn compute_v(mu_1t: f64, gamma_signed: f64) -> f64 {
    (1.0 + gamma_signed) * mu_1t
}

/// Observational-side envelope `μ(x,0,t) (1 + ρ' (1 - e_t(x,0)))`.
pub fn compute_w(mu_0t: f64, e_t0: f64, rho_signed: f64) -> f64 {
    mu_0t * (1.0 + rho_signed * (1.0 - e_t0))
}

/// Boltzmann weights `(λ₁, λ₂)` for the pair `(v, w)` at scale `alpha`.
///
/// `λ₁ = exp(αv) / (exp(αv) + exp(αw))`, evaluated as a logistic of
/// `α(v - w)` so large `α|v - w|` cannot overflow.
pub fn boltzmann_weights(v: f64, w: f64, alpha_signed: f64) -> (f64, f64) {
    let z = alpha_signed * (v - w);
    (expit(z), expit(-z))
}

/// Smooth conditional potential-outcome bound
/// `g₁ μ(x,1,t) + g₀ (λ₁ v + λ₂ w)`.
pub fn smooth_b(g1: f64, mu_1t: f64, v: f64, w: f64, lambdas: (f64, f64)) -> f64 {
    g1 * mu_1t + (1.0 - g1) * (lambdas.0 * v + lambdas.1 * w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardBounds {
    pub lower: f64,
    pub upper: f64,
    /// `v(-γ) <= w(ρ)`.
    pub lower_v_below_upper_w: bool,
    /// `w(-ρ) <= v(γ)`.
    pub lower_w_below_upper_v: bool,
}

impl HardBounds {
    pub fn compatible(&self) -> bool {
        self.lower_v_below_upper_w && self.lower_w_below_upper_v
    }
}

/// Sharp bounds on `E[Y(t) | x]`: the observational-population term is
/// replaced by the max of the lower envelopes and the min of the upper ones.
pub fn hard_bounds(
    g1: f64,
    mu_1t: f64,
    v_plus: f64,
    v_minus: f64,
    w_plus: f64,
    w_minus: f64,
) -> HardBounds {
    let g0 = 1.0 - g1;
    HardBounds {
        lower: g1 * mu_1t + g0 * w_minus.max(v_minus),
        upper: g1 * mu_1t + g0 * w_plus.min(v_plus),
        lower_v_below_upper_w: v_minus <= w_plus,
        lower_w_below_upper_v: w_minus <= v_plus,
    }
}

/// Hard bounds for one unit and arm at `(rho, gamma)`.
pub fn hard_bounds_for(row: &NuisanceRow, t: u8, rho: f64, gamma: f64) -> HardBounds {
    let mu1 = row.mu(1, t);
    let mu0 = row.mu(0, t);
    let e_t0 = row.e(t, 0);
    hard_bounds(
        row.g1,
        mu1,
        compute_v(mu1, gamma),
        compute_v(mu1, -gamma),
        compute_w(mu0, e_t0, rho),
        compute_w(mu0, e_t0, -rho),
    )
}

/// Arm and signed parameters at which one smooth bound term is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSlot {
    pub t: u8,
    pub rho: f64,
    pub gamma: f64,
    pub alpha: f64,
}

impl ParameterSlot {
    /// The four slots in the order
    /// `[(1,-ρ,-γ,α), (0,ρ,γ,-α), (1,ρ,γ,-α), (0,-ρ,-γ,α)]`.
    ///
    /// The lower ATE bound is slot 0 minus slot 1, the upper is slot 2
    /// minus slot 3.
    pub fn for_pair(pair: &SensitivityPair) -> [ParameterSlot; 4] {
        let SensitivityPair { rho, gamma, alpha } = *pair;
        [
            ParameterSlot { t: 1, rho: -rho, gamma: -gamma, alpha },
            ParameterSlot { t: 0, rho, gamma, alpha: -alpha },
            ParameterSlot { t: 1, rho, gamma, alpha: -alpha },
            ParameterSlot { t: 0, rho: -rho, gamma: -gamma, alpha },
        ]
    }
}

/// Per-unit quantities of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundComponents {
    pub v: f64,
    pub w: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Plug-in term `b(x, t, ρ', γ', α')`.
    pub b: f64,
}

impl BoundComponents {
    pub fn evaluate(row: &NuisanceRow, slot: &ParameterSlot) -> BoundComponents {
        let t = slot.t;
        let mu1 = row.mu(1, t);
        let v = compute_v(mu1, slot.gamma);
        let w = compute_w(row.mu(0, t), row.e(t, 0), slot.rho);
        let (lambda1, lambda2) = boltzmann_weights(v, w, slot.alpha);
        BoundComponents {
            v,
            w,
            lambda1,
            lambda2,
            b: smooth_b(row.g1, mu1, v, w, (lambda1, lambda2)),
        }
    }

    /// `∂(λ₁v + λ₂w)/∂v`.
    pub fn dv(&self, alpha: f64) -> f64 {
        self.lambda1 + alpha * self.lambda1 * self.lambda2 * (self.v - self.w)
    }

    /// `∂(λ₁v + λ₂w)/∂w`.
    pub fn dw(&self, alpha: f64) -> f64 {
        self.lambda2 + alpha * self.lambda1 * self.lambda2 * (self.w - self.v)
    }
}

/// The four additive pieces of the uncentered influence function value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EifTerms {
    /// `S μ(x,1,t) + (1-S)(λ₁v + λ₂w)`.
    pub plug_in: f64,
    /// Experimental residual correction for `g₁ μ(x,1,t)`.
    pub experimental_outcome: f64,
    /// Experimental residual correction for `g₀ λ₁ v`.
    pub experimental_v: f64,
    /// Observational correction for `g₀ λ₂ w`.
    pub observational_w: f64,
}

impl EifTerms {
    pub fn total(&self) -> f64 {
        self.plug_in + self.experimental_outcome + self.experimental_v + self.observational_w
    }
}

pub fn eif_terms(unit: &Unit, row: &NuisanceRow, slot: &ParameterSlot) -> EifTerms {
    let c = BoundComponents::evaluate(row, slot);
    let t = slot.t;
    let s = f64::from(unit.s);
    let treated_as_t = if unit.t == t { 1.0 } else { 0.0 };
    let other_arm = 1.0 - treated_as_t;
    let e_t1 = row.e(t, 1);
    let e_t0 = row.e(t, 0);
    let e_other0 = row.e(1 - t, 0);
    let mu1 = row.mu(1, t);
    let mu0 = row.mu(0, t);
    let resid1 = unit.y - mu1;
    let resid0 = unit.y - mu0;

    let plug_in = s * mu1 + (1.0 - s) * (c.lambda1 * c.v + c.lambda2 * c.w);
    let experimental_outcome = s * treated_as_t / e_t1 * resid1;
    let experimental_v = s * (1.0 + slot.gamma) * c.dv(slot.alpha) * treated_as_t * row.g(0)
        / (e_t1 * row.g1)
        * resid1;
    let observational_w = (1.0 - s)
        * c.dw(slot.alpha)
        * (treated_as_t / e_t0 * resid0 * (1.0 + slot.rho * e_other0)
            + slot.rho * mu0 * (other_arm - e_other0));
    EifTerms {
        plug_in,
        experimental_outcome,
        experimental_v,
        observational_w,
    }
}

/// Uncentered efficient influence function value of
/// `θ(t, ρ', γ', α') = E[b(X, t, ρ', γ', α')]` at one observation.
pub fn eif_value(unit: &Unit, row: &NuisanceRow, slot: &ParameterSlot) -> f64 {
    eif_terms(unit, row, slot).total()
}

#[derive(Debug, Clone, Copy)]
struct UnitTerms {
    b: [f64; 4],
    phi: [f64; 4],
}

fn resolve_indices(n: usize, nuisances: &NuisanceEstimates, subgroup: Option<&[usize]>) -> Result<Vec<usize>> {
    if nuisances.len() != n {
        return Err(Error::InvalidArgument(format!(
            "nuisance estimates cover {} units, dataset has {n}",
            nuisances.len()
        )));
    }
    let idx: Vec<usize> = match subgroup {
        Some(sel) => sel.to_vec(),
        None => (0..n).collect(),
    };
    if idx.is_empty() {
        return Err(Error::EmptySubgroup);
    }
    if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidArgument(format!("subgroup index {bad} out of range")));
    }
    Ok(idx)
}

fn unit_terms(units: &[Unit], nuisances: &NuisanceEstimates, pair: &SensitivityPair, idx: &[usize]) -> Vec<UnitTerms> {
    let slots = ParameterSlot::for_pair(pair);
    idx.par_iter()
        .map(|&i| {
            let row = nuisances.row(i);
            let mut b = [0.0; 4];
            let mut phi = [0.0; 4];
            for (k, slot) in slots.iter().enumerate() {
                b[k] = BoundComponents::evaluate(&row, slot).b;
                phi[k] = eif_value(&units[i], &row, slot);
            }
            UnitTerms { b, phi }
        })
        .collect()
}

fn plugin_from_terms(terms: &[UnitTerms]) -> (f64, f64) {
    let n = terms.len() as f64;
    let lb = terms.iter().map(|u| u.b[0] - u.b[1]).sum::<f64>() / n;
    let ub = terms.iter().map(|u| u.b[2] - u.b[3]).sum::<f64>() / n;
    (lb, ub)
}

/// Plug-in lower and upper ATE (or subgroup CATE) bounds: sample means of
/// the smooth bound differences.
pub fn ate_bounds_plugin(
    nuisances: &NuisanceEstimates,
    pair: &SensitivityPair,
    subgroup: Option<&[usize]>,
) -> Result<(f64, f64)> {
    let idx = resolve_indices(nuisances.len(), nuisances, subgroup)?;
    let slots = ParameterSlot::for_pair(pair);
    let b: Vec<[f64; 4]> = idx
        .iter()
        .map(|&i| {
            let row = nuisances.row(i);
            slots.map(|slot| BoundComponents::evaluate(&row, &slot).b)
        })
        .collect();
    let n = b.len() as f64;
    Ok((
        b.iter().map(|u| u[0] - u[1]).sum::<f64>() / n,
        b.iter().map(|u| u[2] - u[3]).sum::<f64>() / n,
    ))
}

/// Per-unit influence function values of the lower and upper bounds
/// centered at the plug-in estimates, in subgroup order. Their means are the
/// bias corrections.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredEif {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub theta_lb_plugin: f64,
    pub theta_ub_plugin: f64,
}

impl CenteredEif {
    pub fn theta_lb_bc(&self) -> f64 {
        self.theta_lb_plugin + mean(&self.lower)
    }

    pub fn theta_ub_bc(&self) -> f64 {
        self.theta_ub_plugin + mean(&self.upper)
    }

    /// Influence values centered at the bias-corrected estimates instead;
    /// these have zero sample mean and carry the variance.
    pub fn residuals(&self) -> (Vec<f64>, Vec<f64>) {
        let shift = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| x - m).collect::<Vec<f64>>()
        };
        (shift(&self.lower), shift(&self.upper))
    }
}

pub fn centered_eif(
    dataset: &Dataset,
    nuisances: &NuisanceEstimates,
    pair: &SensitivityPair,
    subgroup: Option<&[usize]>,
) -> Result<CenteredEif> {
    let idx = resolve_indices(dataset.n(), nuisances, subgroup)?;
    let terms = unit_terms(dataset.units(), nuisances, pair, &idx);
    let (lb, ub) = plugin_from_terms(&terms);
    Ok(CenteredEif {
        lower: terms.iter().map(|u| u.phi[0] - u.phi[1] - lb).collect(),
        upper: terms.iter().map(|u| u.phi[2] - u.phi[3] - ub).collect(),
        theta_lb_plugin: lb,
        theta_ub_plugin: ub,
    })
}

fn check_confidence(confidence: f64) -> Result<()> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    Ok(())
}

/// Bias-corrected bound estimates with influence-function variances.
///
/// `θ^bc = θ^plugin + mean(φ_centered)`; the variance of each estimate is
/// the 1/n sample variance of its centered influence values divided by n.
pub fn bias_corrected_bounds(
    dataset: &Dataset,
    nuisances: &NuisanceEstimates,
    pair: &SensitivityPair,
    confidence: f64,
    subgroup: Option<&[usize]>,
) -> Result<BoundEstimate> {
    check_confidence(confidence)?;
    let idx = resolve_indices(dataset.n(), nuisances, subgroup)?;
    let terms = unit_terms(dataset.units(), nuisances, pair, &idx);
    let (lb_plugin, ub_plugin) = plugin_from_terms(&terms);
    let lower: Vec<f64> = terms.iter().map(|u| u.phi[0] - u.phi[1] - lb_plugin).collect();
    let upper: Vec<f64> = terms.iter().map(|u| u.phi[2] - u.phi[3] - ub_plugin).collect();
    let n = terms.len();
    let theta_lb_bc = lb_plugin + mean(&lower);
    let theta_ub_bc = ub_plugin + mean(&upper);
    let var_lb = population_variance(&lower) / n as f64;
    let var_ub = population_variance(&upper) / n as f64;
    let z = two_sided_z(confidence);
    let ordering_violations = terms
        .iter()
        .filter(|u| u.b[0] > u.b[2] || u.b[3] > u.b[1])
        .count();
    Ok(BoundEstimate {
        theta_lb_plugin: lb_plugin,
        theta_ub_plugin: ub_plugin,
        theta_lb_bc,
        theta_ub_bc,
        var_lb,
        var_ub,
        ci_lb: Interval::centered(theta_lb_bc, z * var_lb.sqrt()),
        ci_ub: Interval::centered(theta_ub_bc, z * var_ub.sqrt()),
        confidence,
        n_effective: n,
        variance_method: VarianceMethod::EifSampleVariance,
        ordering_violations,
    })
}

/// Per-unit audit record of every slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitAudit {
    pub index: usize,
    pub slots: Vec<SlotAudit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotAudit {
    pub slot: ParameterSlot,
    pub components: BoundComponents,
    pub eif: EifTerms,
    pub phi_uncentered: f64,
}

pub fn unit_audit(
    dataset: &Dataset,
    nuisances: &NuisanceEstimates,
    pair: &SensitivityPair,
    subgroup: Option<&[usize]>,
) -> Result<Vec<UnitAudit>> {
    let idx = resolve_indices(dataset.n(), nuisances, subgroup)?;
    let slots = ParameterSlot::for_pair(pair);
    Ok(idx
        .iter()
        .map(|&i| {
            let row = nuisances.row(i);
            let unit = &dataset.units()[i];
            UnitAudit {
                index: i,
                slots: slots
                    .iter()
                    .map(|slot| {
                        let eif = eif_terms(unit, &row, slot);
                        SlotAudit {
                            slot: *slot,
                            components: BoundComponents::evaluate(&row, slot),
                            phi_uncentered: eif.total(),
                            eif,
                        }
                    })
                    .collect(),
            }
        })
        .collect())
}

const BOOTSTRAP_MAX_RETRIES: u64 = 10;

/// Runs `eval` on `b` bootstrap replicates of `dataset`, each with freshly
/// cross-fitted nuisances. Replicate `r` depends only on `(seed, r)`. A
/// replicate that loses an `(s, t)` cell is redrawn up to ten times.
pub fn bootstrap_replicates<T, F>(
    dataset: &Dataset,
    cf: &CrossFitConfig,
    b: usize,
    seed: u64,
    eval: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&Dataset, &NuisanceEstimates) -> Result<T> + Sync,
{
    if b < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bootstrap replicates, got {b}")));
    }
    let n = dataset.n();
    (0..b)
        .into_par_iter()
        .map(|r| {
            let replicate_seed = rng::derive_seed(seed, "bootstrap", r as u64);
            let mut last_err = None;
            for attempt in 0..=BOOTSTRAP_MAX_RETRIES {
                let mut stream = rng::stream(replicate_seed, "resample", attempt);
                let idx: Vec<usize> = (0..n).map(|_| rng::index(&mut stream, n)).collect();
                let resampled = match dataset.select(&idx) {
                    Ok(d) => d,
                    Err(e @ Error::EmptyCell { .. }) => {
                        last_err = Some(e);
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let replicate_cf = CrossFitConfig {
                    seed: rng::derive_seed(replicate_seed, "cross-fit", attempt),
                    ..cf.clone()
                };
                match cross_fit(&resampled, &replicate_cf) {
                    Ok(nuis) => return eval(&resampled, &nuis),
                    Err(e @ Error::EmptyTrainingCell { .. }) => last_err = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(match last_err {
                Some(Error::EmptyCell { s, t }) => Error::EmptyTrainingCell { fold: 0, s, t },
                Some(e) => e,
                None => unreachable!("retry loop always records an error"),
            })
        })
        .collect()
}

/// Replaces the variance and intervals of `estimate` with the bootstrap
/// spread of replicate bias-corrected bounds.
pub fn with_bootstrap_variance(estimate: &BoundEstimate, replicates: &[(f64, f64)]) -> BoundEstimate {
    let lbs: Vec<f64> = replicates.iter().map(|r| r.0).collect();
    let ubs: Vec<f64> = replicates.iter().map(|r| r.1).collect();
    let var_lb = sample_variance(&lbs);
    let var_ub = sample_variance(&ubs);
    let z = two_sided_z(estimate.confidence);
    BoundEstimate {
        var_lb,
        var_ub,
        ci_lb: Interval::centered(estimate.theta_lb_bc, z * var_lb.sqrt()),
        ci_ub: Interval::centered(estimate.theta_ub_bc, z * var_ub.sqrt()),
        variance_method: VarianceMethod::Bootstrap,
        ..estimate.clone()
    }
}

/// Bias-corrected bounds on the full sample with bootstrap variance: each of
/// `b` replicates resamples units, re-runs cross-fitting and recomputes the
/// bias-corrected bounds.
pub fn bootstrap_bounds(
    dataset: &Dataset,
    cf: &CrossFitConfig,
    pair: &SensitivityPair,
    confidence: f64,
    b: usize,
    seed: u64,
) -> Result<BoundEstimate> {
    check_confidence(confidence)?;
    let nuisances = cross_fit(dataset, cf)?;
    let point = bias_corrected_bounds(dataset, &nuisances, pair, confidence, None)?;
    let reps = bootstrap_replicates(dataset, cf, b, seed, |d, nuis| {
        let e = bias_corrected_bounds(d, nuis, pair, confidence, None)?;
        Ok((e.theta_lb_bc, e.theta_ub_bc))
    })?;
    Ok(with_bootstrap_variance(&point, &reps))
}
