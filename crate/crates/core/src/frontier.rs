//! Breakdown frontier over a `(ρ, γ)` grid.
//!
//! Nuisances are fitted once. Each cell is first tested for compatibility;
//! compatible cells get bias-corrected bounds and are classified by the
//! signs of the bounds and whether their intervals exclude zero.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{bias_corrected_bounds, bootstrap_replicates, with_bootstrap_variance};
use crate::compat::{compat_both_arms, CompatConfig, CompatMode, CompatResult};
use crate::error::{Error, Result};
use crate::model::{
    BoundEstimate, Dataset, FrontierCell, ModelSummary, NuisanceEstimates, Region, SensitivityPair,
    VarianceMethod,
};
use crate::nuisance::{cross_fit, CrossFitConfig, DEFAULT_CLIP_EPSILON, DEFAULT_L2_GRID};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontierConfig {
    pub rho_max: f64,
    pub gamma_max: f64,
    pub grid_n: usize,
    pub confidence: f64,
    pub alpha: f64,
    pub k: usize,
    pub r_compat: usize,
    pub variance_method: VarianceMethod,
    pub bootstrap_b: usize,
    pub seed: u64,
    pub compat_mode: CompatMode,
    pub clip_epsilon: f64,
    pub l2_grid: Vec<f64>,
    pub known_exp_propensity: Option<f64>,
}

impl Default for FrontierConfig {
    fn default() -> Self {
        FrontierConfig {
            rho_max: 0.2,
            gamma_max: 0.2,
            grid_n: 50,
            confidence: 0.95,
            alpha: 10.0,
            k: 2,
            r_compat: 100,
            variance_method: VarianceMethod::EifSampleVariance,
            bootstrap_b: 1000,
            seed: 0,
            compat_mode: CompatMode::CorrectedLeftTail,
            clip_epsilon: DEFAULT_CLIP_EPSILON,
            l2_grid: DEFAULT_L2_GRID.to_vec(),
            known_exp_propensity: None,
        }
    }
}

impl FrontierConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.grid_n < 2 {
            return bad(format!("grid_n must be at least 2, got {}", self.grid_n));
        }
        if !(self.rho_max > 0.0 && self.rho_max.is_finite()) {
            return bad(format!("rho_max must be positive, got {}", self.rho_max));
        }
        if !(self.gamma_max > 0.0 && self.gamma_max.is_finite()) {
            return bad(format!("gamma_max must be positive, got {}", self.gamma_max));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad(format!("confidence must lie in (0, 1), got {}", self.confidence));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.r_compat < crate::compat::MIN_RESAMPLES {
            return Err(Error::RTooSmall { r: self.r_compat });
        }
        if self.variance_method == VarianceMethod::Bootstrap && self.bootstrap_b < 2 {
            return bad(format!("bootstrap_b must be at least 2, got {}", self.bootstrap_b));
        }
        Ok(())
    }

    pub fn cross_fit_config(&self) -> CrossFitConfig {
        CrossFitConfig {
            k: self.k,
            seed: self.seed,
            l2_grid: self.l2_grid.clone(),
            clip_epsilon: self.clip_epsilon,
            known_exp_propensity: self.known_exp_propensity,
            ..CrossFitConfig::default()
        }
    }

    /// Compatibility settings for the cell at `index`.
    pub fn compat_config(&self, index: usize) -> CompatConfig {
        CompatConfig {
            r: self.r_compat,
            confidence: self.confidence,
            mode: self.compat_mode,
            seed: rng::derive_seed(self.seed, "cell", index as u64),
        }
    }
}

fn linspace(max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect()
}

/// All `(ρ, γ)` pairs, `ρ` varying slowest.
pub fn build_grid(config: &FrontierConfig) -> Result<Vec<(f64, f64)>> {
    config.validate()?;
    let rhos = linspace(config.rho_max, config.grid_n);
    let gammas = linspace(config.gamma_max, config.grid_n);
    Ok(rhos
        .iter()
        .flat_map(|&r| gammas.iter().map(move |&g| (r, g)))
        .collect())
}

fn excludes_zero(lo: f64, hi: f64) -> bool {
    lo > 0.0 || hi < 0.0
}

pub fn classify_cell(bound: Option<&BoundEstimate>, compat: &[CompatResult; 2]) -> Region {
    if compat.iter().any(|c| !c.compatible) {
        return Region::Incompatible;
    }
    let Some(b) = bound else {
        return Region::Inconclusive;
    };
    let lb = b.theta_lb_bc;
    let ub = b.theta_ub_bc;
    let same_sign = (lb > 0.0 && ub > 0.0) || (lb < 0.0 && ub < 0.0);
    if !same_sign {
        return Region::Inconclusive;
    }
    if excludes_zero(b.ci_lb.lo, b.ci_lb.hi) && excludes_zero(b.ci_ub.lo, b.ci_ub.hi) {
        Region::Conclusive
    } else {
        Region::Tentative
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierGrid {
    pub config: FrontierConfig,
    pub n_units: usize,
    pub dataset_fingerprint: String,
    pub nuisance_fingerprint: String,
    pub nuisance_models: Vec<ModelSummary>,
    pub cells: Vec<FrontierCell>,
}

pub const CSV_HEADER: [&str; 11] = [
    "rho",
    "gamma",
    "region",
    "theta_lb",
    "theta_ub",
    "ci_lb_lo",
    "ci_lb_hi",
    "ci_ub_lo",
    "ci_ub_hi",
    "p_compat_t0",
    "p_compat_t1",
];

impl FrontierGrid {
    /// Cell counts per region, in [`Region::ALL`] order.
    pub fn region_counts(&self) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> =
            Region::ALL.iter().map(|r| (r.as_str().to_string(), 0)).collect();
        for c in &self.cells {
            *counts.get_mut(c.region.as_str()).expect("all regions present") += 1;
        }
        counts
    }

    pub fn count(&self, region: Region) -> usize {
        self.cells.iter().filter(|c| c.region == region).count()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for c in &self.cells {
            let mut rec = vec![c.rho.to_string(), c.gamma.to_string(), c.region.to_string()];
            match &c.bound {
                Some(b) => rec.extend(
                    [
                        b.theta_lb_bc,
                        b.theta_ub_bc,
                        b.ci_lb.lo,
                        b.ci_lb.hi,
                        b.ci_ub.lo,
                        b.ci_ub.hi,
                    ]
                    .iter()
                    .map(f64::to_string),
                ),
                None => rec.extend(std::iter::repeat(String::new()).take(6)),
            }
            rec.push(c.p_compat_t0.to_string());
            rec.push(c.p_compat_t1.to_string());
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct View<'a> {
            #[serde(flatten)]
            grid: &'a FrontierGrid,
            region_counts: BTreeMap<String, usize>,
            compat_note: &'static str,
        }
        Ok(serde_json::to_string_pretty(&View {
            grid: self,
            region_counts: self.region_counts(),
            compat_note: "compatibility resamples hold the fitted nuisance functions fixed; \
                          their estimation error is not propagated into the p-values",
        })?)
    }
}

/// Fits nuisances on `dataset` (restricted to `subgroup` first, if given)
/// and evaluates every grid cell.
pub fn compute_frontier(
    dataset: &Dataset,
    config: &FrontierConfig,
    subgroup: Option<&[usize]>,
) -> Result<FrontierGrid> {
    config.validate()?;
    let filtered;
    let data = match subgroup {
        Some(idx) => {
            if idx.is_empty() {
                return Err(Error::EmptySubgroup);
            }
            filtered = dataset.select(idx)?;
            &filtered
        }
        None => dataset,
    };
    let nuisances = cross_fit(data, &config.cross_fit_config())?;
    compute_frontier_with_nuisances(data, &nuisances, config)
}

/// Evaluates every grid cell against fixed nuisance estimates.
pub fn compute_frontier_with_nuisances(
    dataset: &Dataset,
    nuisances: &NuisanceEstimates,
    config: &FrontierConfig,
) -> Result<FrontierGrid> {
    let grid = build_grid(config)?;
    let cells: Vec<(FrontierCell, [CompatResult; 2])> = grid
        .par_iter()
        .enumerate()
        .map(|(index, &(rho, gamma))| {
            let pair = SensitivityPair::new(rho, gamma, config.alpha)?;
            let compat = compat_both_arms(nuisances, &pair, &config.compat_config(index), None)?;
            let bound = if compat.iter().all(|c| c.compatible) {
                Some(bias_corrected_bounds(dataset, nuisances, &pair, config.confidence, None)?)
            } else {
                None
            };
            let cell = FrontierCell {
                rho,
                gamma,
                region: classify_cell(bound.as_ref(), &compat),
                bound,
                p_compat_t0: compat[0].p_value,
                p_compat_t1: compat[1].p_value,
            };
            Ok((cell, compat))
        })
        .collect::<Result<_>>()?;

    let (mut cells, compats): (Vec<FrontierCell>, Vec<[CompatResult; 2]>) = cells.into_iter().unzip();
    if config.variance_method == VarianceMethod::Bootstrap {
        apply_bootstrap(dataset, config, &mut cells, &compats)?;
    }
    Ok(FrontierGrid {
        config: config.clone(),
        n_units: dataset.n(),
        dataset_fingerprint: dataset.fingerprint(),
        nuisance_fingerprint: nuisances.fingerprint(),
        nuisance_models: nuisances.models.clone(),
        cells,
    })
}

/// Re-fits nuisances on bootstrap replicates and replaces the variances of
/// every compatible cell by the replicate spread.
fn apply_bootstrap(
    dataset: &Dataset,
    config: &FrontierConfig,
    cells: &mut [FrontierCell],
    compats: &[[CompatResult; 2]],
) -> Result<()> {
    let active: Vec<usize> = (0..cells.len()).filter(|&i| cells[i].bound.is_some()).collect();
    if active.is_empty() {
        return Ok(());
    }
    let pairs: Vec<SensitivityPair> = active
        .iter()
        .map(|&i| SensitivityPair::new(cells[i].rho, cells[i].gamma, config.alpha))
        .collect::<Result<_>>()?;
    let reps: Vec<Vec<(f64, f64)>> = bootstrap_replicates(
        dataset,
        &config.cross_fit_config(),
        config.bootstrap_b,
        config.seed,
        |d, nuis| {
            pairs
                .iter()
                .map(|pair| {
                    let e = bias_corrected_bounds(d, nuis, pair, config.confidence, None)?;
                    Ok((e.theta_lb_bc, e.theta_ub_bc))
                })
                .collect()
        },
    )?;
    for (slot, &i) in active.iter().enumerate() {
        let column: Vec<(f64, f64)> = reps.iter().map(|r| r[slot]).collect();
        let cell = &mut cells[i];
        let updated = with_bootstrap_variance(cell.bound.as_ref().expect("active cell"), &column);
        cell.region = classify_cell(Some(&updated), &compats[i]);
        cell.bound = Some(updated);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Interval;

    fn compat(ok0: bool, ok1: bool) -> [CompatResult; 2] {
        let r = |t, ok: bool| CompatResult {
            t,
            p_value: if ok { 0.5 } else { 0.0 },
            r: 100,
            decision_threshold: 0.05,
            compatible: ok,
            formula_mode: CompatMode::CorrectedLeftTail,
            t_obs: 0.0,
        };
        [r(0, ok0), r(1, ok1)]
    }

    fn bound(lb: f64, ub: f64, ci_lb: (f64, f64), ci_ub: (f64, f64)) -> BoundEstimate {
        BoundEstimate {
            theta_lb_plugin: lb,
            theta_ub_plugin: ub,
            theta_lb_bc: lb,
            theta_ub_bc: ub,
            var_lb: 0.01,
            var_ub: 0.01,
            ci_lb: Interval { lo: ci_lb.0, hi: ci_lb.1 },
            ci_ub: Interval { lo: ci_ub.0, hi: ci_ub.1 },
            confidence: 0.95,
            n_effective: 10,
            variance_method: VarianceMethod::EifSampleVariance,
            ordering_violations: 0,
        }
    }

    #[test]
    fn grid_endpoints() {
        let cfg = FrontierConfig { grid_n: 2, ..Default::default() };
        assert_eq!(build_grid(&cfg).unwrap(), vec![(0.0, 0.0), (0.0, 0.2), (0.2, 0.0), (0.2, 0.2)]);
        let full = build_grid(&FrontierConfig::default()).unwrap();
        assert_eq!(full.len(), 2500);
        assert!((full[1].1 - 0.2 / 49.0).abs() < 1e-15);
        assert_eq!(full[2499], (0.2, 0.2));
        assert!(build_grid(&FrontierConfig { grid_n: 1, ..Default::default() }).is_err());
    }

    #[test]
    fn classification_examples() {
        let ok = compat(true, true);
        let c = bound(0.5, 2.0, (0.3, 0.7), (1.6, 2.4));
        assert_eq!(classify_cell(Some(&c), &ok), Region::Conclusive);
        let t = bound(0.5, 2.0, (-0.1, 1.1), (1.6, 2.4));
        assert_eq!(classify_cell(Some(&t), &ok), Region::Tentative);
        let i = bound(-0.3, 1.2, (-0.5, -0.1), (1.0, 1.4));
        assert_eq!(classify_cell(Some(&i), &ok), Region::Inconclusive);
        let neg = bound(-2.0, -0.5, (-2.4, -1.6), (-0.7, -0.3));
        assert_eq!(classify_cell(Some(&neg), &ok), Region::Conclusive);
        let zero = bound(0.0, 1.0, (0.1, 0.2), (0.9, 1.1));
        assert_eq!(classify_cell(Some(&zero), &ok), Region::Inconclusive);
        assert_eq!(classify_cell(Some(&c), &compat(true, false)), Region::Incompatible);
        assert_eq!(classify_cell(None, &compat(false, true)), Region::Incompatible);
    }

    #[test]
    fn config_validation() {
        assert!(FrontierConfig { r_compat: 10, ..Default::default() }.validate().is_err());
        assert!(FrontierConfig { confidence: 1.0, ..Default::default() }.validate().is_err());
        assert!(FrontierConfig::default().validate().is_ok());
    }
}
