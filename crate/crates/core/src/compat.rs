//! Compatibility test for a sensitivity pair.
//!
//! For arm `t` the two envelopes `[v(-γ), v(γ)]` and `[w(-ρ), w(ρ)]` must
//! overlap for the pair to be consistent with the data. The per-unit overlap
//! `min{v(γ), w(ρ)} - max{v(-γ), w(-ρ)}` is averaged into `T_obs`, and its
//! null distribution is approximated by resampling the centered overlaps
//! with the nuisance functions held fixed. Holding them fixed ignores their
//! estimation error, so the test is conservative in that respect.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{compute_v, compute_w};
use crate::error::{Error, Result};
use crate::model::{NuisanceEstimates, NuisanceRow, SensitivityPair};
use crate::rng;

pub const MIN_RESAMPLES: usize = 100;

/// Which tail of the resampling distribution is the p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompatMode {
    /// `p = P*(T_r <= T_obs)`, rejecting when `p < 1 - c`.
    #[default]
    CorrectedLeftTail,
    /// `p = P*(T_r >= T_obs)`, rejecting when `p < c`.
    PaperLiteral,
}

impl CompatMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            CompatMode::CorrectedLeftTail => "corrected-left-tail",
            CompatMode::PaperLiteral => "paper-literal",
        }
    }

    /// Rejection threshold for the p-value at confidence level `c`.
    pub fn threshold(&self, confidence: f64) -> f64 {
        match self {
            CompatMode::CorrectedLeftTail => 1.0 - confidence,
            CompatMode::PaperLiteral => confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSample {
    pub t: u8,
    /// Raw overlaps minus `t_obs`.
    pub o: Vec<f64>,
    pub t_obs: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatResult {
    pub t: u8,
    pub p_value: f64,
    pub r: usize,
    pub decision_threshold: f64,
    pub compatible: bool,
    pub formula_mode: CompatMode,
    pub t_obs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompatConfig {
    pub r: usize,
    pub confidence: f64,
    pub mode: CompatMode,
    pub seed: u64,
}

impl Default for CompatConfig {
    fn default() -> Self {
        CompatConfig {
            r: MIN_RESAMPLES,
            confidence: 0.95,
            mode: CompatMode::CorrectedLeftTail,
            seed: 0,
        }
    }
}

/// Width of the intersection of `[v_minus, v_plus]` and `[w_minus, w_plus]`
/// (negative when they are disjoint).
pub fn envelope_overlap(v_minus: f64, v_plus: f64, w_minus: f64, w_plus: f64) -> f64 {
    v_plus.min(w_plus) - v_minus.max(w_minus)
}

pub fn raw_overlap(row: &NuisanceRow, t: u8, rho: f64, gamma: f64) -> f64 {
    let mu1 = row.mu(1, t);
    let mu0 = row.mu(0, t);
    let e_t0 = row.e(t, 0);
    envelope_overlap(
        compute_v(mu1, -gamma),
        compute_v(mu1, gamma),
        compute_w(mu0, e_t0, -rho),
        compute_w(mu0, e_t0, rho),
    )
}

pub fn overlap_values(
    nuisances: &NuisanceEstimates,
    pair: &SensitivityPair,
    t: u8,
    subgroup: Option<&[usize]>,
) -> Result<OverlapSample> {
    if t > 1 {
        return Err(Error::InvalidArgument(format!("arm must be 0 or 1, got {t}")));
    }
    let raw: Vec<f64> = match subgroup {
        Some(idx) => {
            if let Some(&bad) = idx.iter().find(|&&i| i >= nuisances.len()) {
                return Err(Error::InvalidArgument(format!("subgroup index {bad} out of range")));
            }
            idx.iter()
                .map(|&i| raw_overlap(&nuisances.row(i), t, pair.rho, pair.gamma))
                .collect()
        }
        None => (0..nuisances.len())
            .map(|i| raw_overlap(&nuisances.row(i), t, pair.rho, pair.gamma))
            .collect(),
    };
    OverlapSample::from_raw(t, raw)
}

impl OverlapSample {
    pub fn from_raw(t: u8, raw: Vec<f64>) -> Result<OverlapSample> {
        if raw.is_empty() {
            return Err(Error::EmptySubgroup);
        }
        let n = raw.len();
        let t_obs = raw.iter().sum::<f64>() / n as f64;
        let o = raw.into_iter().map(|x| x - t_obs).collect();
        Ok(OverlapSample { t, o, t_obs, n })
    }
}

/// Means of `r` bootstrap resamples of the centered overlaps. Resample `i`
/// uses its own stream derived from `(seed, i)`.
pub fn resample_means(sample: &OverlapSample, r: usize, seed: u64) -> Vec<f64> {
    let n = sample.n;
    (0..r)
        .into_par_iter()
        .map(|i| {
            let mut s = rng::stream(seed, "compat-resample", i as u64);
            let mut total = 0.0;
            for _ in 0..n {
                total += sample.o[rng::index(&mut s, n)];
            }
            total / n as f64
        })
        .collect()
}

fn check_inputs(sample: &OverlapSample, r: usize, confidence: f64) -> Result<()> {
    if r < MIN_RESAMPLES {
        return Err(Error::RTooSmall { r });
    }
    if sample.n < 2 {
        return Err(Error::InvalidArgument(format!(
            "compatibility test needs at least 2 units, got {}",
            sample.n
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence must lie in (0, 1), got {confidence}")));
    }
    Ok(())
}

/// p-value of `mode` on an already drawn set of resample means.
pub fn p_value(means: &[f64], t_obs: f64, mode: CompatMode) -> f64 {
    let hits = match mode {
        CompatMode::CorrectedLeftTail => means.iter().filter(|&&m| m <= t_obs).count(),
        CompatMode::PaperLiteral => means.iter().filter(|&&m| m >= t_obs).count(),
    };
    hits as f64 / means.len() as f64
}

fn decide(sample: &OverlapSample, means: &[f64], confidence: f64, mode: CompatMode) -> CompatResult {
    let p = p_value(means, sample.t_obs, mode);
    let threshold = mode.threshold(confidence);
    CompatResult {
        t: sample.t,
        p_value: p,
        r: means.len(),
        decision_threshold: threshold,
        compatible: p >= threshold,
        formula_mode: mode,
        t_obs: sample.t_obs,
    }
}

pub fn compat_test(
    sample: &OverlapSample,
    r: usize,
    seed: u64,
    mode: CompatMode,
    confidence: f64,
) -> Result<CompatResult> {
    check_inputs(sample, r, confidence)?;
    let means = resample_means(sample, r, seed);
    Ok(decide(sample, &means, confidence, mode))
}

/// Both formula modes evaluated on one shared set of resamples.
pub fn compat_test_both_modes(
    sample: &OverlapSample,
    r: usize,
    seed: u64,
    confidence: f64,
) -> Result<[CompatResult; 2]> {
    check_inputs(sample, r, confidence)?;
    let means = resample_means(sample, r, seed);
    Ok([
        decide(sample, &means, confidence, CompatMode::CorrectedLeftTail),
        decide(sample, &means, confidence, CompatMode::PaperLiteral),
    ])
}

/// Seed used for arm `t` under a master seed.
pub fn arm_seed(seed: u64, t: u8) -> u64 {
    rng::derive_seed(seed, "compat-arm", u64::from(t))
}

/// Runs the test for `t = 0` and `t = 1`; the pair is compatible only if
/// both arms are.
pub fn compat_both_arms(
    nuisances: &NuisanceEstimates,
    pair: &SensitivityPair,
    config: &CompatConfig,
    subgroup: Option<&[usize]>,
) -> Result<[CompatResult; 2]> {
    let mut out = Vec::with_capacity(2);
    for t in 0..2u8 {
        let sample = overlap_values(nuisances, pair, t, subgroup)?;
        out.push(compat_test(&sample, config.r, arm_seed(config.seed, t), config.mode, config.confidence)?);
    }
    Ok([out[0].clone(), out[1].clone()])
}

pub fn pair_compatible(results: &[CompatResult; 2]) -> bool {
    results.iter().all(|r| r.compatible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nuis(mu: [[Vec<f64>; 2]; 2], e1_s0: Vec<f64>) -> NuisanceEstimates {
        let n = e1_s0.len();
        NuisanceEstimates {
            g1: vec![0.5; n],
            e1_s0,
            e1_s1: vec![0.5; n],
            mu,
            fold_id: vec![0; n],
            clip_epsilon: 0.01,
            models: vec![],
        }
    }

    #[test]
    fn constant_overlaps_center_to_zero() {
        let s = OverlapSample::from_raw(1, vec![2.5; 7]).unwrap();
        assert_eq!(s.t_obs, 2.5);
        assert!(s.o.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn endpoint_overlap() {
        assert_eq!(envelope_overlap(80.0, 120.0, 95.0, 110.0), 15.0);
        // v = 100 (1 ± 0.2), w = 100 (1 ± 0.2 · 0.75)
        let n = nuis([[vec![100.0], vec![100.0]], [vec![100.0], vec![100.0]]], vec![0.25]);
        let got = raw_overlap(&n.row(0), 1, 0.2, 0.2);
        assert!((got - 30.0).abs() < 1e-12, "{got}");
    }

    #[test]
    fn zero_sensitivity_with_different_regressions_is_negative() {
        let n = nuis(
            [[vec![90.0, 50.0], vec![95.0, 51.0]], [vec![92.0, 49.0], vec![99.0, 53.0]]],
            vec![0.3, 0.7],
        );
        let pair = SensitivityPair::new(0.0, 0.0, 10.0).unwrap();
        for t in 0..2 {
            let s = overlap_values(&n, &pair, t, None).unwrap();
            let raw: Vec<f64> = s.o.iter().map(|o| o + s.t_obs).collect();
            assert!(raw.iter().all(|&r| r < 0.0), "{raw:?}");
        }
    }

    #[test]
    fn empty_subgroup() {
        let n = nuis([[vec![1.0], vec![1.0]], [vec![1.0], vec![1.0]]], vec![0.5]);
        let pair = SensitivityPair::new(0.1, 0.1, 10.0).unwrap();
        assert!(matches!(overlap_values(&n, &pair, 0, Some(&[])), Err(Error::EmptySubgroup)));
    }

    fn spread_sample(shift: f64) -> OverlapSample {
        let raw: Vec<f64> = (0..200).map(|i| shift + ((i * 37) % 23) as f64 / 23.0 - 0.5).collect();
        OverlapSample::from_raw(0, raw).unwrap()
    }

    #[test]
    fn strongly_positive_and_negative() {
        let pos = compat_test(&spread_sample(5.0), 200, 1, CompatMode::CorrectedLeftTail, 0.95).unwrap();
        assert_eq!(pos.p_value, 1.0);
        assert!(pos.compatible);
        let neg = compat_test(&spread_sample(-5.0), 200, 1, CompatMode::CorrectedLeftTail, 0.95).unwrap();
        assert_eq!(neg.p_value, 0.0);
        assert!(!neg.compatible);
    }

    #[test]
    fn degenerate_sample_is_compatible() {
        let s = OverlapSample { t: 0, o: vec![0.0; 10], t_obs: 0.0, n: 10 };
        let r = compat_test(&s, 100, 3, CompatMode::CorrectedLeftTail, 0.95).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.compatible);
    }

    #[test]
    fn preconditions() {
        let s = spread_sample(0.0);
        assert!(matches!(
            compat_test(&s, 10, 0, CompatMode::CorrectedLeftTail, 0.95),
            Err(Error::RTooSmall { r: 10 })
        ));
        let one = OverlapSample::from_raw(0, vec![1.0]).unwrap();
        assert!(compat_test(&one, 100, 0, CompatMode::CorrectedLeftTail, 0.95).is_err());
    }

    #[test]
    fn deterministic() {
        let s = spread_sample(0.01);
        let a = compat_test(&s, 150, 9, CompatMode::CorrectedLeftTail, 0.95).unwrap();
        let b = compat_test(&s, 150, 9, CompatMode::CorrectedLeftTail, 0.95).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn centering_and_range(raw in prop::collection::vec(-50.0f64..50.0, 2..60), seed in any::<u64>()) {
            let s = OverlapSample::from_raw(1, raw).unwrap();
            let m = s.o.iter().sum::<f64>() / s.n as f64;
            prop_assert!(m.abs() < 1e-12);
            let r = compat_test(&s, 100, seed, CompatMode::CorrectedLeftTail, 0.95).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.p_value));
        }

        #[test]
        fn shifting_up_raises_p(raw in prop::collection::vec(-5.0f64..5.0, 2..40), delta in 0.0f64..3.0, seed in any::<u64>()) {
            // The centered sample is shift-invariant, so the resample means
            // are shared and only T_obs moves.
            let base = OverlapSample::from_raw(0, raw.clone()).unwrap();
            let means = resample_means(&base, 120, seed);
            let shifted_t_obs = base.t_obs + delta;
            prop_assert!(
                p_value(&means, shifted_t_obs, CompatMode::CorrectedLeftTail)
                    >= p_value(&means, base.t_obs, CompatMode::CorrectedLeftTail)
            );
            let shifted = OverlapSample::from_raw(0, raw.iter().map(|x| x + delta).collect()).unwrap();
            let a = compat_test(&base, 120, seed, CompatMode::CorrectedLeftTail, 0.95).unwrap();
            let b = compat_test(&shifted, 120, seed, CompatMode::CorrectedLeftTail, 0.95).unwrap();
            // Recentering may move individual o_i by rounding; allow one tie flip.
            prop_assert!(b.p_value + 1.0 / 120.0 >= a.p_value);
        }

        #[test]
        fn tails_cover(raw in prop::collection::vec(-5.0f64..5.0, 2..40), seed in any::<u64>()) {
            let s = OverlapSample::from_raw(0, raw).unwrap();
            let [c, l] = compat_test_both_modes(&s, 100, seed, 0.95).unwrap();
            prop_assert!(c.p_value + l.p_value >= 1.0);
        }
    }
}
