//! Domain types shared by every stage of the pipeline, and validation of raw
//! rows into a [`Dataset`].

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One observation: covariates, study indicator (1 = experimental),
/// treatment indicator and a strictly positive outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub x: Vec<f64>,
    pub s: u8,
    pub t: u8,
    pub y: f64,
}

/// What to do with outcomes that are not strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum OutcomePolicy {
    #[default]
    RequirePositive,
    /// Translate all outcomes so the smallest equals `margin`.
    Shift { margin: f64 },
}

/// Column layout of raw numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub n_columns: usize,
    pub covariates: Vec<usize>,
    pub covariate_names: Vec<String>,
    pub s: usize,
    pub t: usize,
    pub y: usize,
    pub outcome_policy: OutcomePolicy,
}

/// Names of the study, treatment and outcome columns. Covariates default to
/// every other column in file order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub s: String,
    pub t: String,
    pub y: String,
    pub covariates: Option<Vec<String>>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            s: "s".into(),
            t: "t".into(),
            y: "y".into(),
            covariates: None,
        }
    }
}

impl Schema {
    /// Resolves a mapping against a CSV header.
    pub fn from_header(header: &[String], mapping: &ColumnMapping) -> Result<Schema> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::UnknownColumn(name.to_string()))
        };
        let s = find(&mapping.s)?;
        let t = find(&mapping.t)?;
        let y = find(&mapping.y)?;
        let covariates: Vec<usize> = match &mapping.covariates {
            Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
            None => (0..header.len()).filter(|&i| i != s && i != t && i != y).collect(),
        };
        if covariates.is_empty() {
            return Err(Error::InvalidArgument("schema needs at least one covariate".into()));
        }
        Ok(Schema {
            n_columns: header.len(),
            covariate_names: covariates.iter().map(|&i| header[i].clone()).collect(),
            covariates,
            s,
            t,
            y,
            outcome_policy: OutcomePolicy::RequirePositive,
        })
    }

    /// Layout `covariates..., s, t, y`, the layout written by [`Dataset::to_rows`].
    pub fn standard(covariate_names: &[String]) -> Schema {
        let d = covariate_names.len();
        Schema {
            n_columns: d + 3,
            covariates: (0..d).collect(),
            covariate_names: covariate_names.to_vec(),
            s: d,
            t: d + 1,
            y: d + 2,
            outcome_policy: OutcomePolicy::RequirePositive,
        }
    }

    pub fn with_policy(mut self, policy: OutcomePolicy) -> Schema {
        self.outcome_policy = policy;
        self
    }
}

/// A validated, column-consistent collection of units from both studies.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    units: Vec<Unit>,
    covariate_names: Vec<String>,
    outcome_offset: f64,
}

impl Dataset {
    /// Builds a dataset and checks every invariant: equal covariate
    /// dimension, binary indicators, positive finite outcomes and a
    /// nonempty `(s, t)` cell for all four combinations.
    pub fn from_units(units: Vec<Unit>, covariate_names: Vec<String>) -> Result<Dataset> {
        let ds = Dataset {
            units,
            covariate_names,
            outcome_offset: 0.0,
        };
        ds.check()?;
        Ok(ds)
    }

    pub(crate) fn unchecked(units: Vec<Unit>, covariate_names: Vec<String>) -> Dataset {
        Dataset {
            units,
            covariate_names,
            outcome_offset: 0.0,
        }
    }

    fn check(&self) -> Result<()> {
        let d = self.covariate_names.len();
        for (row, u) in self.units.iter().enumerate() {
            if u.x.len() != d {
                return Err(Error::DimensionMismatch {
                    row,
                    expected: d,
                    found: u.x.len(),
                });
            }
            if u.s > 1 || u.t > 1 {
                let (column, value) = if u.s > 1 { ("s", u.s) } else { ("t", u.t) };
                return Err(Error::InvalidIndicator {
                    row,
                    column: column.into(),
                    value: value as f64,
                });
            }
            if !u.y.is_finite() || u.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row,
                    column: "x/y".into(),
                });
            }
            if u.y <= 0.0 {
                return Err(Error::NonPositiveOutcome { row, y: u.y });
            }
        }
        let counts = self.cell_counts();
        for s in 0..2u8 {
            for t in 0..2u8 {
                if counts[s as usize][t as usize] == 0 {
                    return Err(Error::EmptyCell { s, t });
                }
            }
        }
        Ok(())
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn dim(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn n(&self) -> usize {
        self.units.len()
    }

    pub fn n_exp(&self) -> usize {
        self.units.iter().filter(|u| u.s == 1).count()
    }

    pub fn n_obs(&self) -> usize {
        self.units.iter().filter(|u| u.s == 0).count()
    }

    /// Unit counts indexed `[s][t]`.
    pub fn cell_counts(&self) -> [[usize; 2]; 2] {
        let mut c = [[0usize; 2]; 2];
        for u in &self.units {
            c[u.s as usize][u.t as usize] += 1;
        }
        c
    }

    /// Amount added to every raw outcome (zero unless outcomes were shifted).
    pub fn outcome_offset(&self) -> f64 {
        self.outcome_offset
    }

    /// Units at the given indices, in that order. Duplicates are allowed
    /// (bootstrap resamples); the result must still cover all four cells.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let ds = Dataset {
            units: indices.iter().map(|&i| self.units[i].clone()).collect(),
            covariate_names: self.covariate_names.clone(),
            outcome_offset: self.outcome_offset,
        };
        if ds.units.is_empty() {
            return Err(Error::EmptySubgroup);
        }
        ds.check()?;
        Ok(ds)
    }

    /// Rows in the [`Schema::standard`] layout.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.units
            .iter()
            .map(|u| {
                let mut r = u.x.clone();
                r.extend([u.s as f64, u.t as f64, u.y]);
                r
            })
            .collect()
    }

    pub fn schema(&self) -> Schema {
        Schema::standard(&self.covariate_names)
    }

    /// SHA-256 over the column names and the exact bit patterns of every
    /// value, as lowercase hex.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for name in &self.covariate_names {
            h.update(name.as_bytes());
            h.update([0u8]);
        }
        for u in &self.units {
            for v in &u.x {
                h.update(v.to_bits().to_le_bytes());
            }
            h.update([u.s, u.t]);
            h.update(u.y.to_bits().to_le_bytes());
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn indicator(value: f64, row: usize, column: &str) -> Result<u8> {
    if value == 0.0 {
        Ok(0)
    } else if value == 1.0 {
        Ok(1)
    } else {
        Err(Error::InvalidIndicator {
            row,
            column: column.to_string(),
            value,
        })
    }
}

/// Validates raw numeric rows against a schema and builds a [`Dataset`].
///
/// With [`OutcomePolicy::Shift`] non-positive outcomes are accepted and the
/// whole outcome column is translated by [`shift_outcomes`] before the
/// positivity check.
pub fn validate_dataset(rows: &[Vec<f64>], schema: &Schema) -> Result<Dataset> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no rows".into()));
    }
    if schema.covariates.is_empty() {
        return Err(Error::InvalidArgument("schema needs at least one covariate".into()));
    }
    let mut units = Vec::with_capacity(rows.len());
    for (row, r) in rows.iter().enumerate() {
        if r.len() != schema.n_columns {
            return Err(Error::DimensionMismatch {
                row,
                expected: schema.n_columns,
                found: r.len(),
            });
        }
        if let Some(i) = r.iter().position(|v| !v.is_finite()) {
            let column = if i == schema.y {
                "y".to_string()
            } else {
                format!("column {i}")
            };
            return Err(Error::NonFinite { row, column });
        }
        units.push(Unit {
            x: schema.covariates.iter().map(|&i| r[i]).collect(),
            s: indicator(r[schema.s], row, "s")?,
            t: indicator(r[schema.t], row, "t")?,
            y: r[schema.y],
        });
    }
    let ds = Dataset::unchecked(units, schema.covariate_names.clone());
    let ds = match schema.outcome_policy {
        OutcomePolicy::RequirePositive => ds,
        OutcomePolicy::Shift { margin } => shift_outcomes(ds, margin)?.0,
    };
    ds.check()?;
    Ok(ds)
}

/// Translates outcomes to `y - min(y) + margin` so the smallest equals
/// `margin`. Returns the shifted dataset and the amount added to every
/// outcome.
pub fn shift_outcomes(dataset: Dataset, margin: f64) -> Result<(Dataset, f64)> {
    if !(margin > 0.0) || !margin.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "shift margin must be positive and finite, got {margin}"
        )));
    }
    let min = dataset
        .units
        .iter()
        .map(|u| u.y)
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::InvalidArgument("outcomes must be finite".into()));
    }
    let mut ds = dataset;
    for u in &mut ds.units {
        u.y = u.y - min + margin;
    }
    let offset = margin - min;
    ds.outcome_offset += offset;
    Ok((ds, offset))
}

/// Nuisance predictions for one unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuisanceRow {
    pub g1: f64,
    pub e1_s0: f64,
    pub e1_s1: f64,
    /// Outcome regressions indexed `[s][t]`.
    pub mu: [[f64; 2]; 2],
}

impl NuisanceRow {
    pub fn g(&self, s: u8) -> f64 {
        if s == 1 {
            self.g1
        } else {
            1.0 - self.g1
        }
    }

    /// P(T = t | x, S = s).
    pub fn e(&self, t: u8, s: u8) -> f64 {
        let e1 = if s == 1 { self.e1_s1 } else { self.e1_s0 };
        if t == 1 {
            e1
        } else {
            1.0 - e1
        }
    }

    pub fn mu(&self, s: u8, t: u8) -> f64 {
        self.mu[s as usize][t as usize]
    }
}

/// Summary of one fitted nuisance model, kept for debugging dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub fold: usize,
    pub target: String,
    pub l2: f64,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

/// Out-of-fold nuisance predictions for every unit of a dataset.
///
/// Only `P(S=1|x)` and `P(T=1|x,S=s)` are stored; the complementary
/// probabilities are always derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceEstimates {
    pub g1: Vec<f64>,
    pub e1_s0: Vec<f64>,
    pub e1_s1: Vec<f64>,
    /// `mu[s][t][i]`, predicted for every unit at all four `(s, t)`.
    pub mu: [[Vec<f64>; 2]; 2],
    pub fold_id: Vec<usize>,
    pub clip_epsilon: f64,
    pub models: Vec<ModelSummary>,
}

impl NuisanceEstimates {
    pub fn len(&self) -> usize {
        self.g1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g1.is_empty()
    }

    pub fn row(&self, i: usize) -> NuisanceRow {
        NuisanceRow {
            g1: self.g1[i],
            e1_s0: self.e1_s0[i],
            e1_s1: self.e1_s1[i],
            mu: [
                [self.mu[0][0][i], self.mu[0][1][i]],
                [self.mu[1][0][i], self.mu[1][1][i]],
            ],
        }
    }

    /// Rows at the given indices.
    pub fn select(&self, indices: &[usize]) -> NuisanceEstimates {
        let pick = |v: &Vec<f64>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        NuisanceEstimates {
            g1: pick(&self.g1),
            e1_s0: pick(&self.e1_s0),
            e1_s1: pick(&self.e1_s1),
            mu: [
                [pick(&self.mu[0][0]), pick(&self.mu[0][1])],
                [pick(&self.mu[1][0]), pick(&self.mu[1][1])],
            ],
            fold_id: indices.iter().map(|&i| self.fold_id[i]).collect(),
            clip_epsilon: self.clip_epsilon,
            models: self.models.clone(),
        }
    }

    /// SHA-256 of all prediction arrays and fold ids.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let arrays = [
            &self.g1,
            &self.e1_s0,
            &self.e1_s1,
            &self.mu[0][0],
            &self.mu[0][1],
            &self.mu[1][0],
            &self.mu[1][1],
        ];
        for a in arrays {
            for v in a {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        for f in &self.fold_id {
            h.update((*f as u64).to_le_bytes());
        }
        hex(&h.finalize())
    }
}

/// Sensitivity parameters: `rho` bounds unmeasured confounding in the
/// observational study, `gamma` bounds the violation of exchangeability
/// between studies, `alpha` is the Boltzmann smoothing scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPair {
    pub rho: f64,
    pub gamma: f64,
    pub alpha: f64,
}

impl SensitivityPair {
    pub fn new(rho: f64, gamma: f64, alpha: f64) -> Result<Self> {
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::InvalidArgument(format!("rho must be >= 0, got {rho}")));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {gamma}")));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(SensitivityPair { rho, gamma, alpha })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum VarianceMethod {
    #[default]
    #[serde(rename = "eif-sample-variance")]
    EifSampleVariance,
    #[serde(rename = "bootstrap")]
    Bootstrap,
}

/// Closed interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn centered(center: f64, half_width: f64) -> Interval {
        Interval {
            lo: center - half_width,
            hi: center + half_width,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Lower and upper treatment-effect bound estimates.
///
/// `var_lb`/`var_ub` are sampling variances of the bias-corrected
/// estimates, so each confidence interval is `theta_bc ± z * sqrt(var)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEstimate {
    pub theta_lb_plugin: f64,
    pub theta_ub_plugin: f64,
    pub theta_lb_bc: f64,
    pub theta_ub_bc: f64,
    pub var_lb: f64,
    pub var_ub: f64,
    pub ci_lb: Interval,
    pub ci_ub: Interval,
    pub confidence: f64,
    pub n_effective: usize,
    pub variance_method: VarianceMethod,
    /// Units where the smooth lower bound exceeds the smooth upper bound for
    /// at least one treatment arm.
    pub ordering_violations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Conclusive,
    Tentative,
    Inconclusive,
    Incompatible,
}

impl Region {
    pub const ALL: [Region; 4] = [
        Region::Conclusive,
        Region::Tentative,
        Region::Inconclusive,
        Region::Incompatible,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Conclusive => "Conclusive",
            Region::Tentative => "Tentative",
            Region::Inconclusive => "Inconclusive",
            Region::Incompatible => "Incompatible",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One `(rho, gamma)` point of a breakdown frontier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierCell {
    pub rho: f64,
    pub gamma: f64,
    pub region: Region,
    pub bound: Option<BoundEstimate>,
    pub p_compat_t0: f64,
    pub p_compat_t1: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(d: usize) -> Vec<String> {
        (1..=d).map(|i| format!("x{i}")).collect()
    }

    fn four_rows() -> Vec<Vec<f64>> {
        vec![
            vec![0.1, 0.0, 0.0, 1.0],
            vec![0.2, 0.0, 1.0, 2.0],
            vec![0.3, 1.0, 0.0, 3.0],
            vec![0.4, 1.0, 1.0, 4.0],
        ]
    }

    #[test]
    fn minimal_valid_dataset() {
        let ds = validate_dataset(&four_rows(), &Schema::standard(&names(1))).unwrap();
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.n_exp(), 2);
        assert_eq!(ds.n_obs(), 2);
        assert_eq!(ds.cell_counts(), [[1, 1], [1, 1]]);
    }

    #[test]
    fn negative_outcome_rejected() {
        let mut rows = four_rows();
        rows[2][3] = -1.0;
        let err = validate_dataset(&rows, &Schema::standard(&names(1))).unwrap_err();
        assert!(matches!(err, Error::NonPositiveOutcome { row: 2, .. }));
    }

    #[test]
    fn negative_outcome_shifted_when_enabled() {
        let mut rows = four_rows();
        rows[2][3] = -1.0;
        let schema = Schema::standard(&names(1)).with_policy(OutcomePolicy::Shift { margin: 1.0 });
        let ds = validate_dataset(&rows, &schema).unwrap();
        let ys: Vec<f64> = ds.units().iter().map(|u| u.y).collect();
        assert_eq!(ys, vec![3.0, 4.0, 1.0, 6.0]);
        assert_eq!(ds.outcome_offset(), 2.0);
    }

    #[test]
    fn missing_cell_rejected() {
        let mut rows = four_rows();
        rows[2][2] = 1.0; // the only (s=1, t=0) unit becomes (1, 1)
        let err = validate_dataset(&rows, &Schema::standard(&names(1))).unwrap_err();
        assert!(matches!(err, Error::EmptyCell { s: 1, t: 0 }));
    }

    #[test]
    fn ragged_rows_rejected() {
        let mut rows = four_rows();
        rows[1].push(9.0);
        let err = validate_dataset(&rows, &Schema::standard(&names(1))).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                row: 1,
                expected: 4,
                found: 5
            }
        ));
    }

    #[test]
    fn non_binary_indicator_rejected() {
        let mut rows = four_rows();
        rows[0][1] = 0.5;
        let err = validate_dataset(&rows, &Schema::standard(&names(1))).unwrap_err();
        assert!(matches!(err, Error::InvalidIndicator { .. }));
    }

    #[test]
    fn header_mapping() {
        let header: Vec<String> = ["y", "age", "t", "s", "male"].iter().map(|s| s.to_string()).collect();
        let schema = Schema::from_header(&header, &ColumnMapping::default()).unwrap();
        assert_eq!(schema.covariates, vec![1, 4]);
        assert_eq!(schema.covariate_names, vec!["age", "male"]);
        assert_eq!((schema.s, schema.t, schema.y), (3, 2, 0));
        let bad = ColumnMapping {
            y: "score".into(),
            ..Default::default()
        };
        assert!(matches!(Schema::from_header(&header, &bad), Err(Error::UnknownColumn(_))));
    }

    fn shifted(ys: &[f64], margin: f64) -> Result<(Vec<f64>, f64)> {
        let units = ys
            .iter()
            .map(|&y| Unit {
                x: vec![0.0],
                s: 0,
                t: 0,
                y,
            })
            .collect();
        let (ds, off) = shift_outcomes(Dataset::unchecked(units, names(1)), margin)?;
        Ok((ds.units().iter().map(|u| u.y).collect(), off))
    }

    #[test]
    fn shift_examples() {
        assert_eq!(shifted(&[-2.0, 0.0, 3.0], 1.0).unwrap(), (vec![1.0, 3.0, 6.0], 3.0));
        assert_eq!(shifted(&[5.0], 1.0).unwrap(), (vec![1.0], -4.0));
        assert!(matches!(shifted(&[1.0, 2.0], 0.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn derived_probabilities_are_complements() {
        let row = NuisanceRow {
            g1: 0.3,
            e1_s0: 0.7,
            e1_s1: 0.5,
            mu: [[1.0, 2.0], [3.0, 4.0]],
        };
        assert_eq!(row.g(0) + row.g(1), 1.0);
        assert_eq!(row.e(0, 0) + row.e(1, 0), 1.0);
        assert_eq!(row.e(0, 1) + row.e(1, 1), 1.0);
        assert_eq!(row.mu(1, 0), 3.0);
    }

    #[test]
    fn sensitivity_pair_validation() {
        assert!(SensitivityPair::new(0.1, 0.2, 10.0).is_ok());
        assert!(SensitivityPair::new(-0.1, 0.2, 10.0).is_err());
        assert!(SensitivityPair::new(0.1, -0.2, 10.0).is_err());
        assert!(SensitivityPair::new(0.1, 0.2, 0.0).is_err());
        assert!(SensitivityPair::new(0.1, 0.2, f64::INFINITY).is_err());
    }

    fn arb_rows() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..4, 0usize..12).prop_flat_map(|(d, extra)| {
            let row = move |s: u8, t: u8| {
                (prop::collection::vec(-50.0f64..50.0, d), 0.01f64..500.0).prop_map(move |(mut x, y)| {
                    x.extend([s as f64, t as f64, y]);
                    x
                })
            };
            let base = (row(0, 0), row(0, 1), row(1, 0), row(1, 1));
            let rest = prop::collection::vec(
                (0u8..2, 0u8..2).prop_flat_map(move |(s, t)| row(s, t)),
                extra,
            );
            (base, rest).prop_map(|((a, b, c, e), rest)| {
                let mut rows = vec![a, b, c, e];
                rows.extend(rest);
                rows
            })
        })
    }

    proptest! {
        #[test]
        fn validation_is_idempotent(rows in arb_rows()) {
            let d = rows[0].len() - 3;
            let ds = validate_dataset(&rows, &Schema::standard(&names(d))).unwrap();
            let again = validate_dataset(&ds.to_rows(), &ds.schema()).unwrap();
            prop_assert_eq!(&again, &ds);
            prop_assert_eq!(again.fingerprint(), ds.fingerprint());
        }

        #[test]
        fn shift_pins_minimum_to_margin(ys in prop::collection::vec(-1e3f64..1e3, 1..40), margin in 1e-3f64..10.0) {
            let (out, _) = shifted(&ys, margin).unwrap();
            let min = out.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(min, margin);
            prop_assert!(out.iter().all(|&y| y > 0.0));
        }
    }
}
