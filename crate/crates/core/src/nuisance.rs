//! Nuisance models and k-fold cross-fitting.
//!
//! Study selection `P(S=1|x)` and treatment propensities `P(T=1|x,S=s)` are
//! L2-penalized logistic regressions fitted by IRLS; outcome regressions
//! `E[Y|x,s,t]` are ridge regressions with an unpenalized intercept. Each
//! penalty is picked by an inner cross-validation inside the training split.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, ModelSummary, NuisanceEstimates};
use crate::rng;
use crate::stats::expit;

pub const DEFAULT_L2_GRID: [f64; 4] = [1e-4, 1e-2, 1.0, 1e2];
pub const DEFAULT_CLIP_EPSILON: f64 = 0.01;

const IRLS_MAX_ITER: usize = 100;
const IRLS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Intercept first.
    pub coefficients: Vec<f64>,
    pub l2_penalty: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticModel {
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        expit(self.linear_predictor(x))
    }

    /// Probability clipped to `[eps, 1 - eps]`.
    pub fn predict(&self, x: &[f64], eps: f64) -> f64 {
        self.predict_proba(x).clamp(eps, 1.0 - eps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    /// Intercept first.
    pub coefficients: Vec<f64>,
    pub l2_penalty: f64,
}

impl RidgeModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }
}

fn check_shape(features: &[&[f64]], n_targets: usize) -> Result<usize> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("need at least one row".into()));
    }
    if features.len() != n_targets {
        return Err(Error::InvalidArgument(format!(
            "{} feature rows but {} targets",
            features.len(),
            n_targets
        )));
    }
    let d = features[0].len();
    if let Some(row) = features.iter().position(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            row,
            expected: d,
            found: features[row].len(),
        });
    }
    Ok(d)
}

/// Cholesky solve that refuses numerically singular systems.
fn spd_solve(a: DMatrix<f64>, b: DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let scale = (0..a.nrows()).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::SingularSystem(what.to_string()))?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::SingularSystem(what.to_string()));
    }
    Ok(chol.solve(&b))
}

/// L2-penalized logistic regression by iteratively reweighted least squares.
///
/// Maximizes `sum_i log p(y_i | x_i) - l2/2 * |beta|^2` with the intercept
/// left unpenalized. Stops when the largest coefficient update falls below
/// 1e-8 or after 100 Newton steps. Constant labels have no finite MLE for
/// the intercept; they get zero slopes and the add-half smoothed logit of
/// the label rate.
pub fn fit_logistic(features: &[&[f64]], labels: &[u8], l2: f64) -> Result<LogisticModel> {
    let d = check_shape(features, labels.len())?;
    if !(l2 >= 0.0) {
        return Err(Error::InvalidArgument(format!("l2 must be >= 0, got {l2}")));
    }
    let n = labels.len();
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == n {
        let rate = (ones as f64 + 0.5) / (n as f64 + 1.0);
        let mut coefficients = vec![0.0; d + 1];
        coefficients[0] = (rate / (1.0 - rate)).ln();
        return Ok(LogisticModel {
            coefficients,
            l2_penalty: l2,
            converged: true,
            iterations: 0,
        });
    }

    let p = d + 1;
    let mut beta = DVector::<f64>::zeros(p);
    let mut converged = false;
    let mut iterations = 0;
    let mut design = vec![0.0; p];
    while iterations < IRLS_MAX_ITER {
        iterations += 1;
        let mut hess = DMatrix::<f64>::zeros(p, p);
        let mut grad = DVector::<f64>::zeros(p);
        for (row, &label) in features.iter().zip(labels) {
            design[0] = 1.0;
            design[1..].copy_from_slice(row);
            let eta: f64 = design.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            let prob = expit(eta);
            let weight = (prob * (1.0 - prob)).max(1e-10);
            let resid = label as f64 - prob;
            for a in 0..p {
                grad[a] += design[a] * resid;
                let wa = weight * design[a];
                for b in 0..=a {
                    hess[(a, b)] += wa * design[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        for a in 1..p {
            hess[(a, a)] += l2;
            grad[a] -= l2 * beta[a];
        }
        let step = spd_solve(hess, grad, "logistic IRLS")?;
        beta += &step;
        if step.amax() < IRLS_TOL {
            converged = true;
            break;
        }
    }
    Ok(LogisticModel {
        coefficients: beta.iter().copied().collect(),
        l2_penalty: l2,
        converged,
        iterations,
    })
}

/// Ridge regression with an unpenalized intercept, solved through the
/// centered normal equations.
pub fn fit_ridge(features: &[&[f64]], targets: &[f64], l2: f64) -> Result<RidgeModel> {
    let d = check_shape(features, targets.len())?;
    if !(l2 >= 0.0) {
        return Err(Error::InvalidArgument(format!("l2 must be >= 0, got {l2}")));
    }
    let n = targets.len() as f64;
    let mut x_mean = vec![0.0; d];
    for row in features {
        for (m, v) in x_mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= n);
    let y_mean = targets.iter().sum::<f64>() / n;

    let mut slopes = vec![0.0; d];
    if d > 0 {
        let mut gram = DMatrix::<f64>::zeros(d, d);
        let mut rhs = DVector::<f64>::zeros(d);
        let mut centered = vec![0.0; d];
        for (row, &y) in features.iter().zip(targets) {
            for j in 0..d {
                centered[j] = row[j] - x_mean[j];
            }
            let yc = y - y_mean;
            for a in 0..d {
                rhs[a] += centered[a] * yc;
                for b in 0..=a {
                    gram[(a, b)] += centered[a] * centered[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                gram[(b, a)] = gram[(a, b)];
            }
            gram[(a, a)] += l2;
        }
        slopes = spd_solve(gram, rhs, "ridge normal equations")?
            .iter()
            .copied()
            .collect();
    }
    let intercept = y_mean - slopes.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
    let mut coefficients = Vec::with_capacity(d + 1);
    coefficients.push(intercept);
    coefficients.extend(slopes);
    Ok(RidgeModel {
        coefficients,
        l2_penalty: l2,
    })
}

/// Which model family a penalty search is for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyTarget<'a> {
    /// Log loss of clipped probabilities.
    Logistic { labels: &'a [u8], clip_epsilon: f64 },
    /// Squared error.
    Ridge { targets: &'a [f64] },
}

impl PenaltyTarget<'_> {
    fn len(&self) -> usize {
        match self {
            PenaltyTarget::Logistic { labels, .. } => labels.len(),
            PenaltyTarget::Ridge { targets } => targets.len(),
        }
    }
}

fn contiguous_folds(n: usize, folds: usize, seed: u64, purpose: &str) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream(seed, purpose, 0), &mut order);
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos * folds / n;
    }
    assignment
}

/// Mean held-out loss for every candidate penalty. A candidate whose fit is
/// singular on some split scores `+inf`.
pub fn cv_losses(
    features: &[&[f64]],
    target: PenaltyTarget<'_>,
    candidates: &[f64],
    folds: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_shape(features, target.len())?;
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    let n = features.len();
    if n < folds {
        return Err(Error::InvalidArgument(format!("{n} rows cannot fill {folds} folds")));
    }
    let assignment = contiguous_folds(n, folds, seed, "penalty-cv");
    let mut losses = Vec::with_capacity(candidates.len());
    for &l2 in candidates {
        let mut fold_means = Vec::with_capacity(folds);
        for f in 0..folds {
            let train: Vec<usize> = (0..n).filter(|&i| assignment[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| assignment[i] == f).collect();
            let xs: Vec<&[f64]> = train.iter().map(|&i| features[i]).collect();
            let loss = match target {
                PenaltyTarget::Logistic {
                    labels,
                    clip_epsilon,
                } => {
                    let ys: Vec<u8> = train.iter().map(|&i| labels[i]).collect();
                    match fit_logistic(&xs, &ys, l2) {
                        Ok(m) => {
                            test.iter()
                                .map(|&i| {
                                    let p = m.predict(features[i], clip_epsilon);
                                    if labels[i] == 1 {
                                        -p.ln()
                                    } else {
                                        -(1.0 - p).ln()
                                    }
                                })
                                .sum::<f64>()
                                / test.len() as f64
                        }
                        Err(Error::SingularSystem(_)) => f64::INFINITY,
                        Err(e) => return Err(e),
                    }
                }
                PenaltyTarget::Ridge { targets } => {
                    let ys: Vec<f64> = train.iter().map(|&i| targets[i]).collect();
                    match fit_ridge(&xs, &ys, l2) {
                        Ok(m) => {
                            test.iter()
                                .map(|&i| (targets[i] - m.predict(features[i])).powi(2))
                                .sum::<f64>()
                                / test.len() as f64
                        }
                        Err(Error::SingularSystem(_)) => f64::INFINITY,
                        Err(e) => return Err(e),
                    }
                }
            };
            fold_means.push(loss);
        }
        losses.push(fold_means.iter().sum::<f64>() / folds as f64);
    }
    Ok(losses)
}

/// Picks the candidate penalty with the smallest mean held-out loss; exact
/// ties go to the larger penalty. With fewer rows than folds no split is
/// possible and the largest candidate is returned.
pub fn select_penalty(
    features: &[&[f64]],
    target: PenaltyTarget<'_>,
    candidates: &[f64],
    folds: usize,
    seed: u64,
) -> Result<f64> {
    if candidates.len() < 2 {
        return Err(Error::InvalidArgument("need at least two candidate penalties".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    if features.len() < folds {
        return Ok(*sorted.last().unwrap());
    }
    let losses = cv_losses(features, target, &sorted, folds, seed)?;
    let mut best = 0;
    for (i, &loss) in losses.iter().enumerate() {
        if loss <= losses[best] {
            best = i;
        }
    }
    Ok(sorted[best])
}

/// Fold assignment for cross-fitting.
///
/// Units are grouped by `(s, t)` cell, each cell is shuffled with a seeded
/// stream, and the concatenation is dealt round-robin into `k` folds, so
/// every cell is spread evenly and fold sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossFitPlan {
    pub k: usize,
    pub fold_assignment: Vec<usize>,
    pub seed: u64,
}

impl CrossFitPlan {
    pub fn new(dataset: &Dataset, k: usize, seed: u64) -> Result<CrossFitPlan> {
        let n = dataset.n();
        if k < 2 || k > n {
            return Err(Error::InvalidArgument(format!("fold count {k} must lie in [2, {n}]")));
        }
        let mut order = Vec::with_capacity(n);
        for s in 0..2u8 {
            for t in 0..2u8 {
                let mut cell: Vec<usize> = dataset
                    .units()
                    .iter()
                    .enumerate()
                    .filter(|(_, u)| u.s == s && u.t == t)
                    .map(|(i, _)| i)
                    .collect();
                let mut stream = rng::stream(seed, "fold-plan", u64::from(2 * s + t));
                rng::shuffle(&mut stream, &mut cell);
                order.extend(cell);
            }
        }
        let mut fold_assignment = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            fold_assignment[i] = pos % k;
        }
        Ok(CrossFitPlan {
            k,
            fold_assignment,
            seed,
        })
    }

    pub fn held_out(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_assignment.len())
            .filter(|&i| self.fold_assignment[i] == fold)
            .collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_assignment.len())
            .filter(|&i| self.fold_assignment[i] != fold)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossFitConfig {
    pub k: usize,
    pub seed: u64,
    pub l2_grid: Vec<f64>,
    /// Folds of the inner penalty search.
    pub cv_folds: usize,
    pub clip_epsilon: f64,
    /// Fixes `P(T=1|x,S=1)` to a known design probability instead of
    /// estimating it.
    pub known_exp_propensity: Option<f64>,
}

impl Default for CrossFitConfig {
    fn default() -> Self {
        CrossFitConfig {
            k: 2,
            seed: 0,
            l2_grid: DEFAULT_L2_GRID.to_vec(),
            cv_folds: 3,
            clip_epsilon: DEFAULT_CLIP_EPSILON,
            known_exp_propensity: None,
        }
    }
}

struct FoldFit {
    held_out: Vec<usize>,
    g1: Vec<f64>,
    e1: [Vec<f64>; 2],
    mu: [[Vec<f64>; 2]; 2],
    models: Vec<ModelSummary>,
}

fn choose_l2(
    cfg: &CrossFitConfig,
    features: &[&[f64]],
    target: PenaltyTarget<'_>,
    fold: usize,
    model_id: u64,
) -> Result<f64> {
    if cfg.l2_grid.len() == 1 {
        return Ok(cfg.l2_grid[0]);
    }
    let seed = rng::derive_seed(cfg.seed, "penalty", fold as u64 * 16 + model_id);
    select_penalty(features, target, &cfg.l2_grid, cfg.cv_folds, seed)
}

fn fit_fold(dataset: &Dataset, plan: &CrossFitPlan, cfg: &CrossFitConfig, fold: usize) -> Result<FoldFit> {
    let units = dataset.units();
    let train = plan.training(fold);
    let held_out = plan.held_out(fold);
    for s in 0..2u8 {
        for t in 0..2u8 {
            if !train.iter().any(|&i| units[i].s == s && units[i].t == t) {
                return Err(Error::EmptyTrainingCell { fold, s, t });
            }
        }
    }
    let eps = cfg.clip_epsilon;
    let mut models = Vec::new();
    let summary = |target: &str, m: &LogisticModel| ModelSummary {
        fold,
        target: target.to_string(),
        l2: m.l2_penalty,
        coefficients: m.coefficients.clone(),
        converged: m.converged,
        iterations: m.iterations,
    };

    // Study selection.
    let xs: Vec<&[f64]> = train.iter().map(|&i| units[i].x.as_slice()).collect();
    let labels: Vec<u8> = train.iter().map(|&i| units[i].s).collect();
    let target = PenaltyTarget::Logistic {
        labels: &labels,
        clip_epsilon: eps,
    };
    let l2 = choose_l2(cfg, &xs, target, fold, 0)?;
    let g_model = fit_logistic(&xs, &labels, l2)?;
    models.push(summary("g1", &g_model));
    let g1 = held_out.iter().map(|&i| g_model.predict(&units[i].x, eps)).collect();

    // Treatment propensity within each study.
    let mut e1: [Vec<f64>; 2] = Default::default();
    for s in 0..2u8 {
        if s == 1 {
            if let Some(p) = cfg.known_exp_propensity {
                e1[1] = vec![p.clamp(eps, 1.0 - eps); held_out.len()];
                continue;
            }
        }
        let rows: Vec<usize> = train.iter().copied().filter(|&i| units[i].s == s).collect();
        let xs: Vec<&[f64]> = rows.iter().map(|&i| units[i].x.as_slice()).collect();
        let labels: Vec<u8> = rows.iter().map(|&i| units[i].t).collect();
        let target = PenaltyTarget::Logistic {
            labels: &labels,
            clip_epsilon: eps,
        };
        let l2 = choose_l2(cfg, &xs, target, fold, 1 + u64::from(s))?;
        let m = fit_logistic(&xs, &labels, l2)?;
        models.push(summary(&format!("e1_s{s}"), &m));
        e1[s as usize] = held_out.iter().map(|&i| m.predict(&units[i].x, eps)).collect();
    }

    // Outcome regressions in each (s, t) cell, predicted for every held-out unit.
    let mut mu: [[Vec<f64>; 2]; 2] = Default::default();
    for s in 0..2u8 {
        for t in 0..2u8 {
            let rows: Vec<usize> = train
                .iter()
                .copied()
                .filter(|&i| units[i].s == s && units[i].t == t)
                .collect();
            let xs: Vec<&[f64]> = rows.iter().map(|&i| units[i].x.as_slice()).collect();
            let ys: Vec<f64> = rows.iter().map(|&i| units[i].y).collect();
            let l2 = choose_l2(cfg, &xs, PenaltyTarget::Ridge { targets: &ys }, fold, 3 + u64::from(2 * s + t))?;
            let m = fit_ridge(&xs, &ys, l2)?;
            models.push(ModelSummary {
                fold,
                target: format!("mu_s{s}_t{t}"),
                l2,
                coefficients: m.coefficients.clone(),
                converged: true,
                iterations: 1,
            });
            mu[s as usize][t as usize] = held_out.iter().map(|&i| m.predict(&units[i].x)).collect();
        }
    }

    Ok(FoldFit {
        held_out,
        g1,
        e1,
        mu,
        models,
    })
}

/// Cross-fitted nuisance estimates: every unit's predictions come from
/// models trained on the other folds only.
pub fn cross_fit(dataset: &Dataset, cfg: &CrossFitConfig) -> Result<NuisanceEstimates> {
    if cfg.l2_grid.is_empty() || cfg.l2_grid.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::InvalidArgument("penalty grid must be nonempty and nonnegative".into()));
    }
    if !(cfg.clip_epsilon > 0.0 && cfg.clip_epsilon < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "clip epsilon must lie in (0, 0.5), got {}",
            cfg.clip_epsilon
        )));
    }
    if let Some(p) = cfg.known_exp_propensity {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "known experimental propensity must lie in (0, 1), got {p}"
            )));
        }
    }
    let plan = CrossFitPlan::new(dataset, cfg.k, cfg.seed)?;
    let fits: Vec<FoldFit> = (0..plan.k)
        .into_par_iter()
        .map(|j| fit_fold(dataset, &plan, cfg, j))
        .collect::<Result<_>>()?;

    let n = dataset.n();
    let mut est = NuisanceEstimates {
        g1: vec![0.0; n],
        e1_s0: vec![0.0; n],
        e1_s1: vec![0.0; n],
        mu: Default::default(),
        fold_id: plan.fold_assignment.clone(),
        clip_epsilon: cfg.clip_epsilon,
        models: Vec::new(),
    };
    for s in 0..2 {
        for t in 0..2 {
            est.mu[s][t] = vec![0.0; n];
        }
    }
    for fit in fits {
        for (pos, &i) in fit.held_out.iter().enumerate() {
            est.g1[i] = fit.g1[pos];
            est.e1_s0[i] = fit.e1[0][pos];
            est.e1_s1[i] = fit.e1[1][pos];
            for s in 0..2 {
                for t in 0..2 {
                    est.mu[s][t][i] = fit.mu[s][t][pos];
                }
            }
        }
        est.models.extend(fit.models);
    }
    Ok(est)
}
