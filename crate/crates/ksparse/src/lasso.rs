//! L1-regularized weighted least squares baseline: a covariance-updating
//! coordinate-descent solver with active-set cycling, warm-started lambda
//! paths, lambda selection by cross validation (minimum and one-standard-
//! error rule), and a lambda-scan that re-scores every distinct support the
//! path visits under the exact criteria after a debiasing refit.
//!
//! The solver minimizes `(1/2)(y - X b)^T W (y - X b) + lambda ||b||_1`
//! with `W = diag(1/sigma^2)` and expects data standardized beforehand
//! (`y` zero mean and unit variance, design columns centered) so no
//! intercept appears.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::criteria::{
    cross_validation_error, fit_wls, free_energy, CriteriaConfig, FoldAssignment, WlsFit,
};
use crate::data::{Dataset, SupportSet};
use crate::error::{Error, Result};

/// Grid construction and solver tolerances for a lambda path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    pub n_lambdas: usize,
    pub lambda_min_ratio: f64,
    /// Convergence threshold on the largest coefficient change in one pass.
    pub tol: f64,
    /// Cap on coordinate-descent passes per lambda.
    pub max_iter: usize,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            n_lambdas: 100,
            lambda_min_ratio: 1e-4,
            tol: 1e-9,
            max_iter: 100_000,
        }
    }
}

impl PathConfig {
    fn validate(&self) -> Result<()> {
        if self.n_lambdas < 2 {
            return Err(Error::Validation("lambda grid needs at least 2 points".into()));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::Validation(format!(
                "lambda_min_ratio must lie in (0, 1), got {}",
                self.lambda_min_ratio
            )));
        }
        Ok(())
    }
}

/// Weighted design shared by every solve on the same rows: correlations
/// `q = X^T W y`, diagonal Gram entries, and lazily cached Gram columns for
/// the covariance-style coordinate updates.
struct CdProblem<'a> {
    d: &'a Dataset,
    rows: Vec<usize>,
    q: Vec<f64>,
    gram_diag: Vec<f64>,
    gram_cols: Vec<Option<Vec<f64>>>,
}

impl<'a> CdProblem<'a> {
    fn new(d: &'a Dataset) -> Self {
        Self::on_rows(d, (0..d.p()).collect())
    }

    fn on_rows(d: &'a Dataset, rows: Vec<usize>) -> Self {
        let n = d.n();
        let mut q = vec![0.0; n];
        let mut gram_diag = vec![0.0; n];
        for &mu in &rows {
            let w = d.weight(mu);
            let y = d.y()[mu];
            for j in 0..n {
                let x = d.x()[(mu, j)];
                q[j] += w * x * y;
                gram_diag[j] += w * x * x;
            }
        }
        CdProblem {
            d,
            rows,
            q,
            gram_diag,
            gram_cols: vec![None; n],
        }
    }

    fn gram_column(&mut self, j: usize) -> &[f64] {
        if self.gram_cols[j].is_none() {
            let n = self.d.n();
            let mut col = vec![0.0; n];
            for &mu in &self.rows {
                let wx = self.d.weight(mu) * self.d.x()[(mu, j)];
                for l in 0..n {
                    col[l] += wx * self.d.x()[(mu, l)];
                }
            }
            self.gram_cols[j] = Some(col);
        }
        self.gram_cols[j].as_ref().unwrap()
    }

    /// One coordinate-descent solve. `beta` and `corr` are the running
    /// state: `corr[j] = q[j] - (G beta)[j]`, kept consistent across calls
    /// for warm starts.
    fn solve(
        &mut self,
        lambda: f64,
        beta: &mut [f64],
        corr: &mut [f64],
        cfg: &PathConfig,
    ) -> Result<()> {
        let n = beta.len();
        for pass in 0..cfg.max_iter {
            // Full pass over every coordinate.
            let mut max_change = 0.0f64;
            for j in 0..n {
                max_change = max_change.max(self.update_coord(j, lambda, beta, corr));
            }
            if max_change < cfg.tol {
                return Ok(());
            }
            // Cycle the active set until it stabilizes, then re-check all.
            let active: Vec<usize> = (0..n).filter(|&j| beta[j] != 0.0).collect();
            for _ in pass..cfg.max_iter {
                let mut change = 0.0f64;
                for &j in &active {
                    change = change.max(self.update_coord(j, lambda, beta, corr));
                }
                if change < cfg.tol {
                    break;
                }
            }
        }
        let gap = kkt_violation_with(self.d, &self.rows, beta, lambda);
        Err(Error::NonConvergence {
            context: format!("coordinate descent at lambda {lambda:.6e}"),
            iterations: cfg.max_iter,
            residual: gap,
            trace: vec![gap],
        })
    }

    fn update_coord(&mut self, j: usize, lambda: f64, beta: &mut [f64], corr: &mut [f64]) -> f64 {
        let gjj = self.gram_diag[j];
        if gjj <= 0.0 {
            return 0.0;
        }
        let rho = corr[j] + gjj * beta[j];
        let new = soft_threshold(rho, lambda) / gjj;
        let delta = new - beta[j];
        if delta != 0.0 {
            let col = self.gram_column(j);
            for (c, g) in corr.iter_mut().zip(col) {
                *c -= g * delta;
            }
            beta[j] = new;
        }
        delta.abs()
    }
}

fn soft_threshold(v: f64, lambda: f64) -> f64 {
    if v > lambda {
        v - lambda
    } else if v < -lambda {
        v + lambda
    } else {
        0.0
    }
}

/// Smallest lambda at which the solution is identically zero:
/// `max_j |x_j^T W y|`.
pub fn lambda_max(d: &Dataset) -> f64 {
    let problem = CdProblem::new(d);
    problem.q.iter().fold(0.0, |acc, q| acc.max(q.abs()))
}

/// Solve one lasso problem, optionally warm-started.
pub fn coordinate_descent(
    d: &Dataset,
    lambda: f64,
    warm_start: Option<&[f64]>,
    cfg: &PathConfig,
) -> Result<Vec<f64>> {
    if lambda < 0.0 {
        return Err(Error::Validation(format!("lambda must be nonnegative, got {lambda}")));
    }
    let n = d.n();
    let mut problem = CdProblem::new(d);
    let mut beta = match warm_start {
        Some(b) if b.len() == n => b.to_vec(),
        Some(b) => {
            return Err(Error::Validation(format!(
                "warm start has {} coefficients for {n} variables",
                b.len()
            )))
        }
        None => vec![0.0; n],
    };
    let mut corr = problem.q.clone();
    for j in 0..n {
        if beta[j] != 0.0 {
            let col = problem.gram_column(j).to_vec();
            for (c, g) in corr.iter_mut().zip(&col) {
                *c -= g * beta[j];
            }
        }
    }
    problem.solve(lambda, &mut beta, &mut corr, cfg)?;
    Ok(beta)
}

/// Largest violation of the subgradient optimality conditions at `beta`:
/// zero coefficients need `|x_j^T W r| <= lambda`, active ones need
/// `x_j^T W r = lambda sign(beta_j)`.
pub fn kkt_violation(d: &Dataset, beta: &[f64], lambda: f64) -> f64 {
    kkt_violation_with(d, &(0..d.p()).collect::<Vec<_>>(), beta, lambda)
}

fn kkt_violation_with(d: &Dataset, rows: &[usize], beta: &[f64], lambda: f64) -> f64 {
    let n = d.n();
    let mut worst = 0.0f64;
    for j in 0..n {
        let mut grad = 0.0;
        for &mu in rows {
            let mut pred = 0.0;
            for (l, &b) in beta.iter().enumerate() {
                if b != 0.0 {
                    pred += d.x()[(mu, l)] * b;
                }
            }
            grad += d.weight(mu) * d.x()[(mu, j)] * (d.y()[mu] - pred);
        }
        let v = if beta[j] == 0.0 {
            (grad.abs() - lambda).max(0.0)
        } else {
            (grad - lambda * beta[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Objective value `(1/2) r^T W r + lambda ||beta||_1`.
pub fn lasso_objective(d: &Dataset, beta: &[f64], lambda: f64) -> f64 {
    let mut quad = 0.0;
    for mu in 0..d.p() {
        let mut pred = 0.0;
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                pred += d.x()[(mu, j)] * b;
            }
        }
        let r = d.y()[mu] - pred;
        quad += d.weight(mu) * r * r;
    }
    0.5 * quad + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// A warm-started solve along a descending lambda grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    /// Strictly descending; the first entry is `lambda_max`.
    pub lambdas: Vec<f64>,
    /// Coefficient vector per lambda.
    pub coefficients: Vec<Vec<f64>>,
    /// Support per lambda; `None` marks the empty support.
    pub supports: Vec<Option<SupportSet>>,
    /// Deduplicated supports in order of first appearance, each with the
    /// largest lambda that produced it.
    pub distinct_supports: Vec<(Option<SupportSet>, f64)>,
}

impl LassoPath {
    pub fn support_at(&self, lambda: f64) -> Option<&Option<SupportSet>> {
        self.lambdas
            .iter()
            .position(|&l| l == lambda)
            .map(|i| &self.supports[i])
    }
}

fn support_of(beta: &[f64]) -> Option<SupportSet> {
    let indices: Vec<usize> = beta
        .iter()
        .enumerate()
        .filter_map(|(j, &b)| (b != 0.0).then_some(j))
        .collect();
    if indices.is_empty() {
        None
    } else {
        Some(SupportSet::from_sorted(indices))
    }
}

fn lambda_grid(top: f64, cfg: &PathConfig) -> Vec<f64> {
    let lo = top * cfg.lambda_min_ratio;
    let step = (lo.ln() - top.ln()) / (cfg.n_lambdas - 1) as f64;
    (0..cfg.n_lambdas)
        .map(|i| (top.ln() + step * i as f64).exp())
        .collect()
}

/// Fit the full lasso path on `d` (standardized data).
pub fn lambda_path(d: &Dataset, cfg: &PathConfig) -> Result<LassoPath> {
    cfg.validate()?;
    let top = lambda_max(d);
    if !(top > 0.0 && top.is_finite()) {
        return Err(Error::Numeric(format!("degenerate lambda_max = {top}")));
    }
    let lambdas = lambda_grid(top, cfg);
    let mut problem = CdProblem::new(d);
    let mut beta = vec![0.0; d.n()];
    let mut corr = problem.q.clone();
    let mut coefficients = Vec::with_capacity(lambdas.len());
    let mut supports = Vec::with_capacity(lambdas.len());
    let mut distinct: Vec<(Option<SupportSet>, f64)> = Vec::new();
    for &lambda in &lambdas {
        problem.solve(lambda, &mut beta, &mut corr, cfg)?;
        let support = support_of(&beta);
        if !distinct.iter().any(|(s, _)| *s == support) {
            distinct.push((support.clone(), lambda));
        }
        coefficients.push(beta.clone());
        supports.push(support);
    }
    Ok(LassoPath {
        lambdas,
        coefficients,
        supports,
        distinct_supports: distinct,
    })
}

/// Cross-validated lambda selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub lambdas: Vec<f64>,
    /// Mean held-out weighted error per lambda, on the shrunk predictor.
    pub cve_mean: Vec<f64>,
    /// Standard error over folds per lambda.
    pub cve_se: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_1se: f64,
    pub support_min: Option<SupportSet>,
    pub support_1se: Option<SupportSet>,
}

/// Pick lambda by M-fold cross validation: the CVE minimizer and the
/// largest lambda within one standard error of it. The per-lambda CVE is
/// evaluated on the lasso predictor itself (no debiasing), refit on each
/// training fold along the shared grid.
pub fn lambda_optimize(
    d: &Dataset,
    folds: &FoldAssignment,
    cfg: &PathConfig,
) -> Result<LambdaChoice> {
    cfg.validate()?;
    let full = lambda_path(d, cfg)?;
    let lambdas = full.lambdas.clone();
    let m = folds.m();
    let mut fold_cve = vec![vec![0.0f64; lambdas.len()]; m];
    for fold in 0..m {
        let held = folds.fold_members(fold);
        let train: Vec<usize> = (0..d.p()).filter(|i| !held.contains(i)).collect();
        if train.is_empty() {
            return Err(Error::Validation(format!("fold {fold} leaves no training data")));
        }
        let mut problem = CdProblem::on_rows(d, train);
        let mut beta = vec![0.0; d.n()];
        let mut corr = problem.q.clone();
        for (li, &lambda) in lambdas.iter().enumerate() {
            problem.solve(lambda, &mut beta, &mut corr, cfg).map_err(|e| match e {
                Error::NonConvergence { iterations, residual, trace, .. } => Error::NonConvergence {
                    context: format!("lasso fit for fold {fold} at lambda {lambda:.6e}"),
                    iterations,
                    residual,
                    trace,
                },
                other => other,
            })?;
            let mut num = 0.0;
            let mut den = 0.0;
            for &mu in &held {
                let w = d.weight(mu);
                let mut pred = 0.0;
                for (j, &b) in beta.iter().enumerate() {
                    if b != 0.0 {
                        pred += d.x()[(mu, j)] * b;
                    }
                }
                let r = d.y()[mu] - pred;
                num += w * r * r;
                den += w;
            }
            fold_cve[fold][li] = num / den;
        }
    }
    let mut cve_mean = Vec::with_capacity(lambdas.len());
    let mut cve_se = Vec::with_capacity(lambdas.len());
    for li in 0..lambdas.len() {
        let vals: Vec<f64> = (0..m).map(|f| fold_cve[f][li]).collect();
        let mean = vals.iter().sum::<f64>() / m as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        cve_mean.push(mean);
        cve_se.push((var / m as f64).sqrt());
    }
    // Grid descends, so the first index attaining the minimum is the
    // largest such lambda; the 1SE pick is the first lambda within one
    // standard error of it.
    let min_idx = (0..lambdas.len())
        .min_by(|&a, &b| cve_mean[a].total_cmp(&cve_mean[b]))
        .unwrap();
    let threshold = cve_mean[min_idx] + cve_se[min_idx];
    let one_se_idx = (0..lambdas.len()).find(|&i| cve_mean[i] <= threshold).unwrap();
    Ok(LambdaChoice {
        lambda_min: lambdas[min_idx],
        lambda_1se: lambdas[one_se_idx],
        support_min: full.supports[min_idx].clone(),
        support_1se: full.supports[one_se_idx].clone(),
        lambdas,
        cve_mean,
        cve_se,
    })
}

/// Refit plain weighted least squares on a lasso-selected support to
/// remove the shrinkage bias. Identical contract to [`fit_wls`].
pub fn debias(d: &Dataset, s: &SupportSet) -> Result<WlsFit> {
    fit_wls(d, s)
}

/// One distinct path support re-scored under the exact criteria.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub support: SupportSet,
    /// Largest lambda that produced this support.
    pub first_lambda: f64,
    pub k: usize,
    pub fe: f64,
    pub cve: f64,
    /// Debiased refit coefficients.
    pub coefficients: Vec<f64>,
}

/// Per-cardinality minima over the scanned supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerKMin {
    pub k: usize,
    pub min_fe: f64,
    pub fe_support: SupportSet,
    pub min_cve: f64,
    pub cve_support: SupportSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub entries: Vec<ScanEntry>,
    pub per_k: Vec<PerKMin>,
    /// Supports whose criterion evaluation failed, with reasons.
    pub skipped: Vec<(SupportSet, String)>,
}

/// Score every distinct non-empty support of a path under the exact
/// criteria (FE and CVE after a debiasing refit), evaluated on
/// `d_criteria` — the same dataset and folds the exhaustive search uses,
/// so the numbers are directly comparable.
pub fn lambda_scan(
    d_criteria: &Dataset,
    path: &LassoPath,
    criteria: &CriteriaConfig,
) -> Result<ScanResult> {
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for (support, first_lambda) in &path.distinct_supports {
        let Some(support) = support else { continue };
        let scored = (|| -> Result<ScanEntry> {
            let refit = debias(d_criteria, support)?;
            let fe = free_energy(d_criteria, support, &criteria.prior)?;
            let cve = cross_validation_error(d_criteria, support, &criteria.folds)?;
            Ok(ScanEntry {
                support: support.clone(),
                first_lambda: *first_lambda,
                k: support.k(),
                fe,
                cve,
                coefficients: refit.beta.iter().copied().collect(),
            })
        })();
        match scored {
            Ok(entry) => entries.push(entry),
            Err(e) => skipped.push((support.clone(), e.to_string())),
        }
    }
    let mut groups: BTreeMap<usize, PerKMin> = BTreeMap::new();
    for entry in &entries {
        groups
            .entry(entry.k)
            .and_modify(|g| {
                if entry.fe < g.min_fe {
                    g.min_fe = entry.fe;
                    g.fe_support = entry.support.clone();
                }
                if entry.cve < g.min_cve {
                    g.min_cve = entry.cve;
                    g.cve_support = entry.support.clone();
                }
            })
            .or_insert_with(|| PerKMin {
                k: entry.k,
                min_fe: entry.fe,
                fe_support: entry.support.clone(),
                min_cve: entry.cve,
                cve_support: entry.support.clone(),
            });
    }
    Ok(ScanResult {
        entries,
        per_k: groups.into_values().collect(),
        skipped,
    })
}

/// CSV with one row per grid lambda: the path itself plus, where known,
/// the cross-validated error of the shrunk predictor and the criteria of
/// the debiased support. Enough to redraw the lambda-dependency figure.
pub fn write_path_csv(
    path: &LassoPath,
    choice: Option<&LambdaChoice>,
    scan: Option<&ScanResult>,
    mut out: impl Write,
) -> Result<()> {
    writeln!(out, "lambda,n_nonzero,support,cve_lambda,cve_support,fe_support")?;
    for (i, &lambda) in path.lambdas.iter().enumerate() {
        let support = &path.supports[i];
        let n_nonzero = support.as_ref().map_or(0, |s| s.k());
        let support_str = support
            .as_ref()
            .map(|s| {
                s.indices()
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .unwrap_or_default();
        let cve_lambda = choice
            .map(|c| c.cve_mean[i].to_string())
            .unwrap_or_default();
        let scanned = scan.and_then(|sc| {
            support
                .as_ref()
                .and_then(|s| sc.entries.iter().find(|e| &e.support == s))
        });
        let cve_support = scanned.map(|e| e.cve.to_string()).unwrap_or_default();
        let fe_support = scanned.map(|e| e.fe.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{lambda},{n_nonzero},{support_str},{cve_lambda},{cve_support},{fe_support}"
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criteria::{make_folds, PriorSpec};
    use crate::data::standardize;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn random_standardized(seed: u64, p: usize, n: usize) -> Dataset {
        use rand::Rng;
        let mut rng = crate::rng::seeded(seed, 6);
        let y: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sigma: Vec<f64> = (0..p).map(|_| rng.random_range(0.5..1.5)).collect();
        let x = DMatrix::from_fn(p, n, |_, _| rng.random_range(-2.0..2.0));
        let names = (0..n).map(|j| format!("v{j}")).collect();
        let d = Dataset::from_parts(y, sigma, x, names).unwrap();
        standardize(&d).unwrap().0
    }

    #[test]
    fn zero_solution_at_lambda_max() {
        let d = random_standardized(1, 20, 6);
        let top = lambda_max(&d);
        for lambda in [top, top * 1.5] {
            let beta = coordinate_descent(&d, lambda, None, &PathConfig::default()).unwrap();
            assert!(beta.iter().all(|&b| b == 0.0), "beta {beta:?}");
        }
    }

    #[test]
    fn single_variable_soft_threshold_closed_form() {
        let d = random_standardized(2, 15, 1);
        let q: f64 = (0..15).map(|mu| d.weight(mu) * d.x()[(mu, 0)] * d.y()[mu]).sum();
        let g: f64 = (0..15).map(|mu| d.weight(mu) * d.x()[(mu, 0)].powi(2)).sum();
        let lambda = q.abs() * 0.4;
        let beta = coordinate_descent(&d, lambda, None, &PathConfig::default()).unwrap();
        let expect = soft_threshold(q, lambda) / g;
        assert_relative_eq!(beta[0], expect, max_relative = 1e-12);
    }

    #[test]
    fn kkt_certificate_holds_on_random_instances() {
        for seed in 0..8 {
            let d = random_standardized(100 + seed, 25, 8);
            let top = lambda_max(&d);
            for frac in [0.5, 0.1, 0.01] {
                let lambda = top * frac;
                let beta = coordinate_descent(&d, lambda, None, &PathConfig::default()).unwrap();
                let viol = kkt_violation(&d, &beta, lambda);
                assert!(viol < 1e-6, "seed {seed} frac {frac}: violation {viol}");
            }
        }
    }

    #[test]
    fn warm_and_cold_starts_agree() {
        let d = random_standardized(7, 30, 10);
        let cfg = PathConfig::default();
        let path = lambda_path(&d, &cfg).unwrap();
        let mid = path.lambdas.len() / 2;
        let lambda = path.lambdas[mid];
        let cold = coordinate_descent(&d, lambda, None, &cfg).unwrap();
        let warm = &path.coefficients[mid];
        let o_cold = lasso_objective(&d, &cold, lambda);
        let o_warm = lasso_objective(&d, warm, lambda);
        assert_relative_eq!(o_cold, o_warm, max_relative = 1e-8);
    }

    #[test]
    fn path_starts_empty_and_dedupes() {
        let d = random_standardized(9, 25, 7);
        let cfg = PathConfig {
            n_lambdas: 40,
            ..PathConfig::default()
        };
        let path = lambda_path(&d, &cfg).unwrap();
        assert_eq!(path.supports[0], None);
        assert!(path.distinct_supports.len() <= 40);
        assert_eq!(path.distinct_supports[0].0, None);
        // Descending grid.
        assert!(path.lambdas.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn orthogonal_design_activates_by_correlation() {
        // Orthogonal columns under W = I: variables enter in order of |q_j|.
        let p = 8;
        let mut x = DMatrix::zeros(p, 4);
        for j in 0..4 {
            x[(2 * j, j)] = 1.0;
            x[(2 * j + 1, j)] = -1.0;
        }
        // Choose y giving distinct correlations 4 > 3 > 2 > 1.
        let mut y = vec![0.0; p];
        let target = [4.0, 1.0, 3.0, 2.0];
        for j in 0..4 {
            y[2 * j] = target[j] / 2.0;
            y[2 * j + 1] = -target[j] / 2.0;
        }
        let d = Dataset::from_parts(
            y,
            vec![1.0; p],
            x,
            (0..4).map(|j| format!("v{j}")).collect(),
        )
        .unwrap();
        let path = lambda_path(
            &d,
            &PathConfig {
                n_lambdas: 60,
                lambda_min_ratio: 1e-3,
                ..PathConfig::default()
            },
        )
        .unwrap();
        let first_active = |j: usize| {
            path.coefficients
                .iter()
                .position(|beta| beta[j] != 0.0)
                .unwrap()
        };
        assert!(first_active(0) < first_active(2));
        assert!(first_active(2) < first_active(3));
        assert!(first_active(3) < first_active(1));
    }

    #[test]
    fn lambda_optimize_orders_and_recovers() {
        // Planted 2-sparse truth, ample data: the min-CVE support must
        // contain the truth, and CVE(lambda_max) >= CVE(lambda_min).
        use rand::Rng;
        let mut rng = crate::rng::seeded(40, 6);
        let p = 120;
        let n = 12;
        let x = DMatrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..p)
            .map(|mu| 2.0 * x[(mu, 3)] - 1.5 * x[(mu, 7)] + 0.01 * rng.random_range(-1.0..1.0))
            .collect();
        let d = Dataset::from_parts(
            y,
            vec![1.0; p],
            x,
            (0..n).map(|j| format!("v{j}")).collect(),
        )
        .unwrap();
        let d = standardize(&d).unwrap().0;
        let folds = make_folds(p, 5, 11).unwrap();
        let choice = lambda_optimize(&d, &folds, &PathConfig::default()).unwrap();
        assert!(choice.lambda_1se >= choice.lambda_min);
        assert!(choice.cve_mean[0] >= choice.cve_mean.iter().cloned().fold(f64::INFINITY, f64::min));
        let support = choice.support_min.unwrap();
        assert!(support.contains(3) && support.contains(7), "support {support}");
    }

    #[test]
    fn scan_minima_dominate_exhaustive_minima() {
        let d = random_standardized(77, 20, 7);
        let folds = make_folds(20, 4, 3).unwrap();
        let criteria = CriteriaConfig::new(PriorSpec::Fixed { s: 1.0 }, folds);
        let path = lambda_path(&d, &PathConfig::default()).unwrap();
        let scan = lambda_scan(&d, &path, &criteria).unwrap();
        assert!(!scan.entries.is_empty());
        for group in &scan.per_k {
            let es = crate::exhaustive::exhaustive_search(
                &d,
                group.k,
                &criteria,
                &crate::exhaustive::EskConfig {
                    binning: crate::exhaustive::Binning::Off,
                    top_t: 1,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(
                es.top_fe[0].fe <= group.min_fe + 1e-12,
                "k={}: exhaustive FE {} vs scan {}",
                group.k,
                es.top_fe[0].fe,
                group.min_fe
            );
            assert!(
                es.top_cve[0].cve <= group.min_cve + 1e-12,
                "k={}: exhaustive CVE {} vs scan {}",
                group.k,
                es.top_cve[0].cve,
                group.min_cve
            );
        }
    }

    #[test]
    fn debias_is_exactly_fit_wls() {
        let d = random_standardized(55, 12, 5);
        let s = SupportSet::new(vec![1, 4]).unwrap();
        let a = debias(&d, &s).unwrap();
        let b = fit_wls(&d, &s).unwrap();
        assert_eq!(a.beta, b.beta);
        assert_eq!(a.fitted, b.fitted);
    }

    #[test]
    fn debias_never_increases_weighted_rss() {
        let d = random_standardized(66, 18, 6);
        let path = lambda_path(&d, &PathConfig::default()).unwrap();
        let (support, lambda) = path
            .distinct_supports
            .iter()
            .find_map(|(s, l)| s.clone().map(|s| (s, *l)))
            .unwrap();
        let idx = path.lambdas.iter().position(|&l| l == lambda).unwrap();
        let shrunk = &path.coefficients[idx];
        let refit = debias(&d, &support).unwrap();
        let rss = |beta: &dyn Fn(usize) -> f64| -> f64 {
            (0..d.p())
                .map(|mu| {
                    let pred: f64 = support
                        .indices()
                        .iter()
                        .enumerate()
                        .map(|(c, &j)| d.x()[(mu, j)] * beta(c))
                        .sum();
                    d.weight(mu) * (d.y()[mu] - pred).powi(2)
                })
                .sum()
        };
        let rss_shrunk = rss(&|c| shrunk[support.indices()[c]]);
        let rss_refit = rss(&|c| refit.beta[c]);
        assert!(rss_refit <= rss_shrunk + 1e-12);
    }
}
