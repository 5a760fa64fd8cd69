//! The two information criteria a support is scored under: Bayesian free
//! energy (negative log marginal likelihood under a Gaussian slab prior on
//! the active coefficients) and M-fold weighted cross-validation error,
//! plus the shared weighted-least-squares fitter.
//!
//! All formulas are written in terms of the diagonal noise-precision matrix
//! `W` with `W[mu,mu] = 1/sigma_mu^2`. For a support `I` the posterior
//! precision of the active coefficients is `Lambda^-1 = X_I^T W X_I + z I`
//! with `z = 1/s^2`, so everything reduces to the eigendecomposition of the
//! weighted Gram matrix `G = X_I^T W X_I`, computed once per support.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SupportSet};
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453; // ln(2*pi)

/// Condition-number threshold beyond which a normal-equation system is
/// treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Default gradient tolerance for the prior-scale fixed point.
pub const PRIOR_SCALE_TOL: f64 = 1e-10;
/// Default iteration cap for the prior-scale fixed point.
pub const PRIOR_SCALE_MAX_ITER: usize = 10_000;

/// Prior on each active coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum PriorSpec {
    /// Gaussian with standard deviation chosen per support by maximizing the
    /// marginal likelihood (fixed point of the self-consistent equation).
    Estimated,
    /// Gaussian with a fixed standard deviation `s`.
    Fixed { s: f64 },
    /// Improper flat prior: the `K log s` term is dropped and the remaining
    /// formula is evaluated in the wide-prior limit.
    Uniform,
}

impl PriorSpec {
    fn validate(&self) -> Result<()> {
        if let PriorSpec::Fixed { s } = self {
            if !(*s > 0.0 && s.is_finite()) {
                return Err(Error::Validation(format!("prior scale must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for PriorSpec {
    type Err = Error;

    /// Accepts `estimated`, `uniform`, or `fixed:<s>`.
    fn from_str(text: &str) -> Result<Self> {
        match text {
            "estimated" => Ok(PriorSpec::Estimated),
            "uniform" => Ok(PriorSpec::Uniform),
            _ => {
                let s = text
                    .strip_prefix("fixed:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::Validation(format!(
                            "prior must be estimated, uniform, or fixed:<s>, got {text:?}"
                        ))
                    })?;
                let spec = PriorSpec::Fixed { s };
                spec.validate()?;
                Ok(spec)
            }
        }
    }
}

impl std::fmt::Display for PriorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PriorSpec::Estimated => write!(f, "estimated"),
            PriorSpec::Fixed { s } => write!(f, "fixed:{s}"),
            PriorSpec::Uniform => write!(f, "uniform"),
        }
    }
}

/// Posterior mean and covariance of the active coefficients.
#[derive(Debug, Clone)]
pub struct PosteriorMoments {
    pub mu: DVector<f64>,
    pub lambda: DMatrix<f64>,
    pub lambda_inv: DMatrix<f64>,
    /// Prior precision `z = 1/s^2` the moments were evaluated at.
    pub z: f64,
}

/// A random partition of sample indices into `m` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    m: usize,
    assignment: Vec<usize>,
    seed: u64,
}

impl FoldAssignment {
    pub fn m(&self) -> usize {
        self.m
    }

    /// Fold id of each sample.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Sample indices belonging to fold `fold`.
    pub fn fold_members(&self, fold: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| (f == fold).then_some(i))
            .collect()
    }
}

/// Randomly partition `p` sample indices into `m` folds whose sizes differ
/// by at most one. Deterministic for a given seed.
pub fn make_folds(p: usize, m: usize, seed: u64) -> Result<FoldAssignment> {
    if m < 2 || m > p {
        return Err(Error::Validation(format!(
            "fold count must satisfy 2 <= m <= p, got m={m}, p={p}"
        )));
    }
    let mut order: Vec<usize> = (0..p).collect();
    let mut rng = crate::rng::seeded(seed, 0);
    order.shuffle(&mut rng);
    let mut assignment = vec![0usize; p];
    for (pos, &sample) in order.iter().enumerate() {
        assignment[sample] = pos % m;
    }
    Ok(FoldAssignment { m, assignment, seed })
}

/// The two criterion values of one support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionPair {
    pub cve: f64,
    pub fe: f64,
}

/// Everything needed to score a support under both criteria. Folds are
/// computed once and shared so every support sees the identical partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriteriaConfig {
    pub prior: PriorSpec,
    pub folds: FoldAssignment,
}

impl CriteriaConfig {
    pub fn new(prior: PriorSpec, folds: FoldAssignment) -> Self {
        CriteriaConfig { prior, folds }
    }
}

/// Evaluate one support under both criteria.
pub fn evaluate_support(d: &Dataset, s: &SupportSet, cfg: &CriteriaConfig) -> Result<CriterionPair> {
    Ok(CriterionPair {
        cve: cross_validation_error(d, s, &cfg.folds)?,
        fe: free_energy(d, s, &cfg.prior)?,
    })
}

// ---------------------------------------------------------------------------
// Weighted Gram eigendecomposition: the shared computational core.
// ---------------------------------------------------------------------------

/// Eigendecomposition of `G = X_I^T W X_I` plus the projections of `y` that
/// every criterion formula consumes.
pub(crate) struct SupportEigen {
    /// Eigenvalues of `G`, ascending.
    b: Vec<f64>,
    /// Eigenvectors, columns matching `b`.
    q: DMatrix<f64>,
    /// `Q^T X_I^T W y`.
    h_tilde: DVector<f64>,
    /// `y^T W y`.
    ywy: f64,
    /// `sum_mu ln sigma_mu^2`.
    log_sigma2_sum: f64,
    p: usize,
    k: usize,
}

pub(crate) fn gather_columns(d: &Dataset, s: &SupportSet) -> DMatrix<f64> {
    let p = d.p();
    let k = s.k();
    let mut xi = DMatrix::zeros(p, k);
    for (col, &j) in s.indices().iter().enumerate() {
        xi.set_column(col, &d.x().column(j));
    }
    xi
}

impl SupportEigen {
    pub(crate) fn build(d: &Dataset, s: &SupportSet) -> Result<Self> {
        s.check_bounds(d.n())?;
        let p = d.p();
        let k = s.k();
        let xi = gather_columns(d, s);
        // W-scaled copies.
        let mut wxi = xi.clone();
        let mut wy = d.y().clone();
        let mut ywy = 0.0;
        let mut log_sigma2_sum = 0.0;
        for mu in 0..p {
            let w = d.weight(mu);
            wxi.row_mut(mu).scale_mut(w);
            wy[mu] *= w;
            ywy += d.y()[mu] * d.y()[mu] * w;
            log_sigma2_sum += (d.sigma()[mu] * d.sigma()[mu]).ln();
        }
        let gram = xi.transpose() * &wxi;
        let h = xi.transpose() * wy;
        let eig = gram.symmetric_eigen();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
        let b: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut q = DMatrix::zeros(k, k);
        for (col, &i) in order.iter().enumerate() {
            q.set_column(col, &eig.eigenvectors.column(i));
        }
        let h_tilde = q.transpose() * h;
        Ok(SupportEigen {
            b,
            q,
            h_tilde,
            ywy,
            log_sigma2_sum,
            p,
            k,
        })
    }

    fn b_min(&self) -> f64 {
        self.b[0]
    }

    fn b_max(&self) -> f64 {
        self.b[self.k - 1]
    }

    /// Error unless `G` itself is safely invertible.
    fn require_nonsingular(&self, support: &SupportSet, context: &str) -> Result<()> {
        if !(self.b_min() > 0.0) || self.b_max() / self.b_min() > CONDITION_LIMIT {
            return Err(Error::SingularSystem {
                support: support.to_string(),
                context: format!(
                    "{context}: weighted Gram condition {:.3e}",
                    if self.b_min() > 0.0 {
                        self.b_max() / self.b_min()
                    } else {
                        f64::INFINITY
                    }
                ),
            });
        }
        Ok(())
    }

    /// Coefficients in eigenbasis scaled by `1/(b+z)`, mapped back.
    fn ridge_beta(&self, z: f64) -> DVector<f64> {
        let scaled = DVector::from_iterator(
            self.k,
            self.h_tilde.iter().zip(&self.b).map(|(h, b)| h / (b + z)),
        );
        &self.q * scaled
    }

    /// `mu^T mu` at prior precision `z`.
    fn mu_sq(&self, z: f64) -> f64 {
        self.h_tilde
            .iter()
            .zip(&self.b)
            .map(|(h, b)| (h / (b + z)).powi(2))
            .sum()
    }

    /// `Tr(Lambda)` at prior precision `z`.
    fn trace_lambda(&self, z: f64) -> f64 {
        self.b.iter().map(|b| 1.0 / (b + z)).sum()
    }

    /// Free energy at prior precision `z` (finite `s`).
    fn fe_at(&self, z: f64) -> f64 {
        let fit: f64 = self
            .h_tilde
            .iter()
            .zip(&self.b)
            .map(|(h, b)| h * h / (b + z))
            .sum();
        let log_det: f64 = self.b.iter().map(|b| (b + z).ln()).sum();
        0.5 * self.p as f64 * LN_2PI + 0.5 * self.log_sigma2_sum - 0.5 * self.k as f64 * z.ln()
            + 0.5 * self.ywy
            - 0.5 * fit
            + 0.5 * log_det
    }

    /// Free energy in the wide-prior limit with the `K log s` term dropped.
    fn fe_uniform(&self) -> f64 {
        let fit: f64 = self
            .h_tilde
            .iter()
            .zip(&self.b)
            .map(|(h, b)| h * h / b)
            .sum();
        let log_det: f64 = self.b.iter().map(|b| b.ln()).sum();
        0.5 * self.p as f64 * LN_2PI + 0.5 * self.log_sigma2_sum + 0.5 * self.ywy - 0.5 * fit
            + 0.5 * log_det
    }

    /// `dFE/dz = -K/(2z) + mu^T mu / 2 + Tr(Lambda) / 2`.
    fn fe_grad(&self, z: f64) -> f64 {
        -0.5 * self.k as f64 / z + 0.5 * self.mu_sq(z) + 0.5 * self.trace_lambda(z)
    }

    /// The self-consistent map `z -> K / (mu^T mu + sum_k 1/(b_k + z))`.
    fn picard(&self, z: f64) -> f64 {
        self.k as f64 / (self.mu_sq(z) + self.trace_lambda(z))
    }

    /// Starting point for the fixed-point iteration: `K / (mu0^T mu0 + eps)`
    /// with `mu0` from a unit-ridge fit.
    fn default_z0(&self) -> f64 {
        self.k as f64 / (self.mu_sq(1.0) + 1e-12)
    }
}

// ---------------------------------------------------------------------------
// Public operations.
// ---------------------------------------------------------------------------

/// A weighted-least-squares fit on one support.
#[derive(Debug, Clone)]
pub struct WlsFit {
    /// Coefficients of the active columns, in support index order.
    pub beta: DVector<f64>,
    /// In-sample fitted values `X_I beta`.
    pub fitted: DVector<f64>,
}

/// Minimize `sum_mu (y_mu - x_{I,mu}^T beta)^2 / sigma_mu^2` over `beta`.
pub fn fit_wls(d: &Dataset, s: &SupportSet) -> Result<WlsFit> {
    if s.k() > d.p() {
        return Err(Error::Validation(format!(
            "support size {} exceeds sample count {}",
            s.k(),
            d.p()
        )));
    }
    let eig = SupportEigen::build(d, s)?;
    eig.require_nonsingular(s, "weighted least squares")?;
    let beta = eig.ridge_beta(0.0);
    let fitted = gather_columns(d, s) * &beta;
    Ok(WlsFit { beta, fitted })
}

/// Posterior mean and covariance of the active coefficients under a
/// Gaussian prior (estimated or fixed scale).
pub fn posterior_moments(d: &Dataset, s: &SupportSet, prior: &PriorSpec) -> Result<PosteriorMoments> {
    prior.validate()?;
    let eig = SupportEigen::build(d, s)?;
    let z = match prior {
        PriorSpec::Fixed { s } => 1.0 / (s * s),
        PriorSpec::Estimated => {
            solve_prior_scale(&eig, eig.default_z0(), PRIOR_SCALE_TOL, PRIOR_SCALE_MAX_ITER)?.z
        }
        PriorSpec::Uniform => {
            return Err(Error::Validation(
                "posterior moments require an estimated or fixed prior".into(),
            ))
        }
    };
    let mu = eig.ridge_beta(z);
    let scale_inv = DVector::from_iterator(eig.k, eig.b.iter().map(|b| b + z));
    let scale = scale_inv.map(|v| 1.0 / v);
    let lambda = &eig.q * DMatrix::from_diagonal(&scale) * eig.q.transpose();
    let lambda_inv = &eig.q * DMatrix::from_diagonal(&scale_inv) * eig.q.transpose();
    if mu.iter().any(|v| !v.is_finite()) || lambda.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite posterior moments for support {s}"
        )));
    }
    Ok(PosteriorMoments {
        mu,
        lambda,
        lambda_inv,
        z,
    })
}

/// Bayesian free energy (negative log marginal likelihood) of a support.
pub fn free_energy(d: &Dataset, s: &SupportSet, prior: &PriorSpec) -> Result<f64> {
    prior.validate()?;
    let eig = SupportEigen::build(d, s)?;
    let fe = match prior {
        PriorSpec::Fixed { s } => eig.fe_at(1.0 / (s * s)),
        PriorSpec::Estimated => {
            let est = solve_prior_scale(&eig, eig.default_z0(), PRIOR_SCALE_TOL, PRIOR_SCALE_MAX_ITER)?;
            eig.fe_at(est.z)
        }
        PriorSpec::Uniform => {
            eig.require_nonsingular(s, "uniform-prior free energy")?;
            eig.fe_uniform()
        }
    };
    if !fe.is_finite() {
        return Err(Error::Numeric(format!("non-finite free energy for support {s}")));
    }
    Ok(fe)
}

/// Result of the prior-scale fixed point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PriorScaleEstimate {
    /// Prior standard deviation `s* = 1/sqrt(z*)`.
    pub s: f64,
    /// Prior precision at the fixed point.
    pub z: f64,
    pub iterations: usize,
    /// `dFE/dz` at the returned point.
    pub gradient: f64,
}

/// Estimate the prior scale for a support by iterating the self-consistent
/// equation until the free-energy derivative in `z` falls below `tol`.
pub fn estimate_prior_scale(
    d: &Dataset,
    s: &SupportSet,
    z0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PriorScaleEstimate> {
    if !(z0 > 0.0 && z0.is_finite()) {
        return Err(Error::Validation(format!("initial z must be positive, got {z0}")));
    }
    let eig = SupportEigen::build(d, s)?;
    solve_prior_scale(&eig, z0, tol, max_iter)
}

/// `dFE/dz` at prior precision `z` for a support; exposed so the fixed
/// point can be cross-checked against finite differences of [`free_energy`].
pub fn fe_gradient_z(d: &Dataset, s: &SupportSet, z: f64) -> Result<f64> {
    let eig = SupportEigen::build(d, s)?;
    Ok(eig.fe_grad(z))
}

fn solve_prior_scale(
    eig: &SupportEigen,
    z0: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PriorScaleEstimate> {
    // When the projected signal energy never exceeds the prior-curvature
    // floor, dFE/dz stays negative as z -> infinity and the optimum is a
    // zero-width prior: the likelihood is flat in the coefficients. Flag it
    // once the iterate is far above the Gram spectrum.
    let signal: f64 = eig.h_tilde.iter().map(|h| h * h).sum();
    let curvature_floor: f64 = eig.b.iter().sum();
    let asymptotic = 100.0 * (1.0 + eig.b_max());
    let runaway = 1e16 * (1.0 + eig.b_max());
    let mut z = z0;
    let mut last_step = 0.0f64;
    let mut damped = false;
    let mut trace = Vec::new();
    for it in 0..max_iter {
        let grad = eig.fe_grad(z);
        trace.push(grad.abs());
        if grad.abs() < tol {
            return Ok(PriorScaleEstimate {
                s: 1.0 / z.sqrt(),
                z,
                iterations: it,
                gradient: grad,
            });
        }
        let target = eig.picard(z);
        if !target.is_finite() || target <= 0.0 {
            return Err(Error::Numeric(format!(
                "prior-scale iteration produced z = {target}"
            )));
        }
        let mut step = target - z;
        // Oscillation: successive steps flip sign; halve from then on.
        if step * last_step < 0.0 {
            damped = true;
        }
        if damped {
            step *= 0.5;
        }
        last_step = step;
        z += step;
        if z > runaway
            || z <= f64::MIN_POSITIVE
            || (z > asymptotic && signal <= curvature_floor)
        {
            return Err(Error::FlatLikelihood { z_last: z });
        }
    }
    let tail = trace.len().saturating_sub(16);
    Err(Error::NonConvergence {
        context: "prior-scale fixed point".into(),
        iterations: max_iter,
        residual: *trace.last().unwrap(),
        trace: trace[tail..].to_vec(),
    })
}

/// M-fold weighted cross-validation error of a support: per fold, the
/// coefficients are refit on the complement and the held-out weighted mean
/// squared error is averaged over folds.
pub fn cross_validation_error(d: &Dataset, s: &SupportSet, folds: &FoldAssignment) -> Result<f64> {
    s.check_bounds(d.n())?;
    let p = d.p();
    if folds.assignment().len() != p {
        return Err(Error::Validation(format!(
            "fold assignment is for {} samples, dataset has {p}",
            folds.assignment().len()
        )));
    }
    let k = s.k();
    let m = folds.m();
    let xi = gather_columns(d, s);

    // Full-data accumulators; each training fold is the full sums minus the
    // held-out fold's contribution.
    let mut gram = DMatrix::zeros(k, k);
    let mut h = DVector::zeros(k);
    for mu in 0..p {
        let w = d.weight(mu);
        let row = xi.row(mu);
        for a in 0..k {
            for c in 0..k {
                gram[(a, c)] += w * row[a] * row[c];
            }
            h[a] += w * row[a] * d.y()[mu];
        }
    }

    let mut cve_sum = 0.0;
    for fold in 0..m {
        let members = folds.fold_members(fold);
        if members.is_empty() {
            return Err(Error::Validation(format!("fold {fold} is empty")));
        }
        if k > p - members.len() {
            return Err(Error::Validation(format!(
                "support size {k} exceeds training size {} of fold {fold}",
                p - members.len()
            )));
        }
        let mut gram_train = gram.clone();
        let mut h_train = h.clone();
        for &mu in &members {
            let w = d.weight(mu);
            let row = xi.row(mu);
            for a in 0..k {
                for c in 0..k {
                    gram_train[(a, c)] -= w * row[a] * row[c];
                }
                h_train[a] -= w * row[a] * d.y()[mu];
            }
        }
        let beta = solve_spd(&gram_train, &h_train).ok_or_else(|| Error::SingularSystem {
            support: s.to_string(),
            context: format!("training fit for fold {fold}"),
        })?;
        let mut num = 0.0;
        let mut den = 0.0;
        for &mu in &members {
            let w = d.weight(mu);
            let pred = xi.row(mu).transpose().dot(&beta);
            let r = d.y()[mu] - pred;
            num += r * r * w;
            den += w;
        }
        cve_sum += num / den;
    }
    Ok(cve_sum / m as f64)
}

/// Solve an SPD system via symmetric eigendecomposition, returning `None`
/// when the matrix is singular or too ill-conditioned.
fn solve_spd(a: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || max / min > CONDITION_LIMIT {
        return None;
    }
    let proj = eig.eigenvectors.transpose() * rhs;
    let scaled = DVector::from_iterator(
        a.nrows(),
        proj.iter().zip(eig.eigenvalues.iter()).map(|(p, l)| p / l),
    );
    Some(&eig.eigenvectors * scaled)
}
