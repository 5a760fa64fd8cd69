//! Virtual measurement and analysis: generate synthetic datasets with a
//! planted sparse truth and run the full method comparison over a range of
//! sparsity levels, which is how one checks whether a given sample size is
//! large enough for variable selection to be trustworthy.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::criteria::{make_folds, CriteriaConfig, PriorSpec};
use crate::data::{weighted_center, Dataset, SupportSet};
use crate::error::{Error, Result};
use crate::exhaustive::{exhaustive_search, Binning, EskConfig};
use crate::lasso::{lambda_path, lambda_scan, PathConfig};
use crate::remc::{min_energy_estimate, run_remc, CriterionKind, RemcConfig, TemperatureLadder};

/// Synthetic-data generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmaConfig {
    /// Explanatory variable count.
    pub n: usize,
    /// Sample count.
    pub p: usize,
    /// Planted sparsity.
    pub k_true: usize,
    /// Variance of each non-zero coefficient.
    pub sigma_beta2: f64,
    /// Measurement noise variance; zero generates exactly linear data.
    pub sigma_eps2: f64,
    /// Sparsity levels to sweep.
    pub k_range: Vec<usize>,
    pub seed: u64,
    /// Multiplier applied to the noise level handed to the analysis;
    /// 1.0 means the true level is supplied.
    pub sigma_misspecification: f64,
}

impl VmaConfig {
    pub fn new(p: usize, seed: u64) -> Self {
        VmaConfig {
            n: 200,
            p,
            k_true: 2,
            sigma_beta2: 1.0,
            sigma_eps2: 0.1,
            k_range: (1..=7).collect(),
            seed,
            sigma_misspecification: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::Validation("need at least 2 samples".into()));
        }
        if self.k_true == 0 || self.k_true > self.n {
            return Err(Error::Validation(format!(
                "planted sparsity {} must lie in [1, {}]",
                self.k_true, self.n
            )));
        }
        if !(self.sigma_beta2 > 0.0) {
            return Err(Error::Validation("coefficient variance must be positive".into()));
        }
        if self.sigma_eps2 < 0.0 {
            return Err(Error::Validation("noise variance must be nonnegative".into()));
        }
        if self.k_range.is_empty() || self.k_range.iter().any(|&k| k == 0 || k > self.n) {
            return Err(Error::Validation("invalid sparsity sweep range".into()));
        }
        if !(self.sigma_misspecification > 0.0) {
            return Err(Error::Validation("sigma misspecification factor must be positive".into()));
        }
        Ok(())
    }
}

/// The planted truth behind one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmaTruth {
    pub support: SupportSet,
    pub beta: Vec<f64>,
    pub noise: Vec<f64>,
}

/// Draw one synthetic dataset: design entries i.i.d. standard normal,
/// non-zero coefficients on the first `k_true` columns drawn from
/// `N(0, sigma_beta2)`, noise from `N(0, sigma_eps2)`. The sigma column
/// carries the true noise level (the analysis assumes it known); for
/// noiseless data it is set to 1 so the weights stay well defined.
pub fn generate_synthetic(cfg: &VmaConfig) -> Result<(Dataset, VmaTruth)> {
    cfg.validate()?;
    let mut x_rng = crate::rng::seeded(cfg.seed, 10);
    let mut beta_rng = crate::rng::seeded(cfg.seed, 11);
    let mut eps_rng = crate::rng::seeded(cfg.seed, 12);

    let mut x = DMatrix::zeros(cfg.p, cfg.n);
    for i in 0..cfg.p {
        for j in 0..cfg.n {
            x[(i, j)] = x_rng.sample(StandardNormal);
        }
    }
    let sigma_beta = cfg.sigma_beta2.sqrt();
    let beta: Vec<f64> = (0..cfg.k_true)
        .map(|_| sigma_beta * beta_rng.sample::<f64, _>(StandardNormal))
        .collect();
    let sigma_eps = cfg.sigma_eps2.sqrt();
    let noise: Vec<f64> = (0..cfg.p)
        .map(|_| sigma_eps * eps_rng.sample::<f64, _>(StandardNormal))
        .collect();
    let y: Vec<f64> = (0..cfg.p)
        .map(|mu| {
            (0..cfg.k_true).map(|j| x[(mu, j)] * beta[j]).sum::<f64>() + noise[mu]
        })
        .collect();
    let supplied_sigma = if sigma_eps > 0.0 { sigma_eps } else { 1.0 } * cfg.sigma_misspecification;
    let names = (1..=cfg.n).map(|j| format!("x{j}")).collect();
    let d = Dataset::from_parts(y, vec![supplied_sigma; cfg.p], x, names)?;
    let truth = VmaTruth {
        support: SupportSet::new((0..cfg.k_true).collect())?,
        beta,
        noise,
    };
    Ok((d, truth))
}

/// Which search produced a row of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VmaMethod {
    Es,
    Aes,
    LassoScan,
}

impl std::fmt::Display for VmaMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VmaMethod::Es => write!(f, "es"),
            VmaMethod::Aes => write!(f, "aes"),
            VmaMethod::LassoScan => write!(f, "lasso-scan"),
        }
    }
}

/// Method settings for one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmaMethods {
    /// Exhaustive search for `k` up to this, replica exchange above.
    pub es_max_k: usize,
    pub folds_m: usize,
    pub prior: PriorSpec,
    /// Replica-exchange run length for the AES cells.
    pub sweeps: usize,
    pub burn_in: usize,
    pub exchange_interval: usize,
    pub ladder_fe: TemperatureLadder,
    pub ladder_cve: TemperatureLadder,
    pub lasso: PathConfig,
    pub budget_cap: u64,
    pub jobs: usize,
}

impl Default for VmaMethods {
    fn default() -> Self {
        VmaMethods {
            es_max_k: 3,
            folds_m: 10,
            prior: PriorSpec::Estimated,
            sweeps: 100_000,
            burn_in: 50_000,
            exchange_interval: 1,
            ladder_fe: TemperatureLadder::default_fe(),
            ladder_cve: TemperatureLadder::default_cve(),
            lasso: PathConfig::default(),
            budget_cap: 100_000_000,
            jobs: 0,
        }
    }
}

/// One (k, method, criterion) minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmaRow {
    pub k: usize,
    pub method: VmaMethod,
    pub criterion: CriterionKind,
    pub value: f64,
    pub support: SupportSet,
}

/// The full comparison table for one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmaTable {
    pub config: VmaConfig,
    pub truth_support: SupportSet,
    pub rows: Vec<VmaRow>,
    /// Sparsity level minimizing the search FE across the sweep.
    pub fe_minimizing_k: usize,
    /// Whether the FE minimizer at `k_true` is exactly the planted support.
    pub recovered_truth: bool,
}

impl VmaTable {
    /// Minimum value over search rows (ES/AES) for a criterion at `k`.
    pub fn search_min(&self, k: usize, criterion: CriterionKind) -> Option<&VmaRow> {
        self.rows
            .iter()
            .find(|r| r.k == k && r.criterion == criterion && r.method != VmaMethod::LassoScan)
    }

    pub fn scan_min(&self, k: usize, criterion: CriterionKind) -> Option<&VmaRow> {
        self.rows
            .iter()
            .find(|r| r.k == k && r.criterion == criterion && r.method == VmaMethod::LassoScan)
    }

    /// CSV rows `p,seed,k,method,criterion,value,support`.
    pub fn write_csv(&self, mut out: impl Write, header: bool) -> Result<()> {
        if header {
            writeln!(out, "p,seed,k,method,criterion,value,support")?;
        }
        for row in &self.rows {
            let support = row
                .support
                .indices()
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(";");
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.config.p, self.config.seed, row.k, row.method, row.criterion, row.value, support
            )?;
        }
        Ok(())
    }
}

fn remc_seed(base: u64, k: usize, criterion: CriterionKind) -> u64 {
    let tag = (k as u64) << 1 | u64::from(criterion == CriterionKind::Cve);
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(tag)
}

/// Run the full comparison on one synthetic dataset: exhaustive search for
/// small `k`, replica-exchange search for large `k`, and the lasso
/// lambda-scan, all sharing the same folds and prior.
pub fn run_vma_experiment(cfg: &VmaConfig, methods: &VmaMethods) -> Result<VmaTable> {
    cfg.validate()?;
    let (raw, truth) = generate_synthetic(cfg)?;
    let d = weighted_center(&raw)?;
    let folds = make_folds(d.p(), methods.folds_m, cfg.seed)?;
    let criteria = CriteriaConfig::new(methods.prior, folds);

    let mut rows = Vec::new();
    for &k in &cfg.k_range {
        if k <= methods.es_max_k {
            let es_cfg = EskConfig {
                top_t: 1,
                binning: Binning::Off,
                budget_cap: methods.budget_cap,
                override_budget: false,
                jobs: methods.jobs,
            };
            let result = exhaustive_search(&d, k, &criteria, &es_cfg)?;
            let best_fe = result.top_fe.first().ok_or_else(|| {
                Error::Numeric(format!("no evaluable support at k={k}"))
            })?;
            let best_cve = result.top_cve.first().unwrap();
            rows.push(VmaRow {
                k,
                method: VmaMethod::Es,
                criterion: CriterionKind::Fe,
                value: best_fe.fe,
                support: best_fe.support.clone(),
            });
            rows.push(VmaRow {
                k,
                method: VmaMethod::Es,
                criterion: CriterionKind::Cve,
                value: best_cve.cve,
                support: best_cve.support.clone(),
            });
        } else {
            for criterion in [CriterionKind::Fe, CriterionKind::Cve] {
                let remc_cfg = RemcConfig {
                    ladder: match criterion {
                        CriterionKind::Fe => methods.ladder_fe.clone(),
                        CriterionKind::Cve => methods.ladder_cve.clone(),
                    },
                    sweeps: methods.sweeps,
                    burn_in: methods.burn_in,
                    exchange_interval: methods.exchange_interval,
                    seed: remc_seed(cfg.seed, k, criterion),
                    k,
                    criterion,
                    energy_binning: None,
                    energy_bins: 400,
                };
                let trace = run_remc(&d, &remc_cfg, &criteria)?;
                let (support, value) = min_energy_estimate(&trace);
                rows.push(VmaRow {
                    k,
                    method: VmaMethod::Aes,
                    criterion,
                    value,
                    support,
                });
            }
        }
    }

    // Lasso runs on the standardized data but its supports are re-scored on
    // the same centered dataset and folds the searches used.
    let standardized = crate::data::standardize(&raw)?.0;
    let path = lambda_path(&standardized, &methods.lasso)?;
    let scan = lambda_scan(&d, &path, &criteria)?;
    for group in &scan.per_k {
        rows.push(VmaRow {
            k: group.k,
            method: VmaMethod::LassoScan,
            criterion: CriterionKind::Fe,
            value: group.min_fe,
            support: group.fe_support.clone(),
        });
        rows.push(VmaRow {
            k: group.k,
            method: VmaMethod::LassoScan,
            criterion: CriterionKind::Cve,
            value: group.min_cve,
            support: group.cve_support.clone(),
        });
    }

    let fe_minimizing_k = cfg
        .k_range
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let va = rows
                .iter()
                .find(|r| r.k == a && r.criterion == CriterionKind::Fe && r.method != VmaMethod::LassoScan)
                .map(|r| r.value)
                .unwrap_or(f64::INFINITY);
            let vb = rows
                .iter()
                .find(|r| r.k == b && r.criterion == CriterionKind::Fe && r.method != VmaMethod::LassoScan)
                .map(|r| r.value)
                .unwrap_or(f64::INFINITY);
            va.total_cmp(&vb)
        })
        .unwrap();
    let recovered_truth = rows
        .iter()
        .find(|r| {
            r.k == cfg.k_true && r.criterion == CriterionKind::Fe && r.method != VmaMethod::LassoScan
        })
        .map(|r| r.support == truth.support)
        .unwrap_or(false);

    Ok(VmaTable {
        config: cfg.clone(),
        truth_support: truth.support,
        rows,
        fe_minimizing_k,
        recovered_truth,
    })
}

/// Run the experiment for several seeds; tables come back in seed order.
pub fn run_vma_study(
    base: &VmaConfig,
    methods: &VmaMethods,
    seeds: &[u64],
) -> Result<Vec<VmaTable>> {
    seeds
        .iter()
        .map(|&seed| {
            let cfg = VmaConfig {
                seed,
                ..base.clone()
            };
            run_vma_experiment(&cfg, methods)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_shapes_and_determinism() {
        let cfg = VmaConfig {
            n: 20,
            k_range: (1..=3).collect(),
            ..VmaConfig::new(50, 7)
        };
        let (d, truth) = generate_synthetic(&cfg).unwrap();
        assert_eq!(d.p(), 50);
        assert_eq!(d.n(), 20);
        assert_eq!(truth.support.indices(), [0, 1]);
        assert_eq!(truth.beta.len(), 2);
        let (d2, truth2) = generate_synthetic(&cfg).unwrap();
        assert_eq!(d, d2);
        assert_eq!(truth, truth2);
    }

    #[test]
    fn paper_scale_shapes() {
        let cfg = VmaConfig::new(700, 1);
        let (d, _) = generate_synthetic(&cfg).unwrap();
        assert_eq!(d.p(), 700);
        assert_eq!(d.n(), 200);
    }

    #[test]
    fn design_entries_have_unit_variance() {
        let cfg = VmaConfig {
            n: 40,
            ..VmaConfig::new(100, 3)
        };
        let (d, _) = generate_synthetic(&cfg).unwrap();
        let total = (d.p() * d.n()) as f64;
        let mean: f64 = d.x().iter().sum::<f64>() / total;
        let var: f64 = d.x().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / total;
        let tol = 3.0 / total.sqrt();
        assert!((var - 1.0).abs() < tol, "variance {var}");
    }

    #[test]
    fn noiseless_limit_recovers_exactly() {
        let cfg = VmaConfig {
            n: 15,
            sigma_eps2: 0.0,
            k_range: vec![2],
            ..VmaConfig::new(40, 11)
        };
        let (d, truth) = generate_synthetic(&cfg).unwrap();
        // y = X beta exactly.
        for mu in 0..d.p() {
            let fit: f64 = (0..cfg.k_true).map(|j| d.x()[(mu, j)] * truth.beta[j]).sum();
            assert!((d.y()[mu] - fit).abs() < 1e-12);
        }
        let methods = VmaMethods {
            folds_m: 5,
            ..VmaMethods::default()
        };
        let table = run_vma_experiment(&cfg, &methods).unwrap();
        assert!(table.recovered_truth);
        assert_eq!(table.fe_minimizing_k, 2);
    }

    #[test]
    fn experiment_table_is_deterministic() {
        let cfg = VmaConfig {
            n: 12,
            k_range: (1..=4).collect(),
            ..VmaConfig::new(30, 5)
        };
        let methods = VmaMethods {
            es_max_k: 2,
            folds_m: 5,
            sweeps: 300,
            burn_in: 100,
            ladder_fe: TemperatureLadder::log_spaced(1e-2, 1e1, 4).unwrap(),
            ladder_cve: TemperatureLadder::log_spaced(1e0, 1e3, 4).unwrap(),
            ..VmaMethods::default()
        };
        let a = run_vma_experiment(&cfg, &methods).unwrap();
        let b = run_vma_experiment(&cfg, &methods).unwrap();
        assert_eq!(a, b);
        // Scan minima never beat the exhaustive minima where both exist.
        for k in 1..=2usize {
            for criterion in [CriterionKind::Fe, CriterionKind::Cve] {
                if let (Some(es), Some(scan)) = (a.search_min(k, criterion), a.scan_min(k, criterion)) {
                    assert!(es.value <= scan.value + 1e-12);
                }
            }
        }
    }
}
