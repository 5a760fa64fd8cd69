//! Multiple-histogram reconstruction of the density of states from a
//! replica-exchange run.
//!
//! Given per-temperature energy histograms `H_w(E)` with `n_w` retained
//! samples each, the estimator alternates
//!
//! ```text
//! g(E) = sum_w H_w(E) / sum_w n_w exp(f_w - E / T_w)
//! f_w  = -log sum_E g(E) exp(-E / T_w)
//! ```
//!
//! until the per-temperature free energies `f_w` stop moving. The overall
//! scale of `g` is arbitrary (both equations are invariant under
//! `g -> a g`, `f -> f + log a`); the iteration pins `f_0 = 0` and the
//! returned estimate is rescaled so that `max log g = 0`, which keeps `g`
//! representable for arbitrarily cold ladders. All sums run in log space.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dos::Axis;
use crate::error::{Error, Result};
use crate::remc::{ReplicaTrace, TemperatureLadder};

/// Reconstructed density of states over energy bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosEstimate {
    pub axis: Axis,
    /// Bin centers.
    pub energies: Vec<f64>,
    /// Natural log of the estimate; `-inf` marks bins never observed.
    pub log_g: Vec<f64>,
    /// Per-replica free energies consistent with `log_g`.
    pub f: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl DosEstimate {
    /// The estimate in natural scale (zero where unobserved).
    pub fn g(&self) -> Vec<f64> {
        self.log_g
            .iter()
            .map(|lg| if lg.is_finite() { lg.exp() } else { 0.0 })
            .collect()
    }

    /// CSV rows `e_bin_center,g,log10_g`; the log column is empty for
    /// unobserved bins.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "e_bin_center,g,log10_g")?;
        for (i, &lg) in self.log_g.iter().enumerate() {
            if lg.is_finite() {
                writeln!(
                    out,
                    "{},{},{}",
                    self.energies[i],
                    lg.exp(),
                    lg / std::f64::consts::LN_10
                )?;
            } else {
                writeln!(out, "{},0,", self.energies[i])?;
            }
        }
        Ok(())
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = terms.filter(|v| *v > f64::NEG_INFINITY).collect();
    if values.is_empty() {
        return f64::NEG_INFINITY;
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Solve the self-consistent histogram equations for the trace of one REMC
/// run. Converges when the largest relative change of any `f_w` falls below
/// `tol`.
pub fn wham(
    trace: &ReplicaTrace,
    ladder: &TemperatureLadder,
    tol: f64,
    max_iter: usize,
) -> Result<DosEstimate> {
    let omega = trace.replicas();
    if omega != ladder.len() {
        return Err(Error::Validation(format!(
            "trace has {omega} replicas, ladder has {}",
            ladder.len()
        )));
    }
    let bins = trace.axis.bins;
    let total: Vec<u64> = (0..bins)
        .map(|e| trace.histograms.iter().map(|h| h[e]).sum())
        .collect();
    if total.iter().all(|&c| c == 0) {
        return Err(Error::Validation("all histograms are empty".into()));
    }
    let centers: Vec<f64> = (0..bins).map(|e| trace.axis.bin_center(e)).collect();
    let log_total: Vec<f64> = total
        .iter()
        .map(|&c| if c > 0 { (c as f64).ln() } else { f64::NEG_INFINITY })
        .collect();
    let log_n: Vec<f64> = trace
        .n
        .iter()
        .map(|&n| if n > 0 { (n as f64).ln() } else { f64::NEG_INFINITY })
        .collect();

    let mut f = vec![0.0f64; omega];
    let mut log_g = vec![f64::NEG_INFINITY; bins];
    let mut residuals = Vec::new();
    for it in 0..max_iter {
        // Density estimate at current f.
        for e in 0..bins {
            if total[e] == 0 {
                continue;
            }
            let denom = log_sum_exp(
                (0..omega).map(|w| log_n[w] + f[w] - ladder.beta(w) * centers[e]),
            );
            log_g[e] = log_total[e] - denom;
        }
        // Free energies from the new density, re-anchored to f_0 = 0.
        let mut f_new: Vec<f64> = (0..omega)
            .map(|w| {
                -log_sum_exp(
                    (0..bins)
                        .filter(|&e| total[e] > 0)
                        .map(|e| log_g[e] - ladder.beta(w) * centers[e]),
                )
            })
            .collect();
        let anchor = f_new[0];
        // The matching rescale of g keeps the pair exactly consistent.
        for lg in log_g.iter_mut() {
            if lg.is_finite() {
                *lg += anchor;
            }
        }
        for fw in f_new.iter_mut() {
            *fw -= anchor;
        }
        let residual = f
            .iter()
            .zip(&f_new)
            .map(|(old, new)| (new - old).abs() / (1.0 + new.abs()))
            .fold(0.0, f64::max);
        residuals.push(residual);
        f = f_new;
        if residual < tol {
            // Output scale: max log g = 0. Shifting g and f together
            // preserves their mutual consistency.
            let peak = log_g
                .iter()
                .cloned()
                .filter(|v| v.is_finite())
                .fold(f64::NEG_INFINITY, f64::max);
            for lg in log_g.iter_mut() {
                if lg.is_finite() {
                    *lg -= peak;
                }
            }
            for fw in f.iter_mut() {
                *fw += peak;
            }
            return Ok(DosEstimate {
                axis: trace.axis.clone(),
                energies: centers,
                log_g,
                f,
                iterations: it + 1,
                residual,
            });
        }
    }
    let tail = residuals.len().saturating_sub(16);
    Err(Error::NonConvergence {
        context: "multiple-histogram iteration".into(),
        iterations: max_iter,
        residual: *residuals.last().unwrap(),
        trace: residuals[tail..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::data::SupportSet;

    fn toy_trace(axis: Axis, histograms: Vec<Vec<u64>>) -> ReplicaTrace {
        let n = histograms
            .iter()
            .map(|h| h.iter().sum::<u64>())
            .collect();
        ReplicaTrace {
            axis,
            histograms,
            n,
            best_support: SupportSet::new(vec![0]).unwrap(),
            best_energy: 0.0,
            exchange_attempts: vec![],
            exchange_accepts: vec![],
            move_proposals: vec![],
            move_accepts: vec![],
            eval_failures: vec![],
        }
    }

    #[test]
    fn single_temperature_reweights_histogram() {
        let axis = Axis::new(0.0, 4.0, 4).unwrap();
        let trace = toy_trace(axis, vec![vec![40, 30, 20, 10]]);
        let ladder = TemperatureLadder::from_inverse_temperatures(vec![0.8]).unwrap();
        let est = wham(&trace, &ladder, 1e-10, 100).unwrap();
        // g(E) must be proportional to H(E) exp(beta E).
        let expect: Vec<f64> = [40.0, 30.0, 20.0, 10.0]
            .iter()
            .enumerate()
            .map(|(e, h)| (h / 100.0f64).ln() + 0.8 * trace.axis.bin_center(e))
            .collect();
        for e in 0..4 {
            let diff0 = est.log_g[0] - expect[0];
            assert_relative_eq!(est.log_g[e] - expect[e], diff0, epsilon = 1e-9);
        }
    }

    #[test]
    fn fixed_point_is_self_consistent() {
        let axis = Axis::new(0.0, 1.0, 8).unwrap();
        let h1 = vec![50, 40, 30, 20, 10, 5, 3, 2];
        let h2 = vec![10, 12, 15, 20, 25, 28, 25, 25];
        let trace = toy_trace(axis, vec![h1, h2]);
        let ladder = TemperatureLadder::from_inverse_temperatures(vec![5.0, 0.5]).unwrap();
        let tol = 1e-10;
        let est = wham(&trace, &ladder, tol, 10_000).unwrap();
        for w in 0..2 {
            let f_re = -log_sum_exp(
                (0..8)
                    .filter(|&e| est.log_g[e].is_finite())
                    .map(|e| est.log_g[e] - ladder.beta(w) * est.energies[e]),
            );
            assert!(
                (f_re - est.f[w]).abs() <= tol * (1.0 + est.f[w].abs()) * 2.0,
                "f[{w}] = {} recomputed {}",
                est.f[w],
                f_re
            );
        }
        // Output convention: the peak of log g sits at zero.
        let peak = est.log_g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(peak, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_bins_stay_empty() {
        let axis = Axis::new(0.0, 3.0, 3).unwrap();
        let trace = toy_trace(axis, vec![vec![10, 0, 10]]);
        let ladder = TemperatureLadder::from_inverse_temperatures(vec![1.0]).unwrap();
        let est = wham(&trace, &ladder, 1e-10, 100).unwrap();
        assert_eq!(est.log_g[1], f64::NEG_INFINITY);
        assert_eq!(est.g()[1], 0.0);
    }
}
