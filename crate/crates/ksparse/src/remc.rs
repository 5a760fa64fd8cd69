//! Fixed-cardinality Metropolis sampling over supports with replica
//! exchange across a temperature ladder.
//!
//! Each replica holds a support of exactly `K` active variables and evolves
//! by swap proposals: remove one uniformly chosen active index, insert one
//! uniformly chosen inactive index. The proposal is symmetric, so plain
//! Metropolis acceptance `min(1, exp(-dE/T))` targets the Boltzmann
//! distribution of the chosen criterion at each temperature. Neighboring
//! replicas exchange states with the standard replica-exchange rule.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{cross_validation_error, free_energy, CriteriaConfig};
use crate::data::{Dataset, SupportSet};
use crate::dos::Axis;
use crate::error::{Error, Result};

/// Which criterion plays the role of the sampler's energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionKind {
    Fe,
    Cve,
}

impl std::str::FromStr for CriterionKind {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        match text {
            "fe" => Ok(CriterionKind::Fe),
            "cve" => Ok(CriterionKind::Cve),
            _ => Err(Error::Validation(format!(
                "criterion must be fe or cve, got {text:?}"
            ))),
        }
    }
}

impl std::fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CriterionKind::Fe => write!(f, "fe"),
            CriterionKind::Cve => write!(f, "cve"),
        }
    }
}

/// Temperatures of the replica ladder, stored as inverse temperatures in
/// descending order, so index 0 is the coldest replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureLadder {
    betas: Vec<f64>,
}

impl TemperatureLadder {
    pub fn from_inverse_temperatures(mut betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Validation("ladder needs at least one temperature".into()));
        }
        if betas.iter().any(|b| !b.is_finite() || *b <= 0.0) {
            return Err(Error::Validation("inverse temperatures must be positive and finite".into()));
        }
        betas.sort_by(|a, b| b.total_cmp(a));
        if betas.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("ladder temperatures must be distinct".into()));
        }
        Ok(TemperatureLadder { betas })
    }

    /// `count` inverse temperatures equally spaced on the log scale between
    /// `beta_lo` and `beta_hi` (inclusive).
    pub fn log_spaced(beta_lo: f64, beta_hi: f64, count: usize) -> Result<Self> {
        if count < 1 {
            return Err(Error::Validation("ladder needs at least one temperature".into()));
        }
        if count == 1 {
            return Self::from_inverse_temperatures(vec![beta_lo]);
        }
        let (lo, hi) = (beta_lo.min(beta_hi), beta_lo.max(beta_hi));
        if !(lo > 0.0 && hi.is_finite()) {
            return Err(Error::Validation("inverse temperatures must be positive and finite".into()));
        }
        let step = (hi.ln() - lo.ln()) / (count - 1) as f64;
        let betas = (0..count).map(|i| (lo.ln() + step * i as f64).exp()).collect();
        Self::from_inverse_temperatures(betas)
    }

    /// Default ladder for CVE energies: 15 inverse temperatures log-spaced
    /// from 1e0 to 1e4.
    pub fn default_cve() -> Self {
        Self::log_spaced(1e0, 1e4, 15).unwrap()
    }

    /// Default ladder for FE energies: 15 inverse temperatures log-spaced
    /// from 1e-3 to 1e1.
    pub fn default_fe() -> Self {
        Self::log_spaced(1e-3, 1e1, 15).unwrap()
    }

    pub fn for_criterion(criterion: CriterionKind) -> Self {
        match criterion {
            CriterionKind::Fe => Self::default_fe(),
            CriterionKind::Cve => Self::default_cve(),
        }
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    /// Inverse temperature of replica `i` (descending in `i`).
    pub fn beta(&self, i: usize) -> f64 {
        self.betas[i]
    }

    /// Temperature of replica `i` (ascending in `i`).
    pub fn temperature(&self, i: usize) -> f64 {
        1.0 / self.betas[i]
    }

    pub fn inverse_temperatures(&self) -> &[f64] {
        &self.betas
    }
}

/// Run-length and sampling policy of one REMC run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemcConfig {
    pub ladder: TemperatureLadder,
    /// Total Monte Carlo sweeps; one sweep makes `K` swap proposals.
    pub sweeps: usize,
    /// Leading sweeps discarded from the histograms.
    pub burn_in: usize,
    /// Sweeps between exchange attempts.
    pub exchange_interval: usize,
    pub seed: u64,
    pub k: usize,
    pub criterion: CriterionKind,
    /// Explicit energy binning for the histograms; `None` bins the pooled
    /// observed range (padded by 1%) into `energy_bins` bins.
    pub energy_binning: Option<Axis>,
    pub energy_bins: usize,
}

impl RemcConfig {
    /// Paper-default run: 100,000 sweeps with the first half as burn-in,
    /// exchange attempted every sweep, criterion-specific default ladder.
    pub fn new(k: usize, criterion: CriterionKind, seed: u64) -> Self {
        RemcConfig {
            ladder: TemperatureLadder::for_criterion(criterion),
            sweeps: 100_000,
            burn_in: 50_000,
            exchange_interval: 1,
            seed,
            k,
            criterion,
            energy_binning: None,
            energy_bins: 400,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Validation("k must be at least 1".into()));
        }
        if self.burn_in >= self.sweeps {
            return Err(Error::Validation(format!(
                "burn-in {} must be smaller than sweep count {}",
                self.burn_in, self.sweeps
            )));
        }
        if self.exchange_interval == 0 {
            return Err(Error::Validation("exchange interval must be at least 1".into()));
        }
        if self.energy_bins == 0 {
            return Err(Error::Validation("need at least one energy bin".into()));
        }
        Ok(())
    }
}

/// A replica's current support with its cached energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub support: SupportSet,
    pub energy: f64,
}

/// Outcome of one Metropolis sweep.
#[derive(Debug, Clone)]
pub struct SweepStats {
    pub proposals: usize,
    pub accepted: usize,
    /// Proposals whose energy evaluation failed; treated as infinite energy
    /// and rejected.
    pub eval_failures: usize,
    /// Lowest-energy state the chain occupied during the sweep (the
    /// starting state counts).
    pub best: ChainState,
}

/// The `j`-th index (0-based) not present in the sorted active list.
fn jth_inactive(active: &[usize], j: usize) -> usize {
    let mut idx = j;
    for &a in active {
        if a <= idx {
            idx += 1;
        } else {
            break;
        }
    }
    idx
}

/// One sweep of `K` swap proposals at temperature `t`. Each proposal removes
/// a uniformly chosen active index and inserts a uniformly chosen inactive
/// one, accepted with probability `min(1, exp(-dE/t))`.
pub fn metropolis_sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    n_vars: usize,
    energy: impl Fn(&SupportSet) -> Result<f64>,
    t: f64,
    rng: &mut R,
) -> SweepStats {
    let k = state.support.k();
    debug_assert!(n_vars > k, "need at least one inactive variable to swap");
    let mut stats = SweepStats {
        proposals: k,
        accepted: 0,
        eval_failures: 0,
        best: state.clone(),
    };
    for _ in 0..k {
        let out_pos = rng.random_range(0..k);
        let in_j = rng.random_range(0..n_vars - k);
        let in_idx = jth_inactive(state.support.indices(), in_j);
        let mut indices = state.support.indices().to_vec();
        indices[out_pos] = in_idx;
        indices.sort_unstable();
        let candidate = SupportSet::from_sorted(indices);
        let e_new = match energy(&candidate) {
            Ok(e) if e.is_finite() => e,
            _ => {
                stats.eval_failures += 1;
                continue;
            }
        };
        let delta = e_new - state.energy;
        let accept = delta <= 0.0 || rng.random::<f64>() < (-delta / t).exp();
        if accept {
            state.support = candidate;
            state.energy = e_new;
            stats.accepted += 1;
            if e_new < stats.best.energy {
                stats.best = state.clone();
            }
        }
    }
    stats
}

/// Attempt exchanges between adjacent replicas. Pairs `(i, i+1)` with
/// `i % 2 == offset` are tried; states swap with probability
/// `min(1, exp((b_{i+1} - b_i) (E_{i+1} - E_i)))` where `b` is the inverse
/// temperature. Returns, per adjacent pair, `None` when the pair was not
/// attempted this call and `Some(swapped)` otherwise. A swap moves states
/// between temperature slots; the pooled multiset of states is preserved.
pub fn exchange_step<R: Rng + ?Sized>(
    states: &mut [ChainState],
    ladder: &TemperatureLadder,
    offset: usize,
    rng: &mut R,
) -> Vec<Option<bool>> {
    assert_eq!(states.len(), ladder.len());
    let n = states.len();
    let mut outcome = vec![None; n.saturating_sub(1)];
    let mut i = offset;
    while i + 1 < n {
        let log_r = (ladder.beta(i + 1) - ladder.beta(i)) * (states[i + 1].energy - states[i].energy);
        let swap = log_r >= 0.0 || rng.random::<f64>() < log_r.exp();
        if swap {
            states.swap(i, i + 1);
        }
        outcome[i] = Some(swap);
        i += 2;
    }
    outcome
}

/// Everything recorded by one REMC run: per-temperature energy histograms
/// on a common axis, retained sample counts, the best state ever observed
/// (burn-in included), and acceptance diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaTrace {
    pub axis: Axis,
    /// `histograms[w][e]`: post-burn-in samples of replica `w` in energy bin `e`.
    pub histograms: Vec<Vec<u64>>,
    /// Retained sample count per replica.
    pub n: Vec<u64>,
    pub best_support: SupportSet,
    pub best_energy: f64,
    pub exchange_attempts: Vec<u64>,
    pub exchange_accepts: Vec<u64>,
    pub move_proposals: Vec<u64>,
    pub move_accepts: Vec<u64>,
    pub eval_failures: Vec<u64>,
}

impl ReplicaTrace {
    pub fn replicas(&self) -> usize {
        self.histograms.len()
    }

    pub fn move_acceptance(&self, replica: usize) -> f64 {
        self.move_accepts[replica] as f64 / self.move_proposals[replica].max(1) as f64
    }

    pub fn exchange_acceptance(&self, pair: usize) -> f64 {
        self.exchange_accepts[pair] as f64 / self.exchange_attempts[pair].max(1) as f64
    }

    /// Adjacent pairs whose exchange acceptance fell below `threshold`,
    /// suggesting a gap in the ladder.
    pub fn low_exchange_pairs(&self, threshold: f64) -> Vec<usize> {
        (0..self.exchange_attempts.len())
            .filter(|&p| self.exchange_attempts[p] > 0 && self.exchange_acceptance(p) < threshold)
            .collect()
    }

    /// CSV rows `replica,inverse_temperature,bin_lo,bin_hi,count`.
    pub fn write_histograms_csv(&self, ladder: &TemperatureLadder, mut out: impl Write) -> Result<()> {
        writeln!(out, "replica,inverse_temperature,bin_lo,bin_hi,count")?;
        for (w, hist) in self.histograms.iter().enumerate() {
            for (e, &c) in hist.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    w,
                    ladder.beta(w),
                    self.axis.bin_lo(e),
                    self.axis.bin_hi(e),
                    c
                )?;
            }
        }
        Ok(())
    }

    pub fn diagnostics_json(&self) -> serde_json::Value {
        serde_json::json!({
            "replicas": self.replicas(),
            "move_acceptance": (0..self.replicas()).map(|w| self.move_acceptance(w)).collect::<Vec<_>>(),
            "exchange_acceptance": (0..self.exchange_attempts.len()).map(|p| self.exchange_acceptance(p)).collect::<Vec<_>>(),
            "eval_failures": self.eval_failures,
            "low_exchange_pairs": self.low_exchange_pairs(0.05),
            "best_energy": self.best_energy,
            "best_support": self.best_support.indices(),
        })
    }
}

struct ReplicaSlot {
    state: ChainState,
    rng: ChaCha8Rng,
    proposals: u64,
    accepts: u64,
    failures: u64,
    energies: Vec<f64>,
    best: ChainState,
}

/// Run REMC with an arbitrary energy function over `K`-supports of
/// `n_vars` variables. Deterministic for a given config; independent of
/// worker count.
pub fn run_remc_with_energy<E>(n_vars: usize, cfg: &RemcConfig, energy: E) -> Result<ReplicaTrace>
where
    E: Fn(&SupportSet) -> Result<f64> + Sync,
{
    cfg.validate()?;
    if n_vars <= cfg.k {
        return Err(Error::Validation(format!(
            "need n > k for swap proposals, got n={n_vars}, k={}",
            cfg.k
        )));
    }
    let omega = cfg.ladder.len();
    let retained = cfg.sweeps - cfg.burn_in;

    // Stream 0 drives exchanges, streams 1..=omega the replicas.
    let mut exchange_rng = crate::rng::seeded(cfg.seed, 0);
    let mut slots: Vec<ReplicaSlot> = (0..omega)
        .map(|w| -> Result<ReplicaSlot> {
            let mut rng = crate::rng::seeded(cfg.seed, w as u64 + 1);
            let support = random_support(n_vars, cfg.k, &mut rng);
            let e = energy(&support).map_err(|err| {
                Error::Numeric(format!(
                    "initial state {support} of replica {w} is not evaluable: {err}"
                ))
            })?;
            let state = ChainState { support, energy: e };
            Ok(ReplicaSlot {
                best: state.clone(),
                state,
                rng,
                proposals: 0,
                accepts: 0,
                failures: 0,
                energies: Vec::with_capacity(retained),
            })
        })
        .collect::<Result<_>>()?;

    let mut exchange_attempts = vec![0u64; omega.saturating_sub(1)];
    let mut exchange_accepts = vec![0u64; omega.saturating_sub(1)];
    let mut exchanges_done = 0usize;

    for sweep in 0..cfg.sweeps {
        slots.par_iter_mut().enumerate().for_each(|(w, slot)| {
            let stats = metropolis_sweep(
                &mut slot.state,
                n_vars,
                &energy,
                cfg.ladder.temperature(w),
                &mut slot.rng,
            );
            slot.proposals += stats.proposals as u64;
            slot.accepts += stats.accepted as u64;
            slot.failures += stats.eval_failures as u64;
            if stats.best.energy < slot.best.energy {
                slot.best = stats.best;
            }
            if sweep >= cfg.burn_in {
                slot.energies.push(slot.state.energy);
            }
        });
        if (sweep + 1) % cfg.exchange_interval == 0 && omega > 1 {
            let mut states: Vec<ChainState> = slots.iter().map(|s| s.state.clone()).collect();
            let outcome = exchange_step(&mut states, &cfg.ladder, exchanges_done % 2, &mut exchange_rng);
            for (pair, res) in outcome.iter().enumerate() {
                if let Some(swapped) = res {
                    exchange_attempts[pair] += 1;
                    if *swapped {
                        exchange_accepts[pair] += 1;
                    }
                }
            }
            for (slot, state) in slots.iter_mut().zip(states) {
                slot.state = state;
            }
            exchanges_done += 1;
        }
    }

    // Common energy axis: explicit, or pooled observed range padded by 1%.
    let axis = match &cfg.energy_binning {
        Some(axis) => axis.clone(),
        None => {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for slot in &slots {
                for &e in &slot.energies {
                    lo = lo.min(e);
                    hi = hi.max(e);
                }
            }
            if lo == hi {
                let pad = 0.5 * lo.abs().max(1.0);
                Axis::new(lo - pad, hi + pad, cfg.energy_bins)?
            } else {
                let pad = 0.01 * (hi - lo);
                Axis::new(lo - pad, hi + pad, cfg.energy_bins)?
            }
        }
    };

    let mut histograms = Vec::with_capacity(omega);
    for (w, slot) in slots.iter().enumerate() {
        let mut hist = vec![0u64; axis.bins];
        for &e in &slot.energies {
            let idx = axis.bin_index(e).ok_or_else(|| {
                Error::Validation(format!(
                    "replica {w} observed energy {e} outside the configured binning \
                     [{}, {}]; widen the range",
                    axis.min, axis.max
                ))
            })?;
            hist[idx] += 1;
        }
        histograms.push(hist);
    }

    let best = slots
        .iter()
        .map(|s| &s.best)
        .min_by(|a, b| a.energy.total_cmp(&b.energy).then_with(|| a.support.cmp(&b.support)))
        .expect("at least one replica");

    Ok(ReplicaTrace {
        axis,
        histograms,
        n: vec![retained as u64; omega],
        best_support: best.support.clone(),
        best_energy: best.energy,
        exchange_attempts,
        exchange_accepts,
        move_proposals: slots.iter().map(|s| s.proposals).collect(),
        move_accepts: slots.iter().map(|s| s.accepts).collect(),
        eval_failures: slots.iter().map(|s| s.failures).collect(),
    })
}

/// Run REMC with the configured criterion as the energy.
pub fn run_remc(d: &Dataset, cfg: &RemcConfig, criteria: &CriteriaConfig) -> Result<ReplicaTrace> {
    match cfg.criterion {
        CriterionKind::Fe => {
            let prior = criteria.prior;
            run_remc_with_energy(d.n(), cfg, move |s| free_energy(d, s, &prior))
        }
        CriterionKind::Cve => {
            let folds = criteria.folds.clone();
            run_remc_with_energy(d.n(), cfg, move |s| cross_validation_error(d, s, &folds))
        }
    }
}

/// The lowest-energy state observed anywhere in the run, burn-in included.
pub fn min_energy_estimate(trace: &ReplicaTrace) -> (SupportSet, f64) {
    (trace.best_support.clone(), trace.best_energy)
}

fn random_support<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> SupportSet {
    // Partial Fisher-Yates over 0..n.
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    let mut indices: Vec<usize> = pool[..k].to_vec();
    indices.sort_unstable();
    SupportSet::from_sorted(indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn support(indices: &[usize]) -> SupportSet {
        SupportSet::new(indices.to_vec()).unwrap()
    }

    #[test]
    fn jth_inactive_mapping() {
        let active = [1, 3];
        assert_eq!(jth_inactive(&active, 0), 0);
        assert_eq!(jth_inactive(&active, 1), 2);
        assert_eq!(jth_inactive(&active, 2), 4);
    }

    #[test]
    fn sweep_accepts_equal_energy_always() {
        let mut rng = crate::rng::seeded(1, 3);
        let mut state = ChainState {
            support: support(&[0, 1]),
            energy: 0.0,
        };
        let mut accepted = 0;
        for _ in 0..200 {
            let stats = metropolis_sweep(&mut state, 6, |_| Ok(0.0), 1e-9, &mut rng);
            accepted += stats.accepted;
        }
        assert_eq!(accepted, 400, "dE = 0 proposals must always be accepted");
    }

    #[test]
    fn sweep_is_greedy_at_zero_temperature() {
        // Distinct energies: index sum. Downhill only at t -> 0+.
        let mut rng = crate::rng::seeded(2, 3);
        let energy = |s: &SupportSet| Ok(s.indices().iter().sum::<usize>() as f64);
        let mut state = ChainState {
            support: support(&[3, 4]),
            energy: 7.0,
        };
        for _ in 0..100 {
            let before = state.energy;
            metropolis_sweep(&mut state, 5, energy, 1e-12, &mut rng);
            assert!(state.energy <= before);
        }
        assert_eq!(state.support.indices(), [0, 1]);
    }

    #[test]
    fn sweep_preserves_cardinality_and_handles_failures() {
        let mut rng = crate::rng::seeded(3, 3);
        // Fail on any support containing index 0; the chain must survive.
        let energy = |s: &SupportSet| {
            if s.contains(0) {
                Err(Error::Numeric("poisoned".into()))
            } else {
                Ok(s.indices()[0] as f64)
            }
        };
        let mut state = ChainState {
            support: support(&[1, 2]),
            energy: 1.0,
        };
        let mut failures = 0;
        for _ in 0..500 {
            let stats = metropolis_sweep(&mut state, 6, energy, 1.0, &mut rng);
            failures += stats.eval_failures;
            assert_eq!(state.support.k(), 2);
            assert!(!state.support.contains(0));
        }
        assert!(failures > 0);
    }

    #[test]
    fn sweep_visits_uniformly_under_flat_energy() {
        // Symmetric proposal + flat energy => uniform stationary law over
        // all C(6,2) = 15 supports.
        let mut rng = crate::rng::seeded(4, 3);
        let mut state = ChainState {
            support: support(&[0, 1]),
            energy: 0.0,
        };
        let sweeps = 100_000;
        let mut visits: HashMap<Vec<usize>, u64> = HashMap::new();
        for _ in 0..sweeps {
            metropolis_sweep(&mut state, 6, |_| Ok(0.0), 1.0, &mut rng);
            *visits.entry(state.support.indices().to_vec()).or_default() += 1;
        }
        assert_eq!(visits.len(), 15);
        let tv: f64 = visits
            .values()
            .map(|&c| (c as f64 / sweeps as f64 - 1.0 / 15.0).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total variation {tv}");
    }

    #[test]
    fn exchange_always_swaps_equal_energies() {
        let ladder = TemperatureLadder::from_inverse_temperatures(vec![2.0, 1.0]).unwrap();
        let mut rng = crate::rng::seeded(5, 3);
        let mut states = vec![
            ChainState { support: support(&[0]), energy: 3.0 },
            ChainState { support: support(&[1]), energy: 3.0 },
        ];
        let out = exchange_step(&mut states, &ladder, 0, &mut rng);
        assert_eq!(out, vec![Some(true)]);
        assert_eq!(states[0].support.indices(), [1]);
    }

    #[test]
    fn exchange_rule_hand_case() {
        // b_w = 1, b_{w+1} = 0.5, E_w = 2, E_{w+1} = 1:
        // log r = (0.5 - 1)(1 - 2) = 0.5 > 0, so the swap is certain.
        let ladder = TemperatureLadder::from_inverse_temperatures(vec![1.0, 0.5]).unwrap();
        let mut rng = crate::rng::seeded(6, 3);
        let mut states = vec![
            ChainState { support: support(&[0]), energy: 2.0 },
            ChainState { support: support(&[1]), energy: 1.0 },
        ];
        let out = exchange_step(&mut states, &ladder, 0, &mut rng);
        assert_eq!(out, vec![Some(true)]);
        assert_eq!(states[0].energy, 1.0);
        assert_eq!(states[1].energy, 2.0);
    }

    #[test]
    fn exchange_preserves_pooled_states() {
        let ladder = TemperatureLadder::log_spaced(0.1, 10.0, 5).unwrap();
        let mut rng = crate::rng::seeded(7, 3);
        let mut states: Vec<ChainState> = (0..5)
            .map(|i| ChainState {
                support: support(&[i, i + 1]),
                energy: i as f64 * 0.7,
            })
            .collect();
        let mut pool_before: Vec<Vec<usize>> =
            states.iter().map(|s| s.support.indices().to_vec()).collect();
        pool_before.sort();
        for step in 0..50 {
            exchange_step(&mut states, &ladder, step % 2, &mut rng);
            let mut pool: Vec<Vec<usize>> =
                states.iter().map(|s| s.support.indices().to_vec()).collect();
            pool.sort();
            assert_eq!(pool, pool_before);
        }
    }

    #[test]
    fn remc_deterministic_and_counts_consistent() {
        let energy = |s: &SupportSet| Ok(s.indices().iter().sum::<usize>() as f64 * 0.3);
        let cfg = RemcConfig {
            ladder: TemperatureLadder::log_spaced(0.1, 10.0, 4).unwrap(),
            sweeps: 400,
            burn_in: 100,
            exchange_interval: 1,
            seed: 99,
            k: 2,
            criterion: CriterionKind::Cve,
            energy_binning: None,
            energy_bins: 50,
        };
        let a = run_remc_with_energy(8, &cfg, energy).unwrap();
        let b = run_remc_with_energy(8, &cfg, energy).unwrap();
        assert_eq!(a, b);
        for w in 0..4 {
            let total: u64 = a.histograms[w].iter().sum();
            assert_eq!(total, a.n[w]);
            assert_eq!(a.n[w], 300);
        }
        // Best energy is a lower bound on everything recorded.
        for w in 0..4 {
            for (e, &c) in a.histograms[w].iter().enumerate() {
                if c > 0 {
                    assert!(a.best_energy <= a.axis.bin_hi(e));
                }
            }
        }
    }

    #[test]
    fn remc_two_replica_two_state_joint_distribution() {
        // N=2, K=1: states {0} and {1} with energies 0 and 1. The joint law
        // of (cold, hot) states must converge to the product Boltzmann
        // distribution despite the exchange coupling.
        let energy = |s: &SupportSet| Ok(if s.contains(0) { 0.0 } else { 1.0 });
        let betas = [2.0, 0.5];
        let ladder = TemperatureLadder::from_inverse_temperatures(betas.to_vec()).unwrap();

        let mut rng0 = crate::rng::seeded(11, 1);
        let mut rng1 = crate::rng::seeded(11, 2);
        let mut ex_rng = crate::rng::seeded(11, 0);
        let mut states = vec![
            ChainState { support: support(&[0]), energy: 0.0 },
            ChainState { support: support(&[1]), energy: 1.0 },
        ];
        let sweeps = 200_000;
        let burn = 10_000;
        let mut joint = [[0u64; 2]; 2];
        for sweep in 0..sweeps {
            let s0 = metropolis_sweep(&mut states[0], 2, energy, 1.0 / betas[0], &mut rng0);
            let s1 = metropolis_sweep(&mut states[1], 2, energy, 1.0 / betas[1], &mut rng1);
            let _ = (s0, s1);
            exchange_step(&mut states, &ladder, sweep % 2, &mut ex_rng);
            if sweep >= burn {
                let a = usize::from(states[0].support.contains(1));
                let b = usize::from(states[1].support.contains(1));
                joint[a][b] += 1;
            }
        }
        let kept = (sweeps - burn) as f64;
        let z = |b: f64| 1.0 + (-b).exp();
        let p = |b: f64, state: usize| {
            if state == 0 { 1.0 / z(b) } else { (-b).exp() / z(b) }
        };
        let mut tv = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let expect = p(betas[0], a) * p(betas[1], b);
                tv += (joint[a][b] as f64 / kept - expect).abs();
            }
        }
        tv /= 2.0;
        assert!(tv < 0.02, "joint total variation {tv}");
    }
}
