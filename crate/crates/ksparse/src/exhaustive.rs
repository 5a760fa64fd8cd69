//! Exhaustive evaluation of all C(N,K) supports of exactly K variables:
//! ranked best supports under each criterion plus exact densities of states
//! (1D per criterion and joint 2D over (CVE, FE)).
//!
//! Enumeration is lexicographic over index tuples and restartable from any
//! rank through combinatorial unranking, which is what makes chunked
//! parallel evaluation deterministic: the work is split into fixed blocks
//! of consecutive ranks, per-block partial results are exact (integer
//! histogram counts, min/max ranges, rank-tie-broken top lists), and the
//! merge is associative and commutative, so the outcome cannot depend on
//! the worker count.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criteria::{evaluate_support, fit_wls, CriteriaConfig, CriterionPair};
use crate::data::{Dataset, SupportSet};
use crate::dos::{Axis, Dos1d, Dos2d};
use crate::error::{Error, Result};

/// Binomial coefficient C(n, k); exact in u128 for every size this crate
/// can enumerate.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 1..=k {
        result = result * (n - (k - i)) as u128 / i as u128;
    }
    result
}

/// The support of lexicographic rank `rank` among all C(n,k) supports.
pub fn unrank_support(n: usize, k: usize, rank: u128) -> Result<SupportSet> {
    if k == 0 || k > n {
        return Err(Error::Validation(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    if rank >= binomial(n, k) {
        return Err(Error::Validation(format!(
            "rank {rank} out of range for C({n},{k}) = {}",
            binomial(n, k)
        )));
    }
    let mut rank = rank;
    let mut indices = Vec::with_capacity(k);
    let mut next = 0usize;
    for slot in 0..k {
        let mut c = next;
        loop {
            let below = binomial(n - c - 1, k - slot - 1);
            if below <= rank {
                rank -= below;
                c += 1;
            } else {
                indices.push(c);
                next = c + 1;
                break;
            }
        }
    }
    Ok(SupportSet::from_sorted(indices))
}

/// Lexicographic rank of a support among all C(n,k) supports.
pub fn rank_support(n: usize, s: &SupportSet) -> u128 {
    let k = s.k();
    let mut rank = 0u128;
    let mut start = 0usize;
    for (slot, &c) in s.indices().iter().enumerate() {
        for j in start..c {
            rank += binomial(n - j - 1, k - slot - 1);
        }
        start = c + 1;
    }
    rank
}

/// Advance a strictly increasing index tuple to its lexicographic
/// successor; returns false when it was the last one.
fn advance(indices: &mut [usize], n: usize) -> bool {
    let k = indices.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if indices[i] < n - k + i {
            indices[i] += 1;
            for j in i + 1..k {
                indices[j] = indices[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Iterator over all C(n,k) supports in lexicographic order.
pub struct SupportIter {
    n: usize,
    current: Vec<usize>,
    remaining: u128,
}

impl Iterator for SupportIter {
    type Item = SupportSet;

    fn next(&mut self) -> Option<SupportSet> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let item = SupportSet::from_sorted(self.current.clone());
        advance(&mut self.current, self.n);
        Some(item)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = usize::try_from(self.remaining).ok();
        (r.unwrap_or(usize::MAX), r)
    }
}

/// Enumerate all supports of size `k` over `n` variables, lexicographically.
pub fn enumerate_supports(n: usize, k: usize) -> Result<SupportIter> {
    enumerate_from_rank(n, k, 0)
}

/// Enumerate starting at lexicographic rank `start`.
pub fn enumerate_from_rank(n: usize, k: usize, start: u128) -> Result<SupportIter> {
    if k == 0 || k > n {
        return Err(Error::Validation(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    let total = binomial(n, k);
    if start > total {
        return Err(Error::Validation(format!("start rank {start} beyond C({n},{k})")));
    }
    let current = if start == total {
        (0..k).collect()
    } else {
        unrank_support(n, k, start)?.indices().to_vec()
    };
    Ok(SupportIter {
        n,
        current,
        remaining: total - start,
    })
}

/// How the densities of states are binned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Binning {
    /// Ranges found in a first evaluation pass, then binned uniformly.
    Auto { bins: usize },
    /// Caller-supplied axes; values outside them abort the search.
    Explicit { cve: Axis, fe: Axis },
    /// Skip histogram accumulation entirely (rankings only).
    Off,
}

/// Configuration of an exhaustive search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EskConfig {
    /// Best supports retained per criterion.
    pub top_t: usize,
    pub binning: Binning,
    /// Refuse to enumerate more supports than this without an override.
    pub budget_cap: u64,
    pub override_budget: bool,
    /// Worker threads; 0 uses the ambient rayon pool.
    pub jobs: usize,
}

impl Default for EskConfig {
    fn default() -> Self {
        EskConfig {
            top_t: 10,
            binning: Binning::Auto { bins: 200 },
            budget_cap: 100_000_000,
            override_budget: false,
            jobs: 0,
        }
    }
}

/// One entry of a ranked result list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSupport {
    pub support: SupportSet,
    pub names: Vec<String>,
    pub cve: f64,
    pub fe: f64,
    /// Debiased weighted-least-squares refit on the support; absent when
    /// the refit is singular.
    pub coefficients: Option<Vec<f64>>,
}

/// A support whose evaluation failed, kept out of rankings and histograms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSupport {
    pub support: SupportSet,
    pub reason: String,
}

/// Full result of an exhaustive K-sparse search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EskResult {
    pub k: usize,
    /// C(N,K): the number of supports enumerated.
    pub n_supports: u64,
    /// Supports successfully evaluated under both criteria.
    pub n_evaluated: u64,
    /// Ascending by CVE, ties broken toward the lexicographically smaller
    /// support.
    pub top_cve: Vec<RankedSupport>,
    /// Ascending by FE, same tie-break.
    pub top_fe: Vec<RankedSupport>,
    pub dos_cve: Option<Dos1d>,
    pub dos_fe: Option<Dos1d>,
    pub dos_2d: Option<Dos2d>,
    pub skipped: Vec<SkippedSupport>,
}

impl EskResult {
    /// Ranked entries as JSON lines with rank and criterion labels.
    pub fn write_ranked_jsonl(&self, criterion: &str, mut out: impl Write) -> Result<()> {
        let list = match criterion {
            "cve" => &self.top_cve,
            "fe" => &self.top_fe,
            other => {
                return Err(Error::Validation(format!(
                    "unknown ranking criterion {other:?}"
                )))
            }
        };
        for (i, entry) in list.iter().enumerate() {
            let line = serde_json::json!({
                "rank": i + 1,
                "criterion": criterion,
                "indices": entry.support.indices(),
                "names": entry.names,
                "cve": entry.cve,
                "fe": entry.fe,
                "coefficients": entry.coefficients,
            });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

const CHUNK: u64 = 4096;

#[derive(Clone)]
struct Accum {
    top_cve: Vec<(CriterionPair, u128)>,
    top_fe: Vec<(CriterionPair, u128)>,
    cve_min: f64,
    cve_max: f64,
    fe_min: f64,
    fe_max: f64,
    evaluated: u64,
    skipped: Vec<(u128, String)>,
    hists: Option<(Dos1d, Dos1d, Dos2d)>,
    top_t: usize,
}

impl Accum {
    fn new(top_t: usize, axes: Option<(Axis, Axis)>) -> Self {
        Accum {
            top_cve: Vec::new(),
            top_fe: Vec::new(),
            cve_min: f64::INFINITY,
            cve_max: f64::NEG_INFINITY,
            fe_min: f64::INFINITY,
            fe_max: f64::NEG_INFINITY,
            evaluated: 0,
            skipped: Vec::new(),
            hists: axes.map(|(cve, fe)| {
                (
                    Dos1d::new(cve.clone()),
                    Dos1d::new(fe.clone()),
                    Dos2d::new(cve, fe),
                )
            }),
            top_t,
        }
    }

    fn compact(list: &mut Vec<(CriterionPair, u128)>, key: fn(&CriterionPair) -> f64, t: usize) {
        list.sort_by(|a, b| key(&a.0).total_cmp(&key(&b.0)).then(a.1.cmp(&b.1)));
        list.truncate(t);
    }

    fn push(&mut self, rank: u128, pair: CriterionPair) -> Result<()> {
        self.evaluated += 1;
        self.cve_min = self.cve_min.min(pair.cve);
        self.cve_max = self.cve_max.max(pair.cve);
        self.fe_min = self.fe_min.min(pair.fe);
        self.fe_max = self.fe_max.max(pair.fe);
        self.top_cve.push((pair, rank));
        self.top_fe.push((pair, rank));
        if self.top_cve.len() > 4 * self.top_t.max(1) {
            Self::compact(&mut self.top_cve, |p| p.cve, self.top_t);
            Self::compact(&mut self.top_fe, |p| p.fe, self.top_t);
        }
        if let Some((dc, df, d2)) = &mut self.hists {
            dc.record(pair.cve)?;
            df.record(pair.fe)?;
            d2.record(pair.cve, pair.fe)?;
        }
        Ok(())
    }

    fn merge(mut self, mut other: Accum) -> Accum {
        self.top_cve.append(&mut other.top_cve);
        self.top_fe.append(&mut other.top_fe);
        Self::compact(&mut self.top_cve, |p| p.cve, self.top_t);
        Self::compact(&mut self.top_fe, |p| p.fe, self.top_t);
        self.cve_min = self.cve_min.min(other.cve_min);
        self.cve_max = self.cve_max.max(other.cve_max);
        self.fe_min = self.fe_min.min(other.fe_min);
        self.fe_max = self.fe_max.max(other.fe_max);
        self.evaluated += other.evaluated;
        self.skipped.append(&mut other.skipped);
        match (&mut self.hists, other.hists) {
            (Some((ac, af, a2)), Some((bc, bf, b2))) => {
                ac.merge(&bc);
                af.merge(&bf);
                a2.merge(&b2);
            }
            (None, None) => {}
            _ => unreachable!("histogram presence differs between accumulators"),
        }
        self
    }
}

/// One parallel evaluation pass over all supports.
fn scan(
    d: &Dataset,
    k: usize,
    criteria: &CriteriaConfig,
    total: u128,
    top_t: usize,
    axes: Option<(Axis, Axis)>,
) -> Result<Accum> {
    let n = d.n();
    let total_u64 = u64::try_from(total).expect("budget-checked enumeration fits u64");
    let n_chunks = total_u64.div_ceil(CHUNK);
    let mut accum = (0..n_chunks)
        .into_par_iter()
        .try_fold(
            || Accum::new(top_t, axes.clone()),
            |mut acc, chunk| -> Result<Accum> {
                let start = chunk * CHUNK;
                let len = CHUNK.min(total_u64 - start);
                let iter = enumerate_from_rank(n, k, start as u128)?;
                for (offset, support) in iter.take(len as usize).enumerate() {
                    let rank = start as u128 + offset as u128;
                    match evaluate_support(d, &support, criteria) {
                        Ok(pair) => acc.push(rank, pair)?,
                        Err(err) => acc.skipped.push((rank, err.to_string())),
                    }
                }
                Ok(acc)
            },
        )
        .try_reduce(|| Accum::new(top_t, axes.clone()), |a, b| Ok(a.merge(b)))?;
    Accum::compact(&mut accum.top_cve, |p| p.cve, top_t);
    Accum::compact(&mut accum.top_fe, |p| p.fe, top_t);
    accum.skipped.sort_by_key(|(rank, _)| *rank);
    Ok(accum)
}

fn ranked_entries(
    d: &Dataset,
    n: usize,
    k: usize,
    list: &[(CriterionPair, u128)],
) -> Result<Vec<RankedSupport>> {
    list.iter()
        .map(|(pair, rank)| {
            let support = unrank_support(n, k, *rank)?;
            let names = d.support_names(&support);
            let coefficients = fit_wls(d, &support)
                .ok()
                .map(|fit| fit.beta.iter().copied().collect());
            Ok(RankedSupport {
                support,
                names,
                cve: pair.cve,
                fe: pair.fe,
                coefficients,
            })
        })
        .collect()
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if jobs == 0 {
        f()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Validation(format!("cannot build worker pool: {e}")))?;
        pool.install(f)
    }
}

/// Evaluate every support of size `k` under both criteria. Returns ranked
/// top lists, exact densities of states per the configured binning, and a
/// skip-list of supports whose evaluation failed.
pub fn exhaustive_search(
    d: &Dataset,
    k: usize,
    criteria: &CriteriaConfig,
    cfg: &EskConfig,
) -> Result<EskResult> {
    let n = d.n();
    if k == 0 || k > n {
        return Err(Error::Validation(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    if k > d.p() {
        return Err(Error::Validation(format!(
            "support size {k} exceeds sample count {}",
            d.p()
        )));
    }
    let total = binomial(n, k);
    if total > cfg.budget_cap as u128 && !cfg.override_budget {
        return Err(Error::BudgetExceeded {
            required: total,
            cap: cfg.budget_cap,
            hint: "use the replica-exchange sampler for this size or raise the budget cap".into(),
        });
    }

    in_pool(cfg.jobs, || {
        // First pass: rankings, ranges, skip-list (and histograms right away
        // when explicit axes were given).
        let explicit = match &cfg.binning {
            Binning::Explicit { cve, fe } => Some((cve.clone(), fe.clone())),
            _ => None,
        };
        let first = scan(d, k, criteria, total, cfg.top_t, explicit)?;

        // Second pass for auto binning, now that the ranges are known.
        let (accum, hists) = match &cfg.binning {
            Binning::Auto { bins } if first.evaluated > 0 => {
                let cve_axis = padded_axis(first.cve_min, first.cve_max, *bins)?;
                let fe_axis = padded_axis(first.fe_min, first.fe_max, *bins)?;
                let second = scan(d, k, criteria, total, cfg.top_t, Some((cve_axis, fe_axis)))?;
                let h = second.hists.clone();
                (second, h)
            }
            _ => {
                let h = first.hists.clone();
                (first, h)
            }
        };

        let (dos_cve, dos_fe, dos_2d) = match hists {
            Some((c, f, j)) => (Some(c), Some(f), Some(j)),
            None => (None, None, None),
        };
        let top_cve = ranked_entries(d, n, k, &accum.top_cve)?;
        let top_fe = ranked_entries(d, n, k, &accum.top_fe)?;
        let skipped = accum
            .skipped
            .iter()
            .map(|(rank, reason)| {
                Ok(SkippedSupport {
                    support: unrank_support(n, k, *rank)?,
                    reason: reason.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EskResult {
            k,
            n_supports: total as u64,
            n_evaluated: accum.evaluated,
            top_cve,
            top_fe,
            dos_cve,
            dos_fe,
            dos_2d,
            skipped,
        })
    })
}

/// Uniform axis over `[lo, hi]` with a degenerate-range guard.
fn padded_axis(lo: f64, hi: f64, bins: usize) -> Result<Axis> {
    if lo == hi {
        let pad = 0.5 * lo.abs().max(1.0);
        Axis::new(lo - pad, hi + pad, bins)
    } else {
        Axis::new(lo, hi, bins)
    }
}

/// Bin a list of criterion pairs into a joint 2D density of states.
/// With explicit axes and `auto_extend` off, out-of-range values are an
/// error; `auto_extend` recomputes the axes to cover everything.
pub fn joint_density(
    values: &[CriterionPair],
    binning: &Binning,
    auto_extend: bool,
) -> Result<Dos2d> {
    if values.is_empty() {
        return Err(Error::Validation("cannot bin an empty value list".into()));
    }
    let (cve_axis, fe_axis) = match binning {
        Binning::Auto { bins } => (
            covering_axis(values.iter().map(|p| p.cve), *bins)?,
            covering_axis(values.iter().map(|p| p.fe), *bins)?,
        ),
        Binning::Explicit { cve, fe } => {
            let out_of_range = values.iter().any(|p| {
                cve.bin_index(p.cve).is_none() || fe.bin_index(p.fe).is_none()
            });
            if out_of_range && !auto_extend {
                return Err(Error::Validation(
                    "values fall outside the explicit binning and auto-extend is off".into(),
                ));
            }
            if out_of_range {
                (
                    covering_axis(values.iter().map(|p| p.cve).chain([cve.min, cve.max]), cve.bins)?,
                    covering_axis(values.iter().map(|p| p.fe).chain([fe.min, fe.max]), fe.bins)?,
                )
            } else {
                (cve.clone(), fe.clone())
            }
        }
        Binning::Off => {
            return Err(Error::Validation("joint density needs a binning".into()));
        }
    };
    let mut dos = Dos2d::new(cve_axis, fe_axis);
    for pair in values {
        dos.record(pair.cve, pair.fe)?;
    }
    Ok(dos)
}

fn covering_axis(values: impl Iterator<Item = f64>, bins: usize) -> Result<Axis> {
    let collected: Vec<f64> = values.collect();
    let lo = collected.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = collected.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    padded_axis(lo, hi, bins)
}
