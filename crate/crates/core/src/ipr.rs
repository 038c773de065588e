//! Bidirectional permutation-based implicit path relinking.
//!
//! Two elite chromosomes are connected by a walk of pairwise gene swaps.
//! The walk alternates between the two endpoints and keeps the best decoded
//! intermediate chromosome. Pairs are only relinked when their Kendall tau
//! rank distance is large enough.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::decoder::argsort;
use crate::genetics::{Chromosome, Population};
use crate::scalar::{cmp_scalar, Scalar};

/// Attempts made by [`select_pair`] before giving up.
pub const SELECTION_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IprError {
    #[error("chromosome lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("rank distance needs at least two genes, got {0}")]
    TooShort(usize),
    #[error("unknown selection rule {0:?} (expected randS or bestS)")]
    UnknownSelection(String),
}

/// How base and guide are picked from the elite sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// Uniformly at random, from two distinct populations when there are several.
    #[default]
    RandS,
    /// The best elite chromosome paired with the next best ones.
    BestS,
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::RandS => "randS",
            Selection::BestS => "bestS",
        })
    }
}

impl FromStr for Selection {
    type Err = IprError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rands" | "rand" | "random" => Ok(Selection::RandS),
            "bests" | "best" => Ok(Selection::BestS),
            _ => Err(IprError::UnknownSelection(s.to_string())),
        }
    }
}

/// Which ranking the selection gate uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceMode {
    /// Customer and driver segments ranked separately, distances averaged.
    #[default]
    Segmented,
    /// One ranking over the whole vector.
    Whole,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IprParams {
    /// Fraction of `n` giving the number of committed swaps.
    pub pct_p: f64,
    /// Minimum normalized rank distance between base and guide.
    pub md: f64,
    pub sel: Selection,
    pub distance: DistanceMode,
}

impl Default for IprParams {
    fn default() -> Self {
        Self {
            pct_p: 0.7,
            md: 0.2,
            sel: Selection::RandS,
            distance: DistanceMode::Segmented,
        }
    }
}

/// Number of discordant pairs between the rankings induced by `a` and `b`.
/// Ties rank by lower index. O(n log n).
pub fn discordant_pairs(a: &[f64], b: &[f64]) -> u64 {
    assert_eq!(a.len(), b.len());
    let rank_b = ranks(b);
    let mut seq: Vec<usize> = argsort(a).into_iter().map(|i| rank_b[i]).collect();
    let mut buf = vec![0usize; seq.len()];
    count_inversions(&mut seq, &mut buf)
}

fn ranks(keys: &[f64]) -> Vec<usize> {
    let mut rank = vec![0usize; keys.len()];
    for (r, i) in argsort(keys).into_iter().enumerate() {
        rank[i] = r;
    }
    rank
}

fn count_inversions(seq: &mut [usize], buf: &mut [usize]) -> u64 {
    let n = seq.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (left, right) = seq.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        count_inversions(left, bl) + count_inversions(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if seq[i] <= seq[j] {
            buf[k] = seq[i];
            i += 1;
        } else {
            buf[k] = seq[j];
            count += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&seq[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&seq[j..n]);
    seq.copy_from_slice(&buf[..n]);
    count
}

/// Normalized Kendall tau rank distance over the full vectors, in `[0, 1]`.
pub fn kendall_tau_distance(a: &[f64], b: &[f64]) -> Result<f64, IprError> {
    if a.len() != b.len() {
        return Err(IprError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(IprError::TooShort(n));
    }
    let pairs = (n as u64) * (n as u64 - 1) / 2;
    Ok(discordant_pairs(a, b) as f64 / pairs as f64)
}

/// Mean of the customer-segment and driver-segment distances. Segments with
/// fewer than two genes are left out; if both are, the whole vector is used.
pub fn segmented_distance(a: &[f64], b: &[f64], customers: usize) -> Result<f64, IprError> {
    if a.len() != b.len() {
        return Err(IprError::LengthMismatch(a.len(), b.len()));
    }
    let c = customers.min(a.len());
    let parts: Vec<f64> = [(0, c), (c, a.len())]
        .into_iter()
        .filter(|(lo, hi)| hi - lo >= 2)
        .map(|(lo, hi)| kendall_tau_distance(&a[lo..hi], &b[lo..hi]))
        .collect::<Result<_, _>>()?;
    if parts.is_empty() {
        return kendall_tau_distance(a, b);
    }
    Ok(parts.iter().sum::<f64>() / parts.len() as f64)
}

/// Gate distance according to `mode`; vectors shorter than two genes are at distance 0.
pub fn pair_distance(a: &[f64], b: &[f64], customers: usize, mode: DistanceMode) -> f64 {
    let d = match mode {
        DistanceMode::Segmented => segmented_distance(a, b, customers),
        DistanceMode::Whole => kendall_tau_distance(a, b),
    };
    d.unwrap_or(0.0)
}

/// Location of a chromosome: (population index, member index).
pub type Slot = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairChoice {
    pub base: Slot,
    pub guide: Slot,
}

/// Picks a base and a guide among the elite members of sorted populations.
/// Returns `None` when no pair with distinct genes at distance `>= md` is
/// found within [`SELECTION_ATTEMPTS`] attempts.
pub fn select_pair<S: Scalar, R: Rng + ?Sized>(
    populations: &[Population<S>],
    elite_size: usize,
    customers: usize,
    params: &IprParams,
    rng: &mut R,
) -> Option<PairChoice> {
    let elites: Vec<usize> = populations.iter().map(|p| elite_size.min(p.len())).collect();
    let get = |(p, i): Slot| &populations[p].members[i].genes;
    let acceptable = |pair: PairChoice| {
        let (a, b) = (get(pair.base), get(pair.guide));
        a != b && pair_distance(a, b, customers, params.distance) >= params.md
    };

    match params.sel {
        Selection::RandS => {
            let nonempty: Vec<usize> = (0..populations.len()).filter(|&p| elites[p] > 0).collect();
            if nonempty.len() < 2 && nonempty.first().is_none_or(|&p| elites[p] < 2) {
                return None;
            }
            for _ in 0..SELECTION_ATTEMPTS {
                let pair = if nonempty.len() >= 2 {
                    let picked = rand::seq::index::sample(rng, nonempty.len(), 2);
                    let (pa, pb) = (nonempty[picked.index(0)], nonempty[picked.index(1)]);
                    PairChoice {
                        base: (pa, rng.random_range(0..elites[pa])),
                        guide: (pb, rng.random_range(0..elites[pb])),
                    }
                } else {
                    let p = nonempty[0];
                    let picked = rand::seq::index::sample(rng, elites[p], 2);
                    PairChoice {
                        base: (p, picked.index(0)),
                        guide: (p, picked.index(1)),
                    }
                };
                if acceptable(pair) {
                    return Some(pair);
                }
            }
            None
        }
        Selection::BestS => {
            let mut pool: Vec<Slot> = (0..populations.len())
                .flat_map(|p| (0..elites[p]).map(move |i| (p, i)))
                .collect();
            pool.sort_by(|&a, &b| {
                let fa = populations[a.0].members[a.1].fitness;
                let fb = populations[b.0].members[b.1].fitness;
                cmp_scalar(&fa, &fb).then(a.cmp(&b))
            });
            let best = *pool.first()?;
            pool.iter()
                .skip(1)
                .take(SELECTION_ATTEMPTS)
                .map(|&other| PairChoice { base: best, guide: other })
                .find(|&pair| acceptable(pair))
        }
    }
}

/// Limits on one relinking call.
#[derive(Debug, Clone, Copy, Default)]
pub struct IprBudget {
    pub deadline: Option<Instant>,
    pub max_decodes: Option<u64>,
}

impl IprBudget {
    pub fn unlimited() -> Self {
        Self::default()
    }

    fn exhausted(&self, decodes: u64) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d) || self.max_decodes.is_some_and(|m| decodes >= m)
    }
}

/// One committed step of the walk.
#[derive(Debug, Clone, PartialEq)]
pub struct IprStep<S = f64> {
    /// `(i, value)` for every decoded candidate, `i` a 0-based index into the index lists.
    pub evaluated: Vec<(usize, S)>,
    /// Indices dropped because both lists agree there.
    pub skipped: Vec<usize>,
    /// Committed index, `None` when the phase ended without a commit.
    pub committed: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IprOutcome<S = f64> {
    /// Best intermediate chromosome, or the original base if nothing was committed.
    pub best: Chromosome<S>,
    pub decodes: u64,
    pub steps: Vec<IprStep<S>>,
}

/// Runs the walk from `base` towards `guide`. `customers` is the length of
/// the customer segment. The returned fitness is `+inf` when no step was
/// committed.
pub fn ipr_per<S, F>(
    base: &[f64],
    guide: &[f64],
    customers: usize,
    pct_p: f64,
    decode: &F,
    budget: IprBudget,
) -> IprOutcome<S>
where
    S: Scalar,
    F: Fn(&[f64]) -> S + Sync,
{
    walk(base, guide, customers, pct_p, decode, budget, false)
}

/// Same as [`ipr_per`] but records every outer step.
pub fn ipr_per_traced<S, F>(
    base: &[f64],
    guide: &[f64],
    customers: usize,
    pct_p: f64,
    decode: &F,
    budget: IprBudget,
) -> IprOutcome<S>
where
    S: Scalar,
    F: Fn(&[f64]) -> S + Sync,
{
    walk(base, guide, customers, pct_p, decode, budget, true)
}

/// Segment-wise argsort: the first `c` entries index customers, the rest drivers.
fn segment_order(genes: &[f64], c: usize) -> Vec<usize> {
    let mut order = argsort(&genes[..c]);
    order.extend(argsort(&genes[c..]).into_iter().map(|i| i + c));
    order
}

fn walk<S, F>(
    base: &[f64],
    guide: &[f64],
    customers: usize,
    pct_p: f64,
    decode: &F,
    budget: IprBudget,
    trace: bool,
) -> IprOutcome<S>
where
    S: Scalar,
    F: Fn(&[f64]) -> S + Sync,
{
    assert_eq!(base.len(), guide.len(), "base and guide must have equal length");
    let n = base.len();
    let c = customers.min(n);
    let mut path_size = (n as f64 * pct_p).ceil().max(0.0) as usize;
    let mut best = Chromosome::with_fitness(base.to_vec(), S::infinity());
    let i_b = segment_order(base, c);
    let i_g = segment_order(guide, c);
    let mut current = base.to_vec();
    let mut other = guide.to_vec();
    let mut ri: Vec<usize> = (0..c).collect();
    let mut in_driver_phase = false;
    let decodes = AtomicU64::new(0);
    let mut steps = Vec::new();

    while path_size > 0 && !budget.exhausted(decodes.load(Ordering::Relaxed)) {
        let mut skipped = Vec::new();
        ri.retain(|&i| {
            let same = i_b[i] == i_g[i];
            if same {
                skipped.push(i);
            }
            !same
        });

        let values: Vec<S> = ri
            .par_iter()
            .map(|&i| {
                let mut trial = current.clone();
                trial.swap(i_b[i], i_g[i]);
                decodes.fetch_add(1, Ordering::Relaxed);
                decode(&trial)
            })
            .collect();

        // First strictly smaller value wins, so ties keep the earliest index.
        let mut chosen: Option<(usize, S)> = None;
        for (pos, &v) in values.iter().enumerate() {
            if v < chosen.map_or(S::infinity(), |(_, b)| b) {
                chosen = Some((pos, v));
            }
        }

        if trace {
            steps.push(IprStep {
                evaluated: ri.iter().copied().zip(values.iter().copied()).collect(),
                skipped,
                committed: chosen.map(|(pos, _)| ri[pos]),
            });
        }

        let Some((pos, value)) = chosen else {
            if in_driver_phase {
                break;
            }
            in_driver_phase = true;
            ri = (c..n).collect();
            continue;
        };

        let i = ri.remove(pos);
        current.swap(i_b[i], i_g[i]);
        if value < best.fitness {
            best = Chromosome::with_fitness(current.clone(), value);
        }
        std::mem::swap(&mut current, &mut other);
        path_size -= 1;
    }

    IprOutcome {
        best,
        decodes: decodes.into_inner(),
        steps,
    }
}
