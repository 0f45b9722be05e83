//! Coalition formation: start from the max-min selection and trade minimum
//! rate for sum rate one rate level at a time, pruning branches whose
//! optimistic weight cannot beat the incumbent.
//!
//! Every level `r` on the ladder (the distinct candidate rates at or below
//! the max-min rate) is searched for the best selection whose minimum rate is
//! exactly `r`. A search pivots on each candidate of rate `r` in `Q` order and
//! completes the selection depth-first with candidates of rate `>= r` taken in
//! `Q` order. A level result is adopted only if it strictly improves the
//! incumbent sum, so adopted points form a staircase along the frontier.

use serde::{Deserialize, Serialize};

use crate::candidates::{first_full_rank_prefix, q_order, CandidateSetFamily};
use crate::error::{Error, Result};
use crate::exact;
use crate::model::{derive_selection, CandidateVector, CodingSelection, RateRequirements, RATE_TOL};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineTrace {
    /// Fully assembled `L`-column matrices whose rank and rates were evaluated.
    pub matrices_searched: u64,
    /// Accepted coalitions, the initial max-min one included.
    pub coalitions_formed: u64,
    /// `(min_rate, sum_rate)` of each accepted coalition in order.
    pub visited_points: Vec<(f64, f64)>,
    /// The accepted selections themselves, parallel to `visited_points`.
    pub visited: Vec<CodingSelection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineResult {
    pub selection: CodingSelection,
    /// The max-min selection the search started from.
    pub step1: CodingSelection,
    pub trace: EngineTrace,
}

/// One weighed branch of the search: `partial` extended by `candidate` while
/// searching the level with minimum rate `level`.
#[derive(Debug, Clone)]
pub struct BranchEvent<'a> {
    pub level: f64,
    pub partial: &'a [&'a CandidateVector],
    pub candidate: &'a CandidateVector,
    pub weight: f64,
    pub incumbent_sum: f64,
    pub expanded: bool,
}

/// Receives search events; used by tests to audit the pruning bound.
pub trait EngineObserver {
    fn branch(&mut self, _event: &BranchEvent<'_>) {}
    fn matrix(&mut self, _entries: &[&CandidateVector], _full_rank: bool) {}
}

struct Silent;
impl EngineObserver for Silent {}

/// The max-min selection: sweeps `Q` downwards and stops at the first prefix
/// that contains a full-rank selection over distinct relays.
pub fn step1_max_min(family: &CandidateSetFamily) -> Result<CodingSelection> {
    let stream: Vec<&CandidateVector> = family.q_candidates().collect();
    let (_, chosen) = first_full_rank_prefix(&stream, family.num_sources())
        .ok_or_else(|| Error::Infeasible("no full-rank selection in the candidate sets".into()))?;
    derive_selection(chosen.iter().map(|&i| stream[i].clone()).collect())
}

/// Optimistic sum rate of any selection completing `partial` with `a`.
///
/// Sources covered by `partial` or `a` take the minimum rate over the vectors
/// touching them. Each remaining source takes the best rate in `q` among
/// vectors touching it whose owner is not yet in the coalition (zero when
/// none exists, or when `a` completes the selection). `l_remaining` counts
/// the relays still needed, `a` included.
pub fn weight(
    l_remaining: usize,
    q: &[&CandidateVector],
    partial: &[&CandidateVector],
    a: &CandidateVector,
) -> Result<f64> {
    let num_sources = a.coeffs.len();
    if l_remaining == 0 || partial.len() + l_remaining != num_sources {
        return Err(Error::WrongEntryCount {
            expected: num_sources,
            found: partial.len() + l_remaining,
        });
    }
    if partial.iter().any(|p| p.relay == a.relay) {
        return Err(Error::DuplicateRelay(a.relay));
    }
    let in_coalition = |relay: usize| relay == a.relay || partial.iter().any(|p| p.relay == relay);
    let mut total = 0.0;
    for l in 0..num_sources {
        let pinned = partial
            .iter()
            .copied()
            .chain(std::iter::once(a))
            .filter(|c| c.coeffs[l] != 0)
            .map(|c| c.rate)
            .fold(f64::INFINITY, f64::min);
        if pinned.is_finite() {
            total += pinned;
        } else if l_remaining > 1 {
            total += q
                .iter()
                .filter(|c| c.coeffs[l] != 0 && !in_coalition(c.relay))
                .map(|c| c.rate)
                .fold(0.0, f64::max);
        }
    }
    Ok(total)
}

struct LevelSearch<'a, O: EngineObserver> {
    num_sources: usize,
    level: f64,
    /// Candidates with rate >= level, in `Q` order.
    pool: &'a [&'a CandidateVector],
    best_sum: f64,
    best: Option<Vec<&'a CandidateVector>>,
    searched: u64,
    observer: &'a mut O,
}

impl<'a, O: EngineObserver> LevelSearch<'a, O> {
    fn offer(&mut self, partial: &[&'a CandidateVector], c: &'a CandidateVector) -> bool {
        let l_remaining = self.num_sources - partial.len();
        let w = weight(l_remaining, self.pool, partial, c).expect("search keeps relays distinct");
        let expanded = w > self.best_sum + RATE_TOL;
        self.observer.branch(&BranchEvent {
            level: self.level,
            partial,
            candidate: c,
            weight: w,
            incumbent_sum: self.best_sum,
            expanded,
        });
        expanded
    }

    // Extends `partial` with pool entries at positions >= start, skipping
    // `skip` (the pivot's position).
    fn extend(&mut self, partial: &mut Vec<&'a CandidateVector>, start: usize, skip: usize) {
        if partial.len() == self.num_sources {
            self.evaluate(partial);
            return;
        }
        let pool = self.pool;
        for (j, &c) in pool.iter().enumerate().skip(start) {
            if j == skip || partial.iter().any(|p| p.relay == c.relay) {
                continue;
            }
            // Ties at the level rate that precede the pivot belong to an
            // earlier pivot's search.
            if c.rate == self.level && j < skip {
                continue;
            }
            if !self.offer(partial, c) {
                continue;
            }
            partial.push(c);
            self.extend(partial, j + 1, skip);
            partial.pop();
        }
    }

    fn evaluate(&mut self, entries: &[&'a CandidateVector]) {
        self.searched += 1;
        let cols: Vec<&[i64]> = entries.iter().map(|c| c.coeffs.as_slice()).collect();
        let full_rank = exact::determinant(&cols) != 0;
        self.observer.matrix(entries, full_rank);
        if !full_rank {
            return;
        }
        let sel = derive_selection(entries.iter().map(|c| (*c).clone()).collect())
            .expect("full rank checked");
        if sel.sum_rate > self.best_sum + RATE_TOL {
            self.best_sum = sel.sum_rate;
            self.best = Some(entries.to_vec());
        }
    }
}

/// Runs the full search on `family` restricted to candidates admitted by `req`.
pub fn run(family: &CandidateSetFamily, req: &RateRequirements) -> Result<EngineResult> {
    run_observed(family, req, &mut Silent)
}

/// [`run`] with search events reported to `observer`.
pub fn run_observed<O: EngineObserver>(
    family: &CandidateSetFamily,
    req: &RateRequirements,
    observer: &mut O,
) -> Result<EngineResult> {
    if req.len() != family.num_sources() {
        return Err(Error::DimensionMismatch {
            expected: family.num_sources(),
            found: req.len(),
        });
    }
    let family = family.filter_requirements(req);
    let step1 = step1_max_min(&family)?;
    let q: Vec<&CandidateVector> = family.q_candidates().collect();
    debug_assert!(q.windows(2).all(|w| q_order(w[0], w[1]).is_le()));

    let mut trace = EngineTrace {
        matrices_searched: 0,
        coalitions_formed: 1,
        visited_points: vec![step1.point()],
        visited: vec![step1.clone()],
    };
    let mut incumbent = step1.clone();

    let mut levels: Vec<f64> = q.iter().map(|c| c.rate).filter(|&r| r <= step1.min_rate).collect();
    levels.dedup();

    for level in levels {
        let pool_len = q.partition_point(|c| c.rate >= level);
        let pool = &q[..pool_len];
        let mut search = LevelSearch {
            num_sources: family.num_sources(),
            level,
            pool,
            best_sum: incumbent.sum_rate,
            best: None,
            searched: 0,
            observer: &mut *observer,
        };
        for (p, &pivot) in pool.iter().enumerate() {
            if pivot.rate != level {
                continue;
            }
            if !search.offer(&[], pivot) {
                continue;
            }
            let mut partial = vec![pivot];
            search.extend(&mut partial, 0, p);
        }
        trace.matrices_searched += search.searched;
        if let Some(entries) = search.best {
            incumbent = derive_selection(entries.into_iter().cloned().collect())?;
            trace.coalitions_formed += 1;
            trace.visited_points.push(incumbent.point());
            trace.visited.push(incumbent.clone());
        }
    }

    Ok(EngineResult {
        selection: incumbent,
        step1,
        trace,
    })
}
