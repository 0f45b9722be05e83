//! Exhaustive ground truth over every full-rank selection of a family.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSetFamily;
use crate::error::{Error, Result};
use crate::exact;
use crate::model::{derive_selection, meets_requirements, CodingSelection, RateRequirements, RATE_TOL};

/// Enumeration refuses families with more combinations than this.
pub const MAX_COMBINATIONS: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSet {
    pub all_selections: Vec<CodingSelection>,
    pub total_combinations: u64,
    pub full_rank_count: u64,
}

/// A frontier point and every selection achieving it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub min_rate: f64,
    pub sum_rate: f64,
    pub representatives: Vec<CodingSelection>,
}

/// All `L`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(n, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(n, k, 0, &mut cur, &mut out);
    out
}

/// Number of selections `enumerate_solutions` would assemble.
pub fn count_combinations(family: &CandidateSetFamily) -> u128 {
    let sizes = family.set_sizes();
    subsets(sizes.len(), family.num_sources())
        .iter()
        .map(|s| s.iter().map(|&m| sizes[m] as u128).product::<u128>())
        .sum()
}

/// Assembles every choice of `L` distinct relays and one candidate each,
/// keeping the full-rank ones.
pub fn enumerate_solutions(family: &CandidateSetFamily) -> Result<SolutionSet> {
    let total = count_combinations(family);
    if total > MAX_COMBINATIONS {
        return Err(Error::Explosion {
            combinations: total,
            limit: MAX_COMBINATIONS,
        });
    }
    let l = family.num_sources();
    let per_subset: Vec<Vec<CodingSelection>> = subsets(family.num_relays(), l)
        .par_iter()
        .map(|relays| {
            let sets: Vec<_> = relays.iter().map(|&m| family.omega(m)).collect();
            let mut found = Vec::new();
            if sets.iter().any(|s| s.is_empty()) {
                return found;
            }
            let mut choice = vec![0usize; l];
            loop {
                let cols: Vec<&[i64]> = choice
                    .iter()
                    .zip(&sets)
                    .map(|(&i, s)| s[i].coeffs.as_slice())
                    .collect();
                if exact::determinant(&cols) != 0 {
                    let entries = choice.iter().zip(&sets).map(|(&i, s)| s[i].clone()).collect();
                    found.push(derive_selection(entries).expect("nonsingular by construction"));
                }
                // Odometer, last relay fastest.
                let mut pos = l;
                loop {
                    if pos == 0 {
                        return found;
                    }
                    pos -= 1;
                    choice[pos] += 1;
                    if choice[pos] < sets[pos].len() {
                        break;
                    }
                    choice[pos] = 0;
                }
            }
        })
        .collect();
    let all_selections: Vec<CodingSelection> = per_subset.into_iter().flatten().collect();
    Ok(SolutionSet {
        full_rank_count: all_selections.len() as u64,
        total_combinations: total as u64,
        all_selections,
    })
}

fn by_key(a: &CodingSelection, b: &CodingSelection) -> Ordering {
    a.key().cmp(&b.key())
}

/// Maximal `(min, sum)` pairs sorted by min rate descending. Selections that
/// share a pair (sums within tolerance) are grouped as representatives.
pub fn pareto_frontier(sols: &SolutionSet) -> Vec<ParetoPoint> {
    let mut by_min: Vec<&CodingSelection> = sols.all_selections.iter().collect();
    by_min.sort_by(|a, b| b.min_rate.total_cmp(&a.min_rate).then_with(|| by_key(a, b)));

    let mut frontier = Vec::new();
    let mut best_sum = f64::NEG_INFINITY;
    let mut i = 0;
    while i < by_min.len() {
        let min = by_min[i].min_rate;
        let j = by_min[i..]
            .iter()
            .position(|s| s.min_rate != min)
            .map_or(by_min.len(), |p| i + p);
        let group = &by_min[i..j];
        let top = group.iter().map(|s| s.sum_rate).fold(f64::NEG_INFINITY, f64::max);
        if top > best_sum + RATE_TOL {
            let representatives: Vec<CodingSelection> = group
                .iter()
                .filter(|s| s.sum_rate >= top - RATE_TOL)
                .map(|s| (*s).clone())
                .collect();
            frontier.push(ParetoPoint {
                min_rate: min,
                sum_rate: top,
                representatives,
            });
            best_sum = top;
        }
        i = j;
    }
    frontier
}

fn cmp_sum(a: &CodingSelection, b: &CodingSelection) -> Ordering {
    if (a.sum_rate - b.sum_rate).abs() <= RATE_TOL {
        Ordering::Equal
    } else {
        a.sum_rate.total_cmp(&b.sum_rate)
    }
}

/// Selection maximizing the minimum rate; ties go to the higher sum, then to
/// the lexicographically smallest key.
pub fn opt_max_min(sols: &SolutionSet) -> Option<&CodingSelection> {
    sols.all_selections.iter().min_by(|a, b| {
        b.min_rate
            .total_cmp(&a.min_rate)
            .then_with(|| cmp_sum(b, a))
            .then_with(|| by_key(a, b))
    })
}

/// Feasible selection of maximum sum rate; ties go to the higher minimum,
/// then to the smallest key. `None` when nothing meets `req`.
pub fn opt_max_sum<'a>(sols: &'a SolutionSet, req: &RateRequirements) -> Option<&'a CodingSelection> {
    sols.all_selections
        .iter()
        .filter(|s| meets_requirements(s, req))
        .min_by(|a, b| {
            cmp_sum(b, a)
                .then_with(|| b.min_rate.total_cmp(&a.min_rate))
                .then_with(|| by_key(a, b))
        })
}

/// True if `p` dominates `q` (at least as good in both, strictly better in one).
pub fn dominates(p: (f64, f64), q: (f64, f64)) -> bool {
    (p.0 >= q.0 && p.1 > q.1 + RATE_TOL) || (p.0 > q.0 && p.1 >= q.1 - RATE_TOL)
}
