//! Per-relay candidate sets of equation-coefficient vectors.
//!
//! The rate of `a` at relay `m` is a decreasing function of the quadratic
//! form `a^T G a`, so the best candidates are the short vectors of the lattice
//! with Gram matrix `G = I - P h h^T / (1 + P ||h||^2)`. They are found by
//! radius-bounded sphere enumeration over the Cholesky factor of `G`, which is
//! exhaustive within the radius. Non-primitive vectors (entry gcd > 1) are
//! dropped because a primitive collinear vector always has a strictly higher
//! rate, and of each `±a` pair only the representative whose first nonzero
//! entry is positive is kept.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact;
use crate::model::{
    computation_rate, quadratic_form, CandidateRef, CandidateVector, ChannelInstance,
    RateRequirements, RATE_TOL,
};

/// Enumeration aborts once this many lattice points fall inside the radius.
pub const MAX_CANDIDATES: usize = 1_000_000;

/// Default per-relay cap on candidate set size.
pub const DEFAULT_K_MAX: usize = 64;

/// Largest useful radius: beyond `a^T G a = 1` every rate is zero.
const MAX_RADIUS: f64 = 1.0;

const PIVOT_FLOOR: f64 = 1e-14;

/// `G` and its upper-triangular Cholesky factor `R` (`G = R^T R`).
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub g: Vec<Vec<f64>>,
    pub cholesky: Vec<Vec<f64>>,
}

impl GramMatrix {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    /// `a^T G a` evaluated through the Cholesky factor.
    pub fn form(&self, a: &[i64]) -> f64 {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let t: f64 = (i..n).map(|j| self.cholesky[i][j] * a[j] as f64).sum();
                t * t
            })
            .sum()
    }
}

/// Builds `G` for channel `h` at power `P` and factors it.
pub fn gram(h: &[f64], power: f64) -> Result<GramMatrix> {
    if h.is_empty() || h.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidChannel("channel vector must be finite and nonempty".into()));
    }
    if !(power.is_finite() && power > 0.0) {
        return Err(Error::InvalidChannel(format!("power {power} must be positive")));
    }
    let n = h.len();
    let norm: f64 = h.iter().map(|x| x * x).sum();
    let scale = power / (1.0 + power * norm);
    let g: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| f64::from(u8::from(i == j)) - scale * h[i] * h[j])
                .collect()
        })
        .collect();

    let mut r = vec![vec![0.0; n]; n];
    for i in 0..n {
        let pivot = g[i][i] - (0..i).map(|k| r[k][i] * r[k][i]).sum::<f64>();
        if pivot <= PIVOT_FLOOR {
            return Err(Error::NumericalDomain { value: pivot });
        }
        r[i][i] = pivot.sqrt();
        for j in i + 1..n {
            let s: f64 = (0..i).map(|k| r[k][i] * r[k][j]).sum();
            r[i][j] = (g[i][j] - s) / r[i][i];
        }
    }
    Ok(GramMatrix { g, cholesky: r })
}

/// Depth-first Fincke-Pohst walk collecting every nonzero `a` with
/// `a^T G a <= radius`.
struct SphereWalk<'a> {
    r: &'a [Vec<f64>],
    radius: f64,
    point: Vec<i64>,
    found: Vec<Vec<i64>>,
    overflow: bool,
}

impl SphereWalk<'_> {
    fn descend(&mut self, level: usize, used: f64) {
        if self.overflow {
            return;
        }
        let n = self.point.len();
        let rii = self.r[level][level];
        let shift: f64 = (level + 1..n)
            .map(|j| self.r[level][j] * self.point[j] as f64)
            .sum::<f64>()
            / rii;
        let center = -shift;
        let budget = (self.radius - used).max(0.0);
        let half_width = budget.sqrt() / rii;
        let lo = (center - half_width - 1e-9).ceil() as i64;
        let hi = (center + half_width + 1e-9).floor() as i64;
        for x in lo..=hi {
            let d = rii * (x as f64 - center);
            let next = used + d * d;
            if next > self.radius {
                continue;
            }
            self.point[level] = x;
            if level == 0 {
                if self.point.iter().any(|&v| v != 0) {
                    self.found.push(self.point.clone());
                    if self.found.len() > MAX_CANDIDATES {
                        self.overflow = true;
                        return;
                    }
                }
            } else {
                self.descend(level - 1, next);
            }
        }
        self.point[level] = 0;
    }
}

fn radius_with_slack(radius: f64) -> f64 {
    radius * (1.0 + 1e-12) + 1e-12
}

/// Every primitive, sign-canonical integer vector with `a^T G a <= radius`
/// (and inside the rate-positivity ball `||a||^2 <= 1 + P ||h||^2`), sorted by
/// form ascending, i.e. rate descending. Returned candidates carry relay 0 and
/// their rank in this order.
pub fn enumerate_candidates(h: &[f64], power: f64, radius: f64) -> Result<Vec<CandidateVector>> {
    enumerate_for_relay(h, power, radius, 0)
}

fn enumerate_for_relay(
    h: &[f64],
    power: f64,
    radius: f64,
    relay: usize,
) -> Result<Vec<CandidateVector>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidPolicy(format!("radius {radius} must be positive")));
    }
    let gm = gram(h, power)?;
    let n = h.len();
    let mut walk = SphereWalk {
        r: &gm.cholesky,
        radius: radius_with_slack(radius),
        point: vec![0; n],
        found: Vec::new(),
        overflow: false,
    };
    walk.descend(n - 1, 0.0);
    if walk.overflow {
        return Err(Error::RadiusTooLarge {
            limit: MAX_CANDIDATES,
        });
    }

    let ball = 1.0 + power * h.iter().map(|x| x * x).sum::<f64>();
    let mut kept: Vec<(f64, CandidateVector)> = Vec::new();
    for a in walk.found {
        let first = a.iter().copied().find(|&x| x != 0).unwrap_or(0);
        if first < 0 || exact::gcd_of(&a) != 1 {
            continue;
        }
        let norm: i64 = a.iter().map(|x| x * x).sum();
        if norm as f64 > radius_with_slack(ball) {
            continue;
        }
        let form = quadratic_form(h, &a, power)?;
        let rate = computation_rate(h, &a, power)?;
        kept.push((
            form,
            CandidateVector {
                coeffs: a,
                rate,
                relay,
                rank: 0,
            },
        ));
    }
    kept.sort_by(|(fa, a), (fb, b)| fa.total_cmp(fb).then_with(|| a.coeffs.cmp(&b.coeffs)));
    Ok(kept
        .into_iter()
        .enumerate()
        .map(|(rank, (_, mut c))| {
            c.rank = rank;
            c
        })
        .collect())
}

/// Which rule stops the growth of the candidate sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Grow every relay's set in lockstep along the global rate order until
    /// some `L` candidates of `L` distinct relays are linearly independent.
    SpanFullRank,
    /// Grow each relay's set independently until that set alone spans `R^L`.
    RelaySpan,
    /// Keep exactly the candidates whose rate clears the floor of every
    /// source they touch.
    MinRateFloor(RateRequirements),
    /// Keep the `K` best candidates of each relay.
    SizeCap(usize),
}

/// A stopping rule plus a per-relay safety cap applied in every variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationPolicy {
    pub kind: PolicyKind,
    pub k_max: usize,
}

impl TerminationPolicy {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            k_max: DEFAULT_K_MAX,
        }
    }

    pub fn span_full_rank() -> Self {
        Self::new(PolicyKind::SpanFullRank)
    }

    pub fn relay_span() -> Self {
        Self::new(PolicyKind::RelaySpan)
    }

    pub fn min_rate_floor(req: RateRequirements) -> Self {
        Self::new(PolicyKind::MinRateFloor(req))
    }

    pub fn size_cap(k: usize) -> Self {
        Self::new(PolicyKind::SizeCap(k))
    }

    pub fn with_k_max(mut self, k_max: usize) -> Self {
        self.k_max = k_max;
        self
    }

    fn validate(&self, num_sources: usize) -> Result<()> {
        if self.k_max == 0 {
            return Err(Error::InvalidPolicy("K_max must be at least 1".into()));
        }
        match &self.kind {
            PolicyKind::SizeCap(0) => Err(Error::InvalidPolicy("K must be at least 1".into())),
            PolicyKind::MinRateFloor(req) if req.len() != num_sources => {
                Err(Error::DimensionMismatch {
                    expected: num_sources,
                    found: req.len(),
                })
            }
            _ => Ok(()),
        }
    }
}

/// The candidate sets `Omega_m` of all relays and the global list `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSetFamily {
    num_sources: usize,
    omega: Vec<Vec<CandidateVector>>,
    q: Vec<CandidateRef>,
}

/// Rate descending, then relay ascending, then rank ascending.
pub fn q_order(a: &CandidateVector, b: &CandidateVector) -> Ordering {
    b.rate
        .total_cmp(&a.rate)
        .then(a.relay.cmp(&b.relay))
        .then(a.rank.cmp(&b.rank))
}

impl CandidateSetFamily {
    /// Wraps explicit candidate sets. Each set is stably sorted by rate
    /// descending; relay and rank fields are overwritten to match positions.
    pub fn from_sets(num_sources: usize, sets: Vec<Vec<Vec<i64>>>, rates: Vec<Vec<f64>>) -> Result<Self> {
        if sets.len() != rates.len() {
            return Err(Error::DimensionMismatch {
                expected: sets.len(),
                found: rates.len(),
            });
        }
        let mut omega = Vec::with_capacity(sets.len());
        for (m, (vectors, rs)) in sets.into_iter().zip(rates).enumerate() {
            if vectors.len() != rs.len() {
                return Err(Error::DimensionMismatch {
                    expected: vectors.len(),
                    found: rs.len(),
                });
            }
            let mut set = Vec::with_capacity(vectors.len());
            for (coeffs, rate) in vectors.into_iter().zip(rs) {
                if coeffs.len() != num_sources {
                    return Err(Error::DimensionMismatch {
                        expected: num_sources,
                        found: coeffs.len(),
                    });
                }
                if coeffs.iter().all(|&x| x == 0) {
                    return Err(Error::ZeroVector);
                }
                set.push(CandidateVector {
                    coeffs,
                    rate,
                    relay: m,
                    rank: 0,
                });
            }
            set.sort_by(|a, b| b.rate.total_cmp(&a.rate));
            for (i, c) in set.iter_mut().enumerate() {
                c.rank = i;
            }
            omega.push(set);
        }
        Ok(Self::assemble(num_sources, omega))
    }

    fn assemble(num_sources: usize, omega: Vec<Vec<CandidateVector>>) -> Self {
        let mut all: Vec<&CandidateVector> = omega.iter().flatten().collect();
        all.sort_by(|a, b| q_order(a, b));
        let q = all.iter().map(|c| c.id()).collect();
        Self {
            num_sources,
            omega,
            q,
        }
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn num_relays(&self) -> usize {
        self.omega.len()
    }

    /// `Omega_m`, best first.
    pub fn omega(&self, m: usize) -> &[CandidateVector] {
        &self.omega[m]
    }

    /// `Gamma_m`, the rates parallel to `Omega_m`.
    pub fn gamma(&self, m: usize) -> Vec<f64> {
        self.omega[m].iter().map(|c| c.rate).collect()
    }

    pub fn set_sizes(&self) -> Vec<usize> {
        self.omega.iter().map(Vec::len).collect()
    }

    pub fn total_candidates(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[CandidateRef] {
        &self.q
    }

    /// Candidates in `Q` order.
    pub fn q_candidates(&self) -> impl Iterator<Item = &CandidateVector> + '_ {
        self.q.iter().map(move |r| self.get(*r).expect("Q refers to a member"))
    }

    pub fn get(&self, id: CandidateRef) -> Option<&CandidateVector> {
        let set = self.omega.get(id.relay)?;
        set.binary_search_by_key(&id.rank, |c| c.rank)
            .ok()
            .map(|i| &set[i])
    }

    /// Same family with every relay outside `relays` emptied. Relay indices
    /// and ranks are preserved.
    pub fn restrict(&self, relays: &[usize]) -> Self {
        let omega = self
            .omega
            .iter()
            .enumerate()
            .map(|(m, set)| if relays.contains(&m) { set.clone() } else { Vec::new() })
            .collect();
        Self::assemble(self.num_sources, omega)
    }

    /// Drops candidates that can never appear in a selection meeting `req`.
    pub fn filter_requirements(&self, req: &RateRequirements) -> Self {
        let omega = self
            .omega
            .iter()
            .map(|set| set.iter().filter(|c| req.admits(c)).cloned().collect())
            .collect();
        Self::assemble(self.num_sources, omega)
    }
}

/// Scans `stream` (in `Q` order) for the first position `k` such that a
/// full-rank selection of distinct relays exists using `stream[k]` and
/// earlier entries only. Returns `k` and the lexicographically first such
/// selection, as stream indices in increasing order.
pub fn first_full_rank_prefix(
    stream: &[&CandidateVector],
    num_sources: usize,
) -> Option<(usize, Vec<usize>)> {
    (0..stream.len()).find_map(|k| {
        let mut chosen = Vec::with_capacity(num_sources);
        if complete_with(stream, num_sources, k, 0, &mut chosen) {
            chosen.push(k);
            Some((k, chosen))
        } else {
            None
        }
    })
}

// Chooses further indices in [start, pivot) until `num_sources` vectors
// (pivot included) are independent and owned by distinct relays.
fn complete_with(
    stream: &[&CandidateVector],
    num_sources: usize,
    pivot: usize,
    start: usize,
    chosen: &mut Vec<usize>,
) -> bool {
    if chosen.len() + 1 == num_sources {
        return true;
    }
    for j in start..pivot {
        let c = stream[j];
        if c.relay == stream[pivot].relay || chosen.iter().any(|&i| stream[i].relay == c.relay) {
            continue;
        }
        let mut vecs: Vec<&[i64]> = chosen.iter().map(|&i| stream[i].coeffs.as_slice()).collect();
        vecs.push(&stream[pivot].coeffs);
        vecs.push(&c.coeffs);
        if !exact::independent(&vecs) {
            continue;
        }
        chosen.push(j);
        if complete_with(stream, num_sources, pivot, j + 1, chosen) {
            return true;
        }
        chosen.pop();
    }
    false
}

fn spans(set: &[CandidateVector], num_sources: usize) -> Option<usize> {
    // Rank only grows along the prefix; find the first prefix reaching full rank.
    let mut basis: Vec<&[i64]> = Vec::new();
    for (i, c) in set.iter().enumerate() {
        basis.push(&c.coeffs);
        if !exact::independent(&basis) {
            basis.pop();
        }
        if basis.len() == num_sources {
            return Some(i + 1);
        }
    }
    None
}

fn initial_radius(ch: &ChannelInstance) -> Result<f64> {
    let mut r = MAX_RADIUS;
    for m in 0..ch.num_relays() {
        let gm = gram(ch.relay_gains(m), ch.power())?;
        for i in 0..gm.dim() {
            r = r.min(gm.g[i][i]);
        }
    }
    Ok(r.min(MAX_RADIUS))
}

fn enumerate_all(ch: &ChannelInstance, radius: f64) -> Result<Vec<Vec<CandidateVector>>> {
    (0..ch.num_relays())
        .into_par_iter()
        .map(|m| enumerate_for_relay(ch.relay_gains(m), ch.power(), radius, m))
        .collect()
}

/// Builds `Omega_m` for every relay according to `policy`, then `Q`.
pub fn build_family(ch: &ChannelInstance, policy: &TerminationPolicy) -> Result<CandidateSetFamily> {
    let l = ch.num_sources();
    policy.validate(l)?;
    let k_max = policy.k_max;

    let omega = match &policy.kind {
        PolicyKind::MinRateFloor(req) => {
            let radius = (2f64).powf(-2.0 * req.min_floor()).min(MAX_RADIUS);
            let mut sets = enumerate_all(ch, radius)?;
            for set in &mut sets {
                set.retain(|c| req.admits(c));
                set.truncate(k_max);
            }
            sets
        }
        PolicyKind::SizeCap(k) => {
            let want = (*k).min(k_max);
            grow(ch, |sets| sets.iter().all(|s| s.len() >= want))?
                .into_iter()
                .map(|mut s| {
                    s.truncate(want);
                    s
                })
                .collect()
        }
        PolicyKind::RelaySpan => {
            let sets = grow(ch, |sets| sets.iter().all(|s| spans(s, l).is_some()))?;
            let mut out = Vec::with_capacity(sets.len());
            for (m, mut s) in sets.into_iter().enumerate() {
                let n = spans(&s, l).ok_or_else(|| {
                    Error::Infeasible(format!("candidates of relay {} never span", m + 1))
                })?;
                if n > k_max {
                    return Err(Error::Infeasible(format!(
                        "relay {} needs {n} candidates to span, above K_max = {k_max}",
                        m + 1
                    )));
                }
                s.truncate(n);
                out.push(s);
            }
            out
        }
        PolicyKind::SpanFullRank => {
            let mut radius = initial_radius(ch)?;
            loop {
                let sets = enumerate_all(ch, radius)?;
                let mut stream: Vec<&CandidateVector> = sets.iter().flatten().collect();
                stream.sort_by(|a, b| q_order(a, b));
                if let Some((k, _)) = first_full_rank_prefix(&stream, l) {
                    let stop = stream[k].rate;
                    let trimmed: Vec<Vec<CandidateVector>> = sets
                        .iter()
                        .map(|s| s.iter().filter(|c| c.rate >= stop).cloned().collect())
                        .collect();
                    if let Some(m) = trimmed.iter().position(|s| s.len() > k_max) {
                        return Err(Error::Infeasible(format!(
                            "relay {} exceeds K_max = {k_max} before a full-rank selection exists",
                            m + 1
                        )));
                    }
                    break trimmed;
                }
                if radius >= MAX_RADIUS {
                    return Err(Error::Infeasible("no full-rank selection exists".into()));
                }
                radius = (radius * 2.0).min(MAX_RADIUS);
            }
        }
    };
    Ok(CandidateSetFamily::assemble(l, omega))
}

// Doubles the radius until `enough` holds or the radius saturates. Because the
// enumeration is exhaustive within the radius, any prefix of a sorted set is
// exactly the prefix of the relay's complete candidate order.
fn grow(
    ch: &ChannelInstance,
    enough: impl Fn(&[Vec<CandidateVector>]) -> bool,
) -> Result<Vec<Vec<CandidateVector>>> {
    let mut radius = initial_radius(ch)?;
    loop {
        let sets = enumerate_all(ch, radius)?;
        if radius >= MAX_RADIUS || enough(&sets) {
            return Ok(sets);
        }
        radius = (radius * 2.0).min(MAX_RADIUS);
    }
}

/// Candidates of a family whose rate clears `floor` for every touched source.
pub fn satisfies_floor(family: &CandidateSetFamily, req: &RateRequirements) -> bool {
    family
        .q_candidates()
        .all(|c| c.rate + RATE_TOL >= req.floor_for(&c.coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_channel_gram_is_identity() {
        let gm = gram(&[0.0, 0.0, 0.0], 5.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(gm.g[i][j], expect);
                assert_eq!(gm.cholesky[i][j], expect);
            }
        }
    }

    #[test]
    fn unit_sphere_of_identity() {
        let c = enumerate_candidates(&[0.0, 0.0, 0.0], 3.0, 1.0).unwrap();
        let vs: Vec<_> = c.iter().map(|c| c.coeffs.clone()).collect();
        assert_eq!(vs, vec![vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0]]);
        assert!(c.iter().all(|c| c.rate == 0.0));
    }

    #[test]
    fn cholesky_form_matches_direct_form() {
        let h = [0.3, -1.2, 0.7];
        let gm = gram(&h, 10.0).unwrap();
        for a in [[1, 0, 0], [1, -2, 1], [3, 1, -1]] {
            let direct = quadratic_form(&h, &a, 10.0).unwrap();
            assert!((gm.form(&a) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_inputs() {
        assert!(gram(&[1.0], 0.0).is_err());
        assert!(gram(&[f64::INFINITY], 1.0).is_err());
        assert!(enumerate_candidates(&[1.0, 0.0], 1.0, 0.0).is_err());
        let ch = ChannelInstance::from_rows(&[vec![1.0, 0.5]], 1.0).unwrap();
        assert!(build_family(&ch, &TerminationPolicy::size_cap(0)).is_err());
        assert!(build_family(&ch, &TerminationPolicy::relay_span().with_k_max(0)).is_err());
    }

    #[test]
    fn one_dimensional_family() {
        let ch = ChannelInstance::from_rows(&[vec![1.0]], 4.0).unwrap();
        let fam = build_family(&ch, &TerminationPolicy::span_full_rank()).unwrap();
        assert_eq!(fam.omega(0).len(), 1);
        assert_eq!(fam.omega(0)[0].coeffs, vec![1]);
    }

    #[test]
    fn restrict_and_filter_keep_identities() {
        let fam = CandidateSetFamily::from_sets(
            2,
            vec![vec![vec![1, 0], vec![1, 1]], vec![vec![0, 1]]],
            vec![vec![0.2, 0.9], vec![0.5]],
        )
        .unwrap();
        // Sorted by rate: w(1,1) = [1,1].
        assert_eq!(fam.omega(0)[0].coeffs, vec![1, 1]);
        let labels: Vec<_> = fam.q().iter().map(|r| r.to_string()).collect();
        assert_eq!(labels, ["w(1,1)", "w(2,1)", "w(1,2)"]);

        let only_second = fam.restrict(&[1]);
        assert_eq!(only_second.set_sizes(), vec![0, 1]);

        let req = RateRequirements::uniform(2, 0.3).unwrap();
        let filtered = fam.filter_requirements(&req);
        assert_eq!(filtered.set_sizes(), vec![1, 1]);
        assert!(satisfies_floor(&filtered, &req));
        assert!(!satisfies_floor(&fam, &req));
        let id = CandidateRef { relay: 1, rank: 0 };
        assert_eq!(filtered.get(id).unwrap().coeffs, vec![0, 1]);
    }
}
