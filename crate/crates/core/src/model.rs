//! Domain types of the uplink network and the rate formulas built on them.
//!
//! Rates are in bits per real channel use, log base 2 throughout. Relay and
//! source indices are zero-based inside the library; reports and files render
//! them one-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact;

/// Absolute tolerance used for every rate comparison.
pub const RATE_TOL: f64 = 1e-9;

/// Quadratic forms at or below this value are treated as a domain error.
const FORM_FLOOR: f64 = 1e-15;

/// One channel realization: `L` sources, `M >= L` relays and a power budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelInstance {
    num_sources: usize,
    num_relays: usize,
    /// `gains[m]` is the channel vector `h_m` seen by relay `m` (length `L`).
    gains: Vec<Vec<f64>>,
    power: f64,
}

impl ChannelInstance {
    /// Builds an instance from per-relay channel vectors.
    pub fn from_relay_vectors(gains: Vec<Vec<f64>>, power: f64) -> Result<Self> {
        let num_relays = gains.len();
        let num_sources = gains.first().map_or(0, Vec::len);
        if num_sources == 0 {
            return Err(Error::InvalidChannel("no sources".into()));
        }
        if num_relays < num_sources {
            return Err(Error::InvalidChannel(format!(
                "M ≥ L violated (L = {num_sources}, M = {num_relays})"
            )));
        }
        if let Some(m) = gains.iter().position(|h| h.len() != num_sources) {
            return Err(Error::InvalidChannel(format!(
                "relay {} has {} gains, expected {num_sources}",
                m + 1,
                gains[m].len()
            )));
        }
        if gains.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::InvalidChannel("non-finite channel gain".into()));
        }
        if !(power.is_finite() && power > 0.0) {
            return Err(Error::InvalidChannel(format!("power {power} must be positive")));
        }
        Ok(Self {
            num_sources,
            num_relays,
            gains,
            power,
        })
    }

    /// Builds an instance from the `L x M` matrix `H` given row by row
    /// (row `l` = source `l`, column `m` = relay `m`).
    pub fn from_rows(rows: &[Vec<f64>], power: f64) -> Result<Self> {
        let num_relays = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_relays) {
            return Err(Error::InvalidChannel("ragged H matrix".into()));
        }
        let gains = (0..num_relays)
            .map(|m| rows.iter().map(|r| r[m]).collect())
            .collect();
        Self::from_relay_vectors(gains, power)
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn num_relays(&self) -> usize {
        self.num_relays
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * self.power.log10()
    }

    /// Channel vector of relay `m`.
    pub fn relay_gains(&self, m: usize) -> &[f64] {
        &self.gains[m]
    }

    /// `H` as `L` rows of `M` entries.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_sources)
            .map(|l| self.gains.iter().map(|h| h[l]).collect())
            .collect()
    }

    /// Same channel, different power.
    pub fn with_power(&self, power: f64) -> Result<Self> {
        Self::from_relay_vectors(self.gains.clone(), power)
    }

    /// Keeps only the first `m` relays.
    pub fn truncate_relays(&self, m: usize) -> Result<Self> {
        Self::from_relay_vectors(self.gains[..m.min(self.num_relays)].to_vec(), self.power)
    }
}

/// Integer equation-coefficient vector of one relay together with its rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateVector {
    pub coeffs: Vec<i64>,
    pub rate: f64,
    /// Zero-based owner relay.
    pub relay: usize,
    /// Zero-based position inside the owner's candidate set.
    pub rank: usize,
}

impl CandidateVector {
    /// `(relay, rank)` handle of this candidate.
    pub fn id(&self) -> CandidateRef {
        CandidateRef {
            relay: self.relay,
            rank: self.rank,
        }
    }

    /// One-based label `w(m,i)` as used in reports.
    pub fn label(&self) -> String {
        self.id().to_string()
    }
}

/// Handle to a candidate inside a family: owner relay and rank, both zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CandidateRef {
    pub relay: usize,
    pub rank: usize,
}

impl std::fmt::Display for CandidateRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "w({},{})", self.relay + 1, self.rank + 1)
    }
}

/// Per-source minimum transmission rates `V_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RateRequirements(Vec<f64>);

impl RateRequirements {
    pub fn new(floors: Vec<f64>) -> Result<Self> {
        if floors.is_empty() {
            return Err(Error::InvalidRequirements("empty requirement vector".into()));
        }
        if floors.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidRequirements(
                "requirements must be finite and nonnegative".into(),
            ));
        }
        Ok(Self(floors))
    }

    pub fn uniform(num_sources: usize, floor: f64) -> Result<Self> {
        Self::new(vec![floor; num_sources])
    }

    pub fn none(num_sources: usize) -> Self {
        Self(vec![0.0; num_sources])
    }

    pub fn floors(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min_floor(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// The strictest floor among the sources a vector touches.
    pub fn floor_for(&self, coeffs: &[i64]) -> f64 {
        coeffs
            .iter()
            .zip(&self.0)
            .filter(|(a, _)| **a != 0)
            .map(|(_, v)| *v)
            .fold(0.0, f64::max)
    }

    /// A candidate can only appear in a feasible selection if its rate clears
    /// the floor of every source it touches.
    pub fn admits(&self, candidate: &CandidateVector) -> bool {
        candidate.rate + RATE_TOL >= self.floor_for(&candidate.coeffs)
    }
}

/// The quadratic form `||a||^2 - P (h.a)^2 / (1 + P ||h||^2)`, i.e. `a^T G a`.
pub fn quadratic_form(h: &[f64], a: &[i64], power: f64) -> Result<f64> {
    if h.len() != a.len() {
        return Err(Error::DimensionMismatch {
            expected: h.len(),
            found: a.len(),
        });
    }
    if a.iter().all(|&x| x == 0) {
        return Err(Error::ZeroVector);
    }
    let norm_a: f64 = a.iter().map(|&x| (x as f64) * (x as f64)).sum();
    let norm_h: f64 = h.iter().map(|x| x * x).sum();
    let dot: f64 = h.iter().zip(a).map(|(g, &x)| g * x as f64).sum();
    Ok(norm_a - power * dot * dot / (1.0 + power * norm_h))
}

/// Rate as a function of the quadratic form value.
pub fn rate_from_form(form: f64) -> f64 {
    (0.5 * (1.0 / form).log2()).max(0.0)
}

/// Computation rate of a relay with channel `h` decoding equation `a`.
pub fn computation_rate(h: &[f64], a: &[i64], power: f64) -> Result<f64> {
    let form = quadratic_form(h, a, power)?;
    if form <= FORM_FLOOR || !form.is_finite() {
        return Err(Error::NumericalDomain { value: form });
    }
    Ok(rate_from_form(form))
}

/// Rate of `lambda * a` given the rate of `a`: `max(R(a) - log2|lambda|, 0)`.
pub fn collinear_rate(rate_of_a: f64, lambda: i64) -> Result<f64> {
    if lambda.unsigned_abs() <= 1 {
        return Err(Error::InvalidLambda(lambda));
    }
    Ok((rate_of_a - (lambda.unsigned_abs() as f64).log2()).max(0.0))
}

/// `L` candidates from distinct relays forming the network coding matrix `A`,
/// with the per-source transmission rates they induce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodingSelection {
    pub entries: Vec<CandidateVector>,
    pub source_rates: Vec<f64>,
    pub min_rate: f64,
    pub sum_rate: f64,
}

impl CodingSelection {
    pub fn num_sources(&self) -> usize {
        self.source_rates.len()
    }

    /// Columns of `A` in entry order.
    pub fn columns(&self) -> Vec<&[i64]> {
        self.entries.iter().map(|e| e.coeffs.as_slice()).collect()
    }

    /// `A` as `L` rows.
    pub fn matrix_rows(&self) -> Vec<Vec<i64>> {
        (0..self.num_sources())
            .map(|l| self.entries.iter().map(|e| e.coeffs[l]).collect())
            .collect()
    }

    /// Selected relays in entry order.
    pub fn relays(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.relay).collect()
    }

    /// Entry handles ordered by relay; this is the canonical identity of a
    /// selection and its lexicographic tie-break key.
    pub fn key(&self) -> Vec<CandidateRef> {
        let mut k: Vec<_> = self.entries.iter().map(CandidateVector::id).collect();
        k.sort();
        k
    }

    /// Columns sign-canonicalized (first nonzero positive) and ordered by
    /// owner relay.
    pub fn canonical_columns(&self) -> Vec<Vec<i64>> {
        let mut entries: Vec<_> = self.entries.iter().collect();
        entries.sort_by_key(|e| e.relay);
        entries.iter().map(|e| canonical_sign(&e.coeffs)).collect()
    }

    /// `(min_rate, sum_rate)`.
    pub fn point(&self) -> (f64, f64) {
        (self.min_rate, self.sum_rate)
    }
}

/// Flips `a` so that its first nonzero entry is positive.
pub fn canonical_sign(a: &[i64]) -> Vec<i64> {
    match a.iter().find(|&&x| x != 0) {
        Some(&x) if x < 0 => a.iter().map(|v| -v).collect(),
        _ => a.to_vec(),
    }
}

/// Assembles `A` from `entries`, verifies it is nonsingular, and derives the
/// transmission rates: source `l` is limited by the slowest entry whose
/// `l`-th coefficient is nonzero.
pub fn derive_selection(entries: Vec<CandidateVector>) -> Result<CodingSelection> {
    let num_sources = entries.first().map_or(0, |e| e.coeffs.len());
    if entries.len() != num_sources || num_sources == 0 {
        return Err(Error::WrongEntryCount {
            expected: num_sources,
            found: entries.len(),
        });
    }
    if let Some(e) = entries.iter().find(|e| e.coeffs.len() != num_sources) {
        return Err(Error::DimensionMismatch {
            expected: num_sources,
            found: e.coeffs.len(),
        });
    }
    for (i, e) in entries.iter().enumerate() {
        if entries[..i].iter().any(|o| o.relay == e.relay) {
            return Err(Error::DuplicateRelay(e.relay));
        }
    }
    let cols: Vec<&[i64]> = entries.iter().map(|e| e.coeffs.as_slice()).collect();
    if exact::determinant(&cols) == 0 {
        return Err(Error::RankDeficient);
    }
    let source_rates: Vec<f64> = (0..num_sources)
        .map(|l| {
            entries
                .iter()
                .filter(|e| e.coeffs[l] != 0)
                .map(|e| e.rate)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let min_rate = source_rates.iter().copied().fold(f64::INFINITY, f64::min);
    let sum_rate = source_rates.iter().sum();
    Ok(CodingSelection {
        entries,
        source_rates,
        min_rate,
        sum_rate,
    })
}

/// True iff every source meets its floor (with `RATE_TOL` slack).
pub fn meets_requirements(selection: &CodingSelection, req: &RateRequirements) -> bool {
    selection.source_rates.len() == req.len()
        && selection
            .source_rates
            .iter()
            .zip(req.floors())
            .all(|(r, v)| r + RATE_TOL >= *v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(coeffs: &[i64], rate: f64, relay: usize) -> CandidateVector {
        CandidateVector {
            coeffs: coeffs.to_vec(),
            rate,
            relay,
            rank: 0,
        }
    }

    #[test]
    fn rate_of_unit_channel() {
        // 1 - 10/11 = 1/11
        let r = computation_rate(&[1.0, 0.0], &[1, 0], 10.0).unwrap();
        let oracle = 0.5 * (11.0f64).ln() / (2.0f64).ln();
        assert!((r - oracle).abs() < 1e-12);
        assert!((r - 1.7297).abs() < 1e-4);
    }

    #[test]
    fn zero_channel_gives_zero_rate() {
        assert_eq!(computation_rate(&[0.0, 0.0, 0.0], &[1, 0, 0], 7.0).unwrap(), 0.0);
    }

    #[test]
    fn rate_errors() {
        assert_eq!(computation_rate(&[1.0, 2.0], &[0, 0], 1.0), Err(Error::ZeroVector));
        assert!(matches!(
            computation_rate(&[1.0], &[1, 2], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        // Huge power with a = h collapses the form through cancellation.
        assert!(matches!(
            computation_rate(&[1.0], &[1], 1e18),
            Err(Error::NumericalDomain { .. })
        ));
    }

    #[test]
    fn collinear_rate_examples() {
        assert_eq!(collinear_rate(0.5984, 2).unwrap(), 0.0);
        assert_eq!(collinear_rate(3.0, 2).unwrap(), 2.0);
        assert!((collinear_rate(3.0, -4).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(collinear_rate(1.0, 1), Err(Error::InvalidLambda(1)));
        assert_eq!(collinear_rate(1.0, -1), Err(Error::InvalidLambda(-1)));
        assert_eq!(collinear_rate(1.0, 0), Err(Error::InvalidLambda(0)));
    }

    #[test]
    fn derive_selection_errors() {
        let dup = vec![cand(&[1, 0], 1.0, 0), cand(&[0, 1], 1.0, 0)];
        assert_eq!(derive_selection(dup), Err(Error::DuplicateRelay(0)));
        let collinear = vec![cand(&[1, 0], 1.0, 0), cand(&[2, 0], 1.0, 1)];
        assert_eq!(derive_selection(collinear), Err(Error::RankDeficient));
        let short = vec![cand(&[1, 0], 1.0, 0)];
        assert!(matches!(
            derive_selection(short),
            Err(Error::WrongEntryCount { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn source_rates_follow_nonzero_pattern() {
        let sel = derive_selection(vec![
            cand(&[1, 1, 0], 0.9, 2),
            cand(&[0, 1, 0], 0.4, 0),
            cand(&[0, 0, 1], 0.7, 1),
        ])
        .unwrap();
        assert_eq!(sel.source_rates, vec![0.9, 0.4, 0.7]);
        assert_eq!(sel.min_rate, 0.4);
        assert!((sel.sum_rate - 2.0).abs() < 1e-15);
        assert_eq!(sel.relays(), vec![2, 0, 1]);
        assert_eq!(sel.canonical_columns(), vec![vec![0, 1, 0], vec![0, 0, 1], vec![1, 1, 0]]);
    }

    #[test]
    fn requirements() {
        let sel = derive_selection(vec![cand(&[1, 0], 0.5, 0), cand(&[1, 1], 0.3, 1)]).unwrap();
        assert!(meets_requirements(&sel, &RateRequirements::none(2)));
        assert!(meets_requirements(&sel, &RateRequirements::uniform(2, 0.3).unwrap()));
        assert!(!meets_requirements(&sel, &RateRequirements::new(vec![0.0, 0.31]).unwrap()));
        assert!(RateRequirements::new(vec![-1.0]).is_err());
        let req = RateRequirements::new(vec![0.1, 0.6]).unwrap();
        assert_eq!(req.floor_for(&[1, 0]), 0.1);
        assert_eq!(req.floor_for(&[1, -2]), 0.6);
        assert!(!req.admits(&cand(&[0, 1], 0.5, 0)));
    }

    #[test]
    fn channel_validation() {
        assert!(ChannelInstance::from_rows(&[vec![1.0], vec![2.0]], 1.0).is_err());
        assert!(ChannelInstance::from_rows(&[vec![1.0, 2.0]], 0.0).is_err());
        assert!(ChannelInstance::from_rows(&[vec![f64::NAN, 2.0]], 1.0).is_err());
        let ch = ChannelInstance::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]], 10.0)
            .unwrap();
        assert_eq!(ch.num_sources(), 2);
        assert_eq!(ch.num_relays(), 3);
        assert_eq!(ch.relay_gains(1), &[2.0, 5.0]);
        assert!((ch.snr_db() - 10.0).abs() < 1e-12);
        assert_eq!(ch.rows()[1], vec![4.0, 5.0, 6.0]);
        let err = ChannelInstance::from_rows(&[vec![1.0], vec![2.0]], 1.0).unwrap_err();
        assert!(err.to_string().contains("M ≥ L violated"));
    }
}
