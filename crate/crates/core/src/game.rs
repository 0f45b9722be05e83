//! Transferable-utility game between the relays and the centralized decoder.
//!
//! A coalition earns `Z` per bit of the best feasible sum rate it can support
//! on its own, which requires the decoder and at least `L` relays. The
//! decoder keeps a `1 - b` share and the relays split the rest equally.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::CandidateSetFamily;
use crate::engine::{self, EngineResult};
use crate::error::{Error, Result};
use crate::model::{CodingSelection, RateRequirements};

/// Exhaustive core checks are limited to this many players.
pub const MAX_CORE_PLAYERS: usize = 12;

/// Payoff comparisons treat differences up to this size as ties.
pub const PAYOFF_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Player {
    /// Zero-based relay index.
    Relay(usize),
    Decoder,
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Player::Relay(m) => write!(f, "R{}", m + 1),
            Player::Decoder => f.write_str("CD"),
        }
    }
}

/// The `M` relays plus the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerSet {
    pub num_relays: usize,
}

impl PlayerSet {
    pub fn new(num_relays: usize) -> Self {
        Self { num_relays }
    }

    pub fn len(&self) -> usize {
        self.num_relays + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn players(&self) -> impl Iterator<Item = Player> {
        (0..self.num_relays).map(Player::Relay).chain(std::iter::once(Player::Decoder))
    }

    // Bit m is relay m, bit M is the decoder.
    fn bit(&self, p: Player) -> u32 {
        match p {
            Player::Relay(m) => 1 << m,
            Player::Decoder => 1 << self.num_relays,
        }
    }

    fn members_of(&self, mask: u32) -> Coalition {
        Coalition {
            relays: (0..self.num_relays).filter(|m| mask & (1 << m) != 0).collect(),
            has_decoder: mask & (1 << self.num_relays) != 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EconParams {
    /// Payment per delivered bit.
    pub z: f64,
    /// Relays' share of the coalition value.
    pub b: f64,
}

impl EconParams {
    pub fn new(z: f64, b: f64) -> Result<Self> {
        if !(z.is_finite() && z > 0.0) {
            return Err(Error::InvalidEcon(format!("Z = {z} must be positive")));
        }
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::InvalidEcon(format!("b = {b} must lie in (0, 1)")));
        }
        Ok(Self { z, b })
    }
}

impl Default for EconParams {
    fn default() -> Self {
        Self { z: 1.0, b: 0.7 }
    }
}

/// A set of players: some relays (sorted, zero-based) and maybe the decoder.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coalition {
    pub relays: Vec<usize>,
    pub has_decoder: bool,
}

impl Coalition {
    pub fn new(mut relays: Vec<usize>, has_decoder: bool) -> Self {
        relays.sort_unstable();
        relays.dedup();
        Self { relays, has_decoder }
    }

    pub fn len(&self) -> usize {
        self.relays.len() + usize::from(self.has_decoder)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, p: Player) -> bool {
        match p {
            Player::Relay(m) => self.relays.binary_search(&m).is_ok(),
            Player::Decoder => self.has_decoder,
        }
    }

    pub fn players(&self) -> Vec<Player> {
        let mut v: Vec<Player> = self.relays.iter().map(|&m| Player::Relay(m)).collect();
        if self.has_decoder {
            v.push(Player::Decoder);
        }
        v
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.players().iter().map(Player::to_string).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

/// Value of a coalition and the selection that achieves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionValue {
    pub value: f64,
    pub selection: Option<CodingSelection>,
}

/// `Z` times the best feasible sum rate using only the coalition's relays;
/// zero without the decoder, with fewer than `L` relays, or when no feasible
/// selection exists.
pub fn coalition_value(
    coalition: &Coalition,
    family: &CandidateSetFamily,
    req: &RateRequirements,
    econ: &EconParams,
) -> CoalitionValue {
    let zero = CoalitionValue {
        value: 0.0,
        selection: None,
    };
    if !coalition.has_decoder || coalition.relays.len() < family.num_sources() {
        return zero;
    }
    match engine::run(&family.restrict(&coalition.relays), req) {
        Ok(res) => CoalitionValue {
            value: econ.z * res.selection.sum_rate,
            selection: Some(res.selection),
        },
        Err(_) => zero,
    }
}

/// Equal-fair split: the decoder takes `(1 - b) v`, each relay `b v / (|S| - 1)`.
pub fn split_payoffs(
    coalition: &Coalition,
    value: f64,
    econ: &EconParams,
) -> Result<BTreeMap<Player, f64>> {
    let mut out: BTreeMap<Player, f64> = coalition.players().into_iter().map(|p| (p, 0.0)).collect();
    if value == 0.0 {
        return Ok(out);
    }
    if coalition.len() < 2 || !coalition.has_decoder {
        return Err(Error::DegenerateCoalition);
    }
    let relay_share = econ.b * value / coalition.relays.len() as f64;
    for &m in &coalition.relays {
        out.insert(Player::Relay(m), relay_share);
    }
    out.insert(Player::Decoder, (1.0 - econ.b) * value);
    Ok(out)
}

/// One block of a partition together with its value and payoffs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub coalition: Coalition,
    pub value: f64,
    pub selection: Option<CodingSelection>,
    pub payoffs: BTreeMap<Player, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub players: PlayerSet,
    pub blocks: Vec<Block>,
}

impl Partition {
    /// Builds a partition, valuing each block on `family`.
    pub fn from_coalitions(
        players: PlayerSet,
        coalitions: Vec<Coalition>,
        family: &CandidateSetFamily,
        req: &RateRequirements,
        econ: &EconParams,
    ) -> Result<Self> {
        if players.len() > 31 {
            return Err(Error::TooLarge {
                players: players.len(),
                limit: 31,
            });
        }
        let mut seen = 0u32;
        for c in &coalitions {
            if c.is_empty() || c.relays.iter().any(|&m| m >= players.num_relays) {
                return Err(Error::InvalidPartition(format!("block {c} is not a valid coalition")));
            }
            for p in c.players() {
                let bit = players.bit(p);
                if seen & bit != 0 {
                    return Err(Error::InvalidPartition(format!("player {p} appears in two blocks")));
                }
                seen |= bit;
            }
        }
        if seen.count_ones() as usize != players.len() {
            return Err(Error::InvalidPartition("blocks do not cover every player".into()));
        }
        let blocks = coalitions
            .into_iter()
            .map(|c| {
                let v = coalition_value(&c, family, req, econ);
                let payoffs = split_payoffs(&c, v.value, econ)?;
                Ok(Block {
                    coalition: c,
                    value: v.value,
                    selection: v.selection,
                    payoffs,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { players, blocks })
    }

    pub fn block_of(&self, p: Player) -> &Block {
        self.blocks
            .iter()
            .find(|b| b.coalition.contains(p))
            .expect("partition covers every player")
    }

    pub fn payoff(&self, p: Player) -> f64 {
        self.block_of(p).payoffs[&p]
    }
}

/// The engine's coalition (selected relays plus the decoder) with every
/// other relay standing alone.
pub fn star_partition(result: &EngineResult, players: PlayerSet, econ: &EconParams) -> Partition {
    let star = Coalition::new(result.selection.relays(), true);
    let value = econ.z * result.selection.sum_rate;
    let payoffs = split_payoffs(&star, value, econ).expect("star coalition holds the decoder");
    let mut blocks = vec![Block {
        coalition: star.clone(),
        value,
        selection: Some(result.selection.clone()),
        payoffs,
    }];
    for m in 0..players.num_relays {
        if !star.contains(Player::Relay(m)) {
            blocks.push(Block {
                coalition: Coalition::new(vec![m], false),
                value: 0.0,
                selection: None,
                payoffs: BTreeMap::from([(Player::Relay(m), 0.0)]),
            });
        }
    }
    Partition { players, blocks }
}

/// A coalition whose members would leave their blocks to form it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub coalition: Coalition,
    pub value: f64,
    /// Per member: payoff inside the deviation and payoff in the partition.
    pub payoffs: Vec<(Player, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CoreVerdict {
    InCore,
    Deviation(Deviation),
}

/// Outcome of an exhaustive core check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreReport {
    /// Verdict against deviations in which no member loses and at least one
    /// strictly gains.
    pub verdict: CoreVerdict,
    /// A deviation in which every member strictly gains, if any. Exact payoff
    /// ties (an idle relay substituting for a selected relay whose rate binds
    /// no source) can trigger the verdict above without one of these.
    pub strict_deviation: Option<Deviation>,
    pub coalitions_checked: usize,
}

impl CoreReport {
    pub fn in_core(&self) -> bool {
        self.verdict == CoreVerdict::InCore
    }
}

/// Checks every nonempty subset of players for a profitable deviation from `pi`.
pub fn verify_core(
    pi: &Partition,
    family: &CandidateSetFamily,
    req: &RateRequirements,
    econ: &EconParams,
) -> Result<CoreReport> {
    let players = pi.players;
    if players.len() > MAX_CORE_PLAYERS {
        return Err(Error::TooLarge {
            players: players.len(),
            limit: MAX_CORE_PLAYERS,
        });
    }
    let current: BTreeMap<Player, f64> = players.players().map(|p| (p, pi.payoff(p))).collect();
    let masks: Vec<u32> = (1..1u32 << players.len()).collect();
    let found: Vec<(Option<Deviation>, Option<Deviation>)> = masks
        .par_iter()
        .map(|&mask| {
            let coalition = players.members_of(mask);
            let v = coalition_value(&coalition, family, req, econ);
            let split = split_payoffs(&coalition, v.value, econ).expect("valued coalitions hold the decoder");
            let rows: Vec<(Player, f64, f64)> =
                split.iter().map(|(&p, &x)| (p, x, current[&p])).collect();
            let all_strict = rows.iter().all(|(_, new, old)| *new > old + PAYOFF_TOL);
            let none_worse = rows.iter().all(|(_, new, old)| *new >= old - PAYOFF_TOL);
            let some_strict = rows.iter().any(|(_, new, old)| *new > old + PAYOFF_TOL);
            let dev = Deviation {
                coalition,
                value: v.value,
                payoffs: rows,
            };
            let strict = all_strict.then(|| dev.clone());
            ((none_worse && some_strict).then_some(dev), strict)
        })
        .collect();
    let strict_deviation = found.iter().find_map(|(_, s)| s.clone());
    let verdict = found
        .into_iter()
        .find_map(|(w, _)| w)
        .map_or(CoreVerdict::InCore, CoreVerdict::Deviation);
    Ok(CoreReport {
        verdict,
        strict_deviation,
        coalitions_checked: masks.len(),
    })
}

/// A non-star partition that pairs the decoder with the feasible `L`-relay
/// coalition of lowest positive value, leaving the others alone. Returns
/// `None` when every feasible coalition ties with the best one.
pub fn weakest_partition(
    players: PlayerSet,
    family: &CandidateSetFamily,
    req: &RateRequirements,
    econ: &EconParams,
) -> Result<Option<Partition>> {
    let l = family.num_sources();
    let best = engine::run(family, req).map(|r| r.selection.sum_rate * econ.z).unwrap_or(0.0);
    let mut worst: Option<(f64, Coalition)> = None;
    for relays in crate::oracle::subsets(players.num_relays, l) {
        let c = Coalition::new(relays, true);
        let v = coalition_value(&c, family, req, econ).value;
        if v > 0.0 && v < best - PAYOFF_TOL && worst.as_ref().is_none_or(|(w, _)| v < *w) {
            worst = Some((v, c));
        }
    }
    let Some((_, weak)) = worst else {
        return Ok(None);
    };
    let mut blocks = vec![weak.clone()];
    blocks.extend(
        (0..players.num_relays)
            .filter(|&m| !weak.contains(Player::Relay(m)))
            .map(|m| Coalition::new(vec![m], false)),
    );
    Partition::from_coalitions(players, blocks, family, req, econ).map(Some)
}
