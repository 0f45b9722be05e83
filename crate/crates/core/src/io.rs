//! JSON instance, result and sweep-config files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::candidates::{PolicyKind, TerminationPolicy, DEFAULT_K_MAX};
use crate::engine::EngineResult;
use crate::error::{Error, Result};
use crate::game::{EconParams, Partition};
use crate::model::{derive_selection, CandidateVector, ChannelInstance, CodingSelection, RateRequirements};
use crate::oracle::ParetoPoint;
use crate::sim::{power_from_db, SweepConfig};

/// Rounds to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("scientific notation parses")
}

/// Shortest decimal rendering of `x` rounded to 12 significant digits.
pub fn format_sig(x: f64) -> String {
    let r = round_sig(x);
    if r == 0.0 {
        "0".into()
    } else {
        r.to_string()
    }
}

fn input(key: &str, message: impl Into<String>) -> Error {
    Error::Input {
        key: key.into(),
        message: message.into(),
    }
}

fn json_error(e: serde_json::Error) -> Error {
    input("json", e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    /// `span`, `relayspan`, `minrate` or `cap`.
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconSpec {
    #[serde(rename = "Z")]
    pub z: f64,
    pub b: f64,
}

/// A single channel instance as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    /// `L` rows of `M` gains.
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub econ: Option<EconSpec>,
}

/// A validated instance ready to solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub channel: ChannelInstance,
    pub req: RateRequirements,
    pub policy: TerminationPolicy,
    pub econ: EconParams,
}

fn requirements(key: &str, l: usize, v: Option<&[f64]>) -> Result<RateRequirements> {
    match v {
        None => Ok(RateRequirements::none(l)),
        Some(v) if v.len() != l => Err(input(key, format!("expected {l} entries, found {}", v.len()))),
        Some(v) => RateRequirements::new(v.to_vec()).map_err(|e| input(key, e.to_string())),
    }
}

/// Parses `span`, `relayspan`, `minrate` or `cap:K`.
pub fn parse_policy(text: &str, req: &RateRequirements) -> Result<TerminationPolicy> {
    let kind = match text.trim() {
        "span" => PolicyKind::SpanFullRank,
        "relayspan" => PolicyKind::RelaySpan,
        "minrate" => PolicyKind::MinRateFloor(req.clone()),
        other => match other.strip_prefix("cap:") {
            Some(k) => PolicyKind::SizeCap(
                k.parse()
                    .ok()
                    .filter(|&k: &usize| k > 0)
                    .ok_or_else(|| input("policy", format!("bad size cap `{k}`")))?,
            ),
            None => return Err(input("policy", format!("unknown policy `{other}`"))),
        },
    };
    Ok(TerminationPolicy::new(kind))
}

/// Parses a single floor (applied to every source) or a comma-separated list.
pub fn parse_vmin(text: &str, num_sources: usize) -> Result<RateRequirements> {
    let values: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| input("vmin", e.to_string()))?;
    let values = if values.len() == 1 {
        vec![values[0]; num_sources]
    } else {
        values
    };
    requirements("vmin", num_sources, Some(&values))
}

fn policy_from_spec(spec: &PolicySpec, l: usize, req: &RateRequirements) -> Result<TerminationPolicy> {
    let kind = match spec.kind.as_str() {
        "span" => PolicyKind::SpanFullRank,
        "relayspan" => PolicyKind::RelaySpan,
        "minrate" => match &spec.v {
            Some(v) => PolicyKind::MinRateFloor(requirements("policy.V", l, Some(v))?),
            None => PolicyKind::MinRateFloor(req.clone()),
        },
        "cap" => match spec.k {
            Some(k) if k > 0 => PolicyKind::SizeCap(k),
            _ => return Err(input("policy.K", "cap policy needs a positive K")),
        },
        other => return Err(input("policy.type", format!("unknown policy `{other}`"))),
    };
    let k_max = spec.k_max.unwrap_or(DEFAULT_K_MAX);
    if k_max == 0 {
        return Err(input("policy.k_max", "must be at least 1"));
    }
    Ok(TerminationPolicy::new(kind).with_k_max(k_max))
}

fn power_of(p: Option<f64>, snr_db: Option<f64>) -> Result<f64> {
    match (p, snr_db) {
        (Some(p), None) if p.is_finite() && p > 0.0 => Ok(p),
        (Some(p), None) => Err(input("P", format!("power {p} must be positive"))),
        (None, Some(s)) if s.is_finite() => Ok(power_from_db(s)),
        (None, Some(s)) => Err(input("snr_db", format!("{s} is not finite"))),
        (Some(_), Some(_)) => Err(input("P", "give exactly one of P and snr_db")),
        (None, None) => Err(input("P", "missing power: give P or snr_db")),
    }
}

fn econ_of(spec: Option<EconSpec>) -> Result<EconParams> {
    match spec {
        None => Ok(EconParams::default()),
        Some(e) => EconParams::new(e.z, e.b).map_err(|err| input("econ", err.to_string())),
    }
}

impl InstanceFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(json_error)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    /// Checks dimensions and builds the library objects.
    pub fn resolve(&self) -> Result<Instance> {
        if self.l == 0 {
            return Err(input("L", "must be positive"));
        }
        if self.m < self.l {
            return Err(input("M", format!("M ≥ L violated (L = {}, M = {})", self.l, self.m)));
        }
        if self.h.len() != self.l {
            return Err(input("H", format!("expected {} rows, found {}", self.l, self.h.len())));
        }
        if let Some(r) = self.h.iter().position(|row| row.len() != self.m) {
            return Err(input(
                "H",
                format!("row {} has {} entries, expected {}", r + 1, self.h[r].len(), self.m),
            ));
        }
        let power = power_of(self.p, self.snr_db)?;
        let channel = ChannelInstance::from_rows(&self.h, power).map_err(|e| input("H", e.to_string()))?;
        let req = requirements("V", self.l, self.v.as_deref())?;
        let policy = match &self.policy {
            Some(spec) => policy_from_spec(spec, self.l, &req)?,
            None => TerminationPolicy::relay_span(),
        };
        Ok(Instance {
            channel,
            req,
            policy,
            econ: econ_of(self.econ)?,
        })
    }
}

/// One selected vector, one-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub relay: usize,
    pub rank: usize,
    pub label: String,
    pub coeffs: Vec<i64>,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    /// One-based relay indices in entry order.
    pub relays: Vec<usize>,
    /// Columns of `A` in entry order.
    #[serde(rename = "A")]
    pub matrix: Vec<Vec<i64>>,
    pub entries: Vec<EntryRecord>,
    pub source_rates: Vec<f64>,
    pub min_rate: f64,
    pub sum_rate: f64,
}

impl From<&CodingSelection> for SelectionRecord {
    fn from(sel: &CodingSelection) -> Self {
        Self {
            relays: sel.relays().iter().map(|m| m + 1).collect(),
            matrix: sel.entries.iter().map(|e| e.coeffs.clone()).collect(),
            entries: sel
                .entries
                .iter()
                .map(|e| EntryRecord {
                    relay: e.relay + 1,
                    rank: e.rank + 1,
                    label: e.label(),
                    coeffs: e.coeffs.clone(),
                    rate: round_sig(e.rate),
                })
                .collect(),
            source_rates: sel.source_rates.iter().map(|&r| round_sig(r)).collect(),
            min_rate: round_sig(sel.min_rate),
            sum_rate: round_sig(sel.sum_rate),
        }
    }
}

impl SelectionRecord {
    /// Rebuilds the selection from its stored entries.
    pub fn to_selection(&self) -> Result<CodingSelection> {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                if e.relay == 0 || e.rank == 0 {
                    return Err(input("selection.entries", "indices are one-based"));
                }
                Ok(CandidateVector {
                    coeffs: e.coeffs.clone(),
                    rate: e.rate,
                    relay: e.relay - 1,
                    rank: e.rank - 1,
                })
            })
            .collect::<Result<_>>()?;
        derive_selection(entries)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub matrices_searched: u64,
    pub coalitions_formed: u64,
    pub visited_points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameRecord {
    pub v: f64,
    pub payoffs: BTreeMap<String, f64>,
    pub partition: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRecord {
    pub min_rate: f64,
    pub sum_rate: f64,
    pub representatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub selection: SelectionRecord,
    pub step1: SelectionRecord,
    pub trace: TraceRecord,
    pub game: GameRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frontier: Option<Vec<FrontierRecord>>,
    pub timing: TimingRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub seconds: f64,
}

impl ResultFile {
    pub fn new(
        result: &EngineResult,
        partition: &Partition,
        frontier: Option<&[ParetoPoint]>,
        seconds: f64,
    ) -> Self {
        let star = &partition.blocks[0];
        Self {
            selection: (&result.selection).into(),
            step1: (&result.step1).into(),
            trace: TraceRecord {
                matrices_searched: result.trace.matrices_searched,
                coalitions_formed: result.trace.coalitions_formed,
                visited_points: result
                    .trace
                    .visited_points
                    .iter()
                    .map(|&(a, b)| (round_sig(a), round_sig(b)))
                    .collect(),
            },
            game: GameRecord {
                v: round_sig(star.value),
                payoffs: partition
                    .players
                    .players()
                    .map(|p| (p.to_string(), round_sig(partition.payoff(p))))
                    .collect(),
                partition: partition
                    .blocks
                    .iter()
                    .map(|b| b.coalition.players().iter().map(ToString::to_string).collect())
                    .collect(),
            },
            frontier: frontier.map(|pts| {
                pts.iter()
                    .map(|p| FrontierRecord {
                        min_rate: round_sig(p.min_rate),
                        sum_rate: round_sig(p.sum_rate),
                        representatives: p.representatives.len(),
                    })
                    .collect()
            }),
            timing: TimingRecord {
                seconds: round_sig(seconds),
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(json_error)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }
}

/// Sweep configuration as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepFile {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M_list")]
    pub m_list: Vec<usize>,
    pub snr_db_list: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub econ: Option<EconSpec>,
    /// Fixed channel rows used for every trial.
    #[serde(rename = "H", default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<Vec<f64>>>,
}

fn default_trials() -> usize {
    2000
}

impl SweepFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(json_error)
    }

    pub fn to_config(&self) -> Result<SweepConfig> {
        let req = requirements("V", self.l, self.v.as_deref())?;
        let policy = match &self.policy {
            Some(spec) => policy_from_spec(spec, self.l, &req)?,
            None => TerminationPolicy::relay_span(),
        };
        let cfg = SweepConfig {
            num_sources: self.l,
            relay_counts: self.m_list.clone(),
            snr_db: self.snr_db_list.clone(),
            trials: self.trials,
            seed: self.seed,
            policy,
            econ: econ_of(self.econ)?,
            req,
            channel: self.h.clone(),
            threads: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(2.582756302833524), "2.58275630283");
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(15.0), "15");
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333333");
        assert_eq!(round_sig(123456.7890123456), 123456.789012);
    }

    #[test]
    fn policy_strings() {
        let req = RateRequirements::uniform(2, 0.1).unwrap();
        assert_eq!(parse_policy("span", &req).unwrap().kind, PolicyKind::SpanFullRank);
        assert_eq!(parse_policy("cap:3", &req).unwrap().kind, PolicyKind::SizeCap(3));
        assert_eq!(
            parse_policy("minrate", &req).unwrap().kind,
            PolicyKind::MinRateFloor(req.clone())
        );
        assert!(parse_policy("cap:0", &req).is_err());
        assert!(parse_policy("greedy", &req).is_err());
        assert_eq!(parse_vmin("0.2", 3).unwrap().floors(), &[0.2, 0.2, 0.2]);
        assert_eq!(parse_vmin("0.1,0.3", 2).unwrap().floors(), &[0.1, 0.3]);
        assert!(parse_vmin("0.1,0.3", 3).is_err());
    }

    #[test]
    fn instance_errors_name_the_key() {
        let key_of = |text: &str| match InstanceFile::from_json(text).and_then(|f| f.resolve()) {
            Err(Error::Input { key, message }) => format!("{key}: {message}"),
            other => panic!("expected an input error, got {other:?}"),
        };
        assert!(key_of(r#"{"L":2,"M":2,"P":10}"#).contains("`H`"));
        assert!(key_of(r#"{"L":3,"M":2,"P":10,"H":[[1,2],[3,4],[5,6]]}"#).contains("M ≥ L violated"));
        assert!(key_of(r#"{"L":2,"M":2,"H":[[1,2],[3,4]]}"#).starts_with("P"));
        assert!(key_of(r#"{"L":2,"M":2,"P":1,"snr_db":0,"H":[[1,2],[3,4]]}"#).starts_with("P"));
        assert!(key_of(r#"{"L":2,"M":2,"P":1,"H":[[1,2],[3]]}"#).starts_with("H"));
        assert!(key_of(r#"{"L":2,"M":2,"P":1,"H":[[1,2],[3,4]],"V":[1]}"#).starts_with("V"));
        assert!(key_of(r#"{"L":2,"M":2,"P":1,"H":[[1,2],[3,4]],"policy":{"type":"x"}}"#)
            .starts_with("policy.type"));
        assert!(key_of(r#"{"L":2,"M":2,"P":1,"H":[[1,2],[3,4]],"econ":{"Z":1,"b":2}}"#)
            .starts_with("econ"));
    }

    #[test]
    fn instance_resolves() {
        let f = InstanceFile::from_json(
            r#"{"L":1,"M":2,"snr_db":10,"H":[[1,0.5]],"V":[0.1],"policy":{"type":"cap","K":2}}"#,
        )
        .unwrap();
        let inst = f.resolve().unwrap();
        assert!((inst.channel.power() - 10.0).abs() < 1e-12);
        assert_eq!(inst.policy.kind, PolicyKind::SizeCap(2));
        assert_eq!(inst.req.floors(), &[0.1]);
        assert_eq!(inst.econ, EconParams::default());
    }
}
