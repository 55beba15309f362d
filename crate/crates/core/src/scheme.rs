//! Coding scheme, coded events, and construction of multichannel sequences.
//!
//! A [`CodingScheme`] declares the channels (dimensions) of the analysis and
//! the code alphabet of each channel, together with the edit costs used by
//! the optimal-matching distance. [`build_sequences`] turns a flat event log
//! into one [`MultichannelSequence`] per session: position `t` of channel `c`
//! holds the channel-`c` code of the `t`-th event of the session (by
//! `unit_index` rank), or missing when that event carried no code on `c`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Index of a code within its channel alphabet. Missing is `None`, a
/// reserved sentinel outside every alphabet.
pub type CodeIdx = u16;

/// One channel of the scheme: a name and an ordered code alphabet.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub codes: Vec<String>,
}

/// The channels of the analysis, their code alphabets, and the per-channel
/// edit costs.
///
/// Invariants enforced at construction: channel names unique, every
/// alphabet non-empty, and code identifiers unique across the whole scheme
/// (each code belongs to exactly one channel). Code identifiers are
/// case-sensitive exact strings.
#[derive(Clone, Debug)]
pub struct CodingScheme {
    channels: Vec<Channel>,
    indel_cost_per_channel: f64,
    substitution_cost_per_channel: f64,
    flat_indel: bool,
    lookup: HashMap<String, (usize, CodeIdx)>,
}

/// On-disk shape of a scheme config document (TOML).
#[derive(Debug, Serialize, Deserialize)]
struct SchemeConfig {
    #[serde(default = "default_cost")]
    indel_cost: f64,
    #[serde(default = "default_cost")]
    substitution_cost: f64,
    /// When true, indel of a position charges every channel regardless of
    /// missing entries (the flat alternative to missing-is-free indels).
    #[serde(default)]
    flat_indel: bool,
    channels: Vec<Channel>,
}

fn default_cost() -> f64 {
    1.0
}

impl CodingScheme {
    /// Builds a validated scheme from channels and costs.
    pub fn new(
        channels: Vec<Channel>,
        indel_cost_per_channel: f64,
        substitution_cost_per_channel: f64,
        flat_indel: bool,
    ) -> Result<CodingScheme> {
        if channels.is_empty() {
            return Err(Error::Schema("scheme has no channels".into()));
        }
        if !(indel_cost_per_channel >= 0.0) || !(substitution_cost_per_channel >= 0.0) {
            return Err(Error::Schema("costs must be nonnegative".into()));
        }
        let mut names = HashMap::new();
        let mut lookup = HashMap::new();
        for (ci, ch) in channels.iter().enumerate() {
            if names.insert(ch.name.clone(), ci).is_some() {
                return Err(Error::Schema(format!("duplicate channel name '{}'", ch.name)));
            }
            if ch.codes.is_empty() {
                return Err(Error::Schema(format!("channel '{}' has an empty alphabet", ch.name)));
            }
            for (ki, code) in ch.codes.iter().enumerate() {
                if ki > CodeIdx::MAX as usize {
                    return Err(Error::Schema(format!("channel '{}' alphabet too large", ch.name)));
                }
                if lookup.insert(code.clone(), (ci, ki as CodeIdx)).is_some() {
                    return Err(Error::Schema(format!(
                        "code '{code}' appears in more than one channel (or twice in one)"
                    )));
                }
            }
        }
        Ok(CodingScheme {
            channels,
            indel_cost_per_channel,
            substitution_cost_per_channel,
            flat_indel,
            lookup,
        })
    }

    /// The built-in default scheme: five channels, fourteen codes, unit costs.
    pub fn default_scheme() -> CodingScheme {
        let ch = |name: &str, codes: &[&str]| Channel {
            name: name.to_string(),
            codes: codes.iter().map(|c| c.to_string()).collect(),
        };
        CodingScheme::new(
            vec![
                ch("Interactive", &["Int-C", "Int-B"]),
                ch("Cognitive", &["KS", "KM", "KD"]),
                ch("Regulative", &["TU", "GSP", "MR"]),
                ch("Behavioural", &["RM", "CM", "OB"]),
                ch("Socio-emotional", &["ALR", "EPI", "FC"]),
            ],
            1.0,
            1.0,
            false,
        )
        .expect("default scheme is well-formed")
    }

    /// Parses and validates a scheme config document.
    pub fn from_toml(doc: &str) -> Result<CodingScheme> {
        let cfg: SchemeConfig =
            toml::from_str(doc).map_err(|e| Error::Schema(format!("scheme config: {e}")))?;
        CodingScheme::new(cfg.channels, cfg.indel_cost, cfg.substitution_cost, cfg.flat_indel)
    }

    /// Serializes the scheme back to its config document form.
    pub fn to_toml(&self) -> String {
        let cfg = SchemeConfig {
            indel_cost: self.indel_cost_per_channel,
            substitution_cost: self.substitution_cost_per_channel,
            flat_indel: self.flat_indel,
            channels: self.channels.clone(),
        };
        toml::to_string(&cfg).expect("scheme serializes")
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn indel_cost_per_channel(&self) -> f64 {
        self.indel_cost_per_channel
    }

    pub fn substitution_cost_per_channel(&self) -> f64 {
        self.substitution_cost_per_channel
    }

    pub fn flat_indel(&self) -> bool {
        self.flat_indel
    }

    /// Total number of codes across all channels.
    pub fn n_codes(&self) -> usize {
        self.channels.iter().map(|c| c.codes.len()).sum()
    }

    /// All codes in channel order, flattened.
    pub fn all_codes(&self) -> Vec<&str> {
        self.channels
            .iter()
            .flat_map(|c| c.codes.iter().map(|s| s.as_str()))
            .collect()
    }

    /// Resolves a code identifier to (channel index, index within channel).
    pub fn resolve(&self, code: &str) -> Option<(usize, CodeIdx)> {
        self.lookup.get(code).copied()
    }

    /// The code string at (channel, index).
    pub fn code_name(&self, channel: usize, idx: CodeIdx) -> &str {
        &self.channels[channel].codes[idx as usize]
    }

    /// Upper bound on indel cost of a single position (all channels charged).
    pub fn full_indel_cost(&self) -> f64 {
        self.indel_cost_per_channel * self.n_channels() as f64
    }
}

/// How an event was observed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Verbal,
    Behavioural,
    Text,
}

impl FromStr for Modality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Modality> {
        match s {
            "verbal" => Ok(Modality::Verbal),
            "behavioural" => Ok(Modality::Behavioural),
            "text" => Ok(Modality::Text),
            other => Err(Error::Validation(format!("unknown modality '{other}'"))),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Verbal => "verbal",
            Modality::Behavioural => "behavioural",
            Modality::Text => "text",
        })
    }
}

/// One coded unit of an event log.
///
/// `unit_index` values are ranks: gaps are allowed, only relative order
/// within a session matters, and they must be unique per session. `codes`
/// holds at most one code per channel (multi-coding spans channels).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodedEvent {
    pub session_id: String,
    pub unit_index: u64,
    pub actor_id: String,
    pub modality: Modality,
    pub codes: Vec<String>,
}

/// What to do when one event carries two codes of the same channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConflictPolicy {
    /// Hard error naming the session and unit.
    #[default]
    Error,
    /// Keep the first-listed code of the channel, drop the rest.
    First,
}

impl FromStr for ConflictPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<ConflictPolicy> {
        match s {
            "error" => Ok(ConflictPolicy::Error),
            "first" => Ok(ConflictPolicy::First),
            other => Err(Error::Validation(format!("unknown conflict policy '{other}'"))),
        }
    }
}

/// One session as `T` aligned positions over the scheme's channels.
///
/// `states[c][t]` is the channel-`c` state at position `t`; `None` is the
/// missing state. All channel arrays have identical length.
#[derive(Clone, Debug, PartialEq)]
pub struct MultichannelSequence {
    pub session_id: String,
    states: Vec<Vec<Option<CodeIdx>>>,
}

impl MultichannelSequence {
    /// Builds a sequence, checking the equal-length and alphabet invariants.
    pub fn new(
        session_id: String,
        states: Vec<Vec<Option<CodeIdx>>>,
        scheme: &CodingScheme,
    ) -> Result<MultichannelSequence> {
        if states.len() != scheme.n_channels() {
            return Err(Error::Validation(format!(
                "sequence '{session_id}' has {} channels, scheme has {}",
                states.len(),
                scheme.n_channels()
            )));
        }
        let t = states.first().map_or(0, Vec::len);
        for (ci, ch) in states.iter().enumerate() {
            if ch.len() != t {
                return Err(Error::Validation(format!(
                    "sequence '{session_id}': channel arrays have unequal lengths"
                )));
            }
            let alphabet = scheme.channels()[ci].codes.len() as usize;
            if let Some(bad) = ch.iter().flatten().find(|&&k| k as usize >= alphabet) {
                return Err(Error::Validation(format!(
                    "sequence '{session_id}': state {bad} outside channel '{}' alphabet",
                    scheme.channels()[ci].name
                )));
            }
        }
        Ok(MultichannelSequence { session_id, states })
    }

    /// Number of positions `T`.
    pub fn len(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Channel-major state arrays.
    pub fn states(&self) -> &[Vec<Option<CodeIdx>>] {
        &self.states
    }

    /// The state of channel `c` at position `t`.
    pub fn state(&self, c: usize, t: usize) -> Option<CodeIdx> {
        self.states[c][t]
    }

    /// The full cross-channel state tuple at position `t`.
    pub fn position(&self, t: usize) -> Vec<Option<CodeIdx>> {
        self.states.iter().map(|ch| ch[t]).collect()
    }

    /// Count of non-missing states across all channels.
    pub fn n_observed(&self) -> usize {
        self.states
            .iter()
            .map(|ch| ch.iter().filter(|s| s.is_some()).count())
            .sum()
    }

    /// True when every channel is missing at position `t`.
    pub fn is_blank(&self, t: usize) -> bool {
        self.states.iter().all(|ch| ch[t].is_none())
    }

    /// Copy with all-missing positions removed.
    pub fn without_blanks(&self) -> MultichannelSequence {
        let keep: Vec<usize> = (0..self.len()).filter(|&t| !self.is_blank(t)).collect();
        MultichannelSequence {
            session_id: self.session_id.clone(),
            states: self
                .states
                .iter()
                .map(|ch| keep.iter().map(|&t| ch[t]).collect())
                .collect(),
        }
    }

    /// Serializes the sequence back to event-log rows (one per position).
    ///
    /// Actor and modality are not represented in a sequence; the writer uses
    /// placeholder values. Re-ingesting the rows reproduces the sequence.
    pub fn to_events(&self, scheme: &CodingScheme) -> Vec<CodedEvent> {
        (0..self.len())
            .map(|t| CodedEvent {
                session_id: self.session_id.clone(),
                unit_index: t as u64,
                actor_id: "-".to_string(),
                modality: Modality::Verbal,
                codes: self
                    .states
                    .iter()
                    .enumerate()
                    .filter_map(|(c, ch)| ch[t].map(|k| scheme.code_name(c, k).to_string()))
                    .collect(),
            })
            .collect()
    }
}

/// Builds one sequence per session from an event log.
///
/// Events may arrive in any order; `unit_index` defines the order within a
/// session and sequences are returned sorted by session id, so the output
/// does not depend on input order. Unknown codes and same-channel
/// double-coding are rejected (the latter subject to `policy`).
pub fn build_sequences(
    events: &[CodedEvent],
    scheme: &CodingScheme,
    policy: ConflictPolicy,
) -> Result<Vec<MultichannelSequence>> {
    let mut sessions: BTreeMap<&str, Vec<&CodedEvent>> = BTreeMap::new();
    for ev in events {
        sessions.entry(&ev.session_id).or_default().push(ev);
    }

    let mut out = Vec::with_capacity(sessions.len());
    for (sid, mut evs) in sessions {
        evs.sort_by_key(|e| e.unit_index);
        for w in evs.windows(2) {
            if w[0].unit_index == w[1].unit_index {
                return Err(Error::Validation(format!(
                    "session '{sid}': duplicate unit_index {}",
                    w[0].unit_index
                )));
            }
        }
        let t_len = evs.len();
        let mut states: Vec<Vec<Option<CodeIdx>>> =
            vec![vec![None; t_len]; scheme.n_channels()];
        for (t, ev) in evs.iter().enumerate() {
            for code in &ev.codes {
                let Some((ci, ki)) = scheme.resolve(code) else {
                    return Err(Error::Validation(format!(
                        "session '{sid}' unit {}: unknown code '{code}'",
                        ev.unit_index
                    )));
                };
                match (states[ci][t], policy) {
                    (None, _) => states[ci][t] = Some(ki),
                    (Some(_), ConflictPolicy::First) => {}
                    (Some(prev), ConflictPolicy::Error) => {
                        return Err(Error::Validation(format!(
                            "session '{sid}' unit {}: codes '{}' and '{code}' both belong to channel '{}'",
                            ev.unit_index,
                            scheme.code_name(ci, prev),
                            scheme.channels()[ci].name
                        )));
                    }
                }
            }
        }
        out.push(MultichannelSequence {
            session_id: sid.to_string(),
            states,
        });
    }
    Ok(out)
}
