//! Krippendorff's alpha for nominal data: chance-corrected inter-rater
//! agreement computed from the coincidence matrix over pairable values.
//!
//! Units rated by fewer than two raters are excluded. With the nominal
//! difference function (0 if equal, 1 otherwise) alpha is
//! `1 - Do / De` where `Do` sums the off-diagonal coincidences and `De`
//! is their expectation under chance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ratings of units by two or more raters; `None` marks "not rated".
///
/// Units may carry a channel tag so agreement can be reported channel-wise
/// as well as pooled over everything.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RaterTable {
    pub raters: Vec<String>,
    pub units: Vec<String>,
    /// Optional channel tag per unit, parallel to `units`.
    pub channels: Option<Vec<String>>,
    /// `ratings[r][u]` is rater `r`'s label for unit `u`.
    pub ratings: Vec<Vec<Option<String>>>,
}

impl RaterTable {
    pub fn new(
        raters: Vec<String>,
        units: Vec<String>,
        channels: Option<Vec<String>>,
        ratings: Vec<Vec<Option<String>>>,
    ) -> Result<RaterTable> {
        if raters.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 raters, got {}",
                raters.len()
            )));
        }
        if ratings.len() != raters.len() {
            return Err(Error::Validation("ratings rows must match rater count".into()));
        }
        for (r, row) in ratings.iter().enumerate() {
            if row.len() != units.len() {
                return Err(Error::Validation(format!(
                    "rater '{}' has {} ratings for {} units",
                    raters[r],
                    row.len(),
                    units.len()
                )));
            }
        }
        if let Some(ch) = &channels {
            if ch.len() != units.len() {
                return Err(Error::Validation("channel tags must match unit count".into()));
            }
        }
        Ok(RaterTable { raters, units, channels, ratings })
    }

    /// Table restricted to the units tagged with `channel`.
    pub fn channel_slice(&self, channel: &str) -> Option<RaterTable> {
        let tags = self.channels.as_ref()?;
        let keep: Vec<usize> = (0..self.units.len())
            .filter(|&u| tags[u] == channel)
            .collect();
        Some(RaterTable {
            raters: self.raters.clone(),
            units: keep.iter().map(|&u| self.units[u].clone()).collect(),
            channels: None,
            ratings: self
                .ratings
                .iter()
                .map(|row| keep.iter().map(|&u| row[u].clone()).collect())
                .collect(),
        })
    }

    /// Distinct channel tags in first-appearance order.
    pub fn channel_names(&self) -> Vec<String> {
        let mut seen = Vec::new();
        if let Some(tags) = &self.channels {
            for t in tags {
                if !seen.contains(t) {
                    seen.push(t.clone());
                }
            }
        }
        seen
    }
}

/// Alpha with its disagreement components and the coincidence matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub observed_disagreement: f64,
    pub expected_disagreement: f64,
    /// Labels indexing the coincidence matrix, sorted.
    pub labels: Vec<String>,
    /// Row-major coincidence counts (fractional for units with > 2 raters).
    pub coincidence: Vec<f64>,
    /// Number of pairable values (sum of the coincidence matrix).
    pub n_pairable: f64,
    /// Set when all pairable values are identical and alpha is 1 by
    /// convention (both disagreement components are zero).
    pub degenerate: bool,
}

/// Nominal Krippendorff's alpha over the pairable values of `table`.
pub fn krippendorff_alpha(table: &RaterTable) -> Result<AlphaResult> {
    // collect per-unit value lists with >= 2 ratings
    let mut pairable_units: Vec<Vec<&str>> = Vec::new();
    for u in 0..table.units.len() {
        let values: Vec<&str> = table
            .ratings
            .iter()
            .filter_map(|row| row[u].as_deref())
            .collect();
        if values.len() >= 2 {
            pairable_units.push(values);
        }
    }
    if pairable_units.is_empty() {
        return Err(Error::Validation(
            "insufficient overlap: no unit rated by two or more raters".into(),
        ));
    }

    let labels: Vec<String> = pairable_units
        .iter()
        .flatten()
        .map(|s| s.to_string())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let id: BTreeMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let l = labels.len();

    // coincidence matrix: each ordered pair of distinct rating slots within
    // a unit contributes 1 / (m_u - 1)
    let mut coincidence = vec![0.0f64; l * l];
    for values in &pairable_units {
        let m = values.len();
        let w = 1.0 / (m as f64 - 1.0);
        for (a, &va) in values.iter().enumerate() {
            for (b, &vb) in values.iter().enumerate() {
                if a != b {
                    coincidence[id[va] * l + id[vb]] += w;
                }
            }
        }
    }

    let n: f64 = coincidence.iter().sum();
    let marginals: Vec<f64> = (0..l)
        .map(|c| (0..l).map(|k| coincidence[c * l + k]).sum())
        .collect();
    let observed: f64 = (0..l)
        .flat_map(|c| (0..l).map(move |k| (c, k)))
        .filter(|(c, k)| c != k)
        .map(|(c, k)| coincidence[c * l + k])
        .sum();
    let expected: f64 = (0..l)
        .flat_map(|c| (0..l).map(move |k| (c, k)))
        .filter(|(c, k)| c != k)
        .map(|(c, k)| marginals[c] * marginals[k] / (n - 1.0))
        .sum();

    let (alpha, degenerate) = if expected == 0.0 {
        // single label everywhere: perfect agreement by convention
        (1.0, true)
    } else {
        (1.0 - observed / expected, false)
    };
    Ok(AlphaResult {
        alpha,
        observed_disagreement: observed,
        expected_disagreement: expected,
        labels,
        coincidence,
        n_pairable: n,
        degenerate,
    })
}

/// Channel-wise alphas (when the table carries channel tags) plus the
/// pooled headline figure.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlphaReport {
    pub pooled: AlphaResult,
    pub per_channel: BTreeMap<String, AlphaResult>,
}

pub fn alpha_report(table: &RaterTable) -> Result<AlphaReport> {
    let pooled = krippendorff_alpha(table)?;
    let mut per_channel = BTreeMap::new();
    for name in table.channel_names() {
        if let Some(slice) = table.channel_slice(&name) {
            // a channel with no pairable units is simply skipped
            if let Ok(res) = krippendorff_alpha(&slice) {
                per_channel.insert(name, res);
            }
        }
    }
    Ok(AlphaReport { pooled, per_channel })
}
