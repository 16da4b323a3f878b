//! Ballot manifest: the ordered list of ballot containers and their claimed
//! counts, and the map from draw numbers to physical ballot locations.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("manifest has no groups")]
    EmptyManifest,
    #[error("group id is empty (group {ordinal})")]
    EmptyGroupId { ordinal: usize },
    #[error("group id `{0}` appears more than once")]
    DuplicateGroupId(String),
    #[error("group `{group_id}` has negative ballot count {count}")]
    NegativeCount { group_id: String, count: i64 },
    #[error("total ballot count overflows")]
    CountOverflow,
    #[error("draw {draw} is outside 1..={n_upper}")]
    DrawOutOfRange { draw: u64, n_upper: u64 },
    #[error("upper bound {n_upper} is below the manifest total {n_manifest}")]
    UpperBoundBelowManifest { n_upper: u64, n_manifest: u64 },
}

/// One container of ballots as listed in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestGroup {
    pub group_id: String,
    pub claimed_count: u64,
}

impl ManifestGroup {
    pub fn new(group_id: impl Into<String>, claimed_count: u64) -> Self {
        Self {
            group_id: group_id.into(),
            claimed_count,
        }
    }
}

/// Groups in canonical order with their prefix sums.
///
/// Construction validates ids and computes `cumulative`; the group order is
/// whatever order the caller supplied and is never changed afterwards.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BallotManifest {
    groups: Vec<ManifestGroup>,
    #[serde(skip)]
    cumulative: Vec<u64>,
    #[serde(skip)]
    total_listed: u64,
}

impl<'de> Deserialize<'de> for BallotManifest {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            groups: Vec<ManifestGroup>,
        }
        let raw = Raw::deserialize(deserializer)?;
        BallotManifest::new(raw.groups).map_err(serde::de::Error::custom)
    }
}

/// Where a draw number points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BallotLocation {
    /// A ballot the manifest lists. Both ordinals are 1-based.
    Listed {
        group_ordinal: usize,
        index_within_group: u64,
        group_id: String,
    },
    /// A draw past the manifest total: a ballot in the virtual phantom group.
    UnlistedPhantom { draw_number: u64 },
}

impl BallotLocation {
    pub fn is_phantom(&self) -> bool {
        matches!(self, BallotLocation::UnlistedPhantom { .. })
    }
}

impl BallotManifest {
    pub fn new(groups: Vec<ManifestGroup>) -> Result<Self, ManifestError> {
        if groups.is_empty() {
            return Err(ManifestError::EmptyManifest);
        }
        let mut seen = alloc::collections::BTreeSet::new();
        let mut cumulative = Vec::with_capacity(groups.len());
        let mut total: u64 = 0;
        for (i, g) in groups.iter().enumerate() {
            if g.group_id.is_empty() {
                return Err(ManifestError::EmptyGroupId { ordinal: i + 1 });
            }
            if !seen.insert(g.group_id.as_str()) {
                return Err(ManifestError::DuplicateGroupId(g.group_id.clone()));
            }
            total = total
                .checked_add(g.claimed_count)
                .ok_or(ManifestError::CountOverflow)?;
            cumulative.push(total);
        }
        Ok(Self {
            groups,
            cumulative,
            total_listed: total,
        })
    }

    /// Convenience constructor from `(id, count)` pairs.
    pub fn from_counts<S: Into<String>>(
        counts: impl IntoIterator<Item = (S, u64)>,
    ) -> Result<Self, ManifestError> {
        Self::new(
            counts
                .into_iter()
                .map(|(id, n)| ManifestGroup::new(id, n))
                .collect(),
        )
    }

    pub fn groups(&self) -> &[ManifestGroup] {
        &self.groups
    }

    pub fn cumulative(&self) -> &[u64] {
        &self.cumulative
    }

    /// N_M, the number of ballots the manifest lists.
    pub fn total_listed(&self) -> u64 {
        self.total_listed
    }

    pub fn group_ordinal(&self, group_id: &str) -> Option<usize> {
        self.groups
            .iter()
            .position(|g| g.group_id == group_id)
            .map(|i| i + 1)
    }

    /// Resolve a draw in `1..=n_upper` to a listed ballot or a phantom.
    pub fn locate(&self, draw_number: u64, n_upper: u64) -> Result<BallotLocation, ManifestError> {
        if n_upper < self.total_listed {
            return Err(ManifestError::UpperBoundBelowManifest {
                n_upper,
                n_manifest: self.total_listed,
            });
        }
        if draw_number < 1 || draw_number > n_upper {
            return Err(ManifestError::DrawOutOfRange {
                draw: draw_number,
                n_upper,
            });
        }
        if draw_number > self.total_listed {
            return Ok(BallotLocation::UnlistedPhantom { draw_number });
        }
        // first group whose running total reaches the draw; zero-count groups
        // share a prefix sum with their predecessor and are skipped
        let g = self.cumulative.partition_point(|&c| c < draw_number);
        let before = if g == 0 { 0 } else { self.cumulative[g - 1] };
        Ok(BallotLocation::Listed {
            group_ordinal: g + 1,
            index_within_group: draw_number - before,
            group_id: self.groups[g].group_id.clone(),
        })
    }
}
