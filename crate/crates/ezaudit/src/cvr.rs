//! Cast vote records as JSON Lines, one `CvrEntry` per line.

use std::io::{BufRead, Write};

use ezaudit_core::session::{CastVoteRecords, CvrEntry};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CvrError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("line {line}: duplicate record for ballot {index} of group `{group_id}`")]
    Duplicate { line: usize, group_id: String, index: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn read_cvr<R: BufRead>(source: R) -> Result<CastVoteRecords, CvrError> {
    let mut out = CastVoteRecords::default();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CvrEntry = serde_json::from_str(&line).map_err(|source| CvrError::Parse { line: i + 1, source })?;
        if out
            .insert(entry.group_id.clone(), entry.index_within_group, entry.interpretation)
            .is_some()
        {
            return Err(CvrError::Duplicate {
                line: i + 1,
                group_id: entry.group_id,
                index: entry.index_within_group,
            });
        }
    }
    Ok(out)
}

pub fn write_cvr<W: Write>(cvr: &CastVoteRecords, mut out: W) -> std::io::Result<()> {
    for (group_id, index_within_group, interpretation) in cvr.iter() {
        let entry = CvrEntry {
            group_id: group_id.to_string(),
            index_within_group,
            interpretation: interpretation.clone(),
        };
        serde_json::to_writer(&mut out, &entry)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
