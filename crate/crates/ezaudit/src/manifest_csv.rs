//! Ballot manifest CSV: a `group_id,ballot_count` header, then one group per
//! row in canonical order. Ids are taken verbatim; quoting is not supported,
//! so an id containing a comma or a double quote is rejected.

use std::io::{Read, Write};

use ezaudit_core::manifest::{BallotManifest, ManifestError, ManifestGroup};
use thiserror::Error;

pub const HEADER: [&str; 2] = ["group_id", "ballot_count"];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("manifest header must be `group_id,ballot_count`, found `{0}`")]
    BadHeader(String),
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn parse_manifest<R: Read>(source: R) -> Result<BallotManifest, CsvError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .quoting(false)
        .flexible(true)
        .from_reader(source);
    let header = reader.headers()?.clone();
    if header.len() != 2 || header.get(0) != Some(HEADER[0]) || header.get(1).map(str::trim_end) != Some(HEADER[1]) {
        return Err(CsvError::BadHeader(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut groups = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() == 1 && row.get(0) == Some("") {
            continue;
        }
        if row.len() != 2 {
            return Err(CsvError::MalformedRow {
                line,
                reason: format!("expected 2 fields, found {} (ids may not contain commas)", row.len()),
            });
        }
        let id = &row[0];
        if id.contains('"') {
            return Err(CsvError::MalformedRow {
                line,
                reason: format!("group id `{id}` contains a double quote"),
            });
        }
        let count_text = row[1].trim();
        let count: i64 = count_text.parse().map_err(|_| CsvError::MalformedRow {
            line,
            reason: format!("ballot count `{count_text}` is not an integer"),
        })?;
        if count < 0 {
            return Err(ManifestError::NegativeCount {
                group_id: id.to_string(),
                count,
            }
            .into());
        }
        groups.push(ManifestGroup::new(id, count as u64));
    }
    Ok(BallotManifest::new(groups)?)
}

pub fn write_manifest<W: Write>(manifest: &BallotManifest, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", HEADER.join(","))?;
    for g in manifest.groups() {
        writeln!(out, "{},{}", g.group_id, g.claimed_count)?;
    }
    Ok(())
}
