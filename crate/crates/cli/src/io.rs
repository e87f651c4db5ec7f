//! Input readers and output writers shared by the commands.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use urbangraph_core::bench::PerceptionAttribute;
use urbangraph_core::geo::GeoPoint;

use crate::error::CliError;

#[derive(Deserialize)]
struct ImageRow {
    id: String,
    lon: f64,
    lat: f64,
}

/// Reads an `id,lon,lat` image manifest, sorted by id. Extra columns are
/// ignored; duplicate ids and invalid coordinates name the offending row.
pub fn read_images(path: &Path) -> Result<Vec<(String, GeoPoint)>, CliError> {
    const STAGE: &str = "anchor-images";
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(STAGE, path, e))?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ImageRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| CliError::data(STAGE, format!("{}: {e}", path.display())))?;
        let p = GeoPoint::new(row.lon, row.lat).map_err(|e| {
            CliError::data(
                STAGE,
                format!("{} row {line}, image {}: {e}", path.display(), row.id),
            )
        })?;
        if row.id.is_empty() || !seen.insert(row.id.clone()) {
            return Err(CliError::data(
                STAGE,
                format!(
                    "{} row {line}: empty or duplicate image id {:?}",
                    path.display(),
                    row.id
                ),
            ));
        }
        out.push((row.id, p));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

#[derive(Deserialize)]
struct PerceptionRow {
    image_id: String,
    attribute: String,
    score: f64,
}

pub type PerceptionScores = BTreeMap<String, Vec<(PerceptionAttribute, f64)>>;

/// Reads `image_id,attribute,score` rows.
pub fn read_perception(path: &Path) -> Result<PerceptionScores, CliError> {
    const STAGE: &str = "gen-bench";
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(STAGE, path, e))?;
    let mut out: PerceptionScores = BTreeMap::new();
    for (i, row) in rdr.deserialize::<PerceptionRow>().enumerate() {
        let row = row.map_err(|e| CliError::data(STAGE, format!("{}: {e}", path.display())))?;
        let attr = PerceptionAttribute::parse(&row.attribute).ok_or_else(|| {
            CliError::data(
                STAGE,
                format!(
                    "{} row {}: unknown attribute {:?}",
                    path.display(),
                    i + 2,
                    row.attribute
                ),
            )
        })?;
        out.entry(row.image_id).or_default().push((attr, row.score));
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.0.as_str().cmp(b.0.as_str()));
    }
    Ok(out)
}

/// One compact JSON document per line.
pub fn jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("records serialize");
        out.push(b'\n');
    }
    out
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(
    stage: &str,
    path: &Path,
) -> Result<Vec<T>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(stage, path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::data(stage, format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn pretty_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("value serializes");
    out.push(b'\n');
    out
}

/// Writes through a temporary sibling and renames it into place, so readers
/// never see a half-written file.
pub fn write_file(stage: &str, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(stage, dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(stage, dir, e))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.flush())
        .map_err(|e| CliError::io(stage, path, e))?;
    tmp.persist(path)
        .map_err(|e| CliError::io(stage, path, e.error))?;
    Ok(())
}

pub fn count_lines(path: &Path) -> std::io::Result<usize> {
    Ok(fs::read(path)?.iter().filter(|&&b| b == b'\n').count())
}
