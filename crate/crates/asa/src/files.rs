//! JSON, NDJSON and CSV readers and writers.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use asa_core::classify::LabeledRow;
use asa_core::metrics::{NUM_SLOTS, SLOT_NAMES};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{io, Error, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(io(path))?))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(io(path))?;
    w.flush().map_err(io(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })?;
    w.write_all(b"\n").map_err(io(path))?;
    w.flush().map_err(io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(io(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

pub fn write_ndjson<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|source| Error::Json {
            path: path.into(),
            source,
        })?;
        w.write_all(b"\n").map_err(io(path))?;
    }
    w.flush().map_err(io(path))
}

pub fn read_ndjson<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.into(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    toml::from_str(&text).map_err(|source| Error::TomlRead {
        path: path.into(),
        source,
    })
}

const ROW_HEADER: [&str; 6] = ["label", "profile_id", "scenario_id", "policy", "seed", "window"];

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.into(),
        source,
    }
}

/// One row per window: metadata columns then the named feature slots.
pub fn write_dataset(path: &Path, rows: &[LabeledRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let e = csv_err(path);
    w.write_record(ROW_HEADER.iter().chain(SLOT_NAMES.iter())).map_err(&e)?;
    for r in rows {
        let mut rec = vec![
            r.label.clone(),
            r.profile_id.clone(),
            r.scenario_id.clone(),
            r.policy.clone(),
            r.seed.to_string(),
            r.window.to_string(),
        ];
        rec.extend(r.values.iter().map(f64::to_string));
        w.write_record(&rec).map_err(&e)?;
    }
    w.flush().map_err(io(path))
}

pub fn read_dataset(path: &Path) -> Result<Vec<LabeledRow>> {
    let e = csv_err(path);
    let mut rd = csv::Reader::from_path(path).map_err(&e)?;
    let header = rd.headers().map_err(&e)?.clone();
    let expected: Vec<&str> = ROW_HEADER.iter().chain(SLOT_NAMES.iter()).copied().collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Format {
            path: path.into(),
            line: 1,
            reason: "unexpected dataset header".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(&e)?;
        let bad = |reason: String| Error::Format {
            path: path.into(),
            line: i + 2,
            reason,
        };
        let num = |j: usize| rec[j].parse::<u64>().map_err(|e| bad(format!("column {}: {e}", expected[j])));
        let mut values = [0.0; NUM_SLOTS];
        for (k, v) in values.iter_mut().enumerate() {
            let j = ROW_HEADER.len() + k;
            *v = rec[j].parse().map_err(|e| bad(format!("column {}: {e}", expected[j])))?;
        }
        out.push(LabeledRow {
            label: rec[0].to_string(),
            profile_id: rec[1].to_string(),
            scenario_id: rec[2].to_string(),
            policy: rec[3].to_string(),
            seed: num(4)?,
            window: num(5)? as u32,
            values,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let mut values = [0.0; NUM_SLOTS];
        values[0] = 0.1 + 0.2;
        values[5] = 1e-300;
        values[18] = 123456.789012345;
        let rows = vec![LabeledRow {
            label: "S1".into(),
            profile_id: "vm120".into(),
            scenario_id: "S1".into(),
            policy: "shadow:fifo".into(),
            seed: 3,
            window: 7,
            values,
        }];
        write_dataset(&p, &rows).unwrap();
        assert_eq!(read_dataset(&p).unwrap(), rows);
    }

    #[test]
    fn ndjson_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ndjson");
        let v = vec![(1u32, 0.1f64), (2, 1.0 / 3.0)];
        write_ndjson(&p, &v).unwrap();
        assert_eq!(read_ndjson::<(u32, f64)>(&p).unwrap(), v);
    }
}
