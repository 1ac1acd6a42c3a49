//! Dataset CSV + sidecar, training report CSV, key/value files and the run
//! manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::format::{sig17, sig9};
use crate::control::{Axis, Dataset};
use crate::error::{Error, Result};
use crate::signals::Signal;
use crate::train::{EpochRecord, TrainingReport};

pub const DATASET_HEADER: &str = "k,t_s,u,y";
pub const REPORT_HEADER: &str = "epoch,train_mse,val_mse";

/// Sidecar metadata stored next to `dataset.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub axis: Axis,
    pub dt: f64,
    pub split: usize,
    pub seed: u64,
    pub config_digest: String,
}

pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta")
}

pub fn dataset_csv(data: &Dataset) -> String {
    let dt = data.dt();
    let mut out = String::with_capacity(data.len() * 40);
    out.push_str(DATASET_HEADER);
    out.push('\n');
    for (k, (u, y)) in data.u.samples().iter().zip(data.y.samples()).enumerate() {
        out.push_str(&format!("{k},{},{},{}\n", sig9(k as f64 * dt), sig9(*u), sig9(*y)));
    }
    out
}

/// Parse the `k,t_s,u,y` table into `(u, y)` samples.
pub fn parse_dataset_csv(text: &str, file: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let bad = |row: usize, msg: String| Error::Parse { file: file.to_string(), row, msg };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == DATASET_HEADER => {}
        _ => return Err(bad(1, format!("expected header '{DATASET_HEADER}'"))),
    }
    let mut u = Vec::new();
    let mut y = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 4 {
            return Err(bad(row, format!("expected 4 fields, got {}", fields.len())));
        }
        let k: usize = fields[0].parse().map_err(|_| bad(row, format!("bad index '{}'", fields[0])))?;
        if k != i {
            return Err(bad(row, format!("index {k} out of sequence (expected {i})")));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| bad(row, format!("bad {what} '{s}'")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(row, format!("non-finite {what}")))
            }
        };
        num(fields[1], "t_s")?;
        u.push(num(fields[2], "u")?);
        y.push(num(fields[3], "y")?);
    }
    Ok((u, y))
}

pub fn meta_text(meta: &DatasetMeta) -> String {
    format!(
        "axis={}\ndt={}\nsplit={}\nseed={}\nconfig_digest={}\n",
        meta.axis,
        meta.dt,
        meta.split,
        meta.seed,
        meta.config_digest
    )
}

/// `key=value` lines into a map; `#` lines and blanks are skipped.
pub fn parse_key_values(text: &str, file: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            file: file.to_string(),
            row: i + 1,
            msg: format!("expected key=value, got '{line}'"),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn required<'a>(map: &'a BTreeMap<String, String>, key: &str, file: &str) -> Result<&'a str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Parse { file: file.to_string(), row: 0, msg: format!("missing '{key}'") })
}

pub fn parse_meta(text: &str, file: &str) -> Result<DatasetMeta> {
    let map = parse_key_values(text, file)?;
    let bad = |key: &str| Error::Parse { file: file.to_string(), row: 0, msg: format!("bad value for '{key}'") };
    Ok(DatasetMeta {
        axis: required(&map, "axis", file)?.parse()?,
        dt: required(&map, "dt", file)?.parse().map_err(|_| bad("dt"))?,
        split: required(&map, "split", file)?.parse().map_err(|_| bad("split"))?,
        seed: required(&map, "seed", file)?.parse().map_err(|_| bad("seed"))?,
        config_digest: required(&map, "config_digest", file)?.to_string(),
    })
}

pub fn write_dataset(csv: &Path, data: &Dataset, seed: u64, config_digest: &str) -> Result<()> {
    fs::write(csv, dataset_csv(data))?;
    let meta = DatasetMeta {
        axis: data.axis,
        dt: data.dt(),
        split: data.split,
        seed,
        config_digest: config_digest.to_string(),
    };
    fs::write(meta_path(csv), meta_text(&meta))?;
    Ok(())
}

fn read_artifact(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
        _ => Error::Io(e),
    })
}

pub fn read_dataset(csv: &Path) -> Result<(Dataset, DatasetMeta)> {
    let name = csv.display().to_string();
    let text = read_artifact(csv)?;
    let (u, y) = parse_dataset_csv(&text, &name)?;
    let meta_file = meta_path(csv);
    let meta = parse_meta(&read_artifact(&meta_file)?, &meta_file.display().to_string())?;
    let data = Dataset::new(Signal::new(u, meta.dt)?, Signal::new(y, meta.dt)?, meta.axis, meta.split)?;
    Ok((data, meta))
}

pub fn report_csv(report: &TrainingReport) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in &report.epochs {
        out.push_str(&format!("{},{},{}\n", r.epoch, sig17(r.train_mse), sig17(r.val_mse)));
    }
    out
}

pub fn parse_report_csv(text: &str, file: &str) -> Result<Vec<EpochRecord>> {
    let bad = |row: usize, msg: String| Error::Parse { file: file.to_string(), row, msg };
    let mut lines = text.lines();
    if lines.next().map(str::trim_end) != Some(REPORT_HEADER) {
        return Err(bad(1, format!("expected header '{REPORT_HEADER}'")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let row = i + 2;
            let f: Vec<&str> = line.trim_end().split(',').collect();
            if f.len() != 3 {
                return Err(bad(row, "expected 3 fields".into()));
            }
            Ok(EpochRecord {
                epoch: f[0].parse().map_err(|_| bad(row, "bad epoch".into()))?,
                train_mse: f[1].parse().map_err(|_| bad(row, "bad train_mse".into()))?,
                val_mse: f[2].parse().map_err(|_| bad(row, "bad val_mse".into()))?,
            })
        })
        .collect()
}

pub fn read_report(path: &Path) -> Result<Vec<EpochRecord>> {
    parse_report_csv(&read_artifact(path)?, &path.display().to_string())
}

pub fn read_text(path: &Path) -> Result<String> {
    read_artifact(path)
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Merge `entries` into `dir/manifest.txt`, keeping existing keys.
pub fn update_manifest(dir: &Path, entries: &[(&str, String)]) -> Result<()> {
    let path = dir.join("manifest.txt");
    let mut map = match fs::read_to_string(&path) {
        Ok(text) => parse_key_values(&text, "manifest.txt")?,
        Err(_) => BTreeMap::new(),
    };
    map.insert("tool".into(), env!("CARGO_PKG_NAME").into());
    map.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    for (k, v) in entries {
        map.insert((*k).to_string(), v.clone());
    }
    let text: String = map.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    fs::write(path, text)?;
    Ok(())
}
