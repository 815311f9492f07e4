//! Artifact writing. Nothing here depends on wall time or absolute paths, so
//! a rerun with the same configuration and seed reproduces the output bytes.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub struct Meta {
    pub command: &'static str,
    pub seed: u64,
    /// SHA-256 of the resolved parameters, serialized as JSON. The seed is
    /// deliberately excluded; it travels next to the digest instead.
    pub digest: String,
}

impl Meta {
    pub fn new<P: Serialize>(command: &'static str, seed: u64, params: &P) -> Meta {
        let canonical = serde_json::to_vec(params).expect("parameters are plain data");
        Meta {
            command,
            seed,
            digest: hex::encode(Sha256::digest(&canonical)),
        }
    }
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value).expect("artifacts are plain data");
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

/// Opens a CSV file whose first line is a `#` comment carrying the run
/// identity, so a data file can be traced back to its configuration.
pub fn csv_writer(dir: &Path, name: &str, meta: &Meta) -> std::io::Result<(csv::Writer<File>, PathBuf)> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut file = File::create(&path)?;
    writeln!(
        file,
        "# smoothfix {} seed={} config_sha256={}",
        meta.command, meta.seed, meta.digest
    )?;
    Ok((csv::Writer::from_writer(file), path))
}
