//! Report writers. Every CSV starts with a `#` line naming the software
//! version and seed; every JSON document carries the same in `meta`.

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{output_err, CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Meta {
    pub software: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
}

impl Meta {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        Meta {
            software: "rem".into(),
            version: VERSION.into(),
            command: command.into(),
            seed,
        }
    }

    fn comment(&self) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        format!("# {} {} {}; seed={seed}\n", self.software, self.version, self.command)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Document<T> {
    pub meta: Meta,
    pub data: T,
}

/// File-name-safe form of a network id.
pub fn slug(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    s.trim_matches('_').to_string()
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| output_err(dir, e))
}

pub fn write_csv<R, I, S>(path: &Path, meta: &Meta, header: &[&str], rows: R) -> CliResult<()>
where
    R: IntoIterator<Item = I>,
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut buf = meta.comment().into_bytes();
    {
        let mut w = csv::WriterBuilder::new().flexible(false).from_writer(&mut buf);
        w.write_record(header).map_err(|e| output_err(path, e))?;
        for row in rows {
            w.write_record(row).map_err(|e| output_err(path, e))?;
        }
        w.flush().map_err(|e| output_err(path, e))?;
    }
    std::fs::write(path, buf).map_err(|e| output_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, data: &T) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let doc = Document { meta: meta.clone(), data };
    let text = serde_json::to_string_pretty(&doc).map_err(|e| output_err(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| output_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let doc: Document<T> =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(doc.data)
}

pub fn fit_path(fit_dir: &Path, network_id: &str) -> PathBuf {
    fit_dir.join(format!("{}.json", slug(network_id)))
}
