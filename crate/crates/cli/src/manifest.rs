//! Run manifests: the effective settings plus bookkeeping, in the same
//! `key = value` format as config files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::{read_kv_file, Settings};
use crate::CliError;

pub const FILE_NAME: &str = "manifest.txt";
pub const FORMAT_VERSION: u32 = 1;

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub command: String,
    pub settings: Settings,
    pub started_at: u64,
    pub finished_at: u64,
    /// `(name, path relative to the run directory)`.
    pub artifacts: Vec<(String, String)>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# mcdc run manifest").unwrap();
        writeln!(s, "format_version = {FORMAT_VERSION}").unwrap();
        writeln!(s, "command = {}", self.command).unwrap();
        for (k, v) in self.settings.iter() {
            writeln!(s, "{k} = {v}").unwrap();
        }
        writeln!(s, "started_at_unix = {}", self.started_at).unwrap();
        writeln!(s, "finished_at_unix = {}", self.finished_at).unwrap();
        for (k, v) in &self.artifacts {
            writeln!(s, "artifact.{k} = {v}").unwrap();
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(FILE_NAME);
        fs::write(&path, self.render())
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Settings layer from the manifest beside a checkpoint, if there is one.
pub fn layer_beside(checkpoint: &Path) -> Result<Vec<(String, String)>, CliError> {
    let path = checkpoint
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(FILE_NAME);
    if path.is_file() {
        read_kv_file(&path)
    } else {
        Ok(Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_kv;

    #[test]
    fn render_reads_back() {
        let mut settings = Settings::defaults();
        settings.set("variant", "mcdc");
        let m = Manifest {
            command: "train".into(),
            settings: settings.clone(),
            started_at: 1,
            finished_at: 2,
            artifacts: vec![("checkpoint".into(), "model.ckpt".into())],
        };
        let kv = parse_kv(&m.render(), "manifest").unwrap();
        let mut back = Settings::default();
        back.overlay(&kv, true).unwrap();
        assert_eq!(back.iter().collect::<Vec<_>>(), settings.iter().collect::<Vec<_>>());
        assert!(kv.contains(&("artifact.checkpoint".into(), "model.ckpt".into())));
    }
}
