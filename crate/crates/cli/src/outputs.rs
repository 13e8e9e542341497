use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Files written by one command. Unless [`Outputs::commit`] is called, every
/// file (and the output directory, if this command created it) is removed on
/// drop, so a failed command leaves nothing half-written behind.
pub struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            created_dir: false,
            files: Vec::new(),
            committed: false,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        if !self.dir.exists() {
            fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
            self.created_dir = true;
        }
        let path = self.path(name);
        self.files.push(path.clone());
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Input(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.files)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if self.created_dir {
            // only succeeds when empty
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uncommitted_outputs_are_removed() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        {
            let mut out = Outputs::new(&dir);
            out.write("a.txt", "x").unwrap();
            assert!(dir.join("a.txt").exists());
        }
        assert!(!dir.exists());

        let mut out = Outputs::new(&dir);
        out.write("b.txt", "y").unwrap();
        assert_eq!(out.commit().len(), 1);
        assert!(dir.join("b.txt").exists());
    }
}
