//! Artifact collection and atomic writing.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};

/// Files produced by a subcommand, written only after the computation
/// finishes so that a crash never leaves a partial set behind.
#[derive(Debug, Default)]
pub struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    pub fn add(&mut self, name: impl Into<String>, content: impl Into<String>) {
        self.files.push((name.into(), content.into()));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    /// Writes every file through a temporary in the target directory and
    /// an atomic rename.
    pub fn write_all(&self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CliError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, content) in &self.files {
            let target = dir.join(name);
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io(dir))?;
            tmp.write_all(content.as_bytes()).map_err(io(&target))?;
            tmp.as_file().sync_all().map_err(io(&target))?;
            tmp.persist(&target).map_err(|e| CliError::Io {
                path: target.clone(),
                source: e.error,
            })?;
            written.push(target);
        }
        Ok(written)
    }
}

/// `key = value` lines.
#[derive(Debug, Default)]
pub struct KeyValues {
    text: String,
}

impl KeyValues {
    pub fn put(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        self.text.push_str(key);
        self.text.push_str(" = ");
        self.text.push_str(&value.to_string());
        self.text.push('\n');
        self
    }

    pub fn raw(&mut self, text: &str) -> &mut Self {
        self.text.push_str(text);
        if !text.is_empty() && !text.ends_with('\n') {
            self.text.push('\n');
        }
        self
    }

    pub fn finish(&self) -> String {
        self.text.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_replace_existing_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = Artifacts::default();
        a.add("x.txt", "one");
        a.write_all(dir.path()).unwrap();
        let mut b = Artifacts::default();
        b.add("x.txt", "two");
        b.write_all(dir.path()).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("x.txt")).unwrap(), "two");
        // no temporaries left behind
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
