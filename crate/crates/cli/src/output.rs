use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;

/// Twelve significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.11e}")
}

/// Artifact directory plus progress logging.
pub struct Output {
    dir: PathBuf,
    quiet: bool,
}

impl Output {
    pub fn new(dir: &Path, quiet: bool) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), quiet })
    }

    pub fn progress(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// Writes `name` in the artifact directory through a temporary file and
    /// a rename.
    pub fn write(&self, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)
            .with_context(|| format!("cannot create temporary file in {}", self.dir.display()))?;
        tmp.write_all(contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).with_context(|| format!("cannot write {}", path.display()))?;
        self.progress(format!("wrote {}", path.display()));
        Ok(path)
    }
}

/// CSV text: header row then one row per record.
pub fn csv(header: &str, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::from(header);
    out.push_str(&columns.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(num(1.0), "1.00000000000e0");
        assert_eq!(num(-0.125), "-1.25000000000e-1");
        assert_eq!(num(1.0 / 3.0), "3.33333333333e-1");
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let out = Output::new(dir.path(), true).unwrap();
        out.write("a.txt", "one").unwrap();
        let p = out.write("a.txt", "two").unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
