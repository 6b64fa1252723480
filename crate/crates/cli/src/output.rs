//! Output directory handling. Every artifact is written through
//! [`OutputDir::path`], which refuses paths that would leave the directory.

use std::fs;
use std::io::{self, Write};
use std::path::{Component, Path, PathBuf};

/// Environment variable naming the default output root.
pub const OUTPUT_ENV: &str = "AOBSTACLE_OUT";
/// Output root when neither `--out` nor the environment variable is set.
pub const DEFAULT_ROOT: &str = "runs";

/// Accepts non-empty relative paths made of plain components.
pub fn check_relative(p: &str) -> Result<(), String> {
    let path = Path::new(p);
    if p.is_empty() {
        return Err("path is empty".into());
    }
    if path
        .components()
        .any(|c| !matches!(c, Component::Normal(_) | Component::CurDir))
    {
        return Err(format!("'{p}' must be a relative path without '..'"));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// `rel` inside the directory, with parent directories created.
    pub fn path(&self, rel: &str) -> io::Result<PathBuf> {
        check_relative(rel).map_err(|m| io::Error::new(io::ErrorKind::InvalidInput, m))?;
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    pub fn subdir(&self, rel: &str) -> io::Result<OutputDir> {
        OutputDir::create(self.path(rel)?)
    }

    pub fn writer(&self, rel: &str) -> io::Result<io::BufWriter<fs::File>> {
        Ok(io::BufWriter::new(fs::File::create(self.path(rel)?)?))
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> io::Result<()> {
        let mut w = self.writer(rel)?;
        w.write_all(bytes)?;
        w.flush()
    }

    /// RFC 4180 table with a header row.
    pub fn write_table(&self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(self.writer(rel)?);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()
    }
}

/// Output directory for a run: `--out` when given, otherwise `name` under the
/// root from [`OUTPUT_ENV`] or [`DEFAULT_ROOT`].
pub fn resolve(out: Option<&Path>, env_root: Option<&Path>, name: &str) -> PathBuf {
    match out {
        Some(p) => p.to_path_buf(),
        None => env_root.unwrap_or(Path::new(DEFAULT_ROOT)).join(name),
    }
}

/// Shortest round-trip form of a float, for CSV cells.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_are_confined() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path().join("run")).unwrap();
        assert!(out.path("fields/u.csv").unwrap().starts_with(out.root()));
        for bad in ["../x", "/etc/x", "a/../../x", ""] {
            assert!(out.path(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn output_resolution() {
        let p = resolve(None, None, "exp");
        assert_eq!(p, Path::new("runs/exp"));
        assert_eq!(
            resolve(None, Some(Path::new("/tmp/r")), "exp"),
            Path::new("/tmp/r/exp")
        );
        assert_eq!(
            resolve(Some(Path::new("o")), Some(Path::new("/tmp/r")), "exp"),
            Path::new("o")
        );
    }

    #[test]
    fn tables_are_rfc4180() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path()).unwrap();
        out.write_table("t.csv", &["a", "b"], &[vec!["1".into(), "x,y".into()]])
            .unwrap();
        let text = fs::read_to_string(out.path("t.csv").unwrap()).unwrap();
        assert_eq!(text, "a,b\n1,\"x,y\"\n");
    }
}
