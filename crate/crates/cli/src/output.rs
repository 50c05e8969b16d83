//! All-or-nothing output: files are written to a hidden staging directory
//! inside the output directory and renamed into place only on commit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::TempDir;

use crate::CliError;

pub struct Staging {
    dir: TempDir,
    out_dir: PathBuf,
    names: Vec<String>,
}

impl Staging {
    pub fn new(out_dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(out_dir)?;
        let dir = tempfile::Builder::new().prefix(".staging-").tempdir_in(out_dir)?;
        Ok(Self {
            dir,
            out_dir: out_dir.to_path_buf(),
            names: Vec::new(),
        })
    }

    /// Writes one file through `f`.
    pub fn write<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> helisample::Result<()>,
    {
        let mut w = BufWriter::new(File::create(self.dir.path().join(name))?);
        f(&mut w).map_err(|e| match e {
            helisample::Error::Io(e) => CliError::Io(e),
            e => CliError::Data(format!("{name}: {e}")),
        })?;
        w.flush()?;
        self.names.push(name.to_string());
        Ok(())
    }

    /// Moves every staged file into the output directory.
    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut done = Vec::with_capacity(self.names.len());
        for name in &self.names {
            let dest = self.out_dir.join(name);
            std::fs::rename(self.dir.path().join(name), &dest)?;
            done.push(dest);
        }
        Ok(done)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nothing_lands_without_commit() {
        let root = tempfile::tempdir().unwrap();
        {
            let mut s = Staging::new(root.path()).unwrap();
            s.write("a.txt", |w| Ok(w.write_all(b"x")?)).unwrap();
        }
        assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 0);
        let mut s = Staging::new(root.path()).unwrap();
        s.write("a.txt", |w| Ok(w.write_all(b"x")?)).unwrap();
        s.commit().unwrap();
        let names: Vec<_> = std::fs::read_dir(root.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names, ["a.txt"]);
    }
}
