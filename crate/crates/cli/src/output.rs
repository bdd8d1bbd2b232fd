//! Output files stamped with the configuration hash and seed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_sha256: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: &'a T,
}

/// Output directory with provenance attached to every file written.
#[derive(Debug, Clone)]
pub struct OutDir {
    pub dir: PathBuf,
    pub provenance: Provenance,
}

impl OutDir {
    pub fn create(dir: &Path, provenance: Provenance) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            provenance,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Open `name` for CSV output, header comment already written.
    pub fn csv(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        writeln!(
            w,
            "# config_sha256={}, seed={}",
            self.provenance.config_sha256, self.provenance.seed
        )?;
        Ok(w)
    }

    /// Pretty JSON object holding `config_sha256`, `seed` and the fields of `body`.
    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<(), CliError> {
        let stamped = Stamped {
            config_sha256: &self.provenance.config_sha256,
            seed: self.provenance.seed,
            body,
        };
        let mut text = serde_json::to_string_pretty(&stamped).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

/// Write one CSV row of display-formatted values.
pub fn row<W: Write>(w: &mut W, fields: &[String]) -> Result<(), CliError> {
    writeln!(w, "{}", fields.join(","))?;
    Ok(())
}
