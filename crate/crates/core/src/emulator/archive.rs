//! Versioned, self-describing JSON archive for trained emulators.
//!
//! Floats are written with shortest round-trip formatting and read back
//! exactly; Cholesky factors are not stored but recomputed on load, which
//! is deterministic, so predictions after a round trip are bitwise equal.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AnovaGpEmulator, SgpEmulator};
use crate::error::{Error, Result};

pub const ARCHIVE_SCHEMA: &str = "anova-gp-emulator";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ArchivedModel {
    AnovaGp(AnovaGpEmulator),
    Sgp(SgpEmulator),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmulatorArchive {
    pub schema: String,
    pub version: u32,
    pub model: ArchivedModel,
}

impl EmulatorArchive {
    pub fn anova_gp(em: AnovaGpEmulator) -> Self {
        Self::wrap(ArchivedModel::AnovaGp(em))
    }

    pub fn sgp(em: SgpEmulator) -> Self {
        Self::wrap(ArchivedModel::Sgp(em))
    }

    fn wrap(model: ArchivedModel) -> Self {
        Self {
            schema: ARCHIVE_SCHEMA.to_string(),
            version: ARCHIVE_VERSION,
            model,
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.model {
            ArchivedModel::AnovaGp(e) => e.input_dim(),
            ArchivedModel::Sgp(e) => e.input_dim(),
        }
    }

    pub fn predict_mean(&self, xi: &[f64]) -> Result<Vec<f64>> {
        match &self.model {
            ArchivedModel::AnovaGp(e) => e.predict_mean(xi),
            ArchivedModel::Sgp(e) => e.predict_mean(xi),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        // Peek at the header first so a schema mismatch is reported as such
        // rather than as a missing-field error deep inside the model.
        #[derive(Deserialize)]
        struct Header {
            schema: String,
            version: u32,
        }
        let header: Header = serde_json::from_str(s)
            .map_err(|e| Error::Archive(format!("not an emulator archive: {e}")))?;
        if header.schema != ARCHIVE_SCHEMA {
            return Err(Error::Archive(format!("unknown schema '{}'", header.schema)));
        }
        if header.version != ARCHIVE_VERSION {
            return Err(Error::Archive(format!(
                "unsupported archive version {} (expected {ARCHIVE_VERSION})",
                header.version
            )));
        }
        let archive: Self = serde_json::from_str(s).map_err(|e| Error::Archive(e.to_string()))?;
        match &archive.model {
            ArchivedModel::AnovaGp(e) => e.check()?,
            ArchivedModel::Sgp(e) => e.check()?,
        }
        Ok(archive)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_foreign_documents() {
        assert!(matches!(EmulatorArchive::from_json("{}"), Err(Error::Archive(_))));
        let wrong = r#"{"schema":"other","version":1,"model":{}}"#;
        assert!(matches!(EmulatorArchive::from_json(wrong), Err(Error::Archive(_))));
        let future = format!(r#"{{"schema":"{ARCHIVE_SCHEMA}","version":99,"model":{{}}}}"#);
        assert!(matches!(EmulatorArchive::from_json(&future), Err(Error::Archive(m)) if m.contains("99")));
    }
}
