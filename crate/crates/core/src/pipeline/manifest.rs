use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub uuid: String,
    pub path: PathBuf,
    /// 1 = positive.
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold: Option<usize>,
}

/// CSV manifest with header `uuid,path,label[,fold]`. Relative paths are
/// resolved against the manifest's directory on load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
}

impl DatasetManifest {
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self, PipelineError> {
        let m = Self { rows };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), PipelineError> {
        let mut seen = HashSet::new();
        for r in &self.rows {
            if !seen.insert(r.uuid.as_str()) {
                return Err(PipelineError::DuplicateUuid(r.uuid.clone()));
            }
            if r.label > 1 {
                return Err(PipelineError::InvalidLabel(format!("{}: label {}", r.uuid, r.label)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| PipelineError::Manifest(e.to_string()))?.clone();
        let names: Vec<&str> = headers.iter().collect();
        if names != ["uuid", "path", "label"] && names != ["uuid", "path", "label", "fold"] {
            return Err(PipelineError::Manifest(format!(
                "header must be uuid,path,label[,fold], got {}",
                names.join(",")
            )));
        }
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<ManifestRow>() {
            let mut row = rec.map_err(|e| PipelineError::Manifest(e.to_string()))?;
            if row.path.is_relative() {
                row.path = base.join(&row.path);
            }
            rows.push(row);
        }
        Self::new(rows)
    }

    /// Reads the manifest and checks that every audio path exists.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let m = Self::parse(&text, base)?;
        for r in &m.rows {
            if !r.path.is_file() {
                return Err(PipelineError::Manifest(format!(
                    "{}: audio file {} not found",
                    r.uuid,
                    r.path.display()
                )));
            }
        }
        Ok(m)
    }

    /// Writes the manifest with paths relative to `path`'s directory when
    /// possible.
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let base = path.parent().unwrap_or(Path::new(""));
        let mut w = csv::Writer::from_writer(Vec::new());
        let with_fold = self.rows.iter().any(|r| r.fold.is_some());
        let io = |e: csv::Error| PipelineError::Io(e.to_string());
        if with_fold {
            w.write_record(["uuid", "path", "label", "fold"]).map_err(io)?;
        } else {
            w.write_record(["uuid", "path", "label"]).map_err(io)?;
        }
        for r in &self.rows {
            let p = r.path.strip_prefix(base).unwrap_or(&r.path);
            let mut rec = vec![r.uuid.clone(), p.display().to_string(), r.label.to_string()];
            if with_fold {
                rec.push(r.fold.map(|f| f.to_string()).unwrap_or_default());
            }
            w.write_record(&rec).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| PipelineError::Io(e.to_string()))?;
        std::fs::write(path, bytes).map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
    }
}
