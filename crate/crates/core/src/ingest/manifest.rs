use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

use super::SubjectAnnotation;

/// A session listed in a manifest: its id (the path as written) and the
/// resolved file location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRef {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub annotation: SubjectAnnotation,
    pub sessions: Vec<SessionRef>,
}

#[derive(Deserialize)]
struct RawManifest {
    #[serde(default)]
    subjects: Vec<RawSubject>,
}

#[derive(Deserialize)]
struct RawSubject {
    id: String,
    updrs16: Option<u8>,
    updrs20: Option<[u8; 2]>,
    updrs21: Option<[u8; 2]>,
    sp_expert: Option<u8>,
    #[serde(default)]
    sessions: Vec<String>,
}

/// Parses manifest JSON; relative session paths resolve against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let raw: RawManifest = serde_json::from_str(text).map_err(|e| Error::format("manifest", e.to_string()))?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(raw.subjects.len());
    for s in raw.subjects {
        if !seen.insert(s.id.clone()) {
            return Err(Error::DuplicateSubject(s.id));
        }
        let missing = |field| Error::UnannotatedSubject(s.id.clone(), field);
        let annotation = SubjectAnnotation {
            subject_id: s.id.clone(),
            updrs16: s.updrs16.ok_or_else(|| missing("updrs16"))?,
            updrs20: s.updrs20.ok_or_else(|| missing("updrs20"))?,
            updrs21: s.updrs21.ok_or_else(|| missing("updrs21"))?,
            sp_expert: s.sp_expert.ok_or_else(|| missing("sp_expert"))?,
        };
        annotation.validate()?;
        let sessions = s.sessions.into_iter().map(|id| SessionRef { path: base.join(&id), id }).collect();
        out.push(ManifestEntry { annotation, sessions });
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}
