use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clinical and expert tremor annotations of one subject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectAnnotation {
    pub subject_id: String,
    pub updrs16: u8,
    /// Left and right hand scores.
    pub updrs20: [u8; 2],
    pub updrs21: [u8; 2],
    pub sp_expert: u8,
}

impl SubjectAnnotation {
    pub fn validate(&self) -> Result<()> {
        let scores = [self.updrs16, self.updrs20[0], self.updrs20[1], self.updrs21[0], self.updrs21[1]];
        if scores.iter().any(|&s| s > 4) {
            return Err(Error::InvalidAnnotation(self.subject_id.clone(), "UPDRS scores must lie in 0..=4".into()));
        }
        if self.sp_expert > 1 {
            return Err(Error::InvalidAnnotation(self.subject_id.clone(), "sp_expert must be 0 or 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationScheme {
    Updrs16,
    Updrs20,
    Updrs21,
    SpExpert,
}

impl AnnotationScheme {
    pub const ALL: [AnnotationScheme; 4] =
        [AnnotationScheme::Updrs16, AnnotationScheme::Updrs20, AnnotationScheme::Updrs21, AnnotationScheme::SpExpert];

    pub fn name(self) -> &'static str {
        match self {
            AnnotationScheme::Updrs16 => "updrs16",
            AnnotationScheme::Updrs20 => "updrs20",
            AnnotationScheme::Updrs21 => "updrs21",
            AnnotationScheme::SpExpert => "sp_expert",
        }
    }
}

impl fmt::Display for AnnotationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnnotationScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AnnotationScheme::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::format("annotation scheme", format!("unknown scheme `{s}`")))
    }
}

/// Binary tremor label under `scheme`: positive when the (summed hand) score
/// is above zero.
pub fn binarize_annotation(ann: &SubjectAnnotation, scheme: AnnotationScheme) -> u8 {
    let positive = match scheme {
        AnnotationScheme::Updrs16 => ann.updrs16 > 0,
        AnnotationScheme::Updrs20 => ann.updrs20[0] as u32 + ann.updrs20[1] as u32 > 0,
        AnnotationScheme::Updrs21 => ann.updrs21[0] as u32 + ann.updrs21[1] as u32 > 0,
        AnnotationScheme::SpExpert => ann.sp_expert == 1,
    };
    positive as u8
}

/// All four binary labels of a subject, in [`AnnotationScheme::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet(pub [u8; 4]);

impl LabelSet {
    pub fn from_annotation(ann: &SubjectAnnotation) -> Self {
        LabelSet(AnnotationScheme::ALL.map(|s| binarize_annotation(ann, s)))
    }

    pub fn get(&self, scheme: AnnotationScheme) -> u8 {
        self.0[scheme as usize]
    }

    pub fn uniform(label: u8) -> Self {
        LabelSet([label; 4])
    }
}
