//! Session files, quality rules and subject annotations.

mod annotation;
mod manifest;
mod session;

pub use annotation::{binarize_annotation, AnnotationScheme, LabelSet, SubjectAnnotation};
pub use manifest::{load_manifest, parse_manifest, ManifestEntry, SessionRef};
pub use session::{
    estimate_sampling_rate, missing_fraction, parse_session_csv, validate_session, write_session_csv, RawSession,
    RejectionReason, RejectionReport, Verdict, MAX_ABS_ACCEL, MIN_DURATION_S, MIN_RATE_HZ, MISSING_MAX,
};
