//! Core of the TAI Scan self-assessment tool.
//!
//! * [`corpus`] parses the AI Act into addressable units.
//! * [`backends`] wraps embedding and generation models.
//! * [`annindex`] is the random-projection forest used for retrieval.
//! * [`prescreen`] is the deterministic pre-screening questionnaire.
//! * [`ragflow`] runs the retrieval-augmented assessment.
//! * [`evalharness`] replays configured scenarios and reports on them.

pub mod corpus;
pub mod backends;
pub mod annindex;
pub mod prescreen;
pub mod ragflow;
pub mod evalharness;
