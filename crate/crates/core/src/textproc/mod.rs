//! ASR transcript handling: edit distances, DBSCAN clustering of
//! transcripts and reference-sequence extraction.

mod dbscan;
mod distance;
mod io;
mod provider;
mod reference;

pub use dbscan::{dbscan, dbscan_matrix, distance_matrix, NOISE};
pub use distance::{levenshtein, normalized_levenshtein};
pub use io::{read_references, read_transcripts, write_references};
pub use provider::{FileProvider, PhonemeProvider, SyntheticProvider};
pub use reference::{
    cluster_transcripts, extract_references, medoid, ReferenceAssignment, TranscriptRecord,
};

/// A phoneme sequence; each symbol is one phoneme token.
pub type Phonemes = Vec<String>;

/// Split a space-separated phoneme string.
pub fn parse_phonemes(s: &str) -> Phonemes {
    s.split_whitespace().map(str::to_string).collect()
}

pub fn format_phonemes(p: &[String]) -> String {
    p.join(" ")
}

/// Default clustering radius (normalized edit distance).
pub const DEFAULT_EPS: f64 = 0.3;
pub const DEFAULT_MIN_PTS: usize = 2;
