use alloc::vec::Vec;

use super::{GlobalDescriptor, RetrievalError};

/// A database entry and its cosine similarity to the query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ranked {
    pub index: usize,
    pub similarity: f64,
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Top-`top_n` database entries by descending cosine similarity; ties go to
/// the lower database index. Returns fewer entries when the database is small.
pub fn rank_candidates(
    query: &GlobalDescriptor,
    db: &[GlobalDescriptor],
    top_n: usize,
) -> Result<Vec<Ranked>, RetrievalError> {
    let mut scored = Vec::with_capacity(db.len());
    for (index, d) in db.iter().enumerate() {
        if d.dim() != query.dim() {
            return Err(RetrievalError::DimensionMismatch {
                expected: query.dim(),
                found: d.dim(),
            });
        }
        scored.push(Ranked {
            index,
            similarity: cosine_similarity(query.as_slice(), d.as_slice()),
        });
    }
    scored.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.index.cmp(&b.index))
    });
    scored.truncate(top_n);
    Ok(scored)
}
