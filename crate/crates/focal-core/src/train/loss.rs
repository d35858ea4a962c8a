use crate::encoders::EmbeddingVec;
use crate::error::{Error, Result};

/// Dense query × target cosine matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// All pairwise cosines between unit-norm queries and targets.
pub fn similarity_matrix(
    queries: &[EmbeddingVec],
    targets: &[EmbeddingVec],
) -> Result<SimilarityMatrix> {
    if queries.is_empty() || targets.is_empty() {
        return Err(Error::input("similarity", "empty query or target set"));
    }
    let dim = queries[0].len();
    for (what, set) in [("query", queries), ("target", targets)] {
        if let Some(bad) = set.iter().find(|e| e.len() != dim) {
            return Err(Error::shape(
                "similarity",
                format!("{} of dim {} in a set of dim {}", what, bad.len(), dim),
            ));
        }
    }
    let mut data = Vec::with_capacity(queries.len() * targets.len());
    for q in queries {
        for t in targets {
            data.push(q.dot(t));
        }
    }
    Ok(SimilarityMatrix { rows: queries.len(), cols: targets.len(), data })
}

/// Diagonal-label cross entropy over a square similarity matrix at the
/// given temperature: the mean over rows of `lse(row/τ) − s_ii/τ`.
pub fn contrastive_loss(sim: &SimilarityMatrix, temperature: f64) -> Result<f64> {
    if sim.rows != sim.cols {
        return Err(Error::shape(
            "contrastive_loss",
            format!("{}x{} matrix is not square", sim.rows, sim.cols),
        ));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::input(
            "contrastive_loss",
            format!("temperature {temperature} must be > 0"),
        ));
    }
    let mut total = 0.0;
    for i in 0..sim.rows {
        let row = sim.row(i);
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx / temperature
            + row.iter().map(|&s| ((s - mx) / temperature).exp()).sum::<f64>().ln();
        total += lse - sim.at(i, i) / temperature;
    }
    let loss = total / sim.rows as f64;
    if !loss.is_finite() {
        return Err(Error::non_finite("contrastive loss"));
    }
    Ok(loss)
}
