use std::collections::HashMap;

use rand::seq::SliceRandom;

use crate::encoders::EmbeddingVec;
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

/// A retrieval problem: either one shared pool evaluated leave-one-out
/// (every item queries the remaining items), or an explicit query/gallery
/// split. Labels are opaque class ids; relevance means equal labels.
#[derive(Clone, Debug)]
pub enum RetrievalTask {
    LeaveOneOut { pool: Vec<EmbeddingVec>, labels: Vec<u64> },
    Split {
        queries: Vec<EmbeddingVec>,
        query_labels: Vec<u64>,
        gallery: Vec<EmbeddingVec>,
        gallery_labels: Vec<u64>,
    },
}

impl RetrievalTask {
    pub fn leave_one_out(pool: Vec<EmbeddingVec>, labels: Vec<u64>) -> Result<RetrievalTask> {
        if pool.len() < 2 {
            return Err(Error::input("retrieval", "leave-one-out needs at least 2 items"));
        }
        check_pool("pool", &pool, &labels)?;
        Ok(RetrievalTask::LeaveOneOut { pool, labels })
    }

    pub fn split(
        queries: Vec<EmbeddingVec>,
        query_labels: Vec<u64>,
        gallery: Vec<EmbeddingVec>,
        gallery_labels: Vec<u64>,
    ) -> Result<RetrievalTask> {
        if queries.is_empty() || gallery.is_empty() {
            return Err(Error::input("retrieval", "empty query or gallery set"));
        }
        check_pool("queries", &queries, &query_labels)?;
        check_pool("gallery", &gallery, &gallery_labels)?;
        if queries[0].len() != gallery[0].len() {
            return Err(Error::shape(
                "retrieval",
                format!("query dim {} vs gallery dim {}", queries[0].len(), gallery[0].len()),
            ));
        }
        Ok(RetrievalTask::Split { queries, query_labels, gallery, gallery_labels })
    }

    pub fn n_queries(&self) -> usize {
        match self {
            RetrievalTask::LeaveOneOut { pool, .. } => pool.len(),
            RetrievalTask::Split { queries, .. } => queries.len(),
        }
    }

    pub fn gallery_size(&self) -> usize {
        match self {
            RetrievalTask::LeaveOneOut { pool, .. } => pool.len() - 1,
            RetrievalTask::Split { gallery, .. } => gallery.len(),
        }
    }

    /// Gallery relevance flags for one query, ranked by descending
    /// similarity with ties broken by ascending gallery index.
    fn ranked_relevance(&self, query: usize) -> Vec<bool> {
        let (q, gallery, q_label, g_labels, skip): (
            &EmbeddingVec,
            &[EmbeddingVec],
            u64,
            &[u64],
            Option<usize>,
        ) = match self {
            RetrievalTask::LeaveOneOut { pool, labels } => {
                (&pool[query], pool, labels[query], labels, Some(query))
            }
            RetrievalTask::Split { queries, query_labels, gallery, gallery_labels } => {
                (&queries[query], gallery, query_labels[query], gallery_labels, None)
            }
        };
        let mut ranked: Vec<(usize, f64)> = (0..gallery.len())
            .filter(|&j| Some(j) != skip)
            .map(|j| (j, q.dot(&gallery[j])))
            .collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1).expect("finite similarity").then(a.0.cmp(&b.0))
        });
        ranked.into_iter().map(|(j, _)| g_labels[j] == q_label).collect()
    }
}

fn check_pool(what: &str, embeddings: &[EmbeddingVec], labels: &[u64]) -> Result<()> {
    if embeddings.len() != labels.len() {
        return Err(Error::input(
            "retrieval",
            format!("{what}: {} embeddings vs {} labels", embeddings.len(), labels.len()),
        ));
    }
    if let Some(e) = embeddings.iter().find(|e| e.len() != embeddings[0].len()) {
        return Err(Error::shape(
            "retrieval",
            format!("{what}: mixed dims {} and {}", embeddings[0].len(), e.len()),
        ));
    }
    Ok(())
}

/// AP of one ranked list: mean over relevant positions k (1-based) of
/// precision@k.
pub fn average_precision(ranked_relevance: &[bool]) -> Result<f64> {
    let total = ranked_relevance.iter().filter(|&&r| r).count();
    if total == 0 {
        return Err(Error::input("average_precision", "no relevant item in ranking"));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, &rel) in ranked_relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    Ok(sum / total as f64)
}

/// Outcome of a query-averaged metric: queries without a single positive
/// are skipped, never silently dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryMean {
    pub mean: f64,
    pub per_query: Vec<Option<f64>>,
    pub evaluated: usize,
    pub skipped: usize,
}

fn query_mean(per_query: Vec<Option<f64>>, what: &'static str) -> Result<QueryMean> {
    let scores: Vec<f64> = per_query.iter().filter_map(|s| *s).collect();
    if scores.is_empty() {
        return Err(Error::input(what, "every query was skipped"));
    }
    Ok(QueryMean {
        mean: scores.iter().sum::<f64>() / scores.len() as f64,
        evaluated: scores.len(),
        skipped: per_query.len() - scores.len(),
        per_query,
    })
}

/// Mean average precision over the task's queries.
pub fn mean_ap(task: &RetrievalTask) -> Result<QueryMean> {
    let per_query = (0..task.n_queries())
        .map(|i| {
            let ranked = task.ranked_relevance(i);
            average_precision(&ranked).ok()
        })
        .collect();
    query_mean(per_query, "mean_ap")
}

/// Expected mAP of the label-prior random baseline, estimated by
/// `shuffles` seeded uniform rankings per query. Depends only on the
/// (positives, gallery size) profile, so identical profiles share one
/// estimate.
pub fn random_baseline_map(task: &RetrievalTask, shuffles: usize, seed: u64) -> Result<f64> {
    if shuffles == 0 {
        return Err(Error::input("random_baseline", "need at least one shuffle"));
    }
    let mut cache: HashMap<(usize, usize), f64> = HashMap::new();
    let mut per_query = Vec::with_capacity(task.n_queries());
    for i in 0..task.n_queries() {
        let ranked = task.ranked_relevance(i);
        let positives = ranked.iter().filter(|&&r| r).count();
        if positives == 0 {
            per_query.push(None);
            continue;
        }
        let key = (positives, ranked.len());
        let expected = *cache.entry(key).or_insert_with(|| {
            let mut flags = vec![false; key.1];
            flags[..key.0].fill(true);
            let mut sum = 0.0;
            for m in 0..shuffles {
                let mut rng = rng_for(seed, stream::BASELINE, m as u64);
                flags.shuffle(&mut rng);
                sum += average_precision(&flags).expect("positives present");
            }
            sum / shuffles as f64
        });
        per_query.push(Some(expected));
    }
    Ok(query_mean(per_query, "random_baseline")?.mean)
}

/// Performance rescaled against the random baseline: (p − r)/(1 − r).
pub fn scaled_map(p: f64, r: f64) -> Result<f64> {
    if r >= 1.0 {
        return Err(Error::input("scaled_map", format!("random baseline {r} must be < 1")));
    }
    Ok((p - r) / (1.0 - r))
}

/// Fraction of queries whose top-k gallery contains at least one
/// positive; queries with no positive at all are skipped and counted.
pub fn recall_at_k(task: &RetrievalTask, k: usize) -> Result<QueryMean> {
    if k == 0 {
        return Err(Error::input("recall_at_k", "k must be at least 1"));
    }
    if k > task.gallery_size() {
        return Err(Error::input(
            "recall_at_k",
            format!("k {} exceeds gallery size {}", k, task.gallery_size()),
        ));
    }
    let per_query = (0..task.n_queries())
        .map(|i| {
            let ranked = task.ranked_relevance(i);
            if ranked.iter().any(|&r| r) {
                Some(if ranked[..k].iter().any(|&r| r) { 1.0 } else { 0.0 })
            } else {
                None
            }
        })
        .collect();
    query_mean(per_query, "recall_at_k")
}

/// Ranks with average-rank tie handling, 1-based.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite value"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average-rank ties (Pearson correlation
/// of the rank vectors, which reduces to 1 − 6Σd²/(n(n²−1)) when there
/// are no ties).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::input(
            "spearman",
            format!("length mismatch: {} vs {}", xs.len(), ys.len()),
        ));
    }
    if xs.len() < 2 {
        return Err(Error::input("spearman", "need at least 2 observations"));
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !v.is_finite()) {
        return Err(Error::non_finite(format!("spearman input {v}")));
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(Error::input("spearman", "constant input has undefined rank order"));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    // Rounding can push a perfect correlation a few ulps past ±1.
    Ok((cov / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0))
}
