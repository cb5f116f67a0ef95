//! Evaluation metrics: KL-based label-separation score, paired-document
//! distribution distances and top-word extraction.

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

pub const KL_FLOOR: f64 = 1e-12;

/// Normalize per-document gamma rows into topic proportions.
pub fn proportions_from_gamma(gamma: &[Vec<f64>]) -> Vec<Vec<f64>> {
    gamma
        .iter()
        .map(|row| {
            let sum: f64 = row.iter().sum();
            row.iter().map(|&g| g / sum).collect()
        })
        .collect()
}

/// KL(p || q) with both arguments floored at `floor` and renormalized.
pub fn kl_divergence(p: &[f64], q: &[f64], floor: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Validation(format!(
            "KL length mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let floor_norm = |v: &[f64]| -> Vec<f64> {
        let floored: Vec<f64> = v.iter().map(|&x| x.max(floor)).collect();
        let sum: f64 = floored.iter().sum();
        floored.into_iter().map(|x| x / sum).collect()
    };
    let p = floor_norm(p);
    let q = floor_norm(q);
    let mut kl = 0.0;
    for (pi, qi) in p.iter().zip(&q) {
        kl += pi * (pi / qi).ln();
    }
    Ok(kl.max(0.0))
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Label-separation score over topic proportions: same-class ordered pairs
/// are rewarded for small KL, cross-class pairs for large KL, each sum
/// normalized by its ordered-pair count. Self-pairs are excluded.
pub fn tune_metric_m(props: &[Vec<f64>], labels: &[i64]) -> Result<f64> {
    if props.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} proportion rows but {} labels",
            props.len(),
            labels.len()
        )));
    }
    let n = props.len();
    let mut same_sum = 0.0;
    let mut same_count = 0u64;
    let mut cross_sum = 0.0;
    let mut cross_count = 0u64;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let kl = kl_divergence(&props[i], &props[j], KL_FLOOR)?;
            if labels[i] == labels[j] {
                same_sum += 1.0 - sigmoid(kl);
                same_count += 1;
            } else {
                cross_sum += sigmoid(kl);
                cross_count += 1;
            }
        }
    }
    if cross_count == 0 {
        return Err(Error::Validation(
            "label-separation score needs at least two classes".into(),
        ));
    }
    let mut score = cross_sum / cross_count as f64;
    if same_count > 0 {
        score += same_sum / same_count as f64;
    }
    Ok(score)
}

/// Per-pair distance detail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRow {
    pub doc_a: usize,
    pub doc_b: usize,
    pub l2: f64,
    pub hellinger: f64,
    pub agree_first: bool,
    pub agree_top5: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Mean Euclidean distance between paired proportions.
    pub l2d: f64,
    /// Mean squared-Hellinger-style distance, in [0, 2].
    pub hd: f64,
    /// Fraction of pairs agreeing on the most likely topic.
    pub a1: f64,
    /// Mean overlap of the top-5 topic sets.
    pub a5: f64,
    pub m_score: Option<f64>,
    pub rows: Vec<PairRow>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Indices of the `n` largest entries, descending; ties by lowest index.
fn top_indices(v: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap().then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

/// Distribution distances and topic agreements over paired documents.
pub fn pair_metrics(
    props_a: &[Vec<f64>],
    props_b: &[Vec<f64>],
    pairs: &[(usize, usize)],
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Validation("empty pair list".into()));
    }
    let mut rows = Vec::with_capacity(pairs.len());
    let mut l2_sum = 0.0;
    let mut hd_sum = 0.0;
    let mut a1_sum = 0u64;
    let mut a5_sum = 0u64;
    for &(a, b) in pairs {
        let pa = props_a
            .get(a)
            .ok_or_else(|| Error::Validation(format!("pair references unknown document {a}")))?;
        let pb = props_b
            .get(b)
            .ok_or_else(|| Error::Validation(format!("pair references unknown document {b}")))?;
        if pa.len() != pb.len() {
            return Err(Error::Validation(
                "topic count mismatch across pairs".into(),
            ));
        }
        let k = pa.len();
        let top_n = k.min(5);
        let mut l2 = 0.0;
        let mut hd = 0.0;
        for (&x, &y) in pa.iter().zip(pb) {
            l2 += (x - y) * (x - y);
            let d = x.sqrt() - y.sqrt();
            hd += d * d;
        }
        let l2 = l2.sqrt();
        let agree_first = argmax(pa) == argmax(pb);
        let ta = top_indices(pa, top_n);
        let tb = top_indices(pb, top_n);
        let agree_top5 = ta.iter().filter(|i| tb.contains(i)).count();

        l2_sum += l2;
        hd_sum += hd;
        a1_sum += agree_first as u64;
        a5_sum += agree_top5 as u64;
        rows.push(PairRow {
            doc_a: a,
            doc_b: b,
            l2,
            hellinger: hd,
            agree_first,
            agree_top5,
        });
    }
    let n = pairs.len() as f64;
    Ok(EvalReport {
        l2d: l2_sum / n,
        hd: hd_sum / n,
        a1: a1_sum as f64 / n,
        a5: a5_sum as f64 / n,
        m_score: None,
        rows,
    })
}

/// The `n` highest-probability tokens of one topic, descending; ties by
/// token id.
pub fn top_words<'a>(
    beta: &[Vec<f64>],
    topic: usize,
    n: usize,
    vocab: &'a Vocabulary,
) -> Result<Vec<&'a str>> {
    let row = beta
        .get(topic)
        .ok_or_else(|| Error::Validation(format!("topic index {topic} out of range")))?;
    if n > row.len() {
        return Err(Error::Validation(format!(
            "requested {n} words from a vocabulary of {}",
            row.len()
        )));
    }
    Ok(top_indices(row, n)
        .into_iter()
        .map(|w| vocab.token(w))
        .collect())
}
