//! Sparse symmetric word-similarity graphs.
//!
//! Edges carry nonnegative weights; self-loops and zero weights are never
//! stored. Both the regularization loss and the neighbor-smoothing update
//! consume the adjacency lists built here.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WordGraph {
    n_words: usize,
    /// Unordered edges stored once with i < j, sorted by (i, j).
    edges: Vec<(usize, usize, f64)>,
    /// Per word: (neighbor, weight), sorted by neighbor id.
    adj: Vec<Vec<(usize, f64)>>,
    /// Per word: sum of incident weights.
    degree: Vec<f64>,
}

impl WordGraph {
    pub fn empty(n_words: usize) -> Self {
        WordGraph {
            n_words,
            edges: Vec::new(),
            adj: vec![Vec::new(); n_words],
            degree: vec![0.0; n_words],
        }
    }

    pub fn n_words(&self) -> usize {
        self.n_words
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Each unordered edge once, as (i, j, weight) with i < j.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn neighbors(&self, w: usize) -> &[(usize, f64)] {
        &self.adj[w]
    }

    pub fn degree(&self, w: usize) -> f64 {
        self.degree[w]
    }

    pub fn weight(&self, a: usize, b: usize) -> f64 {
        self.adj[a]
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, w)| w)
            .unwrap_or(0.0)
    }

    /// Symmetry, nonnegativity, degree-cache consistency.
    pub fn validate(&self) -> Result<()> {
        for &(a, b, w) in &self.edges {
            if a >= b || b >= self.n_words {
                return Err(Error::Validation(format!("bad edge ({a}, {b})")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Validation(format!(
                    "edge ({a}, {b}) has non-positive weight {w}"
                )));
            }
            if self.weight(a, b) != w || self.weight(b, a) != w {
                return Err(Error::Validation(format!(
                    "adjacency out of sync for edge ({a}, {b})"
                )));
            }
        }
        for w in 0..self.n_words {
            let sum: f64 = self.adj[w].iter().map(|&(_, k)| k).sum();
            if (sum - self.degree[w]).abs() > 1e-9 * (1.0 + sum.abs()) {
                return Err(Error::Validation(format!("stale degree cache at word {w}")));
            }
        }
        Ok(())
    }
}

/// Accumulates edges, then freezes them into a `WordGraph`.
#[derive(Debug, Clone)]
pub struct WordGraphBuilder {
    n_words: usize,
    edges: BTreeMap<(usize, usize), f64>,
}

impl WordGraphBuilder {
    pub fn new(n_words: usize) -> Self {
        WordGraphBuilder {
            n_words,
            edges: BTreeMap::new(),
        }
    }

    /// Insert a symmetric edge. Self-loops and zero weights are dropped;
    /// duplicates keep the maximum weight.
    pub fn add_edge(&mut self, a: usize, b: usize, weight: f64) -> Result<()> {
        if a >= self.n_words || b >= self.n_words {
            return Err(Error::Validation(format!(
                "edge ({a}, {b}) out of range (V = {})",
                self.n_words
            )));
        }
        if !weight.is_finite() || weight < 0.0 {
            return Err(Error::Validation(format!(
                "edge ({a}, {b}) has invalid weight {weight}"
            )));
        }
        if a == b || weight == 0.0 {
            return Ok(());
        }
        let key = (a.min(b), a.max(b));
        let slot = self.edges.entry(key).or_insert(0.0);
        if weight > *slot {
            *slot = weight;
        }
        Ok(())
    }

    pub fn build(self) -> WordGraph {
        let mut adj = vec![Vec::new(); self.n_words];
        let mut degree = vec![0.0; self.n_words];
        let mut edges = Vec::with_capacity(self.edges.len());
        for (&(a, b), &w) in &self.edges {
            edges.push((a, b, w));
            adj[a].push((b, w));
            adj[b].push((a, w));
            degree[a] += w;
            degree[b] += w;
        }
        for list in &mut adj {
            list.sort_unstable_by_key(|&(n, _)| n);
        }
        WordGraph {
            n_words: self.n_words,
            edges,
            adj,
            degree,
        }
    }
}

/// Load an edge list: `token1<TAB>token2<TAB>weight` per line.
pub fn load_graph(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<WordGraph> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut builder = WordGraphBuilder::new(vocab.len());
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (t1, t2, w) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), Some(w)) => (a.trim(), b.trim(), w.trim()),
            _ => {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    "expected `token1<TAB>token2<TAB>weight`",
                ))
            }
        };
        let a = vocab.id(t1).ok_or_else(|| {
            Error::Validation(format!(
                "{}:{}: unknown token '{t1}'",
                path.display(),
                lineno + 1
            ))
        })?;
        let b = vocab.id(t2).ok_or_else(|| {
            Error::Validation(format!(
                "{}:{}: unknown token '{t2}'",
                path.display(),
                lineno + 1
            ))
        })?;
        let weight: f64 = w
            .parse()
            .map_err(|_| Error::parse(path, lineno + 1, format!("bad weight '{w}'")))?;
        if weight < 0.0 {
            return Err(Error::Validation(format!(
                "{}:{}: negative weight {weight}",
                path.display(),
                lineno + 1
            )));
        }
        builder.add_edge(a, b, weight)?;
    }
    Ok(builder.build())
}

/// Load a bilingual dictionary: `source<TAB>target` per line.
pub fn load_dictionary(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut pairs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next()) {
            (Some(a), Some(b)) if !a.trim().is_empty() && !b.trim().is_empty() => {
                pairs.push((a.trim().to_string(), b.trim().to_string()));
            }
            _ => {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    "expected `source<TAB>target`",
                ))
            }
        }
    }
    Ok(pairs)
}

/// Build unit-weight edges from dictionary pairs. Pairs with either token
/// missing from the vocabulary are skipped; the skip count is returned.
pub fn build_dictionary_graph(
    dict_pairs: &[(String, String)],
    vocab: &Vocabulary,
) -> Result<(WordGraph, usize)> {
    let mut builder = WordGraphBuilder::new(vocab.len());
    let mut skipped = 0;
    for (src, tgt) in dict_pairs {
        match (vocab.id(src), vocab.id(tgt)) {
            (Some(a), Some(b)) => builder.add_edge(a, b, 1.0)?,
            _ => skipped += 1,
        }
    }
    Ok((builder.build(), skipped))
}

/// Keep only edges whose endpoints carry different language tags.
pub fn restrict_cross_lingual(graph: &WordGraph, vocab: &Vocabulary) -> Result<WordGraph> {
    if !vocab.has_langs() {
        return Err(Error::Validation(
            "vocabulary carries no language tags".into(),
        ));
    }
    if graph.n_words() != vocab.len() {
        return Err(Error::Validation(format!(
            "graph over {} words, vocabulary has {}",
            graph.n_words(),
            vocab.len()
        )));
    }
    let mut builder = WordGraphBuilder::new(graph.n_words());
    for &(a, b, w) in graph.edges() {
        if vocab.lang(a) != vocab.lang(b) {
            builder.add_edge(a, b, w)?;
        }
    }
    Ok(builder.build())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn vocab(tokens: &[&str]) -> Vocabulary {
        Vocabulary::from_tokens(tokens.iter().copied()).unwrap()
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_symmetrizes() {
        let v = vocab(&["good", "great"]);
        let f = write_temp("good\tgreat\t0.8\n");
        let g = load_graph(f.path(), &v).unwrap();
        assert_eq!(g.weight(0, 1), 0.8);
        assert_eq!(g.weight(1, 0), 0.8);
        g.validate().unwrap();
    }

    #[test]
    fn duplicate_edges_keep_max() {
        let v = vocab(&["a", "b"]);
        let f = write_temp("a\tb\t0.3\nb\ta\t0.5\n");
        let g = load_graph(f.path(), &v).unwrap();
        assert_eq!(g.weight(0, 1), 0.5);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn empty_file_gives_empty_graph() {
        let v = vocab(&["a", "b"]);
        let f = write_temp("");
        let g = load_graph(f.path(), &v).unwrap();
        assert!(g.is_empty());
    }

    #[test]
    fn unknown_token_is_an_error() {
        let v = vocab(&["a"]);
        let f = write_temp("a\tzzz\t1.0\n");
        let err = load_graph(f.path(), &v).unwrap_err();
        assert!(err.to_string().contains("zzz"));
    }

    #[test]
    fn negative_weight_is_an_error() {
        let v = vocab(&["a", "b"]);
        let f = write_temp("a\tb\t-0.1\n");
        assert!(load_graph(f.path(), &v).is_err());
    }

    #[test]
    fn self_loops_and_zero_weights_are_dropped() {
        let mut b = WordGraphBuilder::new(3);
        b.add_edge(1, 1, 5.0).unwrap();
        b.add_edge(0, 2, 0.0).unwrap();
        b.add_edge(0, 1, 2.0).unwrap();
        let g = b.build();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.degree(0), 2.0);
        assert_eq!(g.degree(2), 0.0);
    }

    #[test]
    fn dictionary_graph_unit_edges_and_skips() {
        let v = vocab(&["messi", "梅西", "china", "中国"]);
        let pairs = vec![
            ("messi".to_string(), "梅西".to_string()),
            ("china".to_string(), "中国".to_string()),
            ("china".to_string(), "missing".to_string()),
        ];
        let (g, skipped) = build_dictionary_graph(&pairs, &v).unwrap();
        assert_eq!(skipped, 1);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.weight(0, 1), 1.0);
        assert!(g.edges().iter().all(|&(_, _, w)| w == 1.0));
    }

    #[test]
    fn many_to_many_mapping_keeps_all_pairs() {
        let v = vocab(&["bank", "银行", "岸"]);
        let pairs = vec![
            ("bank".to_string(), "银行".to_string()),
            ("bank".to_string(), "岸".to_string()),
        ];
        let (g, skipped) = build_dictionary_graph(&pairs, &v).unwrap();
        assert_eq!(skipped, 0);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.degree(0), 2.0);
    }

    #[test]
    fn cross_lingual_restriction() {
        let mut v = vocab(&["good", "great", "china", "中国"]);
        v.set_langs(vec!["en".into(), "en".into(), "en".into(), "zh".into()])
            .unwrap();
        let mut b = WordGraphBuilder::new(4);
        b.add_edge(0, 1, 0.9).unwrap(); // en-en, removed
        b.add_edge(2, 3, 1.0).unwrap(); // en-zh, retained
        let g = b.build();
        let r = restrict_cross_lingual(&g, &v).unwrap();
        assert_eq!(r.edge_count(), 1);
        assert_eq!(r.weight(2, 3), 1.0);
        assert_eq!(r.weight(0, 1), 0.0);
        // Restriction of an already cross-lingual graph is the identity.
        let rr = restrict_cross_lingual(&r, &v).unwrap();
        assert_eq!(rr, r);
    }

    #[test]
    fn restriction_requires_language_tags() {
        let v = vocab(&["a", "b"]);
        let g = WordGraph::empty(2);
        assert!(restrict_cross_lingual(&g, &v).is_err());
    }
}
