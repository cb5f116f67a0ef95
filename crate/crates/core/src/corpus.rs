//! Sparse bag-of-words corpora and their vocabulary.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// A default English stopword list shipped with the engine. Callers may
/// supply their own list instead (one token per line).
pub const DEFAULT_STOPWORDS: &str = include_str!("stopwords_en.txt");

/// Dense token <-> id mapping, optionally carrying a language tag per token.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    langs: Option<Vec<String>>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self::new();
        for t in tokens {
            let t = t.into();
            if vocab.index.contains_key(&t) {
                return Err(Error::Validation(format!("duplicate token '{t}'")));
            }
            vocab.intern(&t);
        }
        Ok(vocab)
    }

    /// Id of `token`, inserting it if absent.
    pub fn intern(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Attach one language tag per token, in id order.
    pub fn set_langs(&mut self, langs: Vec<String>) -> Result<()> {
        if langs.len() != self.tokens.len() {
            return Err(Error::Validation(format!(
                "language tags: got {} tags for {} tokens",
                langs.len(),
                self.tokens.len()
            )));
        }
        self.langs = Some(langs);
        Ok(())
    }

    /// Attach language tags from a `token<TAB>lang` file. Every vocabulary
    /// token must be covered.
    pub fn set_langs_from_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut map: HashMap<String, String> = HashMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next()) {
                (Some(tok), Some(lang)) => {
                    map.insert(tok.to_string(), lang.to_string());
                }
                _ => {
                    return Err(Error::parse(path, lineno + 1, "expected `token<TAB>lang`"));
                }
            }
        }
        let mut langs = Vec::with_capacity(self.tokens.len());
        for tok in &self.tokens {
            match map.get(tok) {
                Some(lang) => langs.push(lang.clone()),
                None => {
                    return Err(Error::Validation(format!(
                        "token '{tok}' has no language tag in {}",
                        path.display()
                    )))
                }
            }
        }
        self.langs = Some(langs);
        Ok(())
    }

    pub fn lang(&self, id: usize) -> Option<&str> {
        self.langs.as_ref().map(|l| l[id].as_str())
    }

    pub fn has_langs(&self) -> bool {
        self.langs.is_some()
    }

    pub fn langs(&self) -> Option<&[String]> {
        self.langs.as_deref()
    }
}

/// One document: sparse (word id, count) pairs plus optional annotations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    pub words: Vec<(usize, u32)>,
    pub label: Option<i64>,
    pub pair: Option<i64>,
}

impl Document {
    /// Total token count N_d.
    pub fn token_total(&self) -> u64 {
        self.words.iter().map(|&(_, c)| c as u64).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub docs: Vec<Document>,
}

impl Corpus {
    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn n_words(&self) -> usize {
        self.vocab.len()
    }

    /// Shape checks: ids in range, counts >= 1, nonempty docs.
    pub fn validate(&self) -> Result<()> {
        let v = self.vocab.len();
        for (d, doc) in self.docs.iter().enumerate() {
            if doc.words.is_empty() {
                return Err(Error::Validation(format!("document {d} is empty")));
            }
            for &(w, c) in &doc.words {
                if w >= v {
                    return Err(Error::Validation(format!(
                        "document {d}: word id {w} out of range (V = {v})"
                    )));
                }
                if c == 0 {
                    return Err(Error::Validation(format!(
                        "document {d}: zero count for word id {w}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// Header `M V`, then one line per document of `wordId:count` pairs,
    /// optionally followed by `#label=<int>` and `#pair=<int>`.
    Bow,
    /// One document per line, whitespace-separated tokens.
    TokenLines,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bow" => Ok(CorpusFormat::Bow),
            "token-lines" => Ok(CorpusFormat::TokenLines),
            other => Err(Error::Config(format!(
                "unknown corpus format '{other}' (expected bow or token-lines)"
            ))),
        }
    }
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Corpus> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    match format {
        CorpusFormat::Bow => parse_bow(path, reader),
        CorpusFormat::TokenLines => parse_token_lines(path, reader),
    }
}

fn parse_bow(path: &Path, reader: impl BufRead) -> Result<Corpus> {
    let mut lines = reader.lines().enumerate();
    let (m, v) =
        loop {
            match lines.next() {
                Some((lineno, line)) => {
                    let line = line?;
                    let line = line.trim();
                    if line.is_empty() {
                        continue;
                    }
                    let mut parts = line.split_whitespace();
                    let m: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| {
                        Error::parse(path, lineno + 1, "bad header, expected `M V`")
                    })?;
                    let v: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| {
                        Error::parse(path, lineno + 1, "bad header, expected `M V`")
                    })?;
                    if parts.next().is_some() {
                        return Err(Error::parse(path, lineno + 1, "bad header, expected `M V`"));
                    }
                    break (m, v);
                }
                None => return Err(Error::Validation("no documents".into())),
            }
        };
    if m == 0 {
        return Err(Error::Validation("no documents".into()));
    }

    let mut docs = Vec::with_capacity(m);
    for (lineno, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut doc = Document::default();
        let mut counts: HashMap<usize, u32> = HashMap::new();
        for field in line.split_whitespace() {
            if let Some(rest) = field.strip_prefix("#label=") {
                doc.label =
                    Some(rest.parse().map_err(|_| {
                        Error::parse(path, lineno + 1, format!("bad label '{rest}'"))
                    })?);
                continue;
            }
            if let Some(rest) = field.strip_prefix("#pair=") {
                doc.pair = Some(rest.parse().map_err(|_| {
                    Error::parse(path, lineno + 1, format!("bad pair id '{rest}'"))
                })?);
                continue;
            }
            let (id_str, count_str) = field.split_once(':').ok_or_else(|| {
                Error::parse(
                    path,
                    lineno + 1,
                    format!("bad entry '{field}', expected id:count"),
                )
            })?;
            let id: usize = id_str
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, format!("bad word id '{id_str}'")))?;
            let count: u32 = count_str
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, format!("bad count '{count_str}'")))?;
            if id >= v {
                return Err(Error::Validation(format!(
                    "{}:{}: word id {id} out of range (V = {v})",
                    path.display(),
                    lineno + 1
                )));
            }
            if count == 0 {
                return Err(Error::Validation(format!(
                    "{}:{}: zero count for word id {id}",
                    path.display(),
                    lineno + 1
                )));
            }
            *counts.entry(id).or_insert(0) += count;
        }
        if counts.is_empty() {
            return Err(Error::parse(path, lineno + 1, "empty document line"));
        }
        let mut words: Vec<(usize, u32)> = counts.into_iter().collect();
        words.sort_unstable_by_key(|&(w, _)| w);
        doc.words = words;
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(Error::Validation("no documents".into()));
    }
    if docs.len() != m {
        return Err(Error::Validation(format!(
            "header declares {m} documents, found {}",
            docs.len()
        )));
    }

    // bow files carry ids only; synthesize placeholder tokens.
    let vocab = Vocabulary::from_tokens((0..v).map(|i| format!("w{i}")))?;
    Ok(Corpus { vocab, docs })
}

fn parse_token_lines(path: &Path, reader: impl BufRead) -> Result<Corpus> {
    let mut vocab = Vocabulary::new();
    let mut docs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut counts: HashMap<usize, u32> = HashMap::new();
        for token in line.split_whitespace() {
            let id = vocab.intern(token);
            *counts.entry(id).or_insert(0) += 1;
        }
        if counts.is_empty() {
            return Err(Error::parse(path, lineno + 1, "empty document line"));
        }
        let mut words: Vec<(usize, u32)> = counts.into_iter().collect();
        words.sort_unstable_by_key(|&(w, _)| w);
        docs.push(Document {
            words,
            label: None,
            pair: None,
        });
    }
    if docs.is_empty() {
        return Err(Error::Validation("no documents".into()));
    }
    Ok(Corpus { vocab, docs })
}

/// Load a stopword file: one token per line, UTF-8.
pub fn load_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let reader = BufReader::new(File::open(path)?);
    let mut set = HashSet::new();
    for line in reader.lines() {
        let line = line?;
        let tok = line.trim();
        if !tok.is_empty() {
            set.insert(tok.to_string());
        }
    }
    Ok(set)
}

pub fn default_stopwords() -> HashSet<String> {
    DEFAULT_STOPWORDS
        .lines()
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct PreprocessReport {
    /// Indices (into the input corpus) of documents dropped as empty.
    pub dropped_docs: Vec<usize>,
    /// Number of vocabulary tokens removed.
    pub removed_tokens: usize,
}

/// Remove stopwords, rare tokens (total corpus count < `min_count`) and
/// overly frequent tokens (appearing in more than `max_doc_frac` * M
/// distinct documents), then reindex densely and drop documents that
/// became empty.
///
/// Filtering repeats until a fixed point: dropping documents shrinks M,
/// which tightens the frequency bound, so a single pass is not guaranteed
/// to leave every retained token within bounds.
pub fn preprocess(
    corpus: &Corpus,
    stopwords: &HashSet<String>,
    min_count: u64,
    max_doc_frac: f64,
) -> Result<(Corpus, PreprocessReport)> {
    if !(max_doc_frac > 0.0 && max_doc_frac <= 1.0) {
        return Err(Error::Config(format!(
            "max_doc_frac must be in (0, 1], got {max_doc_frac}"
        )));
    }

    let v = corpus.vocab.len();
    let mut keep_token = vec![true; v];
    for (id, tok) in corpus.vocab.tokens().iter().enumerate() {
        if stopwords.contains(tok) {
            keep_token[id] = false;
        }
    }
    // Live docs, indexed by original position.
    let mut live: Vec<bool> = vec![true; corpus.docs.len()];

    loop {
        let m_live = live.iter().filter(|&&l| l).count();
        if m_live == 0 {
            return Err(Error::Validation(
                "all documents empty after filtering".into(),
            ));
        }
        let max_doc_count = max_doc_frac * m_live as f64;

        let mut totals = vec![0u64; v];
        let mut doc_freq = vec![0u64; v];
        for (doc, &alive) in corpus.docs.iter().zip(&live) {
            if !alive {
                continue;
            }
            for &(w, c) in &doc.words {
                if keep_token[w] {
                    totals[w] += c as u64;
                    doc_freq[w] += 1;
                }
            }
        }

        let mut changed = false;
        for w in 0..v {
            if keep_token[w] && (totals[w] < min_count || doc_freq[w] as f64 > max_doc_count) {
                keep_token[w] = false;
                changed = true;
            }
        }
        for (doc, alive) in corpus.docs.iter().zip(live.iter_mut()) {
            if *alive && !doc.words.iter().any(|&(w, _)| keep_token[w]) {
                *alive = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // Dense reindex of surviving tokens, preserving id order.
    let mut new_id = vec![usize::MAX; v];
    let mut vocab = Vocabulary::new();
    for w in 0..v {
        if keep_token[w] {
            new_id[w] = vocab.intern(corpus.vocab.token(w));
        }
    }
    if let Some(langs) = corpus.vocab.langs() {
        let kept: Vec<String> = (0..v)
            .filter(|&w| keep_token[w])
            .map(|w| langs[w].clone())
            .collect();
        vocab.set_langs(kept)?;
    }

    let mut report = PreprocessReport {
        dropped_docs: Vec::new(),
        removed_tokens: v - vocab.len(),
    };
    let mut docs = Vec::new();
    for (i, (doc, &alive)) in corpus.docs.iter().zip(&live).enumerate() {
        if !alive {
            report.dropped_docs.push(i);
            continue;
        }
        let words: Vec<(usize, u32)> = doc
            .words
            .iter()
            .filter(|&&(w, _)| keep_token[w])
            .map(|&(w, c)| (new_id[w], c))
            .collect();
        docs.push(Document {
            words,
            label: doc.label,
            pair: doc.pair,
        });
    }

    Ok((Corpus { vocab, docs }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn bow_two_docs() {
        let f = write_temp("2 3\n0:3 2:1\n1:2\n");
        let c = load_corpus(f.path(), CorpusFormat::Bow).unwrap();
        assert_eq!(c.n_docs(), 2);
        assert_eq!(c.n_words(), 3);
        assert_eq!(c.docs[0].token_total(), 4);
        assert_eq!(c.docs[1].token_total(), 2);
    }

    #[test]
    fn bow_annotations() {
        let f = write_temp("1 2\n0:1 1:4 #label=3 #pair=7\n");
        let c = load_corpus(f.path(), CorpusFormat::Bow).unwrap();
        assert_eq!(c.docs[0].label, Some(3));
        assert_eq!(c.docs[0].pair, Some(7));
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = write_temp("");
        let err = load_corpus(f.path(), CorpusFormat::Bow).unwrap_err();
        assert!(err.to_string().contains("no documents"));
        let f = write_temp("\n\n");
        assert!(load_corpus(f.path(), CorpusFormat::TokenLines).is_err());
    }

    #[test]
    fn bow_out_of_range_id() {
        let f = write_temp("1 2\n0:1 5:2\n");
        let err = load_corpus(f.path(), CorpusFormat::Bow).unwrap_err();
        assert!(err.to_string().contains("out of range"));
    }

    #[test]
    fn bow_malformed_entry_cites_line() {
        let f = write_temp("1 2\n0:1 oops\n");
        let err = load_corpus(f.path(), CorpusFormat::Bow).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn token_lines_builds_vocab() {
        let f = write_temp("a a b\nb c\n");
        let c = load_corpus(f.path(), CorpusFormat::TokenLines).unwrap();
        assert_eq!(c.vocab.tokens(), &["a", "b", "c"]);
        assert_eq!(c.docs[0].words, vec![(0, 2), (1, 1)]);
        assert_eq!(c.docs[1].words, vec![(1, 1), (2, 1)]);
    }

    fn toy_corpus(lines: &str) -> Corpus {
        let f = write_temp(lines);
        load_corpus(f.path(), CorpusFormat::TokenLines).unwrap()
    }

    #[test]
    fn min_count_removes_rare_token() {
        // "b" appears twice in total, below min_count = 3.
        let c = toy_corpus("a a a b\na a b a\n");
        let (out, report) = preprocess(&c, &HashSet::new(), 3, 1.0).unwrap();
        assert_eq!(out.vocab.tokens(), &["a"]);
        assert_eq!(report.removed_tokens, 1);
    }

    #[test]
    fn identity_filter_keeps_corpus() {
        let c = toy_corpus("a b c\nc d\n");
        let (out, report) = preprocess(&c, &HashSet::new(), 0, 1.0).unwrap();
        assert_eq!(out, c);
        assert!(report.dropped_docs.is_empty());
        assert_eq!(report.removed_tokens, 0);
    }

    #[test]
    fn frequency_cap_removes_common_token() {
        // M = 20, cap = 2 documents; "z" appears in 3 documents (3 > 2).
        let mut lines = String::new();
        for i in 0..20 {
            if i < 3 {
                lines.push_str(&format!("z u{i}\n"));
            } else {
                lines.push_str(&format!("u{i} v{i}\n"));
            }
        }
        let c = toy_corpus(&lines);
        let (out, _) = preprocess(&c, &HashSet::new(), 0, 0.1).unwrap();
        assert!(out.vocab.id("z").is_none());
        assert!(out.vocab.id("u5").is_some());
    }

    #[test]
    fn stopwords_removed_and_empty_docs_dropped() {
        let c = toy_corpus("the a\nthe the\nb c\n");
        let stops: HashSet<String> = ["the".to_string()].into();
        let (out, report) = preprocess(&c, &stops, 0, 1.0).unwrap();
        assert_eq!(report.dropped_docs, vec![1]);
        assert_eq!(out.n_docs(), 2);
        assert!(out.vocab.id("the").is_none());
    }

    #[test]
    fn all_docs_empty_is_an_error() {
        let c = toy_corpus("the\nthe the\n");
        let stops: HashSet<String> = ["the".to_string()].into();
        assert!(preprocess(&c, &stops, 0, 1.0).is_err());
    }

    #[test]
    fn preprocess_is_idempotent() {
        let c = toy_corpus("a a b c\nb c d\nd e f the\nf f f f g\n");
        let stops: HashSet<String> = ["the".to_string()].into();
        let (once, _) = preprocess(&c, &stops, 2, 0.8).unwrap();
        let (twice, report) = preprocess(&once, &stops, 2, 0.8).unwrap();
        assert_eq!(once, twice);
        assert!(report.dropped_docs.is_empty());
    }

    #[test]
    fn retained_tokens_satisfy_both_bounds() {
        let c = toy_corpus("a a b c\nb c d\nd e f\nf f f f g\na a a a a a\n");
        let (out, _) = preprocess(&c, &HashSet::new(), 2, 0.9).unwrap();
        let m = out.n_docs() as f64;
        let mut totals = vec![0u64; out.n_words()];
        let mut doc_freq = vec![0u64; out.n_words()];
        for doc in &out.docs {
            for &(w, c) in &doc.words {
                totals[w] += c as u64;
                doc_freq[w] += 1;
            }
        }
        for (&t, &df) in totals.iter().zip(&doc_freq) {
            assert!(t >= 2);
            assert!(df as f64 <= 0.9 * m);
        }
    }

    #[test]
    fn reindex_preserves_counts() {
        let c = toy_corpus("a a b c c c\nb c d\n");
        let stops: HashSet<String> = ["b".to_string()].into();
        let (out, _) = preprocess(&c, &stops, 0, 1.0).unwrap();
        let a = out.vocab.id("a").unwrap();
        let cc = out.vocab.id("c").unwrap();
        let count = |doc: &Document, w: usize| {
            doc.words
                .iter()
                .find(|&&(x, _)| x == w)
                .map(|&(_, c)| c)
                .unwrap_or(0)
        };
        assert_eq!(count(&out.docs[0], a), 2);
        assert_eq!(count(&out.docs[0], cc), 3);
    }
}
