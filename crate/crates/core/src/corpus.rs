//! Vocabularies, bag-of-words documents, and minibatching.
//!
//! The on-disk bag-of-words format is one document per line:
//!
//! ```text
//! N idx:count idx:count ...
//! ```
//!
//! where `N` is the document's token total and each `idx` is a zero-based
//! vocabulary index. Vocabulary and stopword files hold one term per line;
//! in a vocabulary file the line number is the term's index.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gradcore::Tensor;

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_terms(terms: Vec<String>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("duplicate vocabulary term {t:?}"),
                });
            }
        }
        Ok(Vocabulary { terms, index })
    }

    /// Placeholder terms `w0, w1, ...` for corpora that ship without a vocabulary file.
    pub fn anonymous(size: usize) -> Result<Self> {
        Self::from_terms((0..size).map(|i| format!("w{i}")).collect())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, idx: usize) -> &str {
        &self.terms[idx]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_terms(text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut body = self.terms.join("\n");
        body.push('\n');
        fs::write(path, body).map_err(|e| Error::io(path, e))
    }
}

pub fn load_stopwords(path: impl AsRef<Path>) -> Result<HashSet<String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

/// Keeps the `max_size` most frequent terms after stopword removal. Ties
/// are broken by ascending lexicographic order.
pub fn build_vocabulary<I, D, S>(
    documents: I,
    max_size: usize,
    stopwords: &HashSet<String>,
) -> Result<Vocabulary>
where
    I: IntoIterator<Item = D>,
    D: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if max_size == 0 {
        return Err(Error::Contract("vocabulary size must be at least 1".into()));
    }
    let mut freq: HashMap<String, u64> = HashMap::new();
    for doc in documents {
        for tok in doc {
            let tok = tok.as_ref();
            if !stopwords.contains(tok) {
                *freq.entry(tok.to_string()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, u64)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size);
    Vocabulary::from_terms(ranked.into_iter().map(|(t, _)| t).collect())
}

/// Sparse word counts for one document.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Document {
    counts: Vec<(usize, u32)>,
    total: u64,
}

impl Document {
    /// Zero counts are dropped; indices come back sorted.
    pub fn from_counts(counts: impl IntoIterator<Item = (usize, u32)>) -> Self {
        let mut merged: BTreeMap<usize, u32> = BTreeMap::new();
        for (i, c) in counts {
            if c > 0 {
                *merged.entry(i).or_default() += c;
            }
        }
        let counts: Vec<_> = merged.into_iter().collect();
        let total = counts.iter().map(|&(_, c)| c as u64).sum();
        Document { counts, total }
    }

    /// Out-of-vocabulary tokens are ignored.
    pub fn from_tokens<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>, vocab: &Vocabulary) -> Self {
        Self::from_counts(tokens.into_iter().filter_map(|t| vocab.get(t.as_ref())).map(|i| (i, 1)))
    }

    pub fn counts(&self) -> &[(usize, u32)] {
        &self.counts
    }

    /// Token total `N_d`.
    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn contains(&self, word: usize) -> bool {
        self.counts.binary_search_by_key(&word, |&(i, _)| i).is_ok()
    }

    pub fn to_bow_line(&self) -> String {
        let mut line = self.total.to_string();
        for (i, c) in &self.counts {
            line.push_str(&format!(" {i}:{c}"));
        }
        line
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    vocab_size: usize,
    split: Split,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, vocab_size: usize, split: Split) -> Result<Self> {
        for (d, doc) in documents.iter().enumerate() {
            if let Some(&(i, _)) = doc.counts.iter().find(|(i, _)| *i >= vocab_size) {
                return Err(Error::Vocabulary {
                    line: d + 1,
                    index: i,
                    size: vocab_size,
                });
            }
        }
        Ok(Corpus {
            documents,
            vocab_size,
            split,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// Indices of documents with at least one token.
    pub fn nonempty_indices(&self) -> Vec<usize> {
        (0..self.documents.len()).filter(|&d| !self.documents[d].is_empty()).collect()
    }

    pub fn total_tokens(&self) -> u64 {
        self.documents.iter().map(Document::len).sum()
    }

    /// Dense `B × V` count matrix for the given documents, in order.
    /// Panics if `docs` is empty.
    pub fn dense_counts(&self, docs: &[usize]) -> Tensor {
        assert!(!docs.is_empty(), "dense_counts of zero documents");
        let v = self.vocab_size;
        let mut data = vec![0.0; docs.len() * v];
        for (row, &d) in docs.iter().enumerate() {
            for &(i, c) in self.documents[d].counts() {
                data[row * v + i] = c as f64;
            }
        }
        Tensor::matrix(docs.len(), v, data)
    }

    pub fn write_bow<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for doc in &self.documents {
            writeln!(out, "{}", doc.to_bow_line())?;
        }
        Ok(())
    }

    pub fn save_bow(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_bow(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }
}

fn parse_bow_line(line: &str, lineno: usize, vocab_size: usize) -> Result<Document> {
    let parse_err = |message: String| Error::Parse { line: lineno, message };
    let mut fields = line.split_whitespace();
    let total: u64 = fields
        .next()
        .ok_or_else(|| parse_err("missing token total".into()))?
        .parse()
        .map_err(|e| parse_err(format!("bad token total: {e}")))?;
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for field in fields {
        let (idx, count) = field
            .split_once(':')
            .ok_or_else(|| parse_err(format!("expected idx:count, got {field:?}")))?;
        let idx: usize = idx.parse().map_err(|e| parse_err(format!("bad index {idx:?}: {e}")))?;
        let count: u32 = count
            .parse()
            .map_err(|e| parse_err(format!("bad count {count:?}: {e}")))?;
        if count == 0 {
            return Err(parse_err(format!("zero count for index {idx}")));
        }
        if idx >= vocab_size {
            return Err(Error::Vocabulary {
                line: lineno,
                index: idx,
                size: vocab_size,
            });
        }
        if !seen.insert(idx) {
            return Err(parse_err(format!("index {idx} listed twice")));
        }
        pairs.push((idx, count));
    }
    let doc = Document::from_counts(pairs);
    if doc.len() != total {
        return Err(parse_err(format!(
            "token total {total} disagrees with counts summing to {}",
            doc.len()
        )));
    }
    Ok(doc)
}

/// Reads the bag-of-words format; blank lines are skipped.
pub fn read_bow<R: BufRead>(reader: R, vocab_size: usize, split: Split) -> Result<Corpus> {
    let mut documents = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        documents.push(parse_bow_line(&line, i + 1, vocab_size)?);
    }
    Corpus::new(documents, vocab_size, split)
}

pub fn load_bow(path: impl AsRef<Path>, vocab: &Vocabulary, split: Split) -> Result<Corpus> {
    load_bow_sized(path, vocab.len(), split)
}

pub fn load_bow_sized(path: impl AsRef<Path>, vocab_size: usize, split: Split) -> Result<Corpus> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_bow(BufReader::new(file), vocab_size, split)
}

/// One minibatch: the source document indices and their dense counts.
#[derive(Clone, Debug)]
pub struct Batch {
    pub docs: Vec<usize>,
    pub counts: Tensor,
}

/// Seeded epoch orderings over the non-empty documents of a corpus.
#[derive(Clone, Debug)]
pub struct Minibatches {
    docs: Vec<usize>,
    batch_size: usize,
    seed: u64,
}

impl Minibatches {
    pub fn new(corpus: &Corpus, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Contract("batch size must be at least 1".into()));
        }
        Ok(Minibatches {
            docs: corpus.nonempty_indices(),
            batch_size,
            seed,
        })
    }

    /// Document indices per batch for `epoch`; the last batch may be short.
    pub fn epoch_order(&self, epoch: u64) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch);
        let mut order = self.docs.clone();
        order.shuffle(&mut rng);
        order.chunks(self.batch_size).map(<[usize]>::to_vec).collect()
    }

    pub fn epoch<'a>(&self, corpus: &'a Corpus, epoch: u64) -> impl Iterator<Item = Batch> + 'a {
        self.epoch_order(epoch).into_iter().map(move |docs| Batch {
            counts: corpus.dense_counts(&docs),
            docs,
        })
    }
}
