//! Topic coherence by normalised pointwise mutual information over
//! whole-document co-occurrence:
//!
//! ```text
//! NPMI(i, j) = [ln p(i, j) − ln p(i) p(j)] / −ln p(i, j)
//! ```
//!
//! with `p(i, j)` smoothed by `1e-12`.

use std::fmt;

use crate::corpus::Corpus;

pub const SMOOTHING: f64 = 1e-12;

/// Sorted document ids per word.
#[derive(Clone, Debug)]
pub struct CooccurrenceIndex {
    postings: Vec<Vec<u32>>,
    documents: usize,
}

impl CooccurrenceIndex {
    pub fn new(reference: &Corpus) -> Self {
        let mut postings = vec![Vec::new(); reference.vocab_size()];
        for (d, doc) in reference.documents().iter().enumerate() {
            for &(w, _) in doc.counts() {
                postings[w].push(d as u32);
            }
        }
        CooccurrenceIndex {
            postings,
            documents: reference.len(),
        }
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn document_frequency(&self, w: usize) -> usize {
        self.postings.get(w).map_or(0, Vec::len)
    }

    pub fn joint_frequency(&self, a: usize, b: usize) -> usize {
        let (x, y) = (&self.postings[a], &self.postings[b]);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// NPMI of a word pair, or `None` if either word never occurs.
    pub fn npmi(&self, a: usize, b: usize) -> Option<f64> {
        let (fa, fb) = (self.document_frequency(a), self.document_frequency(b));
        if fa == 0 || fb == 0 {
            return None;
        }
        let d = self.documents as f64;
        let fab = self.joint_frequency(a, b);
        if fab == self.documents {
            return Some(1.0);
        }
        let (pa, pb, pab) = (fa as f64 / d, fb as f64 / d, fab as f64 / d + SMOOTHING);
        let value = (pab.ln() - (pa * pb).ln()) / -pab.ln();
        Some(value.clamp(-1.0, 1.0))
    }

    /// Mean NPMI over unordered pairs of `words`, plus the number of pairs
    /// skipped because a word is missing from the reference.
    pub fn topic_npmi(&self, words: &[usize]) -> (Option<f64>, usize) {
        let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
        for (i, &a) in words.iter().enumerate() {
            for &b in &words[i + 1..] {
                match self.npmi(a, b) {
                    Some(v) => {
                        sum += v;
                        n += 1;
                    }
                    None => skipped += 1,
                }
            }
        }
        ((n > 0).then(|| sum / n as f64), skipped)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopicCoherence {
    pub topic: usize,
    pub top5: Option<f64>,
    pub top10: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceReport {
    pub topics: Vec<TopicCoherence>,
    pub mean_top5: f64,
    pub mean_top10: f64,
    /// Word pairs left out because a word never occurs in the reference.
    pub skipped_pairs: usize,
}

impl CoherenceReport {
    /// Average of the top-5 and top-10 model means.
    pub fn mean(&self) -> f64 {
        (self.mean_top5 + self.mean_top10) / 2.0
    }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> f64 {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Coherence of ranked word lists (best first) at the top-5 and top-10 cuts.
pub fn npmi(topic_words: &[Vec<usize>], reference: &Corpus) -> CoherenceReport {
    let index = CooccurrenceIndex::new(reference);
    let mut skipped = 0;
    let topics: Vec<TopicCoherence> = topic_words
        .iter()
        .enumerate()
        .map(|(topic, words)| {
            let (top5, s5) = index.topic_npmi(&words[..words.len().min(5)]);
            let (top10, s10) = index.topic_npmi(&words[..words.len().min(10)]);
            skipped += s5 + s10;
            TopicCoherence { topic, top5, top10 }
        })
        .collect();
    CoherenceReport {
        mean_top5: mean_of(topics.iter().map(|t| t.top5)),
        mean_top10: mean_of(topics.iter().map(|t| t.top10)),
        topics,
        skipped_pairs: skipped,
    }
}

impl fmt::Display for CoherenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        writeln!(f, "topic\tnpmi@5\tnpmi@10")?;
        for t in &self.topics {
            writeln!(f, "{}\t{}\t{}", t.topic, cell(t.top5), cell(t.top10))?;
        }
        writeln!(f, "mean\t{:.4}\t{:.4}", self.mean_top5, self.mean_top10)?;
        writeln!(f, "mean(5,10)\t{:.4}", self.mean())?;
        write!(f, "skipped pairs\t{}", self.skipped_pairs)
    }
}
