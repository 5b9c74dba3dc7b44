//! Corpora drawn from known topics, for checking that training recovers them.
//!
//! Topic `k` puts `concentration` of its mass on the block of words
//! `[k·block, (k+1)·block)`, linearly decreasing within the block so its
//! top words are well defined, and spreads the rest evenly over all other
//! words. Documents draw θ from a symmetric Dirichlet and then tokens from
//! the mixture.

use std::collections::HashSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Gamma;

use crate::corpus::{Corpus, Document, Split, Vocabulary};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedConfig {
    pub topics: usize,
    pub vocab_size: usize,
    pub block: usize,
    pub concentration: f64,
    pub documents: usize,
    /// Inclusive token-count range per document.
    pub min_len: usize,
    pub max_len: usize,
    /// Symmetric Dirichlet parameter for θ.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            topics: 5,
            vocab_size: 100,
            block: 20,
            concentration: 0.9,
            documents: 500,
            min_len: 60,
            max_len: 120,
            alpha: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PlantedCorpus {
    pub corpus: Corpus,
    pub vocab: Vocabulary,
    /// The generating topic-word distributions, `topics × vocab_size`.
    pub beta: Vec<Vec<f64>>,
    /// The generating topic proportions, one row per document.
    pub theta: Vec<Vec<f64>>,
}

pub fn planted_beta(config: &PlantedConfig) -> Vec<Vec<f64>> {
    let (k, v, b, c) = (config.topics, config.vocab_size, config.block, config.concentration);
    let ramp: f64 = (1..=b).map(|r| r as f64).sum();
    (0..k)
        .map(|t| {
            let mut row = vec![(1.0 - c) / (v - b) as f64; v];
            for r in 0..b {
                row[t * b + r] = c * (b - r) as f64 / ramp;
            }
            row
        })
        .collect()
}

fn dirichlet<R: Rng + ?Sized>(k: usize, alpha: f64, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("positive shape");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return draws.into_iter().map(|g| g / total).collect();
        }
    }
}

pub fn generate(config: &PlantedConfig) -> Result<PlantedCorpus> {
    let PlantedConfig { topics, vocab_size, block, .. } = *config;
    if topics == 0 || block == 0 || topics * block > vocab_size || block == vocab_size && config.concentration < 1.0 {
        return Err(Error::Contract(format!(
            "{topics} blocks of {block} words do not fit a vocabulary of {vocab_size}"
        )));
    }
    if !(config.concentration > 0.0 && config.concentration <= 1.0) || !(config.alpha > 0.0) {
        return Err(Error::Contract("concentration must be in (0, 1] and alpha positive".into()));
    }
    if config.min_len == 0 || config.min_len > config.max_len {
        return Err(Error::Contract(format!("bad length range {}..={}", config.min_len, config.max_len)));
    }
    let beta = planted_beta(config);
    let words: Vec<WeightedIndex<f64>> = beta.iter().map(|row| WeightedIndex::new(row).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut docs = Vec::with_capacity(config.documents);
    let mut thetas = Vec::with_capacity(config.documents);
    for _ in 0..config.documents {
        let theta = dirichlet(topics, config.alpha, &mut rng);
        let pick = WeightedIndex::new(&theta).unwrap();
        let len = rng.random_range(config.min_len..=config.max_len);
        let tokens = (0..len).map(|_| (words[pick.sample(&mut rng)].sample(&mut rng), 1u32));
        docs.push(Document::from_counts(tokens));
        thetas.push(theta);
    }
    let vocab = Vocabulary::from_terms((0..vocab_size).map(|w| format!("w{w:03}")).collect())?;
    Ok(PlantedCorpus {
        corpus: Corpus::new(docs, vocab_size, Split::Train)?,
        vocab,
        beta,
        theta: thetas,
    })
}

/// Greedy one-to-one matching of learned to reference word lists by the
/// fraction of shared words. Returns `(learned, reference, overlap)` pairs
/// and the mean overlap over reference topics.
pub fn match_topics(learned: &[Vec<usize>], reference: &[Vec<usize>]) -> (Vec<(usize, usize, f64)>, f64) {
    let overlap = |a: &[usize], b: &[usize]| {
        let set: HashSet<_> = a.iter().collect();
        b.iter().filter(|w| set.contains(w)).count() as f64 / b.len().max(1) as f64
    };
    let mut candidates: Vec<(f64, usize, usize)> = learned
        .iter()
        .enumerate()
        .flat_map(|(i, l)| reference.iter().enumerate().map(move |(j, r)| (overlap(l, r), i, j)))
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut used_l, mut used_r) = (HashSet::new(), HashSet::new());
    let mut pairs = Vec::new();
    for (o, i, j) in candidates {
        if !used_l.contains(&i) && !used_r.contains(&j) {
            used_l.insert(i);
            used_r.insert(j);
            pairs.push((i, j, o));
        }
    }
    let total: f64 = pairs.iter().map(|p| p.2).sum();
    (pairs, total / reference.len().max(1) as f64)
}
