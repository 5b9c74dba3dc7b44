//! Perplexity, top words, topic coherence and θ export over frozen models.
//!
//! Document-level work is split into fixed chunks and run on a rayon pool
//! sized by `NEURALTOPICS_THREADS` (all cores when unset); results are
//! reduced in document order, so the thread count never changes a number.

mod npmi;

use std::cmp::Ordering;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use npmi::{npmi, CoherenceReport, CooccurrenceIndex, TopicCoherence, SMOOTHING};

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};
use crate::gradcore::Tensor;
use crate::model::NeuralTopicModel;

pub const THREADS_ENV: &str = "NEURALTOPICS_THREADS";

const CHUNK: usize = 128;

/// How `ε` is chosen when evaluating the bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Noise {
    /// `ε = 0`: the posterior mean.
    Mean,
    /// One standard-normal draw per document from this seed.
    Sampled(u64),
}

fn pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => builder = builder.num_threads(n),
            _ => log::warn!("ignoring {THREADS_ENV}={raw:?}; expected a positive integer"),
        }
    }
    builder
        .build()
        .map_err(|e| Error::State(format!("cannot start evaluation threads: {e}")))
}

fn check_vocab(model: &NeuralTopicModel, corpus: &Corpus) -> Result<()> {
    if model.config().vocab_size != corpus.vocab_size() {
        return Err(Error::Contract(format!(
            "model vocabulary {} does not match corpus vocabulary {}",
            model.config().vocab_size,
            corpus.vocab_size()
        )));
    }
    Ok(())
}

fn chunk_noise(model: &NeuralTopicModel, rows: usize, noise: Noise, chunk: usize) -> Tensor {
    match noise {
        Noise::Mean => Tensor::zeros(rows, model.config().latent),
        Noise::Sampled(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            model.sample_epsilon(rows, &mut rng)
        }
    }
}

/// Runs `f` over fixed chunks of `docs` in parallel; results in order.
fn map_chunks<T: Send>(
    docs: &[usize],
    f: impl Fn(usize, &[usize]) -> Result<Vec<T>> + Sync,
) -> Result<Vec<T>> {
    let parts: Vec<Result<Vec<T>>> = pool()?.install(|| {
        docs.par_chunks(CHUNK)
            .enumerate()
            .map(|(i, c)| f(i, c))
            .collect()
    });
    let mut out = Vec::with_capacity(docs.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// `L̂_d` for every non-empty document, paired with its index.
pub fn document_bounds(model: &NeuralTopicModel, corpus: &Corpus, noise: Noise) -> Result<Vec<(usize, f64)>> {
    check_vocab(model, corpus)?;
    let docs = corpus.nonempty_indices();
    let bounds = map_chunks(&docs, |i, chunk| {
        let counts = corpus.dense_counts(chunk);
        let eps = chunk_noise(model, chunk.len(), noise, i);
        Ok(model.elbo(&counts, &eps)?.elbo)
    })?;
    Ok(docs.into_iter().zip(bounds).collect())
}

/// `exp(−(1/D) Σ_d L̂_d / N_d)` over the non-empty documents.
pub fn perplexity(model: &NeuralTopicModel, corpus: &Corpus, noise: Noise) -> Result<f64> {
    let bounds = document_bounds(model, corpus, noise)?;
    if bounds.is_empty() {
        return Err(Error::Contract("perplexity of a corpus with no non-empty documents".into()));
    }
    let docs = corpus.documents();
    let total: f64 = bounds.iter().map(|&(d, l)| l / docs[d].len() as f64).sum();
    Ok((-total / bounds.len() as f64).exp())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopicSummary {
    pub topic: usize,
    /// `(word index, score)`, best first.
    pub words: Vec<(usize, f64)>,
}

/// Indices of the `n` largest entries of `scores`, ties by term.
pub fn rank_words(scores: &[f64], vocab: &Vocabulary, n: usize) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| vocab.term(a).cmp(vocab.term(b)))
    });
    idx.into_iter().take(n).map(|w| (w, scores[w])).collect()
}

/// Top `n` words per topic: by `β_k` for topic models, by the raw
/// connection strength `t_k · v_w` for document models.
pub fn top_words(model: &NeuralTopicModel, vocab: &Vocabulary, n: usize) -> Result<Vec<TopicSummary>> {
    if n == 0 {
        return Err(Error::Contract("need at least one top word".into()));
    }
    if vocab.len() != model.config().vocab_size {
        return Err(Error::Contract(format!(
            "vocabulary has {} terms, model expects {}",
            vocab.len(),
            model.config().vocab_size
        )));
    }
    let n = if n > vocab.len() {
        log::warn!("requested {n} top words from a vocabulary of {}; clipping", vocab.len());
        vocab.len()
    } else {
        n
    };
    let scores = model.topic_word_matrix()?;
    Ok((0..scores.rows())
        .map(|k| TopicSummary {
            topic: k,
            words: rank_words(scores.row_slice(k), vocab, n),
        })
        .collect())
}

/// θ rows for every document (empty ones included), in corpus order.
pub fn infer_all(model: &NeuralTopicModel, corpus: &Corpus, noise: Noise) -> Result<Vec<Vec<f64>>> {
    check_vocab(model, corpus)?;
    let docs: Vec<usize> = (0..corpus.len()).collect();
    map_chunks(&docs, |i, chunk| {
        let mut counts = Tensor::zeros(chunk.len(), corpus.vocab_size());
        let v = corpus.vocab_size();
        for (r, &d) in chunk.iter().enumerate() {
            for &(w, c) in corpus.documents()[d].counts() {
                counts.data_mut()[r * v + w] = c as f64;
            }
        }
        let eps = chunk_noise(model, chunk.len(), noise, i);
        let theta = model.infer_theta(&counts, Some(&eps))?;
        Ok((0..chunk.len()).map(|r| theta.row_slice(r).to_vec()).collect())
    })
}

/// Lines `doc_id\tv1 v2 ... vK`, doc ids being corpus positions.
pub fn write_theta<W: Write>(mut out: W, rows: &[Vec<f64>]) -> std::io::Result<()> {
    for (d, row) in rows.iter().enumerate() {
        let values: Vec<String> = row.iter().map(f64::to_string).collect();
        writeln!(out, "{d}\t{}", values.join(" "))?;
    }
    out.flush()
}

pub fn export_theta(model: &NeuralTopicModel, corpus: &Corpus, path: impl AsRef<Path>, noise: Noise) -> Result<()> {
    let path = path.as_ref();
    let rows = infer_all(model, corpus, noise)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_theta(BufWriter::new(file), &rows).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::constructions::ConstructionKind;
    use crate::corpus::{Document, Split};
    use crate::model::{DecoderMode, ModelConfig};

    fn model(kind: ConstructionKind, decoder: DecoderMode, v: usize, k: usize) -> NeuralTopicModel {
        let mut c = ModelConfig::new(kind, v, k);
        c.decoder = decoder;
        c.latent = 4;
        c.mlp_hidden = 6;
        NeuralTopicModel::new(c, 2).unwrap()
    }

    /// Zero word vectors give uniform β; zero heads give a standard-normal
    /// posterior, so the KL term vanishes.
    fn uniform(v: usize, k: usize) -> NeuralTopicModel {
        let mut m = model(ConstructionKind::Gsm, DecoderMode::Mixture, v, k);
        let net = m.net().clone();
        for id in [m.words_id(), net.w_mu, net.w_log_sigma, net.b_mu, net.b_log_sigma] {
            let z = m.params().get(id).map(|_| 0.0);
            *m.params_mut().get_mut(id) = z;
        }
        m
    }

    fn corpus(v: usize) -> Corpus {
        let docs = vec![
            Document::from_counts([(0, 2), (3, 1)]),
            Document::from_counts([(5, 4)]),
            Document::from_counts([]),
            Document::from_counts([(1, 1), (2, 1), (9 % v, 1)]),
        ];
        Corpus::new(docs, v, Split::Test).unwrap()
    }

    #[test]
    fn uniform_model_has_perplexity_v() {
        let m = uniform(10, 3);
        let p = perplexity(&m, &corpus(10), Noise::Mean).unwrap();
        assert_abs_diff_eq!(p, 10.0, epsilon = 1e-9);
        let p = perplexity(&m, &corpus(10), Noise::Sampled(4)).unwrap();
        assert_abs_diff_eq!(p, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn duplicating_documents_keeps_perplexity() {
        let m = model(ConstructionKind::Gsb, DecoderMode::Mixture, 10, 3);
        let c = corpus(10);
        let doubled = Corpus::new([c.documents(), c.documents()].concat(), 10, Split::Test).unwrap();
        let a = perplexity(&m, &c, Noise::Mean).unwrap();
        let b = perplexity(&m, &doubled, Noise::Mean).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-9 * a);
        assert!(a > 0.0);
    }

    #[test]
    fn perplexity_refuses_empty_and_mismatched() {
        let m = uniform(10, 3);
        let empty = Corpus::new(vec![Document::from_counts([])], 10, Split::Test).unwrap();
        assert!(matches!(perplexity(&m, &empty, Noise::Mean), Err(Error::Contract(_))));
        assert!(perplexity(&m, &corpus(12), Noise::Mean).is_err());
    }

    #[test]
    fn parallel_bounds_match_serial() {
        let m = model(ConstructionKind::Rsb, DecoderMode::Mixture, 10, 3);
        let docs: Vec<Document> = (0..300).map(|i| Document::from_counts([(i % 10, 1 + i as u32 % 3), ((i * 7) % 10, 2)])).collect();
        let c = Corpus::new(docs, 10, Split::Test).unwrap();
        let all = document_bounds(&m, &c, Noise::Mean).unwrap();
        let idx: Vec<usize> = (0..300).collect();
        let serial = m.elbo(&c.dense_counts(&idx), &Tensor::zeros(300, 4)).unwrap().elbo;
        for ((_, a), b) in all.iter().zip(serial) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn top_words_ranking() {
        let vocab = Vocabulary::from_terms(["d", "b", "a", "c"].map(String::from).to_vec()).unwrap();
        assert_eq!(rank_words(&[0.0, 1.0, 0.0, 0.0], &vocab, 1), vec![(1, 1.0)]);
        let tied: Vec<usize> = rank_words(&[0.25; 4], &vocab, 3).into_iter().map(|(w, _)| w).collect();
        assert_eq!(tied, vec![2, 1, 3]);

        let m = uniform(4, 2);
        let tops = top_words(&m, &vocab, 9).unwrap();
        assert_eq!(tops.len(), 2);
        assert_eq!(tops[0].words.len(), 4);
        assert_eq!(tops[0].words[0], (2, 0.25));
        assert!(top_words(&m, &vocab, 0).is_err());
    }

    #[test]
    fn theta_export() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("theta.tsv");
        let m = uniform(10, 3);
        export_theta(&m, &corpus(10), &path, Noise::Mean).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        for (d, line) in lines.iter().enumerate() {
            let (id, values) = line.split_once('\t').unwrap();
            assert_eq!(id, d.to_string());
            let v: Vec<f64> = values.split(' ').map(|s| s.parse().unwrap()).collect();
            assert_eq!(v.len(), 3);
            v.iter().for_each(|x| assert_abs_diff_eq!(*x, 1.0 / 3.0, epsilon = 1e-12));
        }

        for kind in ConstructionKind::ALL {
            let m = model(kind, DecoderMode::Mixture, 10, 4);
            let again = dir.path().join("again.tsv");
            export_theta(&m, &corpus(10), &path, Noise::Sampled(7)).unwrap();
            export_theta(&m, &corpus(10), &again, Noise::Sampled(7)).unwrap();
            assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
            for row in infer_all(&m, &corpus(10), Noise::Mean).unwrap() {
                assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-8);
            }
        }
    }
}
