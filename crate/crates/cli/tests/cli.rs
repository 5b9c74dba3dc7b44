use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_neuraltopics");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RUST_LOG", "warn")
        .env("NEURALTOPICS_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let data = dir.path().join("data");
        ok(&["synth", "--out", s(&data), "--documents", "80", "--test-documents", "20"]);
        Fixture { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn train(&self, out: &str, extra: &[&str]) -> PathBuf {
        let run = self.path(out);
        let (tr, te, v) = (self.path("data/train.bow"), self.path("data/test.bow"), self.path("data/vocab.txt"));
        let mut args = vec![
            "train", "--train", s(&tr), "--test", s(&te), "--vocab", s(&v), "--out", s(&run),
            "--hidden", "8", "--latent", "8", "--batch", "40",
        ];
        if !extra.contains(&"--epochs") {
            args.extend_from_slice(&["--epochs", "2"]);
        }
        args.extend_from_slice(extra);
        ok(&args);
        run
    }
}

#[test]
fn train_writes_checkpoint_metrics_and_run_file() {
    let f = Fixture::new();
    let rd = f.train("run", &["--model", "gsm", "--topics", "5"]);
    assert!(rd.join("model.ckpt").is_file());
    let metrics = fs::read_to_string(rd.join("metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("epoch,batch,elbo,kl,perplexity,active_topics"));
    assert_eq!(lines.count(), 4);
    let cfg = fs::read_to_string(rd.join("config.txt")).unwrap();
    assert!(cfg.contains("model = gsm") && cfg.contains("topics = 5"), "{cfg}");
}

#[test]
fn missing_vocabulary_exits_2_naming_the_path() {
    let f = Fixture::new();
    let missing = f.path("nowhere/vocab.txt");
    let out = run(&[
        "train", "--train", s(&f.path("data/train.bow")), "--vocab", s(&missing), "--out", s(&f.path("run")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
}

#[test]
fn unbounded_training_logs_active_topics() {
    let f = Fixture::new();
    let rd = f.train("tf", &["--model", "rsb-tf", "--gamma", "5e-5", "--init-topics", "3"]);
    let metrics = fs::read_to_string(rd.join("metrics.csv")).unwrap();
    let header: Vec<&str> = metrics.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "active_topics").unwrap();
    let counts: Vec<usize> = metrics.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    assert!(counts[0] >= 3);
    assert!(counts.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn eval_prints_perplexity_and_coherence() {
    let f = Fixture::new();
    let rd = f.train("run", &["--topics", "5"]);
    let ckpt = rd.join("model.ckpt");
    let out = ok(&["eval", "--checkpoint", s(&ckpt), "--corpus", s(&f.path("data/train.bow"))]);
    let ppl: f64 = out.lines().next().unwrap().strip_prefix("perplexity\t").unwrap().parse().unwrap();
    assert!(ppl.is_finite() && ppl > 1.0);
    assert!(!out.contains("npmi"));

    let out = ok(&[
        "eval", "--checkpoint", s(&ckpt), "--corpus", s(&f.path("data/test.bow")),
        "--coherence", "--ref", s(&f.path("data/train.bow")),
    ]);
    assert!(out.contains("npmi@5\tnpmi@10") && out.contains("mean(5,10)"), "{out}");
    assert_eq!(out.lines().filter(|l| l.split('\t').count() == 3 && l.starts_with(char::is_numeric)).count(), 5);
}

#[test]
fn eval_reads_the_run_file() {
    let f = Fixture::new();
    let rd = f.train("run", &["--topics", "5"]);
    let out = ok(&["eval", "--config", s(&rd.join("config.txt")), "--coherence"]);
    assert!(out.starts_with("perplexity\t") && out.contains("npmi reference"), "{out}");
}

#[test]
fn vocabulary_mismatch_exits_3() {
    let f = Fixture::new();
    let rd = f.train("run", &["--topics", "5"]);
    let ckpt = rd.join("model.ckpt");
    let wide = f.path("wide.bow");
    fs::write(&wide, "3 150:2 7:1\n").unwrap();
    let out = run_eval(&ckpt, &wide, &[]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));

    let vocab = f.path("short.txt");
    fs::write(&vocab, "a\nb\nc\n").unwrap();
    let out = run_eval(&ckpt, &f.path("data/test.bow"), &["--vocab", s(&vocab)]);
    assert_eq!(code(&out), 3);
}

fn run_eval(ckpt: &Path, corpus: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["eval", "--checkpoint", s(ckpt), "--corpus", s(corpus)];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn topics_prints_one_block_per_topic() {
    let f = Fixture::new();
    let rd = f.train("run", &["--topics", "6"]);
    let (ckpt, vocab) = (rd.join("model.ckpt"), f.path("data/vocab.txt"));
    let out = ok(&["topics", "--checkpoint", s(&ckpt), "--vocab", s(&vocab), "--top", "10"]);
    let blocks: Vec<&str> = out.split("\n\n").skip(1).collect();
    assert_eq!(blocks.len(), 6);
    for b in blocks {
        assert_eq!(b.trim_end().lines().count(), 11, "{b}");
    }
    assert!(out.contains("ranked by probability"));

    let out = run(&["topics", "--checkpoint", s(&ckpt), "--top", "0"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn document_model_topics_are_labelled() {
    let f = Fixture::new();
    let rd = f.train("doc", &["--decoder", "softmax", "--topics", "4"]);
    let out = ok(&["topics", "--config", s(&rd.join("config.txt")), "--top", "3"]);
    assert!(out.contains("connection strength (document model)"), "{out}");
}

#[test]
fn sampled_inference_is_seeded() {
    let f = Fixture::new();
    let rd = f.train("run", &["--topics", "5"]);
    let ckpt = rd.join("model.ckpt");
    let corpus = f.path("data/test.bow");
    let infer = |out: &Path, seed: &str| {
        ok(&["infer", "--checkpoint", s(&ckpt), "--corpus", s(&corpus), "--out", s(out), "--sample", "--seed", seed]);
        fs::read_to_string(out).unwrap()
    };
    let a = infer(&f.path("a.theta"), "7");
    let b = infer(&f.path("b.theta"), "7");
    let c = infer(&f.path("c.theta"), "8");
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 20);

    let mean = f.path("mean.theta");
    ok(&["infer", "--checkpoint", s(&ckpt), "--corpus", s(&corpus), "--out", s(&mean)]);
    assert_eq!(fs::read_to_string(&mean).unwrap().lines().count(), 20);
}

#[test]
fn empty_corpus_exits_2() {
    let f = Fixture::new();
    let rd = f.train("run", &["--topics", "5"]);
    let empty = f.path("empty.bow");
    fs::write(&empty, "").unwrap();
    let out = run(&["infer", "--checkpoint", s(&rd.join("model.ckpt")), "--corpus", s(&empty), "--out", s(&f.path("t"))]);
    assert_eq!(code(&out), 2);
    let out = run(&["train", "--train", s(&empty), "--vocab", s(&f.path("data/vocab.txt")), "--out", s(&f.path("r2"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn flags_override_the_run_file() {
    let f = Fixture::new();
    let cfg = f.path("run.cfg");
    fs::write(
        &cfg,
        "model = gsb\ntopics = 4\nepochs = 1\nbatch = 40\nhidden = 8\nlatent = 8\n\
         train = data/train.bow\nvocab = data/vocab.txt\nout = fromfile\n",
    )
    .unwrap();
    ok(&["train", "--config", s(&cfg), "--topics", "3"]);
    let written = fs::read_to_string(f.path("fromfile/config.txt")).unwrap();
    assert!(written.contains("model = gsb"), "{written}");
    assert!(written.contains("topics = 3"), "{written}");
    assert!(written.contains("epochs = 1"), "{written}");
    assert!(written.contains("lr = 0.001"), "{written}");
}

#[test]
fn resume_continues_to_the_target_epoch() {
    let f = Fixture::new();
    let rd = f.train("run", &["--topics", "4", "--epochs", "1"]);
    f.train("run", &["--topics", "4", "--epochs", "2", "--resume"]);
    let resumed = fs::read(rd.join("model.ckpt")).unwrap();
    let straight = f.train("straight", &["--topics", "4", "--epochs", "2"]);
    assert_eq!(resumed, fs::read(straight.join("model.ckpt")).unwrap());
    let metrics = fs::read_to_string(rd.join("metrics.csv")).unwrap();
    assert_eq!(metrics, fs::read_to_string(straight.join("metrics.csv")).unwrap());
}

#[test]
fn prepare_builds_vocabulary_and_bow() {
    let dir = TempDir::new().unwrap();
    let text = dir.path().join("raw.txt");
    fs::write(&text, "The cat sat on the mat.\nA dog and the cat!\n\nthe the the\n").unwrap();
    let stop = dir.path().join("stop.txt");
    fs::write(&stop, "the\na\nand\non\n").unwrap();
    let (vocab, bow) = (dir.path().join("v.txt"), dir.path().join("c.bow"));
    ok(&[
        "prepare", "--input", s(&text), "--stopwords", s(&stop), "--vocab-size", "3",
        "--vocab-out", s(&vocab), "--out", s(&bow),
    ]);
    assert_eq!(fs::read_to_string(&vocab).unwrap(), "cat\ndog\nmat\n");
    let lines: Vec<String> = fs::read_to_string(&bow).unwrap().lines().map(String::from).collect();
    assert_eq!(lines[0], "2 0:1 2:1");
    assert_eq!(lines[1], "2 0:1 1:1");
}
