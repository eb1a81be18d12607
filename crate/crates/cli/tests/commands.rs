use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spel_core::io::{read_annotations, write_annotations, write_corpus, AnnotationRecord};
use spel_core::train::{initial_weights, TrainConfig};
use spel_core::{
    AnnotatedDocument, EntityVocabulary, HeadWeights, Matrix, SpanAnnotation, TokenizationMode,
    Tokenizer,
};
use spel_testkit::synth;

fn spel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spel"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    docs: Vec<AnnotatedDocument>,
}

impl Fixture {
    fn new(n_docs: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let entities = synth::entities(25, 3);
        let docs = synth::corpus(n_docs, &entities, 4);
        EntityVocabulary::build(entities.iter().map(|e| e.id.as_str()), true)
            .unwrap()
            .save(root.join("vocab.txt"))
            .unwrap();
        write_corpus(root.join("corpus.jsonl"), &docs).unwrap();
        Fixture {
            _dir: dir,
            root,
            docs,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn write(&self, name: &str, content: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, content).unwrap();
        p
    }
}

fn gold_records(docs: &[AnnotatedDocument]) -> Vec<AnnotationRecord> {
    docs.iter()
        .flat_map(|d| {
            d.gold.iter().map(|g| AnnotationRecord {
                doc_id: d.id.clone(),
                start: g.start,
                end: g.end,
                entity: g.entity.clone(),
                score: 1.0,
            })
        })
        .collect()
}

#[test]
fn link_with_mock_provider_reproduces_gold() {
    let f = Fixture::new(30);
    let out = f.path("out.jsonl");
    let o = spel(&[
        "link",
        "--vocabulary",
        s(&f.path("vocab.txt")),
        "--input",
        s(&f.path("corpus.jsonl")),
        "--output",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("linked 30 documents"));
    assert!(stdout(&o).contains("documents/s") && stdout(&o).contains("s/document"));
    let got: Vec<(String, SpanAnnotation)> = read_annotations(&out)
        .unwrap()
        .into_iter()
        .map(|r| (r.doc_id.clone(), r.annotation()))
        .collect();
    let want: Vec<(String, SpanAnnotation)> = gold_records(&f.docs)
        .into_iter()
        .map(|r| (r.doc_id.clone(), r.annotation()))
        .collect();
    assert_eq!(got, want);
}

#[test]
fn link_is_deterministic_across_worker_counts() {
    let f = Fixture::new(40);
    let config = f.write(
        "spel.toml",
        "vocabulary = \"vocab.txt\"\nseed = 9\n[provider]\nkind = \"mock\"\nq = 0.6\nnoise = 1.5\n",
    );
    let run = |name: &str, workers: &str| {
        let out = f.path(name);
        let o = spel(&[
            "--config",
            s(&config),
            "--workers",
            workers,
            "link",
            "--input",
            s(&f.path("corpus.jsonl")),
            "--output",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    let a = run("a.jsonl", "1");
    let b = run("b.jsonl", "4");
    let c = run("c.jsonl", "1");
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn missing_vocabulary_exits_with_input_error() {
    let f = Fixture::new(1);
    let missing = f.path("nope.txt");
    let o = spel(&[
        "link",
        "--vocabulary",
        s(&missing),
        "--input",
        s(&f.path("corpus.jsonl")),
        "--output",
        s(&f.path("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(s(&missing)), "{}", stderr(&o));
}

#[test]
fn empty_corpus_links_to_no_records() {
    let f = Fixture::new(1);
    let empty = f.write("empty.jsonl", "");
    let out = f.path("out.jsonl");
    let o = spel(&[
        "link",
        "--vocabulary",
        s(&f.path("vocab.txt")),
        "--input",
        s(&empty),
        "--output",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(read_annotations(&out).unwrap().is_empty());
}

#[test]
fn bad_config_exits_with_input_error() {
    let f = Fixture::new(1);
    let config = f.write(
        "bad.toml",
        "[chunking]\nwindow = 10\noverlap = 10\nvocabulary = 3\n",
    );
    let o = spel(&[
        "--config",
        s(&config),
        "link",
        "--input",
        s(&f.path("corpus.jsonl")),
        "--output",
        s(&f.path("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let config = f.write(
        "overlap.toml",
        "vocabulary = \"vocab.txt\"\n[chunking]\nwindow = 10\noverlap = 10\n",
    );
    let o = spel(&[
        "--config",
        s(&config),
        "link",
        "--input",
        s(&f.path("corpus.jsonl")),
        "--output",
        s(&f.path("o")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("overlap"));
}

/// A tokenized one-document corpus with one-hot features per gold label.
fn training_fixture(f: &Fixture) -> (PathBuf, PathBuf, EntityVocabulary) {
    let vocab = EntityVocabulary::build(["Rome", "Paris"], true).unwrap();
    vocab.save(f.path("train_vocab.txt")).unwrap();
    let text = "Rome met Paris in Rome";
    let mut doc = AnnotatedDocument::new("t1", text).with_gold(vec![
        SpanAnnotation::new(0, 4, "Rome"),
        SpanAnnotation::new(9, 14, "Paris"),
        SpanAnnotation::new(18, 22, "Rome"),
    ]);
    doc.tokens = Tokenizer::default()
        .tokenize(text, TokenizationMode::MentionAgnostic, None)
        .unwrap();
    let labels = vocab.token_labels(&doc).unwrap();
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| (0..3).map(|j| if j == l { 3.0 } else { 0.0 }).collect())
        .collect();
    let features = f.path("features");
    std::fs::create_dir_all(&features).unwrap();
    Matrix::from_vec(rows.len(), 3, rows.concat())
        .unwrap()
        .save(features.join("t1.splm"))
        .unwrap();
    let corpus = f.path("train.jsonl");
    write_corpus(&corpus, &[doc]).unwrap();
    (corpus, features, vocab)
}

#[test]
fn train_converges_on_separable_toy() {
    let f = Fixture::new(1);
    let (corpus, features, _) = training_fixture(&f);
    let config = f.write("train.toml", "vocabulary = \"train_vocab.txt\"\n[training]\nepochs = 60\npatience = 100\nlr_head = 0.1\n");
    let out = f.path("head.splm");
    let o = spel(&[
        "--config",
        s(&config),
        "train",
        "--corpus",
        s(&corpus),
        "--features",
        s(&features),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = stderr(&o);
    assert!(log.contains("validation subword F1 1.0000"), "{log}");
    let w = HeadWeights::load(&out).unwrap();
    assert_eq!((w.dim(), w.vocab_size()), (3, 3));
    // Each one-hot feature now scores its own column highest.
    for k in 0..3 {
        let row = w.row(k);
        assert!((0..3).all(|j| j == k || row[k] > row[j]), "{row:?}");
    }
}

#[test]
fn zero_epochs_persists_initial_weights() {
    let f = Fixture::new(1);
    let (corpus, features, vocab) = training_fixture(&f);
    let out = f.path("head0.splm");
    let o = spel(&[
        "--seed",
        "17",
        "train",
        "--vocabulary",
        s(&f.path("train_vocab.txt")),
        "--epochs",
        "0",
        "--corpus",
        s(&corpus),
        "--features",
        s(&features),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let want = initial_weights(
        3,
        vocab.len(),
        &TrainConfig {
            seed: 17,
            ..TrainConfig::default()
        },
    );
    let got = HeadWeights::load(&out).unwrap();
    // Weights are stored as f32.
    for (a, b) in got.as_slice().iter().zip(want.as_slice()) {
        assert_eq!(*a, *b as f32 as f64);
    }
}

#[test]
fn corrupt_feature_header_exits_with_input_error() {
    let f = Fixture::new(1);
    let (corpus, features, _) = training_fixture(&f);
    std::fs::write(features.join("t1.splm"), b"JUNKJUNKJUNKJUNK").unwrap();
    let o = spel(&[
        "train",
        "--vocabulary",
        s(&f.path("train_vocab.txt")),
        "--corpus",
        s(&corpus),
        "--features",
        s(&features),
        "--out",
        s(&f.path("w.splm")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn eval_identical_files_scores_one() {
    let f = Fixture::new(10);
    let pred = f.path("pred.jsonl");
    write_annotations(&pred, &gold_records(&f.docs)).unwrap();
    let report = f.path("report.jsonl");
    let o = spel(&[
        "eval",
        "--gold",
        s(&f.path("corpus.jsonl")),
        "--predicted",
        s(&pred),
        "--report",
        s(&report),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    let total = table.lines().last().unwrap();
    assert!(
        total.starts_with("micro (EL)") && total.ends_with("1.0000  1.0000  1.0000"),
        "{table}"
    );
    let json = std::fs::read_to_string(report).unwrap();
    assert!(json.contains("\"micro_f1\":1.0"));
}

#[test]
fn eval_half_match_fixture() {
    let f = Fixture::new(1);
    let gold = AnnotatedDocument::new("h", "Alpha met Beta").with_gold(vec![
        SpanAnnotation::new(0, 5, "Alpha"),
        SpanAnnotation::new(10, 14, "Beta"),
    ]);
    write_corpus(f.path("g.jsonl"), &[gold]).unwrap();
    let records = vec![
        AnnotationRecord {
            doc_id: "h".into(),
            start: 0,
            end: 5,
            entity: "Alpha".into(),
            score: 0.9,
        },
        AnnotationRecord {
            doc_id: "h".into(),
            start: 10,
            end: 14,
            entity: "Gamma".into(),
            score: 0.8,
        },
    ];
    write_annotations(f.path("p.jsonl"), &records).unwrap();
    let report = f.path("r.jsonl");
    let o = spel(&[
        "eval",
        "--gold",
        s(&f.path("g.jsonl")),
        "--predicted",
        s(&f.path("p.jsonl")),
        "--report",
        s(&report),
    ]);
    assert!(o.status.success());
    let json = std::fs::read_to_string(report).unwrap();
    assert!(
        json.contains("\"micro_p\":0.5,\"micro_r\":0.5,\"micro_f1\":0.5"),
        "{json}"
    );
    let o = spel(&[
        "eval",
        "--mode",
        "md",
        "--gold",
        s(&f.path("g.jsonl")),
        "--predicted",
        s(&f.path("p.jsonl")),
    ]);
    assert!(stdout(&o)
        .lines()
        .last()
        .unwrap()
        .ends_with("1.0000  1.0000  1.0000"));
}

#[test]
fn eval_unknown_document_exits_with_input_error() {
    let f = Fixture::new(3);
    let records = vec![AnnotationRecord {
        doc_id: "ghost".into(),
        start: 0,
        end: 1,
        entity: "X".into(),
        score: 1.0,
    }];
    write_annotations(f.path("p.jsonl"), &records).unwrap();
    let o = spel(&[
        "eval",
        "--gold",
        s(&f.path("corpus.jsonl")),
        "--predicted",
        s(&f.path("p.jsonl")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ghost"));
}

#[test]
fn project_candidates_unions_occurrences() {
    let f = Fixture::new(1);
    let input = f.write("aware.tsv", "d1\t0\t4\tRome\tRome,Rome_(band)\nd2\t3\t7\tRome\tAS_Roma\nd2\t9\t11\tEU\tEuropean_Union\n");
    let output = f.path("agnostic.tsv");
    let o = spel(&[
        "project-candidates",
        "--input",
        s(&input),
        "--output",
        s(&output),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tsv = std::fs::read_to_string(&output).unwrap();
    assert_eq!(tsv, "EU\tEuropean_Union\nRome\tRome,Rome_(band),AS_Roma\n");
    let bad = f.write("bad.tsv", "d1\t0\tx\tRome\tRome\n");
    let o = spel(&[
        "project-candidates",
        "--input",
        s(&bad),
        "--output",
        s(&output),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":1:"), "{}", stderr(&o));
}

#[test]
fn normalize_redirects_rewrites_stale_gold() {
    let f = Fixture::new(1);
    EntityVocabulary::build(["Myanmar", "Chennai"], true)
        .unwrap()
        .save(f.path("v.txt"))
        .unwrap();
    let doc = AnnotatedDocument::new("r", "Burma and Madras").with_gold(vec![
        SpanAnnotation::new(0, 5, "Burma"),
        SpanAnnotation::new(10, 16, "Madras"),
    ]);
    write_corpus(f.path("in.jsonl"), &[doc]).unwrap();
    let table = f.write(
        "redirects.tsv",
        "Burma\tMyanmar\nMadras\tChennai\nChennai\tMadras\n",
    );
    let o = spel(&[
        "normalize-redirects",
        "--vocabulary",
        s(&f.path("v.txt")),
        "--redirects",
        s(&table),
        "--input",
        s(&f.path("in.jsonl")),
        "--output",
        s(&f.path("out.jsonl")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("2 redirects kept, 1 dropped; 2 annotations rewritten"),
        "{}",
        stdout(&o)
    );
    let out = spel_core::io::read_corpus(f.path("out.jsonl")).unwrap();
    let entities: Vec<&str> = out[0].gold.iter().map(|g| g.entity.as_str()).collect();
    assert_eq!(entities, ["Myanmar", "Chennai"]);
}
