use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_disentangle"))
        .args(args)
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

fn fails(args: &[&str]) -> String {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} should fail");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Small corpus split into train and test.
fn corpus(root: &Path) -> (PathBuf, PathBuf) {
    let data = root.join("data");
    ok(&["synth", "--out", s(&data), "--channels", "4", "--messages", "12", "--test", "1", "--seed", "5"]);
    (data.join("train"), data.join("test"))
}

fn key_values(text: &str) -> Vec<(String, f64)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.parse().unwrap()))
        .collect()
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&["synth", "--out", s(&a), "--channels", "3", "--seed", "11"]);
    ok(&["synth", "--out", s(&b), "--channels", "3", "--seed", "11"]);
    ok(&["synth", "--out", s(&c), "--channels", "3", "--seed", "12"]);
    assert_eq!(read_dir_sorted(&a), read_dir_sorted(&b));
    assert_ne!(read_dir_sorted(&a), read_dir_sorted(&c));
    assert_eq!(read_dir_sorted(&a).len(), 3);
}

#[test]
fn gold_against_itself_scores_maxima() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = corpus(dir.path());
    let out = ok(&["evaluate", "--data", s(&train), "--pred", s(&train)]);
    let values = key_values(&out);
    let names: Vec<&str> = values.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(names, ["VI", "ARI", "1-1", "F1", "P", "R"]);
    assert!(values.iter().all(|(_, v)| *v == 100.0), "{out}");
}

#[test]
fn train_predict_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = corpus(dir.path());
    let model = dir.path().join("model");
    let pred = dir.path().join("pred");
    ok(&["train", "--data", s(&train), "--model", s(&model), "--kind", "feedforward", "--epochs", "2"]);
    for f in ["model.ckpt", "vocab.txt", "window.txt", "train.log"] {
        assert!(model.join(f).exists(), "{f}");
    }
    ok(&["predict", "--data", s(&test), "--model", s(&model), "--out", s(&pred)]);

    // predicted files keep every raw line and only rewrite the parent column
    let gold = read_dir_sorted(&test);
    let predicted = read_dir_sorted(&pred);
    assert_eq!(gold.len(), predicted.len());
    for ((gn, g), (pn, p)) in gold.iter().zip(&predicted) {
        assert_eq!(gn, pn);
        let strip = |t: &str| t.lines().map(|l| l.split_once('\t').unwrap().1.to_string()).collect::<Vec<_>>();
        assert_eq!(strip(g), strip(p));
    }

    let values = key_values(&ok(&["evaluate", "--data", s(&test), "--pred", s(&pred)]));
    assert_eq!(values.len(), 6);
    assert!(values.iter().all(|(_, v)| (-100.0..=100.0).contains(v)));

    // one-model vote reproduces plain prediction
    let voted = dir.path().join("voted");
    ok(&["ensemble", "--data", s(&test), "--model", s(&model), "--strategy", "vote", "--out", s(&voted)]);
    assert_eq!(read_dir_sorted(&voted), predicted);
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let (train, _) = corpus(dir.path());
    let config = dir.path().join("train.cfg");
    fs::write(&config, "# window\ncontext-range=7\nfuture=2\nepochs=1\nkind=linear\n").unwrap();

    let a = dir.path().join("a");
    ok(&["train", "--data", s(&train), "--model", s(&a), "--config", s(&config)]);
    let saved = fs::read_to_string(a.join("window.txt")).unwrap();
    assert!(saved.contains("context-range=7") && saved.contains("future=2"), "{saved}");

    let b = dir.path().join("b");
    ok(&["train", "--data", s(&train), "--model", s(&b), "--config", s(&config), "--context-range", "9"]);
    let saved = fs::read_to_string(b.join("window.txt")).unwrap();
    assert!(saved.contains("context-range=9") && saved.contains("future=2"), "{saved}");
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = corpus(dir.path());
    let model = dir.path().join("model");
    let config = dir.path().join("bad.cfg");

    fs::write(&config, "contxt-range=7\n").unwrap();
    let err = fails(&["train", "--data", s(&train), "--model", s(&model), "--config", s(&config)]);
    assert!(err.contains("contxt-range"), "{err}");
    fs::write(&config, "context-range=seven\n").unwrap();
    fails(&["train", "--data", s(&train), "--model", s(&model), "--config", s(&config)]);

    fails(&["train", "--data", s(&dir.path().join("missing")), "--model", s(&model)]);
    fails(&["train", "--data", s(&train), "--model", s(&model), "--kind", "svm"]);
    fails(&["train", "--data", s(&train), "--model", s(&model), "--context-range", "0"]);

    ok(&[
        "train", "--data", s(&train), "--model", s(&model), "--epochs", "1", "--width", "8", "--layers", "1",
        "--heads", "2", "--ff-width", "8", "--hidden", "4", "--max-seq-len", "24",
    ]);
    let pred = dir.path().join("pred");
    let err = fails(&["predict", "--data", s(&test), "--model", s(&model), "--out", s(&pred), "--max-seq-len", "64"]);
    assert!(err.contains("max-seq-len"), "{err}");
    ok(&["predict", "--data", s(&test), "--model", s(&model), "--out", s(&pred), "--max-seq-len", "16"]);

    let err = fails(&[
        "ensemble", "--data", s(&test), "--model", s(&model), "--out", s(&pred), "--strategy", "prob-avg", "--save",
        s(&dir.path().join("avg")),
    ]);
    assert!(err.contains("model-avg"), "{err}");
    fails(&["ensemble", "--data", s(&test), "--model", s(&model), "--out", s(&pred), "--strategy", "median"]);

    let other = dir.path().join("other");
    fs::create_dir_all(&other).unwrap();
    fs::copy(test.read_dir().unwrap().next().unwrap().unwrap().path(), other.join("renamed.tsv")).unwrap();
    let err = fails(&["evaluate", "--data", s(&test), "--pred", s(&other)]);
    assert!(!err.is_empty());
}

#[test]
fn stats_reports_each_split() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let out = ok(&["stats", "--data", s(&dir.path().join("data"))]);
    assert!(out.contains("[train]") && out.contains("[test]") && !out.contains("[dev]"), "{out}");
    assert!(out.contains("channels=3") && out.contains("channels=1"), "{out}");
    assert!(out.contains("within_50="));
}

#[test]
fn model_average_saves_a_usable_model() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = corpus(dir.path());
    let (m1, m2) = (dir.path().join("m1"), dir.path().join("m2"));
    ok(&["train", "--data", s(&train), "--model", s(&m1), "--kind", "linear", "--epochs", "1"]);
    ok(&["train", "--data", s(&train), "--model", s(&m2), "--kind", "linear", "--epochs", "1", "--shuffle-seed", "3"]);
    let avg = dir.path().join("avg");
    let out = ok(&[
        "ensemble", "--data", s(&test), "--model", s(&m1), "--model", s(&m2), "--strategy", "model-avg", "--out",
        s(&dir.path().join("e")), "--save", s(&avg),
    ]);
    assert!(out.contains("saved averaged model"));
    ok(&["predict", "--data", s(&test), "--model", s(&avg), "--out", s(&dir.path().join("p"))]);
    assert_eq!(read_dir_sorted(&dir.path().join("e")), read_dir_sorted(&dir.path().join("p")));
}
