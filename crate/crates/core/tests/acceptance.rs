//! End-to-end acceptance checks. Runs without the libtest harness so that
//! every check prints one PASS/FAIL line even when output capture is on.
//!
//! `cargo test --test acceptance -- <substring>` runs the matching checks
//! only. The corpus statistics check looks for a real train/dev/test corpus
//! in `$DISENTANGLE_DATA` (or `./data`) and reports itself unavailable
//! otherwise.

use std::cell::OnceCell;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use disentangle::corpus::{build_vocab, load_channels, Channel, CorpusStats, PairBatch, Vocabulary, WindowConfig};
use disentangle::ensemble::{ensemble_slots, Strategy};
use disentangle::inference::{build_clusters, decode_channel, Clustering, ReplyGraph};
use disentangle::metrics::{ari, evaluate, exact_match_prf, one_to_one, scaled_vi};
use disentangle::ranker::{
    accuracy, build_examples, grad_check_model, loss, loss_graph, train, DialBert, DialBertConfig, EncoderConfig,
    Example, FeedforwardRanker, LinearRanker, Model, Ranker, TrainConfig,
};
use disentangle::synth::{synthesize, SynthConfig};
use disentangle::tensor::Mat;

enum Verdict {
    Pass(String),
    Fail(String),
    Unavailable(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// brute-force metric oracles

fn random_partition(r: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let k = r.random_range(1..=n.min(7));
    (0..n).map(|_| r.random_range(0..k)).collect()
}

fn blocks(labels: &[usize]) -> Vec<BTreeSet<usize>> {
    let mut by: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by.entry(l).or_default().insert(i);
    }
    by.into_values().collect()
}

/// H(X|Y) + H(Y|X) by summing over every (block, block) intersection.
fn oracle_vi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let (ba, bb) = (blocks(a), blocks(b));
    let mut vi = 0.0;
    for x in &ba {
        for y in &bb {
            let joint = x.intersection(y).count() as f64;
            if joint > 0.0 {
                let p = joint / n;
                let (px, py) = (x.len() as f64 / n, y.len() as f64 / n);
                vi -= p * ((p / px).log2() + (p / py).log2());
            }
        }
    }
    vi
}

fn oracle_scaled_vi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 100.0;
    }
    100.0 * (1.0 - oracle_vi(a, b) / (n as f64).log2())
}

/// Adjusted Rand index from raw agreement counts over all pairs.
fn oracle_ari(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut only_a, mut only_b, mut total) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let (sa, sb) = (a[i] == a[j], b[i] == b[j]);
            both += f64::from(u8::from(sa && sb));
            only_a += f64::from(u8::from(sa));
            only_b += f64::from(u8::from(sb));
            total += 1.0;
        }
    }
    if total == 0.0 {
        return 100.0;
    }
    let expected = only_a * only_b / total;
    let max = (only_a + only_b) / 2.0;
    if max == expected {
        return 100.0;
    }
    100.0 * (both - expected) / (max - expected)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Best one-to-one overlap by trying every matching of the smaller side.
fn oracle_one_to_one(a: &[usize], b: &[usize]) -> f64 {
    let (ba, bb) = (blocks(a), blocks(b));
    let (small, large) = if ba.len() <= bb.len() { (&ba, &bb) } else { (&bb, &ba) };
    // pad the smaller side with empty blocks and permute
    let mut padded = small.clone();
    padded.resize(large.len(), BTreeSet::new());
    let best = permutations(large.len())
        .iter()
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(i, &j)| padded[i].intersection(&large[j]).count())
                .sum::<usize>()
        })
        .max()
        .unwrap();
    100.0 * best as f64 / a.len() as f64
}

fn oracle_prf(pred: &[usize], gold: &[usize]) -> (f64, f64, f64) {
    let keep = |labels: &[usize]| -> BTreeSet<BTreeSet<usize>> { blocks(labels).into_iter().filter(|b| b.len() > 1).collect() };
    let (p, g) = (keep(pred), keep(gold));
    let correct = p.intersection(&g).count() as f64;
    let precision = if p.is_empty() { 0.0 } else { 100.0 * correct / p.len() as f64 };
    let recall = if g.is_empty() { 0.0 } else { 100.0 * correct / g.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

fn metric_oracles(_: &Lab) -> Verdict {
    let start = Instant::now();
    let mut r = rng(2024);
    let cases = 1000;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let n = r.random_range(1..=12);
        let (a, b) = (random_partition(&mut r, n), random_partition(&mut r, n));
        let (pa, pb) = (Clustering::from_labels(&a), Clustering::from_labels(&b));
        let got = exact_match_prf(&pa, &pb).unwrap();
        let want = oracle_prf(&a, &b);
        let pairs = [
            (scaled_vi(&pa, &pb).unwrap(), oracle_scaled_vi(&a, &b)),
            (ari(&pa, &pb).unwrap(), oracle_ari(&a, &b)),
            (one_to_one(&pa, &pb).unwrap(), oracle_one_to_one(&a, &b)),
            (got.0, want.0),
            (got.1, want.1),
            (got.2, want.2),
        ];
        for (x, y) in pairs {
            worst = worst.max((x - y).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-9 && secs < 10.0,
        format!("{cases} partition pairs, max deviation {worst:.1e}, {secs:.1}s"),
    )
}

fn worked_metric_values(_: &Lab) -> Verdict {
    let c = |labels: &[usize]| Clustering::from_labels(labels);
    let close = |x: f64, y: f64| (x - y).abs() <= 0.01;
    let vi = scaled_vi(&c(&[0, 0, 1, 1]), &c(&[0, 1, 0, 1])).unwrap();
    let r = ari(&c(&[0, 0, 1, 1]), &c(&[0, 1, 0, 1])).unwrap();
    let oo = one_to_one(&c(&[0, 0, 1, 1]), &c(&[0, 0, 0, 1])).unwrap();
    let (p, rc, f) = exact_match_prf(&c(&[0, 0, 0, 1, 2]), &c(&[0, 0, 0, 1, 1])).unwrap();
    verdict(
        close(vi, 0.0) && close(r, -50.0) && close(oo, 75.0) && close(p, 100.0) && close(rc, 50.0) && close(f, 66.67),
        format!("VI {vi:.2}, ARI {r:.2}, 1-1 {oo:.2}, P/R/F1 {p:.2}/{rc:.2}/{f:.2}"),
    )
}

// ---------------------------------------------------------------------------
// model checks on a hand-written channel

const SMALL: &str = "\
0\t0\t[10:00] ann: my printer driver fails
1\t1\t[10:00] bob: anyone using wifi on a laptop
0\t2\t[10:01] cat: @ann which printer model
1\t3\t[10:01] dan: bob, wifi works after reboot
2\t4\t[10:02] ann: cat: a laser printer
5\t5\t=== eve has joined #chat
3\t6\t[10:03] bob: dan: reboot did not help the wifi
4\t7\t[10:03] cat: ann: reinstall the printer driver
";

fn small_examples(context_range: usize) -> (Vocabulary, Vec<Example>) {
    let ch = Channel::parse("small", SMALL, std::path::Path::new("small")).unwrap();
    let vocab = build_vocab(std::slice::from_ref(&ch), 1).unwrap();
    let window = WindowConfig {
        context_range,
        future: 0,
        max_seq_len: 40,
    };
    let mut ex = build_examples(&[ch], &vocab, &window, false).unwrap();
    (vocab, ex.remove(0))
}

fn small_config(vocab_size: usize, width: usize, k: usize) -> DialBertConfig {
    DialBertConfig {
        encoder: EncoderConfig {
            vocab_size,
            width,
            layers: 1,
            heads: 2,
            ff_width: 2 * width,
            max_seq_len: 40,
            dropout: 0.0,
        },
        aggregator_hidden: k,
        use_aggregator: true,
        use_features: false,
    }
}

fn gradient_correctness(_: &Lab) -> Verdict {
    let start = Instant::now();
    let (vocab, examples) = small_examples(4);
    let model = DialBert::new(small_config(vocab.len(), 8, 2), &mut rng(7)).unwrap();
    let config = TrainConfig::default();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (i, e) in examples.iter().filter(|e| e.batch.parent_slot.is_some()).enumerate().skip(2).step_by(2) {
        let report = grad_check_model(&model, e, &config, 1e-4, 1.0, i as u64).unwrap();
        worst = worst.max(report.max_relative_error);
        checked += report.coordinates_checked;
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-4 && secs < 60.0,
        format!("{checked} coordinates, max relative error {worst:.1e}, {secs:.1}s"),
    )
}

/// A well-formed window of `slots` random pairs with a random mask.
fn random_batch(r: &mut ChaCha8Rng, vocab_size: usize, slots: usize) -> Example {
    let valid_mask: Vec<bool> = (0..slots).map(|s| s == 0 || r.random_bool(0.8)).collect();
    let pair_tokens = valid_mask
        .iter()
        .map(|&v| {
            if !v {
                return Vec::new();
            }
            let mut t = vec![disentangle::corpus::CLS];
            t.extend((0..r.random_range(1..6)).map(|_| r.random_range(5..vocab_size as u32)));
            t.push(disentangle::corpus::SEP);
            t.extend((0..r.random_range(1..6)).map(|_| r.random_range(5..vocab_size as u32)));
            t.push(disentangle::corpus::SEP);
            t
        })
        .collect();
    Example {
        batch: PairBatch {
            target_index: slots - 1,
            pair_tokens,
            candidate_indices: (0..slots).map(|s| valid_mask[s].then_some(slots - 1 - s)).collect(),
            valid_mask,
            parent_slot: Some(0),
            conv_labels: vec![false; slots],
            context_range: slots,
        },
        features: None,
    }
}

fn shape_invariants(_: &Lab) -> Verdict {
    let wide = DialBert::new(small_config(40, 768, 384), &mut rng(3)).unwrap();
    let encodings = Mat::from_vec(5, 768, (0..5 * 768).map(|i| (i % 13) as f64 / 13.0 - 0.5).collect());
    let aggregated = wide.context_aggregate(&encodings).unwrap();
    let g = wide.comparison_width();

    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    let models: Vec<DialBert> = (0..4)
        .map(|s| DialBert::new(small_config(30, 8, 2 + s), &mut rng(s as u64)).unwrap())
        .collect();
    for i in 0..1000 {
        let slots = r.random_range(1..=8);
        let e = random_batch(&mut r, 30, slots);
        let p = models[i % models.len()].score(&e).unwrap().probs;
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    verdict(
        aggregated.cols == 768 && aggregated.rows == 5 && g == 3072 && worst <= 1e-9,
        format!(
            "aggregator width {} for k=384, comparison width {g}, max |sum-1| {worst:.1e} over 1000 windows",
            aggregated.cols
        ),
    )
}

fn loss_formula(_: &Lab) -> Verdict {
    let probs = [0.2, 0.5, 0.3];
    let mask = [true; 3];
    let labels = [false, true, true];
    let v = loss(&probs, &mask, 1, &labels, 0.1, 1e-12).unwrap();
    let plain = loss(&probs, &mask, 1, &labels, 0.0, 1e-12).unwrap();

    // the taped version must agree
    let mut tape = disentangle::autograd::Tape::new();
    let leaf = Mat::from_vec(3, 1, probs.to_vec());
    let p = tape.param(&leaf);
    let (total, _, _) = loss_graph(&mut tape, p, &mask, 1, &labels, 0.1, 1e-12).unwrap();
    let taped = tape.scalar(total);
    verdict(
        (v.total - 0.7564).abs() <= 1e-3 && plain.total == plain.ce && (taped - v.total).abs() < 1e-12,
        format!("total {:.4} (ce {:.4}, cv {:.4}); alpha=0 total {} = ce {}", v.total, v.ce, v.cv, plain.total, plain.ce),
    )
}

fn bfs_components(parent: &[usize]) -> Vec<usize> {
    let n = parent.len();
    let mut adj = vec![Vec::new(); n];
    for (i, &p) in parent.iter().enumerate() {
        adj[i].push(p);
        adj[p].push(i);
    }
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let mut queue = VecDeque::from([s]);
        label[s] = next;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if label[v] == usize::MAX {
                    label[v] = next;
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    label
}

fn clustering_equivalence(_: &Lab) -> Verdict {
    let mut r = rng(99);
    let mut mismatches = 0;
    let mut count_errors = 0;
    for _ in 0..1000 {
        let n = r.random_range(1..=200);
        let self_rate = r.random_range(0.0..0.5);
        let parent: Vec<usize> = (0..n)
            .map(|i| if i == 0 || r.random_bool(self_rate) { i } else { r.random_range(0..i) })
            .collect();
        let graph = ReplyGraph::new(parent.clone()).unwrap();
        let clusters = build_clusters(&graph);
        if clusters != Clustering::from_labels(&bfs_components(&parent)) {
            mismatches += 1;
        }
        if clusters.num_clusters() != graph.num_self_links() {
            count_errors += 1;
        }
    }
    verdict(
        mismatches == 0 && count_errors == 0,
        format!("1000 graphs: {mismatches} component mismatches, {count_errors} count mismatches"),
    )
}

// ---------------------------------------------------------------------------
// synthetic end-to-end runs

const TRAIN_CHANNELS: usize = 15;

fn toy_dialbert(vocab_size: usize, aggregator: bool, seed: u64) -> DialBert {
    let config = DialBertConfig {
        encoder: EncoderConfig {
            vocab_size,
            width: 32,
            layers: 1,
            heads: 2,
            ff_width: 64,
            max_seq_len: 32,
            dropout: 0.0,
        },
        aggregator_hidden: 16,
        use_aggregator: aggregator,
        use_features: false,
    };
    DialBert::new(config, &mut rng(seed)).unwrap()
}

fn toy_training(seed: u64, epochs: usize, shuffle_seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.002,
        batch_size: 8,
        epochs,
        seed,
        shuffle_seed,
        ..TrainConfig::default()
    }
}

/// Synthetic corpus, its windows, and trained models built on first use.
struct Lab {
    test_channels: Vec<Channel>,
    vocab_size: usize,
    train: Vec<Example>,
    test_groups: Vec<Vec<Example>>,
    test: Vec<Example>,
    full: [OnceCell<(DialBert, f64)>; 3],
    ablated: [OnceCell<DialBert>; 3],
    warm: OnceCell<DialBert>,
}

impl Lab {
    fn new() -> Self {
        let channels = synthesize(&SynthConfig::default()).unwrap();
        let (train_ch, test_ch) = channels.split_at(TRAIN_CHANNELS);
        let vocab = build_vocab(train_ch, 1).unwrap();
        let window = WindowConfig {
            context_range: 50,
            future: 0,
            max_seq_len: 32,
        };
        let train = build_examples(train_ch, &vocab, &window, true).unwrap().into_iter().flatten().collect();
        let test_groups = build_examples(test_ch, &vocab, &window, true).unwrap();
        Lab {
            test_channels: test_ch.to_vec(),
            vocab_size: vocab.len(),
            train,
            test: test_groups.iter().flatten().cloned().collect(),
            test_groups,
            full: Default::default(),
            ablated: Default::default(),
            warm: OnceCell::new(),
        }
    }

    /// Full model for seed `s` and its training time in seconds.
    fn full(&self, s: usize) -> &(DialBert, f64) {
        self.full[s].get_or_init(|| {
            let start = Instant::now();
            let model = toy_dialbert(self.vocab_size, true, s as u64);
            let (model, _) = train(model, &self.train, &[], &toy_training(s as u64, 8, 0)).unwrap();
            (model, start.elapsed().as_secs_f64())
        })
    }

    fn ablated(&self, s: usize) -> &DialBert {
        self.ablated[s].get_or_init(|| {
            let model = toy_dialbert(self.vocab_size, false, s as u64);
            train(model, &self.train, &[], &toy_training(s as u64, 8, 0)).unwrap().0
        })
    }

    /// Shared starting point for the ensemble runs.
    fn warm(&self) -> &DialBert {
        self.warm.get_or_init(|| {
            let model = toy_dialbert(self.vocab_size, true, 0);
            train(model, &self.train, &[], &toy_training(0, 4, 0)).unwrap().0
        })
    }

    fn accuracy(&self, model: &impl Ranker) -> f64 {
        accuracy(model, &self.test).unwrap()
    }

    fn f1(&self, choose: impl Fn(&Example) -> usize) -> f64 {
        let predictions: Vec<(String, Clustering)> = self
            .test_channels
            .iter()
            .zip(&self.test_groups)
            .map(|(ch, ex)| {
                let slots: Vec<usize> = ex.iter().map(&choose).collect();
                (ch.name.clone(), decode_channel(ex, &slots).unwrap().clustering)
            })
            .collect();
        evaluate(&predictions, &self.test_channels).unwrap().f1
    }
}

fn argmax_of(model: &impl Ranker) -> impl Fn(&Example) -> usize + '_ {
    move |e| model.score(e).unwrap().argmax(&e.batch)
}

fn end_to_end(lab: &Lab) -> Verdict {
    let start = Instant::now();
    let base = TrainConfig {
        learning_rate: 0.01,
        batch_size: 16,
        epochs: 30,
        ..TrainConfig::default()
    };
    let (linear, _) = train(LinearRanker::zeros(), &lab.train, &[], &base).unwrap();
    let feedforward = FeedforwardRanker::new(&mut rng(0));
    let (feedforward, _) = train(feedforward, &lab.train, &[], &TrainConfig { learning_rate: 0.003, ..base }).unwrap();
    let (model, _) = lab.full(0);
    let secs = start.elapsed().as_secs_f64();

    let acc = lab.accuracy(model);
    let f1 = lab.f1(argmax_of(model));
    let (lin_acc, lin_f1) = (lab.accuracy(&linear), lab.f1(argmax_of(&linear)));
    let (ff_acc, ff_f1) = (lab.accuracy(&feedforward), lab.f1(argmax_of(&feedforward)));
    verdict(
        acc >= 0.90 && f1 > lin_f1 && ff_acc > lin_acc && secs < 900.0,
        format!(
            "dialbert accuracy {acc:.4} F1 {f1:.2}; linear accuracy {lin_acc:.4} F1 {lin_f1:.2}; \
             feedforward accuracy {ff_acc:.4} F1 {ff_f1:.2}; {secs:.0}s"
        ),
    )
}

fn ablation(lab: &Lab) -> Verdict {
    let mut full = Vec::new();
    let mut without = Vec::new();
    for s in 0..3 {
        full.push(lab.accuracy(&lab.full(s).0));
        without.push(lab.accuracy(lab.ablated(s)));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let drop = 100.0 * (mean(&full) - mean(&without));
    verdict(
        drop >= 2.0,
        format!("full {full:.3?}, without aggregator {without:.3?}, mean drop {drop:.1} points"),
    )
}

fn ensemble_sanity(lab: &Lab) -> Verdict {
    let warm = lab.warm();
    let runs: Vec<DialBert> = [1, 2]
        .iter()
        .map(|&shuffle| train(warm.clone(), &lab.train, &[], &toy_training(0, 4, shuffle)).unwrap().0)
        .collect();
    let singles: Vec<f64> = runs.iter().map(|m| lab.accuracy(m)).collect();
    let best = singles.iter().copied().fold(f64::MIN, f64::max);
    let models: Vec<Model> = runs.into_iter().map(Model::DialBert).collect();
    let acc_of = |strategy| {
        let slots = ensemble_slots(&models, strategy, &lab.test).unwrap();
        let hits = lab.test.iter().zip(&slots).filter(|(e, &s)| e.batch.parent_slot == Some(s)).count();
        hits as f64 / lab.test.len() as f64
    };
    let (model_avg, prob_avg) = (acc_of(Strategy::ModelAvg), acc_of(Strategy::ProbAvg));

    let single = &models[..1];
    let voted = ensemble_slots(single, Strategy::Vote, &lab.test).unwrap();
    let own: Vec<usize> = lab.test.iter().map(argmax_of(&single[0])).collect();
    let vote_matches = voted == own;
    verdict(
        model_avg >= best - 0.01 && prob_avg >= best - 0.01 && vote_matches,
        format!(
            "runs {singles:.4?}, model-avg {model_avg:.4}, prob-avg {prob_avg:.4}, \
             one-model vote identical: {vote_matches}"
        ),
    )
}

// ---------------------------------------------------------------------------
// real corpus

const EXPECTED: [(&str, usize, usize); 3] = [("train", 67463, 17619), ("dev", 2500, 749), ("test", 5000, 962)];

fn corpus_stats(_: &Lab) -> Verdict {
    let root = std::env::var_os("DISENTANGLE_DATA").map_or_else(|| PathBuf::from("data"), PathBuf::from);
    if !EXPECTED.iter().all(|(split, _, _)| root.join(split).is_dir()) {
        return Verdict::Unavailable(format!("no train/dev/test corpus under {}", root.display()));
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (split, messages, conversations) in EXPECTED {
        let stats = CorpusStats::compute(&load_channels(&root.join(split)).unwrap());
        ok &= stats.messages == messages && stats.conversations == conversations;
        parts.push(format!("{split} {}/{}", stats.messages, stats.conversations));
    }
    verdict(ok, parts.join(", "))
}

// ---------------------------------------------------------------------------

type Check = fn(&Lab) -> Verdict;

fn main() {
    let checks: [(&str, Check); 10] = [
        ("metric oracle suite", metric_oracles),
        ("worked metric values", worked_metric_values),
        ("gradient correctness", gradient_correctness),
        ("architecture shape invariants", shape_invariants),
        ("loss formula", loss_formula),
        ("clustering equivalence", clustering_equivalence),
        ("end-to-end synthetic run", end_to_end),
        ("aggregator ablation", ablation),
        ("ensemble sanity", ensemble_sanity),
        ("corpus statistics", corpus_stats),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));

    let lab = Lab::new();
    let mut failures = 0;
    for (no, (name, check)) in checks.iter().enumerate() {
        if !selected(name) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&lab)))
            .unwrap_or_else(|_| Verdict::Fail("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failures += 1;
                ("FAIL", d)
            }
            Verdict::Unavailable(d) => ("UNAVAILABLE", d),
        };
        println!("{tag:<11} {:>2}. {name}: {detail} [{secs:.1}s]", no + 1);
    }
    if failures > 0 {
        eprintln!("{failures} acceptance check(s) failed");
        std::process::exit(1);
    }
}
