//! Clustering agreement scores between predicted and gold conversations.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::corpus::Channel;
use crate::error::{Error, Result};
use crate::inference::Clustering;

/// The six evaluation scores. All are on a 0-100 scale except `ari`, which
/// lies in [-100, 100].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub scaled_vi: f64,
    pub ari: f64,
    pub one_to_one: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when precision or recall had an empty denominator and was
    /// reported as 0.
    pub empty_denominator: bool,
}

/// Exact-match counts over conversations with at least two messages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl MatchCounts {
    pub fn add(&mut self, other: MatchCounts) {
        self.correct += other.correct;
        self.predicted += other.predicted;
        self.gold += other.gold;
    }

    /// (precision, recall, f1, any denominator empty)
    pub fn prf(&self) -> (f64, f64, f64, bool) {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        let p = ratio(self.correct, self.predicted);
        let r = ratio(self.correct, self.gold);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        (p, r, f, self.predicted == 0 || self.gold == 0)
    }
}

fn check_universe(pred: &Clustering, gold: &Clustering) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::UniverseMismatch {
            left: pred.len(),
            right: gold.len(),
        });
    }
    Ok(())
}

/// Sparse contingency table: (pred cluster, gold cluster) -> overlap.
fn contingency(pred: &Clustering, gold: &Clustering) -> BTreeMap<(usize, usize), usize> {
    let mut table = BTreeMap::new();
    for (&p, &g) in pred.assignment().iter().zip(gold.assignment()) {
        *table.entry((p, g)).or_insert(0) += 1;
    }
    table
}

fn cluster_sizes(c: &Clustering) -> Vec<usize> {
    let mut sizes = vec![0; c.num_clusters()];
    for &a in c.assignment() {
        sizes[a] += 1;
    }
    sizes
}

fn entropy_bits(sizes: impl Iterator<Item = usize>, n: f64) -> f64 {
    sizes
        .filter(|&s| s > 0)
        .map(|s| {
            let p = s as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Variation of information in bits.
pub fn variation_of_information(pred: &Clustering, gold: &Clustering) -> Result<f64> {
    check_universe(pred, gold)?;
    let n = pred.len() as f64;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let hp = entropy_bits(cluster_sizes(pred).into_iter(), n);
    let hg = entropy_bits(cluster_sizes(gold).into_iter(), n);
    let joint = entropy_bits(contingency(pred, gold).into_values(), n);
    // I = Hp + Hg - H(joint), so VI = 2 H(joint) - Hp - Hg
    Ok((2.0 * joint - hp - hg).max(0.0))
}

/// `100 (1 - VI / log2 n)`. A single message admits one partition and
/// scores 100.
pub fn scaled_vi(pred: &Clustering, gold: &Clustering) -> Result<f64> {
    let vi = variation_of_information(pred, gold)?;
    let n = pred.len();
    if n < 2 {
        return Ok(100.0);
    }
    Ok(100.0 * (1.0 - vi / (n as f64).log2()))
}

fn choose2(x: usize) -> f64 {
    let x = x as f64;
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index times 100. When both partitions are trivial in the
/// same way (the index equals its expectation and its maximum) the score
/// is 100.
pub fn ari(pred: &Clustering, gold: &Clustering) -> Result<f64> {
    check_universe(pred, gold)?;
    let n = pred.len();
    let index: f64 = contingency(pred, gold).into_values().map(choose2).sum();
    let a: f64 = cluster_sizes(pred).into_iter().map(choose2).sum();
    let b: f64 = cluster_sizes(gold).into_iter().map(choose2).sum();
    let total = choose2(n);
    let expected = if total > 0.0 { a * b / total } else { 0.0 };
    let max = 0.5 * (a + b);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(100.0);
    }
    Ok(100.0 * (index - expected) / denom)
}

/// Maximum-weight assignment on a `rows x cols` weight matrix with
/// `rows <= cols`; returns the column matched to each row.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let m = weights[0].len();
    assert!(n <= m, "assignment needs rows <= cols");
    // Hungarian algorithm with potentials on costs -w, 1-based internally.
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut way = vec![0usize; m + 1];
    // row matched to each column, 0 = free
    let mut matched = vec![0usize; m + 1];
    for i in 1..=n {
        matched[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = matched[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[matched[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched[j0] = matched[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if matched[j] != 0 {
            out[matched[j] - 1] = j - 1;
        }
    }
    out
}

/// Best one-to-one cluster alignment mass over `n`, times 100.
pub fn one_to_one(pred: &Clustering, gold: &Clustering) -> Result<f64> {
    check_universe(pred, gold)?;
    let n = pred.len();
    if n == 0 {
        return Ok(100.0);
    }
    let table = contingency(pred, gold);
    let (small, large, pred_rows) = if pred.num_clusters() <= gold.num_clusters() {
        (pred.num_clusters(), gold.num_clusters(), true)
    } else {
        (gold.num_clusters(), pred.num_clusters(), false)
    };
    let mut weights = vec![vec![0.0; large]; small];
    for (&(p, g), &count) in &table {
        let (r, c) = if pred_rows { (p, g) } else { (g, p) };
        weights[r][c] = count as f64;
    }
    let assignment = max_weight_assignment(&weights);
    let mass: f64 = assignment.iter().enumerate().map(|(r, &c)| weights[r][c]).sum();
    Ok(100.0 * mass / n as f64)
}

/// Exact-match counts, ignoring single-message conversations on both sides.
pub fn exact_match_counts(pred: &Clustering, gold: &Clustering) -> Result<MatchCounts> {
    check_universe(pred, gold)?;
    let multi = |c: &Clustering| -> BTreeSet<Vec<usize>> { c.members().into_iter().filter(|m| m.len() > 1).collect() };
    let p = multi(pred);
    let g = multi(gold);
    Ok(MatchCounts {
        correct: p.intersection(&g).count(),
        predicted: p.len(),
        gold: g.len(),
    })
}

/// Exact-match (precision, recall, f1); empty denominators give 0.
pub fn exact_match_prf(pred: &Clustering, gold: &Clustering) -> Result<(f64, f64, f64)> {
    let (p, r, f, _) = exact_match_counts(pred, gold)?.prf();
    Ok((p, r, f))
}

/// All scores for one channel.
pub fn score_channel(pred: &Clustering, gold: &Clustering) -> Result<MetricsReport> {
    let (precision, recall, f1, empty_denominator) = exact_match_counts(pred, gold)?.prf();
    Ok(MetricsReport {
        scaled_vi: scaled_vi(pred, gold)?,
        ari: ari(pred, gold)?,
        one_to_one: one_to_one(pred, gold)?,
        precision,
        recall,
        f1,
        empty_denominator,
    })
}

/// Scores predictions against gold channels, matched by name. VI, ARI and
/// 1-1 are averaged with weights proportional to channel length; P/R/F1
/// come from counts pooled over all channels.
pub fn evaluate(predictions: &[(String, Clustering)], gold: &[Channel]) -> Result<MetricsReport> {
    if gold.is_empty() {
        return Err(Error::EmptyCorpus("no gold channels to evaluate"));
    }
    let by_name: HashMap<&str, &Clustering> = predictions.iter().map(|(n, c)| (n.as_str(), c)).collect();
    let mut counts = MatchCounts::default();
    let mut report = MetricsReport::default();
    let mut total = 0usize;
    for ch in gold {
        let pred = by_name
            .get(ch.name.as_str())
            .ok_or_else(|| Error::MissingChannel(ch.name.clone()))?;
        let w = ch.len() as f64;
        report.scaled_vi += w * scaled_vi(pred, &ch.gold_clusters)?;
        report.ari += w * ari(pred, &ch.gold_clusters)?;
        report.one_to_one += w * one_to_one(pred, &ch.gold_clusters)?;
        counts.add(exact_match_counts(pred, &ch.gold_clusters)?);
        total += ch.len();
    }
    let total = total.max(1) as f64;
    report.scaled_vi /= total;
    report.ari /= total;
    report.one_to_one /= total;
    (report.precision, report.recall, report.f1, report.empty_denominator) = counts.prf();
    Ok(report)
}

impl MetricsReport {
    const COLUMNS: [&'static str; 6] = ["VI", "ARI", "1-1", "F1", "P", "R"];

    fn values(&self) -> [f64; 6] {
        [self.scaled_vi, self.ari, self.one_to_one, self.f1, self.precision, self.recall]
    }

    /// `KEY=value` lines in column order.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for (k, v) in Self::COLUMNS.iter().zip(self.values()) {
            writeln!(out, "{k}={v:.2}").unwrap();
        }
        out
    }

    /// Header row and one aligned value row.
    pub fn to_table(&self) -> String {
        let mut head = String::new();
        let mut row = String::new();
        for (k, v) in Self::COLUMNS.iter().zip(self.values()) {
            write!(head, "{k:>8}").unwrap();
            write!(row, "{v:>8.2}").unwrap();
        }
        format!("{head}\n{row}\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn part(labels: &[usize]) -> Clustering {
        Clustering::from_labels(labels)
    }

    const TOL: f64 = 1e-9;

    #[test]
    fn worked_values() {
        let a = part(&[0, 0, 1, 1]);
        let b = part(&[0, 1, 0, 1]);
        assert!((variation_of_information(&a, &b).unwrap() - 2.0).abs() < TOL);
        assert!(scaled_vi(&a, &b).unwrap().abs() < TOL);
        assert!((ari(&a, &b).unwrap() + 50.0).abs() < TOL);
        let c = part(&[0, 0, 1, 2]);
        // splitting one pair costs H(c|a) = 0.5 bits; H(a|c) = 0
        assert!((variation_of_information(&a, &c).unwrap() - 0.5).abs() < TOL);
        assert!((scaled_vi(&a, &c).unwrap() - 75.0).abs() < TOL);

        let gold = part(&[0, 0, 0, 1]);
        let pred = part(&[0, 0, 1, 1]);
        assert!((one_to_one(&pred, &gold).unwrap() - 75.0).abs() < TOL);

        let gold = part(&[0, 0, 0, 1, 1]);
        let pred = part(&[0, 0, 0, 1, 2]);
        let (p, r, f) = exact_match_prf(&pred, &gold).unwrap();
        assert!((p - 100.0).abs() < TOL);
        assert!((r - 50.0).abs() < TOL);
        assert!((f - 200.0 / 3.0).abs() < TOL);
    }

    #[test]
    fn identical_partitions_are_perfect() {
        let a = part(&[0, 1, 1, 2, 0, 2]);
        let r = score_channel(&a, &a).unwrap();
        for v in [r.scaled_vi, r.ari, r.one_to_one, r.precision, r.recall, r.f1] {
            assert!((v - 100.0).abs() < TOL);
        }
        assert!(!r.empty_denominator);
    }

    #[test]
    fn empty_denominators_are_flagged() {
        let singles = part(&[0, 1, 2]);
        let r = score_channel(&singles, &part(&[0, 0, 1])).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert!(r.empty_denominator);
    }

    #[test]
    fn universe_mismatch() {
        let a = part(&[0, 0]);
        let b = part(&[0, 0, 1]);
        assert!(matches!(scaled_vi(&a, &b), Err(Error::UniverseMismatch { left: 2, right: 3 })));
        assert!(ari(&a, &b).is_err());
        assert!(one_to_one(&a, &b).is_err());
        assert!(exact_match_prf(&a, &b).is_err());
    }

    #[test]
    fn assignment_small_cases() {
        assert_eq!(max_weight_assignment(&[vec![1.0, 5.0], vec![4.0, 6.0]]), vec![1, 0]);
        assert_eq!(max_weight_assignment(&[vec![0.0, 0.0, 9.0]]), vec![2]);
    }

    #[test]
    fn report_formats() {
        let r = MetricsReport {
            scaled_vi: 92.6,
            ari: 69.6,
            one_to_one: 78.5,
            precision: 44.0,
            recall: 44.2,
            f1: 44.1,
            empty_denominator: false,
        };
        let kv = r.to_key_values();
        assert_eq!(kv.lines().next(), Some("VI=92.60"));
        assert!(kv.contains("1-1=78.50\nF1=44.10\nP=44.00\nR=44.20\n"));
        let table = r.to_table();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0].len(), lines[1].len());
    }

    fn gold_channel(name: &str, parents: &[usize]) -> Channel {
        let text: String = parents
            .iter()
            .enumerate()
            .map(|(i, p)| format!("{p}\t{i}\t[10:00] u{i}: hello\n"))
            .collect();
        Channel::parse(name, &text, std::path::Path::new(name)).unwrap()
    }

    #[test]
    fn evaluate_weights_and_pools() {
        let a = gold_channel("a", &[0, 0, 1, 3, 3]);
        let b = gold_channel("b", &[0, 1, 0]);
        let pa = part(&[0, 0, 0, 1, 2]);
        let pb = part(&[0, 1, 0]);
        let single = evaluate(&[("a".into(), pa.clone())], std::slice::from_ref(&a)).unwrap();
        assert_eq!(single, score_channel(&pa, &a.gold_clusters).unwrap());

        let twice = evaluate(
            &[("a".into(), pa.clone()), ("a2".into(), pa.clone())],
            &[a.clone(), Channel { name: "a2".into(), ..a.clone() }],
        )
        .unwrap();
        for (x, y) in [
            (twice.scaled_vi, single.scaled_vi),
            (twice.ari, single.ari),
            (twice.one_to_one, single.one_to_one),
            (twice.f1, single.f1),
        ] {
            assert!((x - y).abs() < TOL);
        }

        let both = evaluate(&[("b".into(), pb.clone()), ("a".into(), pa.clone())], &[a.clone(), b.clone()]).unwrap();
        let sa = score_channel(&pa, &a.gold_clusters).unwrap();
        let sb = score_channel(&pb, &b.gold_clusters).unwrap();
        assert!((both.scaled_vi - (5.0 * sa.scaled_vi + 3.0 * sb.scaled_vi) / 8.0).abs() < TOL);
        let mut counts = exact_match_counts(&pa, &a.gold_clusters).unwrap();
        counts.add(exact_match_counts(&pb, &b.gold_clusters).unwrap());
        assert_eq!((both.precision, both.recall, both.f1), {
            let (p, r, f, _) = counts.prf();
            (p, r, f)
        });
        assert!(matches!(
            evaluate(&[("a".into(), pa)], &[a, b]),
            Err(Error::MissingChannel(name)) if name == "b"
        ));
    }

    // Independent oracles.

    fn oracle_vi(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len() as f64;
        let labels = |x: &[usize]| x.iter().copied().collect::<BTreeSet<_>>();
        let (la, lb) = (labels(a), labels(b));
        let prob = |f: &dyn Fn(usize) -> bool| (0..a.len()).filter(|&i| f(i)).count() as f64 / n;
        let mut vi = 0.0;
        for &x in &la {
            for &y in &lb {
                let pxy = prob(&|i| a[i] == x && b[i] == y);
                if pxy > 0.0 {
                    let px = prob(&|i| a[i] == x);
                    let py = prob(&|i| b[i] == y);
                    vi -= pxy * ((pxy / px).log2() + (pxy / py).log2());
                }
            }
        }
        vi
    }

    fn oracle_ari(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut ss, mut sd, mut ds, mut dd) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => ss += 1.0,
                    (true, false) => sd += 1.0,
                    (false, true) => ds += 1.0,
                    (false, false) => dd += 1.0,
                }
            }
        }
        // Hubert-Arabie form in terms of pair agreements
        let num = 2.0 * (ss * dd - sd * ds);
        let den = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
        if den == 0.0 {
            100.0
        } else {
            100.0 * num / den
        }
    }

    fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.clone();
            let x = rest.remove(i);
            for mut p in permutations(rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }

    fn oracle_one_to_one(a: &[usize], b: &[usize]) -> f64 {
        let ka = a.iter().max().unwrap() + 1;
        let kb = b.iter().max().unwrap() + 1;
        let k = ka.max(kb);
        let mut best = 0;
        // map each cluster of `a` to a distinct label of `b`; padded labels match nothing
        for perm in permutations((0..k).collect()) {
            let mass = (0..a.len()).filter(|&i| perm[a[i]] == b[i]).count();
            best = best.max(mass);
        }
        100.0 * best as f64 / a.len() as f64
    }

    fn oracle_prf(a: &[usize], b: &[usize]) -> (f64, f64, f64) {
        let groups = |x: &[usize]| -> Vec<BTreeSet<usize>> {
            let mut g: Vec<BTreeSet<usize>> = Vec::new();
            for label in x.iter().copied().collect::<BTreeSet<_>>() {
                let s: BTreeSet<usize> = (0..x.len()).filter(|&i| x[i] == label).collect();
                if s.len() > 1 {
                    g.push(s);
                }
            }
            g
        };
        let (ga, gb) = (groups(a), groups(b));
        let correct = ga.iter().filter(|s| gb.contains(s)).count() as f64;
        let p = if ga.is_empty() { 0.0 } else { 100.0 * correct / ga.len() as f64 };
        let r = if gb.is_empty() { 0.0 } else { 100.0 * correct / gb.len() as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f)
    }

    fn canonical(x: &[usize]) -> Vec<usize> {
        part(x).assignment().to_vec()
    }

    fn partition_pair() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
        (2usize..=12).prop_flat_map(|n| (prop::collection::vec(0usize..7, n), prop::collection::vec(0usize..7, n)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn metrics_match_oracles((a, b) in partition_pair()) {
            let (a, b) = (canonical(&a), canonical(&b));
            let (pa, pb) = (part(&a), part(&b));
            let n = a.len() as f64;
            let vi = oracle_vi(&a, &b);
            prop_assert!((scaled_vi(&pa, &pb).unwrap() - 100.0 * (1.0 - vi / n.log2())).abs() < TOL);
            prop_assert!((ari(&pa, &pb).unwrap() - oracle_ari(&a, &b)).abs() < TOL);
            prop_assert!((one_to_one(&pa, &pb).unwrap() - oracle_one_to_one(&a, &b)).abs() < TOL);
            let (p, r, f) = exact_match_prf(&pa, &pb).unwrap();
            let (op, or, of) = oracle_prf(&a, &b);
            prop_assert!((p - op).abs() < TOL && (r - or).abs() < TOL && (f - of).abs() < TOL);
        }

        #[test]
        fn symmetry_and_bounds((a, b) in partition_pair()) {
            let (pa, pb) = (part(&a), part(&b));
            let vi = scaled_vi(&pa, &pb).unwrap();
            prop_assert!((vi - scaled_vi(&pb, &pa).unwrap()).abs() < TOL);
            prop_assert!((ari(&pa, &pb).unwrap() - ari(&pb, &pa).unwrap()).abs() < TOL);
            let oo = one_to_one(&pa, &pb).unwrap();
            prop_assert!((oo - one_to_one(&pb, &pa).unwrap()).abs() < TOL);
            let (p, _, _) = exact_match_prf(&pa, &pb).unwrap();
            let (_, r, _) = exact_match_prf(&pb, &pa).unwrap();
            prop_assert!((p - r).abs() < TOL);
            prop_assert!((-TOL..=100.0 + TOL).contains(&vi));
            prop_assert!((-TOL..=100.0 + TOL).contains(&oo));
            let identical = pa == pb;
            prop_assert_eq!((vi - 100.0).abs() < TOL, identical);
            prop_assert_eq!((oo - 100.0).abs() < TOL, identical);
        }

        #[test]
        fn ari_ignores_label_names(a in prop::collection::vec(0usize..5, 2..12), shift in 1usize..9) {
            let renamed: Vec<usize> = a.iter().map(|x| (x + shift) * 3).collect();
            let b: Vec<usize> = a.iter().rev().copied().collect();
            let lhs = ari(&part(&a), &part(&b)).unwrap();
            let rhs = ari(&part(&renamed), &part(&b)).unwrap();
            prop_assert!((lhs - rhs).abs() < TOL);
        }
    }
}
