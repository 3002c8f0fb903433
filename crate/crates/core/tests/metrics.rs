mod common;

use common::rng;
use imvc::metrics::{accuracy, ari, evaluate, nmi};
use rand::Rng;

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
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

fn brute_force_accuracy(pred: &[usize], truth: &[usize], k: usize) -> f64 {
    permutations(k)
        .iter()
        .map(|perm| pred.iter().zip(truth).filter(|(&p, &t)| perm[p] == t).count())
        .max()
        .unwrap() as f64
        / pred.len() as f64
}

#[test]
fn accuracy_matches_exhaustive_search() {
    let mut r = rng(21);
    for _ in 0..1000 {
        let k = r.random_range(1..=6);
        let n = r.random_range(1..=10);
        let pred: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        assert_eq!(accuracy(&pred, &truth).unwrap(), brute_force_accuracy(&pred, &truth, k));
    }
}

#[test]
fn four_sample_examples_are_exact() {
    assert_eq!(accuracy(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap(), 0.75);
    assert_eq!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), 0.0);
    assert_eq!(ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), -0.5);
    let s = evaluate(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap();
    assert_eq!((s.acc, s.ari), (1.0, 1.0));
    assert!((s.nmi - 1.0).abs() < 1e-15);
}
