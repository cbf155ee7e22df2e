//! Brute-force reference implementations of the evaluation metrics.
//!
//! These are written independently of the library (different algorithms,
//! no shared helpers) so that agreement between the two is meaningful.

#![allow(dead_code)]

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn scores(tp: usize, fp: usize, fn_: usize) -> Scores {
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Scores { precision, recall, f1 }
}

/// Segments as inclusive index ranges, found by testing each index for a
/// rising edge and walking forward.
fn runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..flags.len() {
        let rising = flags[i] && (i == 0 || !flags[i - 1]);
        if rising {
            let mut j = i;
            while j + 1 < flags.len() && flags[j + 1] {
                j += 1;
            }
            out.push((i, j));
        }
    }
    out
}

pub fn point(labels: &[bool], preds: &[bool]) -> Scores {
    let tp = (0..labels.len()).filter(|&i| labels[i] && preds[i]).count();
    let fp = (0..labels.len()).filter(|&i| !labels[i] && preds[i]).count();
    let fn_ = (0..labels.len()).filter(|&i| labels[i] && !preds[i]).count();
    scores(tp, fp, fn_)
}

pub fn range(labels: &[bool], preds: &[bool]) -> Scores {
    let truth = runs(labels);
    let predicted = runs(preds);
    let mut tp = 0;
    let mut fn_ = 0;
    for &(a, b) in &truth {
        if (a..=b).any(|i| preds[i]) {
            tp += 1;
        } else {
            fn_ += 1;
        }
    }
    let mut fp = 0;
    for &(a, b) in &predicted {
        let overlaps = truth.iter().any(|&(c, d)| a <= d && c <= b);
        if !overlaps {
            fp += 1;
        }
    }
    scores(tp, fp, fn_)
}

/// Exhaustive maximum matching of events to predicted positives.
fn best_matching(windows: &[Vec<usize>], used: &mut Vec<bool>, idx: usize) -> usize {
    if idx == windows.len() {
        return 0;
    }
    // Option 1: leave this event unmatched.
    let mut best = best_matching(windows, used, idx + 1);
    for &p in &windows[idx] {
        if !used[p] {
            used[p] = true;
            best = best.max(1 + best_matching(windows, used, idx + 1));
            used[p] = false;
        }
    }
    best
}

pub fn event(labels: &[bool], preds: &[bool], tolerance: usize) -> Scores {
    let n = labels.len();
    let onsets: Vec<usize> = runs(labels).into_iter().map(|(a, _)| a).collect();
    let windows: Vec<Vec<usize>> = onsets
        .iter()
        .map(|&o| (o..n).filter(|&i| i - o <= tolerance && preds[i]).collect())
        .collect();
    let tp = best_matching(&windows, &mut vec![false; n], 0);
    let fn_ = onsets.len() - tp;
    let fp = runs(preds)
        .into_iter()
        .filter(|&(a, b)| {
            !(a..=b).any(|i| onsets.iter().any(|&o| i >= o && i - o <= tolerance))
        })
        .count();
    scores(tp, fp, fn_)
}

/// `(true cause, candidates)` pairs.
pub type Rca = (String, Vec<String>);

fn rank_of(case: &Rca) -> Option<usize> {
    let mut r = None;
    for (i, c) in case.1.iter().enumerate() {
        if *c == case.0 {
            r = Some(i + 1);
            break;
        }
    }
    r
}

pub fn accuracy_at_k(cases: &[Rca], k: usize) -> f64 {
    let mut hits = 0usize;
    for case in cases {
        let limit = k.min(case.1.len());
        if case.1[..limit].contains(&case.0) {
            hits += 1;
        }
    }
    hits as f64 / cases.len() as f64
}

pub fn avg_at_k(cases: &[Rca], k: usize) -> f64 {
    let mut total = 0.0;
    for j in 1..=k {
        total += accuracy_at_k(cases, j);
    }
    total / k as f64
}

pub fn mar(cases: &[Rca]) -> f64 {
    let mut total = 0.0;
    for case in cases {
        total += match rank_of(case) {
            Some(r) => r as f64,
            None => (case.1.len() + 1) as f64,
        };
    }
    total / cases.len() as f64
}

/// `(true label, ranked predictions)` pairs.
pub type Cls = (String, Vec<String>);

pub fn top_at_k(cases: &[Cls], k: usize) -> f64 {
    let mut hits = 0;
    for (truth, preds) in cases {
        for (i, p) in preds.iter().enumerate() {
            if i < k && p == truth {
                hits += 1;
                break;
            }
        }
    }
    hits as f64 / cases.len() as f64
}

/// Per-class (tp, fp, fn, support) from a full confusion matrix of
/// top-1 predictions; `None` predictions form their own column.
fn confusion(cases: &[Cls]) -> BTreeMap<String, (usize, usize, usize, usize)> {
    let mut matrix: BTreeMap<(String, Option<String>), usize> = BTreeMap::new();
    let mut classes: Vec<String> = Vec::new();
    for (truth, preds) in cases {
        let p = preds.first().cloned();
        *matrix.entry((truth.clone(), p.clone())).or_insert(0) += 1;
        classes.push(truth.clone());
        if let Some(p) = p {
            classes.push(p);
        }
    }
    classes.sort();
    classes.dedup();
    let mut out = BTreeMap::new();
    for c in &classes {
        let mut tp = 0;
        let mut fp = 0;
        let mut fn_ = 0;
        let mut support = 0;
        for ((t, p), n) in &matrix {
            let predicted_c = p.as_deref() == Some(c.as_str());
            if t == c {
                support += n;
                if predicted_c {
                    tp += n;
                } else {
                    fn_ += n;
                }
            } else if predicted_c {
                fp += n;
            }
        }
        out.insert(c.clone(), (tp, fp, fn_, support));
    }
    out
}

pub fn micro_f1(cases: &[Cls]) -> Scores {
    let conf = confusion(cases);
    let tp: usize = conf.values().map(|v| v.0).sum();
    let fp: usize = conf.values().map(|v| v.1).sum();
    let fn_: usize = conf.values().map(|v| v.2).sum();
    scores(tp, fp, fn_)
}

fn averaged(cases: &[Cls], weighted: bool) -> Scores {
    let conf = confusion(cases);
    let total_support: usize = conf.values().map(|v| v.3).sum();
    let mut acc = Scores {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    for &(tp, fp, fn_, support) in conf.values() {
        let s = scores(tp, fp, fn_);
        let w = if weighted {
            support as f64 / total_support as f64
        } else {
            1.0 / conf.len() as f64
        };
        acc.precision += w * s.precision;
        acc.recall += w * s.recall;
        acc.f1 += w * s.f1;
    }
    acc
}

pub fn macro_f1(cases: &[Cls]) -> Scores {
    averaged(cases, false)
}

pub fn weighted_f1(cases: &[Cls]) -> Scores {
    averaged(cases, true)
}
