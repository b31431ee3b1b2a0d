//! Brute-force reference implementations for the metric and loss checks.
//!
//! Shared with the acceptance suite of the `densecap` crate.
#![allow(dead_code)]

use std::collections::HashMap;

/// Mean pairwise IoU of `[start, end]` intervals measured by counting the
/// midpoints of `cells` equal cells of [0, 1] that fall inside each interval.
pub fn grid_pt_iou(intervals: &[(f64, f64)], cells: usize) -> f64 {
    let n = intervals.len();
    if n < 2 {
        return 0.0;
    }
    let cover: Vec<Vec<bool>> = intervals
        .iter()
        .map(|&(s, e)| {
            (0..cells)
                .map(|i| {
                    let x = (i as f64 + 0.5) / cells as f64;
                    s <= x && x <= e
                })
                .collect()
        })
        .collect();
    let mut total = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            let inter = cover[a].iter().zip(&cover[b]).filter(|(x, y)| **x && **y).count();
            let union = cover[a].iter().zip(&cover[b]).filter(|(x, y)| **x || **y).count();
            total += if union == 0 {
                // Both intervals shorter than a cell: fall back to identity.
                if intervals[a] == intervals[b] {
                    1.0
                } else {
                    0.0
                }
            } else {
                inter as f64 / union as f64
            };
        }
    }
    total / (n * (n - 1) / 2) as f64
}

fn words(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn grams(ws: &[String], n: usize) -> Vec<String> {
    if ws.len() < n {
        return Vec::new();
    }
    (0..=ws.len() - n).map(|i| ws[i..i + n].join(" ")).collect()
}

/// Per-pair CIDEr by direct enumeration of n-gram strings.
pub fn brute_cider(pairs: &[(&str, &str)]) -> Vec<f64> {
    let m = pairs.len() as f64;
    let mut out = vec![0.0; pairs.len()];
    for n in 1..=4 {
        let ref_grams: Vec<Vec<String>> = pairs.iter().map(|(_, r)| grams(&words(r), n)).collect();
        let df = |g: &str| ref_grams.iter().filter(|rg| rg.iter().any(|x| x == g)).count() as f64;
        for (k, (c, _)) in pairs.iter().enumerate() {
            let cg = grams(&words(c), n);
            let rg = &ref_grams[k];
            let mut keys: Vec<&String> = cg.iter().chain(rg.iter()).collect();
            keys.sort();
            keys.dedup();
            let vec_of = |gs: &Vec<String>| -> Vec<f64> {
                keys.iter()
                    .map(|key| {
                        let tf = gs.iter().filter(|g| g == key).count() as f64;
                        tf * (m / df(key).max(1.0)).ln()
                    })
                    .collect()
            };
            let (vc, vr) = (vec_of(&cg), vec_of(rg));
            let dot: f64 = vc.iter().zip(&vr).map(|(a, b)| a * b).sum();
            let nc = vc.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nr = vr.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nc > 0.0 && nr > 0.0 {
                out[k] += dot / (nc * nr) / 4.0;
            }
        }
    }
    out
}

/// IoU of integer-valued intervals computed from endpoint arithmetic.
pub fn int_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = a.1.min(b.1) - a.0.max(b.0);
    if inter <= 0.0 {
        if a.1 - a.0 == 0.0 && b.1 - b.0 == 0.0 && a == b {
            return 1.0;
        }
        return 0.0;
    }
    inter / ((a.1 - a.0) + (b.1 - b.0) - inter)
}

/// Every matching of the threshold graph (as sorted edge lists).
fn all_matchings(edges: &[(usize, usize)]) -> Vec<Vec<(usize, usize)>> {
    fn go(edges: &[(usize, usize)], k: usize, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if k == edges.len() {
            out.push(cur.clone());
            return;
        }
        go(edges, k + 1, cur, out);
        let (i, j) = edges[k];
        if cur.iter().all(|&(a, b)| a != i && b != j) {
            cur.push((i, j));
            go(edges, k + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(edges, 0, &mut Vec::new(), &mut out);
    out
}

/// The unique matching in which every unmatched eligible pair is blocked by
/// an adjacent matched pair that ranks ahead of it (higher IoU, then lower
/// (pred, gt) index). Returns the sorted pair list; panics unless exactly one
/// such matching exists.
pub fn stable_matching(preds: &[(f64, f64)], gts: &[(f64, f64)], threshold: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for (i, &p) in preds.iter().enumerate() {
        for (j, &g) in gts.iter().enumerate() {
            if int_iou(p, g) >= threshold {
                edges.push((i, j));
            }
        }
    }
    let ahead = |a: (usize, usize), b: (usize, usize)| {
        let (ia, ib) = (int_iou(preds[a.0], gts[a.1]), int_iou(preds[b.0], gts[b.1]));
        ia > ib || (ia == ib && a < b)
    };
    let stable: Vec<Vec<(usize, usize)>> = all_matchings(&edges)
        .into_iter()
        .filter(|m| {
            edges.iter().filter(|e| !m.contains(e)).all(|&e| {
                m.iter().any(|&x| (x.0 == e.0 || x.1 == e.1) && ahead(x, e))
            })
        })
        .collect();
    assert_eq!(stable.len(), 1, "stable matchings: {stable:?}");
    let mut m = stable.into_iter().next().unwrap();
    m.sort();
    m
}

/// Best order-preserving alignment value by enumerating every pair of
/// increasing index subsequences of equal length. `weight(i, j)` is the pair
/// weight for time-sorted indices; returns `2V / (n_pred + n_gt)`.
pub fn enumerate_alignment<W: Fn(usize, usize) -> f64>(n_pred: usize, n_gt: usize, weight: W) -> f64 {
    if n_pred == 0 || n_gt == 0 {
        return 0.0;
    }
    let subsets = |n: usize| -> Vec<Vec<usize>> {
        (0u32..1 << n)
            .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
            .collect()
    };
    let (sp, sg) = (subsets(n_pred), subsets(n_gt));
    let mut best = 0.0f64;
    for p in &sp {
        for g in sg.iter().filter(|g| g.len() == p.len()) {
            let mut v = 0.0;
            for (&i, &j) in p.iter().zip(g) {
                v += weight(i, j);
            }
            best = best.max(v);
        }
    }
    2.0 * best / (n_pred + n_gt) as f64
}

/// All sequences of length `0..=max_len` over `pool` indices.
pub fn sequences(pool: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for k in 0..pool {
                let mut t: Vec<usize> = s.clone();
                t.push(k);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Sentence-pair weight table keyed by sentence text.
pub struct TableScorer(pub HashMap<(String, String), f64>);

impl densecap_core::eval::SentenceScorer for TableScorer {
    fn score(&self, candidate: &str, reference: &str) -> f64 {
        self.0
            .get(&(candidate.to_string(), reference.to_string()))
            .copied()
            .unwrap_or(0.0)
    }
}
