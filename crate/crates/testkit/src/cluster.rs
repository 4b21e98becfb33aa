//! Exhaustive agglomeration oracle: at every step it rescans all active
//! cluster pairs and recomputes the linkage distance directly from raw
//! point-pair distances, with the same smallest-(a, b) tie rule as the
//! main implementation.

use feederlab::analysis::{Dendrogram, Linkage, Merge};

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn cluster_distance(rows: &[Vec<f64>], a: &[usize], b: &[usize], linkage: Linkage) -> f64 {
    let mut acc = match linkage {
        Linkage::Single => f64::INFINITY,
        Linkage::Complete => f64::NEG_INFINITY,
        Linkage::Average => 0.0,
    };
    for &i in a {
        for &j in b {
            let d = euclidean(&rows[i], &rows[j]);
            acc = match linkage {
                Linkage::Single => acc.min(d),
                Linkage::Complete => acc.max(d),
                Linkage::Average => acc + d,
            };
        }
    }
    if linkage == Linkage::Average {
        acc /= (a.len() * b.len()) as f64;
    }
    acc
}

/// Brute-force agglomerative clustering, O(n^4); fine for the tiny point
/// sets it is used on.
pub fn brute_force_agglomeration(rows: &[Vec<f64>], linkage: Linkage) -> Dendrogram {
    let n = rows.len();
    assert!(n >= 2);
    // (cluster id, member point indices)
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..(n - 1) {
        let mut best: Option<((usize, usize), (usize, usize), f64)> = None;
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let (id_i, members_i) = &clusters[i];
                let (id_j, members_j) = &clusters[j];
                let key = (*id_i.min(id_j), *id_i.max(id_j));
                let d = cluster_distance(rows, members_i, members_j, linkage);
                let better = match &best {
                    None => true,
                    Some((bk, _, bd)) => d < *bd || (d == *bd && key < *bk),
                };
                if better {
                    best = Some((key, (i, j), d));
                }
            }
        }
        let ((a, b), (i, j), d) = best.unwrap();
        merges.push(Merge {
            cluster_a: a,
            cluster_b: b,
            distance: d,
        });
        let mut merged = clusters[i].1.clone();
        merged.extend_from_slice(&clusters[j].1);
        // Remove the higher position first so the lower index stays valid.
        clusters.remove(j);
        clusters.remove(i);
        clusters.push((n + step, merged));
    }
    Dendrogram {
        leaf_count: n,
        merges,
    }
}
