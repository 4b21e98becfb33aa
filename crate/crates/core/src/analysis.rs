//! Unsupervised tools for the transformer-level path: principal component
//! analysis on a Jacobi eigendecomposition, and agglomerative hierarchical
//! clustering with single/complete/average linkage.

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps annihilate one off-diagonal element at a time until the
/// off-diagonal Frobenius norm drops below 1e-12. Returns eigenvalues and
/// the matching eigenvectors as rows, unsorted.
pub fn jacobi_eigen_sym(matrix: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = matrix.len();
    if n == 0 || matrix.iter().any(|row| row.len() != n) {
        return Err(Error::Analysis("matrix must be square and non-empty".into()));
    }
    for i in 0..n {
        for j in 0..i {
            if (matrix[i][j] - matrix[j][i]).abs() > 1e-9 {
                return Err(Error::Analysis(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    // v starts as identity; columns accumulate the rotations.
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }

    let off = |a: &[Vec<f64>]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i][j] * a[i][j];
                }
            }
        }
        s.sqrt()
    };

    for _sweep in 0..100 {
        if off(&a) < 1e-12 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                // Smaller-magnitude root keeps the rotation stable.
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    if off(&a) >= 1e-12 {
        return Err(Error::Analysis("jacobi sweeps did not converge".into()));
    }

    let eigenvalues: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    // Column k of v is the eigenvector for eigenvalue k; return as rows.
    let eigenvectors: Vec<Vec<f64>> = (0..n).map(|k| (0..n).map(|i| v[i][k]).collect()).collect();
    Ok((eigenvalues, eigenvectors))
}

/// A fitted PCA basis.
#[derive(Debug, Clone)]
pub struct PCAModel {
    pub mean: Vec<f64>,
    /// Orthonormal component rows, sorted by eigenvalue descending, with
    /// the largest-magnitude entry of each row made positive.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the kept components, descending.
    pub eigenvalues: Vec<f64>,
    /// Share of the total variance per kept component.
    pub explained_ratio: Vec<f64>,
}

/// Fit PCA on row-major observations: center by the column means and
/// eigendecompose the sample covariance.
pub fn pca_fit(rows: &[Vec<f64>], n_components: usize) -> Result<PCAModel> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Analysis("pca needs at least 2 rows".into()));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Analysis("rows have inconsistent widths".into()));
    }
    if n_components == 0 || n_components > dim {
        return Err(Error::Analysis(format!(
            "n_components {n_components} outside 1..={dim}"
        )));
    }

    let mut mean = vec![0.0; dim];
    for row in rows {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut cov = vec![vec![0.0; dim]; dim];
    for row in rows {
        for i in 0..dim {
            let di = row[i] - mean[i];
            for j in i..dim {
                cov[i][j] += di * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }

    let (eigenvalues, eigenvectors) = jacobi_eigen_sym(&cov)?;
    let total: f64 = eigenvalues.iter().sum();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| eigenvalues[j].total_cmp(&eigenvalues[i]));

    let mut components = Vec::with_capacity(n_components);
    let mut kept_values = Vec::with_capacity(n_components);
    let mut ratios = Vec::with_capacity(n_components);
    for &idx in order.iter().take(n_components) {
        let mut comp = eigenvectors[idx].clone();
        // Sign convention: the largest-magnitude entry is positive.
        let lead = comp
            .iter()
            .cloned()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            comp.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(comp);
        kept_values.push(eigenvalues[idx]);
        ratios.push(if total > 0.0 { eigenvalues[idx] / total } else { 0.0 });
    }
    Ok(PCAModel {
        mean,
        components,
        eigenvalues: kept_values,
        explained_ratio: ratios,
    })
}

/// Project rows on the fitted basis: `(x - mean) . components^T`.
pub fn pca_transform(model: &PCAModel, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let dim = model.mean.len();
    rows.iter()
        .map(|row| {
            if row.len() != dim {
                return Err(Error::Analysis(format!(
                    "row width {} does not match fitted dim {dim}",
                    row.len()
                )));
            }
            Ok(model
                .components
                .iter()
                .map(|comp| {
                    comp.iter()
                        .zip(row.iter().zip(&model.mean))
                        .map(|(c, (x, m))| c * (x - m))
                        .sum()
                })
                .collect())
        })
        .collect()
}

/// Map scores back to the original space.
pub fn pca_reconstruct(model: &PCAModel, scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
    scores
        .iter()
        .map(|score| {
            let mut row = model.mean.clone();
            for (weight, comp) in score.iter().zip(&model.components) {
                for (x, c) in row.iter_mut().zip(comp) {
                    *x += weight * c;
                }
            }
            row
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    Single,
    Complete,
    Average,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub distance: f64,
}

/// Stepwise dendrogram: clusters 0..n-1 are the leaves, merge `i` creates
/// cluster `n + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub leaf_count: usize,
    pub merges: Vec<Merge>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Agglomerative clustering with Euclidean base distance and
/// Lance-Williams linkage updates. Ties break towards the smallest
/// (cluster a, cluster b) id pair.
pub fn hierarchical_cluster(rows: &[Vec<f64>], linkage: Linkage) -> Result<Dendrogram> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::Analysis("clustering needs at least 2 points".into()));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Analysis("rows have inconsistent widths".into()));
    }

    // Active clusters: id -> member size. Distances keyed by (low, high) id.
    let mut active: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; n];
    let mut dist: std::collections::BTreeMap<(usize, usize), f64> =
        std::collections::BTreeMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            dist.insert((i, j), euclidean(&rows[i], &rows[j]));
        }
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..(n - 1) {
        let mut best: Option<((usize, usize), f64)> = None;
        for (ai, &a) in active.iter().enumerate() {
            for &b in active.iter().skip(ai + 1) {
                let key = (a.min(b), a.max(b));
                let d = dist[&key];
                let better = match best {
                    None => true,
                    Some((bk, bd)) => d < bd || (d == bd && key < bk),
                };
                if better {
                    best = Some((key, d));
                }
            }
        }
        let ((a, b), d) = best.expect("at least two active clusters remain");
        let new_id = n + step;
        merges.push(Merge {
            cluster_a: a,
            cluster_b: b,
            distance: d,
        });

        size.push(size[a] + size[b]);
        active.retain(|&c| c != a && c != b);
        for &c in &active {
            let da = dist[&(a.min(c), a.max(c))];
            let db = dist[&(b.min(c), b.max(c))];
            let updated = match linkage {
                Linkage::Single => da.min(db),
                Linkage::Complete => da.max(db),
                Linkage::Average => {
                    (size[a] as f64 * da + size[b] as f64 * db) / (size[a] + size[b]) as f64
                }
            };
            dist.insert((c.min(new_id), c.max(new_id)), updated);
        }
        active.push(new_id);
    }
    Ok(Dendrogram {
        leaf_count: n,
        merges,
    })
}

/// Undo the last `k - 1` merges and label each leaf by its cluster, with
/// cluster indices assigned in leaf order of first appearance.
pub fn cut_dendrogram(dendrogram: &Dendrogram, k: usize) -> Result<Vec<usize>> {
    let n = dendrogram.leaf_count;
    if k == 0 || k > n {
        return Err(Error::Analysis(format!("k {k} outside 1..={n}")));
    }
    let applied = n - k;
    let mut root: Vec<usize> = (0..(n + applied)).collect();
    fn find(root: &mut Vec<usize>, mut i: usize) -> usize {
        while root[i] != i {
            root[i] = root[root[i]];
            i = root[i];
        }
        i
    }
    for (step, merge) in dendrogram.merges.iter().take(applied).enumerate() {
        let target = n + step;
        let ra = find(&mut root, merge.cluster_a);
        let rb = find(&mut root, merge.cluster_b);
        root[ra] = target;
        root[rb] = target;
    }
    let mut label_of_root = std::collections::BTreeMap::new();
    let mut labels = Vec::with_capacity(n);
    for leaf in 0..n {
        let r = find(&mut root, leaf);
        let next = label_of_root.len();
        labels.push(*label_of_root.entry(r).or_insert(next));
    }
    Ok(labels)
}

/// Export a dendrogram as `step,cluster_a,cluster_b,distance` CSV rows.
pub fn dendrogram_csv(dendrogram: &Dendrogram) -> String {
    let mut out = String::from("step,cluster_a,cluster_b,distance\n");
    for (step, m) in dendrogram.merges.iter().enumerate() {
        out.push_str(&format!(
            "{step},{},{},{}\n",
            m.cluster_a, m.cluster_b, m.distance
        ));
    }
    out
}
