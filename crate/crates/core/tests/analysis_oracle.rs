//! Cross-checks PCA eigenvalues against the characteristic-polynomial
//! oracle and the clustering implementation against exhaustive
//! agglomeration.

use feederlab::analysis::{hierarchical_cluster, jacobi_eigen_sym, pca_fit, Linkage};
use feederlab::rng::SplitMix64;
use feederlab_testkit::cluster::brute_force_agglomeration;
use feederlab_testkit::eigen::charpoly_eigenvalues;

/// Random symmetric PSD matrix built as B B^T / k.
fn random_psd(rng: &mut SplitMix64, n: usize) -> Vec<Vec<f64>> {
    let b: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n + 2).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .collect();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            m[i][j] = b[i]
                .iter()
                .zip(&b[j])
                .map(|(x, y)| x * y)
                .sum::<f64>()
                / (n + 2) as f64;
        }
    }
    m
}

#[test]
fn fixed_3x3_eigenvalues_match_charpoly_oracle() {
    let m = vec![
        vec![2.0, 0.5, 0.1],
        vec![0.5, 1.5, 0.3],
        vec![0.1, 0.3, 1.0],
    ];
    let oracle = charpoly_eigenvalues(&m);
    let (mut jacobi, _) = jacobi_eigen_sym(&m).unwrap();
    jacobi.sort_by(f64::total_cmp);
    for (a, b) in jacobi.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-10, "jacobi {a} vs oracle {b}");
    }
}

#[test]
fn jacobi_matches_charpoly_on_20_random_fixtures() {
    let mut rng = SplitMix64::new(404);
    for trial in 0..20 {
        let n = 2 + trial % 3; // 2..=4
        let m = random_psd(&mut rng, n);
        let oracle = charpoly_eigenvalues(&m);
        let (mut jacobi, _) = jacobi_eigen_sym(&m).unwrap();
        jacobi.sort_by(f64::total_cmp);
        for (a, b) in jacobi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "trial {trial}: jacobi {a} vs oracle {b}");
        }
    }
}

#[test]
fn pca_eigenvalues_match_charpoly_oracle() {
    let mut rng = SplitMix64::new(505);
    for trial in 0..20 {
        let dim = 2 + trial % 3;
        let rows: Vec<Vec<f64>> = (0..dim + 6)
            .map(|_| (0..dim).map(|_| rng.uniform(-2.0, 2.0)).collect())
            .collect();
        let model = pca_fit(&rows, dim).unwrap();

        // Covariance recomputed independently for the oracle.
        let n = rows.len();
        let mut mean = vec![0.0; dim];
        for row in &rows {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x / n as f64;
            }
        }
        let mut cov = vec![vec![0.0; dim]; dim];
        for row in &rows {
            for i in 0..dim {
                for j in 0..dim {
                    cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]) / (n - 1) as f64;
                }
            }
        }
        let mut oracle = charpoly_eigenvalues(&cov);
        oracle.reverse(); // descending, like the model
        for (a, b) in model.eigenvalues.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "trial {trial}: pca {a} vs oracle {b}");
        }
    }
}

#[test]
fn clustering_matches_brute_force_on_small_sets() {
    let mut rng = SplitMix64::new(606);
    for trial in 0..100 {
        let linkage = [Linkage::Single, Linkage::Complete, Linkage::Average][trial % 3];
        let n = 2 + rng.below(5); // 2..=6 points
        let dim = 1 + rng.below(3);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.uniform(-3.0, 3.0)).collect())
            .collect();
        let got = hierarchical_cluster(&rows, linkage).unwrap();
        let want = brute_force_agglomeration(&rows, linkage);
        assert_eq!(got.leaf_count, want.leaf_count);
        for (step, (g, w)) in got.merges.iter().zip(&want.merges).enumerate() {
            assert_eq!(
                (g.cluster_a, g.cluster_b),
                (w.cluster_a, w.cluster_b),
                "trial {trial} step {step} ({linkage:?})"
            );
            assert!(
                (g.distance - w.distance).abs() < 1e-9,
                "trial {trial} step {step}: {} vs {}",
                g.distance,
                w.distance
            );
        }
    }
}

#[test]
fn clustering_matches_brute_force_with_duplicates() {
    // Duplicated points force exact distance ties; both routes must break
    // them identically.
    let rows = vec![
        vec![1.0, 1.0],
        vec![4.0, 4.0],
        vec![1.0, 1.0],
        vec![4.0, 4.0],
        vec![1.0, 1.0],
    ];
    for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
        let got = hierarchical_cluster(&rows, linkage).unwrap();
        let want = brute_force_agglomeration(&rows, linkage);
        assert_eq!(got.merges.len(), want.merges.len());
        for (g, w) in got.merges.iter().zip(&want.merges) {
            assert_eq!((g.cluster_a, g.cluster_b), (w.cluster_a, w.cluster_b));
            assert_eq!(g.distance, w.distance);
        }
    }
}
