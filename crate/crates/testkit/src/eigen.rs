//! Eigenvalue oracle for small symmetric matrices: locate the roots of the
//! characteristic polynomial by scanning det(A - lambda I) for sign changes
//! over the Gershgorin interval and bisecting each bracket. Intended for
//! matrices up to 4x4 with distinct eigenvalues.

/// det(A - lambda I) by LU elimination with partial pivoting.
fn char_det(matrix: &[Vec<f64>], lambda: f64) -> f64 {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for (i, row) in a.iter_mut().enumerate() {
        row[i] -= lambda;
    }
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(col, pivot);
            det = -det;
        }
        det *= a[col][col];
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    det
}

/// Eigenvalues of a small symmetric matrix, ascending. Panics when fewer
/// than `n` sign-change brackets are found (repeated eigenvalues), which
/// the calling fixtures avoid.
pub fn charpoly_eigenvalues(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    // Gershgorin bound on the spectrum.
    let radius = matrix
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter().enumerate().map(|(j, x)| if i == j { x.abs() } else { x.abs() }).sum::<f64>()
        })
        .fold(0.0f64, f64::max)
        + 1.0;

    let samples = 200_000;
    let mut roots = Vec::with_capacity(n);
    let mut prev_l = -radius;
    let mut prev_d = char_det(matrix, prev_l);
    for k in 1..=samples {
        let l = -radius + 2.0 * radius * k as f64 / samples as f64;
        let d = char_det(matrix, l);
        if prev_d == 0.0 {
            roots.push(prev_l);
        } else if d != 0.0 && prev_d.signum() != d.signum() {
            // Bisect the bracket.
            let (mut lo, mut hi, mut flo) = (prev_l, l, prev_d);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let fm = char_det(matrix, mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if fm.signum() == flo.signum() {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev_l = l;
        prev_d = d;
    }
    assert_eq!(
        roots.len(),
        n,
        "oracle found {} roots for a {n}x{n} matrix (repeated eigenvalues?)",
        roots.len()
    );
    roots
}
