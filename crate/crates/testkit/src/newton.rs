//! Dense Newton-Raphson load flow on the full admittance matrix.

use num_complex::Complex64;

use feederlab::grid::GridModel;
use feederlab::powerflow::Injection;

/// Solve the polar power-flow equations by Newton iteration with a dense
/// Jacobian. `injections` use the consumption-positive convention of the
/// main crate. Returns per-bus voltage magnitudes, or None when the
/// iteration fails.
pub fn newton_voltages(grid: &GridModel, injections: &[Injection]) -> Option<Vec<f64>> {
    let n = grid.buses.len();
    let slack = grid.slack_index()?;

    let mut consumption = vec![Complex64::new(0.0, 0.0); n];
    for inj in injections {
        consumption[grid.bus_index(&inj.bus)?] += inj.power;
    }

    // Admittance matrix.
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for line in &grid.lines {
        let a = grid.bus_index(&line.from)?;
        let b = grid.bus_index(&line.to)?;
        let y_series = Complex64::new(1.0, 0.0) / Complex64::new(line.r_pu, line.x_pu);
        y[a][a] += y_series;
        y[b][b] += y_series;
        y[a][b] -= y_series;
        y[b][a] -= y_series;
    }

    // Net injected power (generation positive).
    let s_spec: Vec<Complex64> = consumption.iter().map(|s| -s).collect();

    let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let m = pq.len();
    let mut theta = vec![0.0f64; n];
    let mut vm = vec![1.0f64; n];

    for _ in 0..60 {
        let mut p_calc = vec![0.0f64; n];
        let mut q_calc = vec![0.0f64; n];
        for i in 0..n {
            for k in 0..n {
                let g = y[i][k].re;
                let b = y[i][k].im;
                let dt = theta[i] - theta[k];
                p_calc[i] += vm[i] * vm[k] * (g * dt.cos() + b * dt.sin());
                q_calc[i] += vm[i] * vm[k] * (g * dt.sin() - b * dt.cos());
            }
        }
        let mut mismatch = vec![0.0f64; 2 * m];
        let mut worst = 0.0f64;
        for (row, &i) in pq.iter().enumerate() {
            mismatch[row] = s_spec[i].re - p_calc[i];
            mismatch[m + row] = s_spec[i].im - q_calc[i];
            worst = worst.max(mismatch[row].abs()).max(mismatch[m + row].abs());
        }
        if worst < 1e-12 {
            return Some(vm);
        }

        let mut jac = vec![vec![0.0f64; 2 * m]; 2 * m];
        for (row, &i) in pq.iter().enumerate() {
            for (col, &k) in pq.iter().enumerate() {
                let g = y[i][k].re;
                let b = y[i][k].im;
                let dt = theta[i] - theta[k];
                if i == k {
                    jac[row][col] = -q_calc[i] - b * vm[i] * vm[i];
                    jac[row][m + col] = p_calc[i] / vm[i] + g * vm[i];
                    jac[m + row][col] = p_calc[i] - g * vm[i] * vm[i];
                    jac[m + row][m + col] = q_calc[i] / vm[i] - b * vm[i];
                } else {
                    jac[row][col] = vm[i] * vm[k] * (g * dt.sin() - b * dt.cos());
                    jac[row][m + col] = vm[i] * (g * dt.cos() + b * dt.sin());
                    jac[m + row][col] = -vm[i] * vm[k] * (g * dt.cos() + b * dt.sin());
                    jac[m + row][m + col] = vm[i] * (g * dt.sin() - b * dt.cos());
                }
            }
        }

        let delta = gauss_solve(&mut jac, &mut mismatch)?;
        for (row, &i) in pq.iter().enumerate() {
            theta[i] += delta[row];
            vm[i] += delta[m + row];
            if !vm[i].is_finite() || vm[i] <= 0.0 {
                return None;
            }
        }
    }
    None
}

/// In-place Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0f64; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}
