//! Lawson–Hanson active-set solver for `min ‖A x − b‖₂` subject to `x ≥ 0`.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
}

pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> NnlsSolution {
    let n = a.ncols();
    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let scale = a.abs().max().max(1.0) * b.abs().max().max(1.0);
    let tol = 1e-13 * scale * (a.nrows().max(n) as f64);
    let max_outer = 3 * n + 10;

    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        if w[j] <= tol {
            break;
        }
        passive[j] = true;

        for _ in 0..(3 * n + 10) {
            let s = solve_on(a, b, &passive);
            let bad: Vec<usize> = (0..n).filter(|&i| passive[i] && s[i] <= 0.0).collect();
            if bad.is_empty() {
                x = s;
                break;
            }
            let alpha = bad
                .iter()
                .map(|&i| x[i] / (x[i] - s[i]))
                .fold(f64::INFINITY, f64::min);
            x += (&s - &x) * alpha;
            for i in 0..n {
                if passive[i] && x[i] <= tol {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    NnlsSolution { x }
}

fn solve_on(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&i| passive[i]).collect();
    let cols: Vec<DVector<f64>> = idx.iter().map(|&i| a.column(i).into_owned()).collect();
    let sub = DMatrix::from_columns(&cols);
    let sol = sub
        .svd(true, true)
        .solve(b, 1e-14)
        .expect("SVD computed with U and V");
    let mut out = DVector::zeros(passive.len());
    for (k, &i) in idx.iter().enumerate() {
        out[i] = sol[k];
    }
    out
}
