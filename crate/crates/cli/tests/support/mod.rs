//! Oracles shared by the acceptance and CLI tests. Everything here is computed
//! directly with nalgebra so it does not lean on the code under test.

#![allow(dead_code)]

use std::path::PathBuf;
use std::process::{Command, Output};

use locc_forge::operator::{CMatrix, C64};
use locc_forge::SeparableMeasurement;
use nalgebra::{DMatrix, DVector};

/// Root extreme rays for the qubit pair with Alice measuring.
pub const QUBIT_PAIR_ALICE_RAYS: [[f64; 4]; 2] = [[0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5]];
/// Appendix weights.
pub const APPENDIX_WEIGHTS: [f64; 7] = [2.0, 2.0, 3.0, 2.0, 6.0, 1.0, 1.0];
/// Bob's two root rays for the appendix class (before normalization).
pub const APPENDIX_BOB_RAYS: [[f64; 7]; 2] =
    [[1.0, 0.0, 3.0, 0.0, 6.0, 0.0, 1.0], [1.0, 2.0, 0.0, 2.0, 0.0, 1.0, 0.0]];
/// (outcome label, scale) of the leaves under Bob's B̂_7 branch.
pub const APPENDIX_B7_LEAVES: [(&str, f64); 4] = [("7", 1.0), ("5", 6.0), ("3", 3.0), ("1", 1.0)];
/// (outcome label, scale) of the leaves under Bob's B̂_6 branch.
pub const APPENDIX_B6_LEAVES: [(&str, f64); 4] = [("6", 1.0), ("4", 2.0), ("2", 2.0), ("1", 1.0)];

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_locc-forge"))
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).env("LOCC_FORGE_THREADS", "2").output().expect("spawn locc-forge")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Deterministic uniform numbers in [0, 1).
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn gaussian(&mut self) -> f64 {
        let u = self.next_f64().max(1e-300);
        let v = self.next_f64();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}

/// `Ô_j` rebuilt by Kronecker products of the stored factors.
pub fn product(m: &SeparableMeasurement, j: usize) -> CMatrix {
    let f = &m.outcomes()[j].factors;
    let mut out = f[0].matrix().clone();
    for g in &f[1..] {
        out = out.kronecker(g.matrix());
    }
    out
}

pub fn trace_prod(a: &CMatrix, b: &CMatrix) -> f64 {
    (a * b).trace().re
}

/// `w_j Tr[Ô_j ρ]`.
pub fn direct_probability(m: &SeparableMeasurement, rho: &CMatrix, j: usize) -> f64 {
    m.weights()[j] * trace_prod(&product(m, j), rho)
}

pub fn random_state(dim: usize, rng: &mut SplitMix) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.gaussian(), rng.gaussian()));
    let rho = &g * g.adjoint();
    let t = rho.trace();
    rho / t
}

fn null_vector(rows: &DMatrix<f64>) -> Option<DVector<f64>> {
    let k = rows.ncols();
    let mut padded = DMatrix::<f64>::zeros(k.max(rows.nrows()), k);
    padded.view_mut((0, 0), rows.shape()).copy_from(rows);
    let svd = padded.svd(false, true);
    let vt = svd.v_t?;
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    // Rows come from an orthonormal basis, so the cut is absolute.
    let small: Vec<usize> = idx.iter().copied().filter(|&i| svd.singular_values[i] <= 1e-9).collect();
    if small.len() != 1 {
        return None;
    }
    Some(vt.row(small[0]).transpose())
}

/// Extreme rays of `{c ≥ 0 : c ∈ col(basis)}` by enumerating every set of
/// `k − 1` coordinates forced to zero (the candidate facet intersections) and
/// keeping the feasible sign of each resulting line.
pub fn brute_force_rays(basis: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let (n, k) = basis.shape();
    let mut raw: Vec<DVector<f64>> = Vec::new();
    if k == 0 {
        return raw;
    }
    if k == 1 {
        raw.push(basis.column(0).into_owned());
        raw.push(-basis.column(0).into_owned());
    } else {
        let mut stack: Vec<usize> = Vec::new();
        subsets(n, k - 1, 0, &mut stack, &mut |s| {
            let rows = DMatrix::from_rows(&s.iter().map(|&i| basis.row(i).into_owned()).collect::<Vec<_>>());
            if let Some(y) = null_vector(&rows) {
                raw.push(basis * &y);
                raw.push(-(basis * &y));
            }
        });
    }
    let mut out: Vec<DVector<f64>> = Vec::new();
    for c in raw {
        let top = c.amax();
        if top == 0.0 || c.iter().any(|&x| x < -1e-9 * top) {
            continue;
        }
        let c = c.map(|x| if x.abs() <= 1e-12 * top { 0.0 } else { x });
        let c = &c / c.sum();
        if !out.iter().any(|r| (r - &c).amax() < 1e-8) {
            out.push(c);
        }
    }
    out
}

fn subsets(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if cur.len() == k {
        f(cur);
        return;
    }
    for i in start..n {
        cur.push(i);
        subsets(n, k, i + 1, cur, f);
        cur.pop();
    }
}

/// Same set of vectors up to order, entrywise within `tol`.
pub fn same_sets(a: &[DVector<f64>], b: &[DVector<f64>], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter().all(|x| b.iter().any(|y| (x - y).amax() < tol))
        && b.iter().all(|y| a.iter().any(|x| (x - y).amax() < tol))
}

/// Orthogonal projector onto the span of the columns of `basis`.
pub fn projector(basis: &DMatrix<f64>) -> DMatrix<f64> {
    basis * basis.transpose()
}

/// Orthonormal basis for the nullspace of `q`, by SVD with a relative cut.
pub fn nullspace(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.ncols();
    let mut padded = DMatrix::<f64>::zeros(n.max(q.nrows()), n);
    padded.view_mut((0, 0), q.shape()).copy_from(q);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("V^T");
    let smax = svd.singular_values.max();
    let thr = (q.nrows().max(n) as f64) * smax * 1e-11;
    let cols: Vec<DVector<f64>> =
        (0..n).filter(|&i| svd.singular_values[i] <= thr).map(|i| vt.row(i).transpose()).collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}
