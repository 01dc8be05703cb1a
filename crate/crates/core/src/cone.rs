//! Polyhedral cone computations on `{c ≥ 0 : Q c = 0}`.
//!
//! Extreme rays come from the double description method applied in nullspace
//! coordinates: with `c = N y` for an orthonormal nullspace basis `N`, the
//! cone is `{y : N y ≥ 0}`, which is pointed because `N` has full column rank.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::nnls::nnls;
use crate::tolerance::Tolerances;

/// Threshold on `a·y` (unit rows, unit rays) below which a constraint is tight.
const TIGHT_EPS: f64 = 1e-10;
/// Cosine distance under which two rays are the same.
const DEDUP_COS: f64 = 1e-8;

/// Extreme rays of `{c ≥ 0 : q c = 0}`, L1-normalized and sorted.
pub fn extreme_rays(q: &DMatrix<f64>, tol: &Tolerances) -> Vec<DVector<f64>> {
    let ns = linalg::nullspace(q, tol);
    extreme_rays_of_nullspace(&ns.basis)
}

/// Extreme rays of `{c ≥ 0 : c ∈ span(basis)}` where `basis` has orthonormal
/// columns.
pub fn extreme_rays_of_nullspace(basis: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let k = basis.ncols();
    if k == 0 {
        return Vec::new();
    }
    let ys = double_description(basis);
    finish_rays(ys.iter().map(|y| basis * y).collect())
}

/// Clamp round-off, L1-normalize, drop duplicates and sort lexicographically.
pub fn finish_rays(raw: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for mut c in raw {
        let top = c.amax();
        if top == 0.0 {
            continue;
        }
        for x in c.iter_mut() {
            if x.abs() <= 1e-12 * top {
                *x = 0.0;
            }
        }
        if c.iter().any(|&x| x < 0.0) {
            continue;
        }
        let l1: f64 = c.iter().sum();
        let c = c / l1;
        let dup = out.iter().any(|r| {
            let cos = r.dot(&c) / (r.norm() * c.norm());
            1.0 - cos < DEDUP_COS
        });
        if !dup {
            out.push(c);
        }
    }
    out.sort_by(lex_cmp);
    out
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

struct Ray {
    y: DVector<f64>,
    /// Indices of processed constraints that are tight at this ray.
    zeros: Vec<usize>,
}

/// Extreme rays of the pointed cone `{y : A y ≥ 0}` for `A` of full column
/// rank, in `y` coordinates (unit norm).
fn double_description(a: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let k = a.ncols();
    // Unit-norm constraint rows; all-zero rows are vacuous.
    let rows: Vec<DVector<f64>> = (0..a.nrows())
        .map(|i| a.row(i).transpose())
        .filter(|r| r.norm() > 1e-13)
        .map(|r| r.normalize())
        .collect();

    let init = initial_rows(&rows, k);
    if init.len() < k {
        // Not pointed; cannot happen for an orthonormal nullspace basis.
        return Vec::new();
    }
    let a0 = DMatrix::from_rows(&init.iter().map(|&i| rows[i].transpose()).collect::<Vec<_>>());
    let inv = a0.try_inverse().expect("initial rows are independent");
    let mut rays: Vec<Ray> = (0..k)
        .map(|c| {
            let y = inv.column(c).normalize();
            let zeros = init.iter().enumerate().filter(|&(r, _)| r != c).map(|(_, &i)| i).collect();
            Ray { y, zeros }
        })
        .collect();

    let mut processed: Vec<usize> = init.clone();
    for i in 0..rows.len() {
        if init.contains(&i) {
            continue;
        }
        let row = &rows[i];
        let vals: Vec<f64> = rays.iter().map(|r| row.dot(&r.y)).collect();
        let pos: Vec<usize> = (0..rays.len()).filter(|&r| vals[r] > TIGHT_EPS).collect();
        let neg: Vec<usize> = (0..rays.len()).filter(|&r| vals[r] < -TIGHT_EPS).collect();
        let zero: Vec<usize> = (0..rays.len()).filter(|&r| vals[r].abs() <= TIGHT_EPS).collect();

        let mut next: Vec<Ray> = Vec::new();
        for &p in &pos {
            next.push(Ray { y: rays[p].y.clone(), zeros: rays[p].zeros.clone() });
        }
        for &z in &zero {
            let mut zeros = rays[z].zeros.clone();
            zeros.push(i);
            next.push(Ray { y: rays[z].y.clone(), zeros });
        }
        for &p in &pos {
            for &n in &neg {
                let common: Vec<usize> =
                    rays[p].zeros.iter().copied().filter(|j| rays[n].zeros.contains(j)).collect();
                if k >= 2 && common.len() < k - 2 {
                    continue;
                }
                if !adjacent(&rows, &common, k) {
                    continue;
                }
                let y = &rays[n].y * vals[p] - &rays[p].y * vals[n];
                let norm = y.norm();
                if norm < 1e-14 {
                    continue;
                }
                let mut zeros = common;
                zeros.push(i);
                next.push(Ray { y: y / norm, zeros });
            }
        }
        rays = next;
        processed.push(i);
        if rays.is_empty() {
            break;
        }
    }
    rays.into_iter().map(|r| r.y).collect()
}

/// Two rays are adjacent when their common tight constraints have rank `k − 2`.
fn adjacent(rows: &[DVector<f64>], common: &[usize], k: usize) -> bool {
    if k < 2 {
        return false;
    }
    if k == 2 {
        return true;
    }
    let m = DMatrix::from_rows(&common.iter().map(|&j| rows[j].transpose()).collect::<Vec<_>>());
    let sv = linalg::singular_values(&m);
    let smax = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > 1e-9 * smax.max(1e-300)).count();
    rank == k - 2
}

/// Greedy selection of `k` linearly independent rows.
fn initial_rows(rows: &[DVector<f64>], k: usize) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::new();
    let mut ortho: Vec<DVector<f64>> = Vec::new();
    // Prefer the best-conditioned rows: repeatedly take the row with the
    // largest component outside the current span.
    while chosen.len() < k {
        let mut best: Option<(usize, f64, DVector<f64>)> = None;
        for (i, r) in rows.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let mut v = r.clone();
            for q in &ortho {
                v -= q * q.dot(&v);
            }
            let n = v.norm();
            if best.as_ref().is_none_or(|b| n > b.1 + 1e-12) {
                best = Some((i, n, v));
            }
        }
        match best {
            Some((i, n, v)) if n > 1e-9 => {
                chosen.push(i);
                ortho.push(v / n);
            }
            _ => break,
        }
    }
    chosen
}

/// A nonnegative decomposition `Σ scales_l · rays[rays_used_l] = parent`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayDecomposition {
    pub rays_used: Vec<usize>,
    pub scales: Vec<f64>,
    pub residual: f64,
}

/// All nontrivial decompositions of `parent` over subsets of `rays` with at
/// most `max_support` terms, sorted by support size then ray indices.
///
/// Only rays whose support lies inside the parent's support can carry a
/// positive scale, so the enumeration is restricted to those.
pub fn decompose(
    parent: &DVector<f64>,
    rays: &[DVector<f64>],
    max_support: usize,
    tol: &Tolerances,
) -> Vec<RayDecomposition> {
    let pmax = parent.amax();
    if pmax == 0.0 {
        return Vec::new();
    }
    let in_parent: Vec<bool> = parent.iter().map(|&x| x > tol.leaf_support * pmax).collect();
    let pnorm = parent.norm();
    let eligible: Vec<usize> = (0..rays.len())
        .filter(|&r| {
            let ray = &rays[r];
            let rmax = ray.amax();
            let inside = ray.iter().zip(&in_parent).all(|(&x, &ok)| ok || x <= 1e-10 * rmax);
            let cos = ray.dot(parent) / (ray.norm() * pnorm);
            inside && cos < 1.0 - 1e-9
        })
        .collect();

    let mut out = Vec::new();
    let mut subset = Vec::new();
    enumerate_subsets(&eligible, 0, max_support.min(eligible.len()), &mut subset, &mut |s| {
        if s.len() < 2 {
            return;
        }
        let a = DMatrix::from_columns(&s.iter().map(|&r| rays[r].clone()).collect::<Vec<_>>());
        let sol = nnls(&a, parent);
        let residual = (&a * &sol.x - parent).amax();
        if residual < tol.residual && sol.x.iter().all(|&x| x > tol.scale) {
            out.push(RayDecomposition { rays_used: s.to_vec(), scales: sol.x.iter().copied().collect(), residual });
        }
    });
    out.sort_by(|a, b| a.rays_used.len().cmp(&b.rays_used.len()).then_with(|| a.rays_used.cmp(&b.rays_used)));
    out
}

fn enumerate_subsets(
    items: &[usize],
    start: usize,
    max_len: usize,
    current: &mut Vec<usize>,
    visit: &mut impl FnMut(&[usize]),
) {
    visit(current);
    if current.len() == max_len {
        return;
    }
    for i in start..items.len() {
        current.push(items[i]);
        enumerate_subsets(items, i + 1, max_len, current, visit);
        current.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force: every (k−1)-subset of constraint rows with rank k−1 fixes a
    /// line; keep the directions on it that satisfy all constraints.
    fn oracle(basis: &DMatrix<f64>) -> Vec<DVector<f64>> {
        let k = basis.ncols();
        let n = basis.nrows();
        let mut raw = Vec::new();
        if k == 1 {
            raw.push(basis.column(0).into_owned());
            raw.push(-basis.column(0).into_owned());
        } else {
            let mut idx = Vec::new();
            subsets(n, k - 1, 0, &mut idx, &mut |s| {
                let m = DMatrix::from_rows(&s.iter().map(|&i| basis.row(i).into_owned()).collect::<Vec<_>>());
                let ns = linalg::nullspace(&m, &Tolerances::default());
                if ns.dim() == 1 {
                    let y = ns.basis.column(0).into_owned();
                    raw.push(basis * &y);
                    raw.push(-(basis * &y));
                }
            });
        }
        let feasible = raw
            .into_iter()
            .filter(|c| c.iter().all(|&x| x >= -1e-10 * c.amax()))
            .collect();
        finish_rays(feasible)
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

    fn same_rays(a: &[DVector<f64>], b: &[DVector<f64>]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).amax() < 1e-8)
    }

    #[test]
    fn two_dim_cone_from_paired_outcomes() {
        // Nullspace {(c1, c1, c3, c3)}.
        let q = DMatrix::from_row_slice(2, 4, &[1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0]);
        let rays = extreme_rays(&q, &Tolerances::default());
        assert_eq!(rays.len(), 2);
        assert!((&rays[0] - DVector::from_vec(vec![0.0, 0.0, 0.5, 0.5])).amax() < 1e-12);
        assert!((&rays[1] - DVector::from_vec(vec![0.5, 0.5, 0.0, 0.0])).amax() < 1e-12);
    }

    #[test]
    fn one_dim_nonnegative_nullspace() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let basis = DMatrix::from_columns(&[v.normalize()]);
        let rays = extreme_rays_of_nullspace(&basis);
        assert_eq!(rays.len(), 1);
        assert!((&rays[0] - v / 6.0).amax() < 1e-14);
    }

    #[test]
    fn one_dim_mixed_sign_nullspace_is_empty() {
        let basis = DMatrix::from_columns(&[DVector::from_vec(vec![1.0, -1.0]).normalize()]);
        assert!(extreme_rays_of_nullspace(&basis).is_empty());
    }

    #[test]
    fn orthant_has_unit_vector_rays() {
        let basis = DMatrix::<f64>::identity(4, 4);
        let rays = extreme_rays_of_nullspace(&basis);
        assert_eq!(rays.len(), 4);
        assert!(same_rays(&rays, &oracle(&basis)));
    }

    #[test]
    fn random_subspaces_match_oracle() {
        let mut state = 99u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.3
        };
        for trial in 0..60 {
            let n = 4 + trial % 5;
            let k = 1 + trial % 3;
            // Include a positive vector so the cone is nontrivial.
            let mut cols = vec![DVector::from_fn(n, |_, _| 0.5 + next().abs())];
            for _ in 1..k {
                cols.push(DVector::from_fn(n, |_, _| next()));
            }
            let basis = DMatrix::from_columns(&cols).qr().q();
            let dd = extreme_rays_of_nullspace(&basis);
            let bf = oracle(&basis);
            assert!(same_rays(&dd, &bf), "trial {trial}: {dd:?} vs {bf:?}");
            for r in &dd {
                assert!(r.iter().all(|&x| x >= 0.0));
                let proj = &basis * (basis.transpose() * r);
                assert!((proj - r).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn decompose_paired_outcomes() {
        let rays = vec![DVector::from_vec(vec![0.5, 0.5, 0.0, 0.0]), DVector::from_vec(vec![0.0, 0.0, 0.5, 0.5])];
        let parent = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        let decs = decompose(&parent, &rays, 6, &Tolerances::default());
        assert_eq!(decs.len(), 1);
        assert_eq!(decs[0].rays_used, vec![0, 1]);
        for s in &decs[0].scales {
            assert!((s - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decompose_single_ray_is_trivial() {
        let rays = vec![DVector::from_vec(vec![0.25, 0.75])];
        let parent = DVector::from_vec(vec![1.0, 3.0]);
        assert!(decompose(&parent, &rays, 6, &Tolerances::default()).is_empty());
    }

    #[test]
    fn decompose_skips_rays_outside_parent_support() {
        let rays = vec![
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
        ];
        let parent = DVector::from_vec(vec![1.0, 0.0, 3.0]);
        let decs = decompose(&parent, &rays, 6, &Tolerances::default());
        assert_eq!(decs.len(), 1);
        assert_eq!(decs[0].rays_used, vec![0, 2]);
        assert!((decs[0].scales[0] - 1.0).abs() < 1e-12 && (decs[0].scales[1] - 3.0).abs() < 1e-12);
    }
}
