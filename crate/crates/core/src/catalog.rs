//! Generators for the reference measurements used as fixtures and demos.

use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::measurement::{MeasurementError, Outcome, Party, SeparableMeasurement};
use crate::operator::{self, CMatrix, HermitianOperator, C64};
use crate::tolerance::Tolerances;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("unknown catalog entry {0:?}")]
    Unknown(String),
    #[error("angle {name} = {value} outside (0, π/4]")]
    AngleOutOfRange { name: &'static str, value: f64 },
    #[error("sampling budget exhausted after {0} attempts")]
    SamplingExhausted(usize),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
}

/// Description of one catalog generator.
#[derive(Clone, Copy, Debug)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub params: &'static str,
    pub summary: &'static str,
}

pub const ENTRIES: &[CatalogEntry] = &[
    CatalogEntry {
        name: "qubit_pair",
        params: "none",
        summary: "[0]⊗[0], [0]⊗[1], [1]⊗[+], [1]⊗[-] on two qubits",
    },
    CatalogEntry {
        name: "wk_five",
        params: "none",
        summary: "five rank-1 outcomes W_j ⊗ W_2j, weights 4/5",
    },
    CatalogEntry {
        name: "rotated_dominoes",
        params: "theta = four angles θ2,θ4,θ6,θ8 in (0, π/4] (default all π/4)",
        summary: "nine rotated domino product projectors on 3x3",
    },
    CatalogEntry {
        name: "appendix_instance",
        params: "seed = u64 (default 0)",
        summary: "seven-outcome two-qubit measurement with weights (2,2,3,2,6,1,1)",
    },
];

/// Parameters accepted by [`generate`].
#[derive(Clone, Debug, Default)]
pub struct CatalogParams {
    pub thetas: Option<[f64; 4]>,
    pub seed: u64,
}

pub fn generate(name: &str, params: &CatalogParams) -> Result<SeparableMeasurement, CatalogError> {
    match name {
        "qubit_pair" => Ok(qubit_pair()),
        "wk_five" => Ok(wk_five()),
        "rotated_dominoes" => {
            let [a, b, c, d] = params.thetas.unwrap_or([FRAC_PI_4; 4]);
            rotated_dominoes(a, b, c, d)
        }
        "appendix_instance" => appendix_instance(params.seed),
        other => Err(CatalogError::Unknown(other.to_string())),
    }
}

fn two_qubits() -> Vec<Party> {
    vec![Party::new("A", 2), Party::new("B", 2)]
}

/// `{[0]⊗[0], [0]⊗[1], [1]⊗[+], [1]⊗[−]}` with unit weights.
pub fn qubit_pair() -> SeparableMeasurement {
    let p0 = HermitianOperator::basis_projector(2, 0);
    let p1 = HermitianOperator::basis_projector(2, 1);
    let plus = HermitianOperator::real_projector(&[1.0, 1.0]);
    let minus = HermitianOperator::real_projector(&[1.0, -1.0]);
    let outcomes = vec![
        Outcome::new("00", vec![p0.clone(), p0.clone()]),
        Outcome::new("01", vec![p0, p1.clone()]),
        Outcome::new("1+", vec![p1.clone(), plus]),
        Outcome::new("1-", vec![p1, minus]),
    ];
    SeparableMeasurement::new(two_qubits(), outcomes, Some(vec![1.0; 4])).expect("well-formed")
}

/// `W_k = ½ [[1, ω^k], [ω^{-k}, 1]]` with `ω = e^{2πi/5}`.
pub fn w_operator(k: i64) -> HermitianOperator {
    let theta = 2.0 * PI / 5.0;
    let w = C64::from_polar(1.0, theta * k as f64);
    let half = C64::new(0.5, 0.0);
    HermitianOperator::new(CMatrix::from_row_slice(2, 2, &[half, w * 0.5, w.conj() * 0.5, half]))
        .expect("Hermitian by construction")
}

/// Five outcomes `Ψ_j = W_j ⊗ W_{2j}`, each with weight 4/5.
pub fn wk_five() -> SeparableMeasurement {
    let outcomes = (1..=5)
        .map(|j| Outcome::new(format!("Psi{j}"), vec![w_operator(j), w_operator(2 * j)]))
        .collect();
    SeparableMeasurement::new(two_qubits(), outcomes, Some(vec![0.8; 5])).expect("well-formed")
}

fn check_angle(name: &'static str, value: f64) -> Result<(), CatalogError> {
    if value > 0.0 && value <= FRAC_PI_4 + 1e-15 {
        Ok(())
    } else {
        Err(CatalogError::AngleOutOfRange { name, value })
    }
}

/// The nine rotated domino projectors on 3x3, unit weights.
pub fn rotated_dominoes(t2: f64, t4: f64, t6: f64, t8: f64) -> Result<SeparableMeasurement, CatalogError> {
    check_angle("theta2", t2)?;
    check_angle("theta4", t4)?;
    check_angle("theta6", t6)?;
    check_angle("theta8", t8)?;
    let k = |i: usize| HermitianOperator::basis_projector(3, i);
    let rot = |t: f64, i: usize, j: usize, plus: bool| {
        let mut v = [0.0; 3];
        if plus {
            v[i] = t.cos();
            v[j] = t.sin();
        } else {
            v[i] = t.sin();
            v[j] = -t.cos();
        }
        HermitianOperator::real_projector(&v)
    };
    let pairs = [
        (k(1), k(1)),
        (k(0), rot(t2, 0, 1, true)),
        (k(0), rot(t2, 0, 1, false)),
        (k(2), rot(t4, 1, 2, true)),
        (k(2), rot(t4, 1, 2, false)),
        (rot(t6, 1, 2, true), k(0)),
        (rot(t6, 1, 2, false), k(0)),
        (rot(t8, 0, 1, true), k(2)),
        (rot(t8, 0, 1, false), k(2)),
    ];
    let outcomes = pairs
        .into_iter()
        .enumerate()
        .map(|(j, (a, b))| Outcome::new(format!("{}", j + 1), vec![a, b]))
        .collect();
    let parties = vec![Party::new("A", 3), Party::new("B", 3)];
    Ok(SeparableMeasurement::new(parties, outcomes, Some(vec![1.0; 9]))?)
}

fn random_psd(rng: &mut ChaCha8Rng, max_eig: f64) -> HermitianOperator {
    let g = CMatrix::from_fn(2, 2, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let p = HermitianOperator::new(&g * g.adjoint()).expect("G G† is Hermitian");
    let top = *p.eigenvalues().last().expect("2x2");
    let target = max_eig * rng.random_range(0.3..1.0);
    p.scaled(target / top)
}

/// Smallest singular value of the normalized operator stack.
fn independence_margin(ops: &[HermitianOperator]) -> f64 {
    let cols: Vec<_> = ops
        .iter()
        .map(|o| {
            let v = o.real_vec();
            let n = v.norm();
            v / n
        })
        .collect();
    let m = DMatrix::from_columns(&cols);
    crate::linalg::singular_values(&m).last().copied().unwrap_or(0.0)
}

/// One concrete member of the seven-outcome two-qubit class
///
/// ```text
/// B1 = 2 B2 = 3 B3,  B5 = (I − 2 B1 − B4)/2,  B6 = B1 + B4,  B7 = I − B1 − B4,
/// A4 = (A1 + A2)/2,  A5 = (A1 + A3)/3,  A6 = I − A1 − A2,  A7 = I − A1 − A3,
/// ```
///
/// with `{I, A1, A2, A3}` and `{I, B1, B4}` linearly independent and weights
/// `(2, 2, 3, 2, 6, 1, 1)`. `A1, A2, A3, B1, B4` are sampled as random PSD
/// operators with bounded spectra, so every derived operator is PSD.
pub fn appendix_instance(seed: u64) -> Result<SeparableMeasurement, CatalogError> {
    const MAX_ATTEMPTS: usize = 10_000;
    const MARGIN: f64 = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = HermitianOperator::identity(2);
    let tol = Tolerances::default();
    let mut scale = 1.0;
    for _ in 0..MAX_ATTEMPTS {
        let a1 = random_psd(&mut rng, 0.5 * scale);
        let a2 = random_psd(&mut rng, 0.5 * scale);
        let a3 = random_psd(&mut rng, 0.5 * scale);
        let b1 = random_psd(&mut rng, 0.25 * scale);
        let b4 = random_psd(&mut rng, 0.5 * scale);

        let a6 = &(&id - &a1) - &a2;
        let a7 = &(&id - &a1) - &a3;
        let b5 = (&(&id - &b1.scaled(2.0)) - &b4).scaled(0.5);
        let b7 = &(&id - &b1) - &b4;
        let all_psd = [&a6, &a7, &b5, &b7].iter().all(|o| operator::is_psd_with(o, &tol));
        if !all_psd {
            scale *= 0.99;
            continue;
        }
        if independence_margin(&[id.clone(), a1.clone(), a2.clone(), a3.clone()]) < MARGIN
            || independence_margin(&[id.clone(), b1.clone(), b4.clone()]) < MARGIN
        {
            continue;
        }
        let a4 = (&a1 + &a2).scaled(0.5);
        let a5 = (&a1 + &a3).scaled(1.0 / 3.0);
        let b2 = b1.scaled(0.5);
        let b3 = b1.scaled(1.0 / 3.0);
        let b6 = &b1 + &b4;
        let factors = [(a1, b1), (a2, b2), (a3, b3), (a4, b4), (a5, b5), (a6, b6), (a7, b7)];
        let outcomes = factors
            .into_iter()
            .enumerate()
            .map(|(j, (a, b))| Outcome::new(format!("{}", j + 1), vec![a, b]))
            .collect();
        return Ok(SeparableMeasurement::new(
            two_qubits(),
            outcomes,
            Some(vec![2.0, 2.0, 3.0, 2.0, 6.0, 1.0, 1.0]),
        )?);
    }
    Err(CatalogError::SamplingExhausted(MAX_ATTEMPTS))
}
