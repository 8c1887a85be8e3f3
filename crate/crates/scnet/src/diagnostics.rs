//! Game-Jacobian diagnostics: diagonal/off-diagonal decomposition,
//! symmetrization, extreme eigenvalues, and monotonicity classification.
//!
//! For the quadratic cost family the equilibrium map is affine, so the
//! Jacobian is constant and one sample point characterises the whole
//! feasible set.

use crate::assembly::{BuildError, FEvaluator, StateVector};
use crate::model::NetworkModel;
use thiserror::Error;

/// Dense Jacobian with its diagonal/off-diagonal split and symmetrizations.
#[derive(Debug, Clone)]
pub struct JacobianBundle {
    pub dim: usize,
    /// Row-major `J[q][r] = dF_q/dX_r`.
    pub jac: Vec<f64>,
    /// Diagonal entries of `J`.
    pub diag: Vec<f64>,
    /// Off-diagonal part `N` (zero diagonal).
    pub offdiag: Vec<f64>,
    /// `(N + N^T) / 2`.
    pub n_bar: Vec<f64>,
    /// `(J + J^T) / 2`.
    pub j_sym: Vec<f64>,
}

impl JacobianBundle {
    pub fn from_dense(dim: usize, jac: Vec<f64>) -> Self {
        assert_eq!(jac.len(), dim * dim);
        let mut diag = vec![0.0; dim];
        let mut offdiag = jac.clone();
        for q in 0..dim {
            diag[q] = jac[q * dim + q];
            offdiag[q * dim + q] = 0.0;
        }
        let mut n_bar = vec![0.0; dim * dim];
        let mut j_sym = vec![0.0; dim * dim];
        for q in 0..dim {
            for r in 0..dim {
                n_bar[q * dim + r] = 0.5 * (offdiag[q * dim + r] + offdiag[r * dim + q]);
                j_sym[q * dim + r] = 0.5 * (jac[q * dim + r] + jac[r * dim + q]);
            }
        }
        JacobianBundle {
            dim,
            jac,
            diag,
            offdiag,
            n_bar,
            j_sym,
        }
    }

    /// Minimum diagonal entry (the lowest eigenvalue of the diagonal part).
    pub fn lambda_min_diag(&self) -> f64 {
        self.diag.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn inf_norm(&self) -> f64 {
        (0..self.dim)
            .map(|q| {
                (0..self.dim)
                    .map(|r| self.jac[q * self.dim + r].abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("matrix is not symmetric: |S[{p}][{q}] - S[{q}][{p}]| = {delta}")]
    NotSymmetric { p: usize, q: usize, delta: f64 },
    #[error("need at least one sample state")]
    NoSamples,
}

/// Exact analytic Jacobian of the equilibrium map at `x` (constant for the
/// quadratic cost family, so `x` only fixes the evaluation point).
pub fn jacobian(model: &NetworkModel, x: &StateVector) -> Result<JacobianBundle, DiagnosticsError> {
    let ev = FEvaluator::new(model)?;
    let _ = x;
    Ok(jacobian_of(&ev))
}

/// Dense Jacobian of a compiled evaluator.
pub fn jacobian_of(ev: &FEvaluator) -> JacobianBundle {
    let n = ev.len();
    let mut jac = vec![0.0; n * n];
    for (q, row) in ev.rows().iter().enumerate() {
        for &(col, c) in &row.terms {
            jac[q * n + col as usize] += c;
        }
    }
    JacobianBundle::from_dense(n, jac)
}

/// Lowest eigenvalue of a symmetric matrix via cyclic Jacobi rotations.
///
/// Sweeps zero each off-diagonal pair in turn until the total off-diagonal
/// magnitude falls below 1e-10 of the matrix scale; the minimum diagonal of
/// the converged form is returned.
pub fn lowest_eigenvalue(s: &[f64], dim: usize) -> Result<f64, DiagnosticsError> {
    assert_eq!(s.len(), dim * dim, "matrix shape");
    for p in 0..dim {
        for q in (p + 1)..dim {
            let delta = (s[p * dim + q] - s[q * dim + p]).abs();
            if delta > 1e-10 {
                return Err(DiagnosticsError::NotSymmetric { p, q, delta });
            }
        }
    }
    let mut a = s.to_vec();
    let scale = a.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(1.0);
    let tol = 1e-10 * scale;
    for _sweep in 0..200 {
        let mut off = 0.0f64;
        for p in 0..dim {
            for q in (p + 1)..dim {
                off += a[p * dim + q].abs();
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = a[p * dim + q];
                if apq.abs() <= tol / (dim * dim) as f64 {
                    continue;
                }
                let theta = (a[q * dim + q] - a[p * dim + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                // rotate rows/columns p and q
                for r in 0..dim {
                    let arp = a[r * dim + p];
                    let arq = a[r * dim + q];
                    a[r * dim + p] = c * arp - sn * arq;
                    a[r * dim + q] = sn * arp + c * arq;
                }
                for r in 0..dim {
                    let apr = a[p * dim + r];
                    let aqr = a[q * dim + r];
                    a[p * dim + r] = c * apr - sn * aqr;
                    a[q * dim + r] = sn * apr + c * aqr;
                }
            }
        }
    }
    Ok((0..dim)
        .map(|i| a[i * dim + i])
        .fold(f64::INFINITY, f64::min))
}

/// Monotonicity class of the equilibrium map on the orthant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonotonicityClass {
    /// `lambda_min(J_sym) > tol`.
    Strongly,
    /// Not strongly, but the off/diagonal dominance inequality holds at
    /// every sample (a numerical strict-monotonicity certificate).
    StrictlyNumerical,
    /// `lambda_min(J_sym) >= -tol`.
    Monotone,
    Indefinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityVerdict {
    pub class: MonotonicityClass,
    pub lambda_min_sym: f64,
    pub lambda_min_diag: f64,
    pub lambda_min_nbar: f64,
    /// `|lambda_min(N_bar)| < lambda_min(D)` at every sample. Rows with a
    /// zero diagonal (pure multiplier rows) keep `lambda_min(D) = 0`, which
    /// reads as the condition failing rather than excluding those rows.
    pub theorem_dominance_holds: bool,
    pub tol: f64,
}

/// Classify a single Jacobian bundle.
pub fn classify_bundle(b: &JacobianBundle) -> Result<MonotonicityVerdict, DiagnosticsError> {
    let tol = 1e-8 * (1.0 + b.inf_norm());
    let lambda_min_sym = lowest_eigenvalue(&b.j_sym, b.dim)?;
    let lambda_min_nbar = lowest_eigenvalue(&b.n_bar, b.dim)?;
    let lambda_min_diag = b.lambda_min_diag();
    let dominance = lambda_min_nbar.abs() < lambda_min_diag;
    let class = if lambda_min_sym > tol {
        MonotonicityClass::Strongly
    } else if dominance {
        MonotonicityClass::StrictlyNumerical
    } else if lambda_min_sym >= -tol {
        MonotonicityClass::Monotone
    } else {
        MonotonicityClass::Indefinite
    };
    Ok(MonotonicityVerdict {
        class,
        lambda_min_sym,
        lambda_min_diag,
        lambda_min_nbar,
        theorem_dominance_holds: dominance,
        tol,
    })
}

/// Classify the instance's map from one or more sample states. For this
/// cost family the Jacobian is constant, so all samples agree; the verdict
/// still takes the worst case across them.
pub fn classify(
    model: &NetworkModel,
    samples: &[StateVector],
) -> Result<MonotonicityVerdict, DiagnosticsError> {
    if samples.is_empty() {
        return Err(DiagnosticsError::NoSamples);
    }
    let mut verdict: Option<MonotonicityVerdict> = None;
    for x in samples {
        let b = jacobian(model, x)?;
        let v = classify_bundle(&b)?;
        verdict = Some(match verdict {
            None => v,
            Some(prev) => MonotonicityVerdict {
                class: if rank(v.class) > rank(prev.class) {
                    v.class
                } else {
                    prev.class
                },
                lambda_min_sym: prev.lambda_min_sym.min(v.lambda_min_sym),
                lambda_min_diag: prev.lambda_min_diag.min(v.lambda_min_diag),
                lambda_min_nbar: prev.lambda_min_nbar.min(v.lambda_min_nbar),
                theorem_dominance_holds: prev.theorem_dominance_holds && v.theorem_dominance_holds,
                tol: prev.tol.max(v.tol),
            },
        });
    }
    Ok(verdict.unwrap())
}

fn rank(c: MonotonicityClass) -> u8 {
    match c {
        MonotonicityClass::Strongly => 0,
        MonotonicityClass::StrictlyNumerical => 1,
        MonotonicityClass::Monotone => 2,
        MonotonicityClass::Indefinite => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::IndexMap;
    use crate::scenarios;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ident(n: usize) -> Vec<f64> {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        m
    }

    #[test]
    fn eigen_identity_and_diagonal() {
        for n in 1..6 {
            assert!((lowest_eigenvalue(&ident(n), n).unwrap() - 1.0).abs() < 1e-12);
        }
        let d = vec![2.0, 0.0, 0.0, 5.0];
        assert!((lowest_eigenvalue(&d, 2).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_offdiagonal_pair() {
        let s = vec![0.0, 1.0, 1.0, 0.0];
        assert!((lowest_eigenvalue(&s, 2).unwrap() + 1.0).abs() < 1e-10);
    }

    #[test]
    fn eigen_rejects_asymmetric() {
        let s = vec![0.0, 1.0, -1.0, 0.0];
        assert!(matches!(
            lowest_eigenvalue(&s, 2),
            Err(DiagnosticsError::NotSymmetric { .. })
        ));
    }

    /// Closed-form smallest root of the characteristic polynomial for
    /// symmetric 2x2 and 3x3 matrices.
    fn closed_form_min(s: &[f64], n: usize) -> f64 {
        match n {
            2 => {
                let (a, b, d) = (s[0], s[1], s[3]);
                let tr = a + d;
                let det = a * d - b * b;
                let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
                0.5 * (tr - disc)
            }
            3 => {
                // Trigonometric solution for a real symmetric 3x3.
                let (a, b, c) = (s[0], s[1], s[2]);
                let (d, e) = (s[4], s[5]);
                let f = s[8];
                let p1 = b * b + c * c + e * e;
                if p1 == 0.0 {
                    return a.min(d).min(f);
                }
                let q = (a + d + f) / 3.0;
                let p2 = (a - q).powi(2) + (d - q).powi(2) + (f - q).powi(2) + 2.0 * p1;
                let p = (p2 / 6.0).sqrt();
                // B = (S - qI) / p, r = det(B) / 2
                let m = |v: f64| v / p;
                let (ba, bb, bc, bd, be, bf) = (m(a - q), m(b), m(c), m(d - q), m(e), m(f - q));
                let detb =
                    ba * (bd * bf - be * be) - bb * (bb * bf - be * bc) + bc * (bb * be - bd * bc);
                let r = (detb / 2.0).clamp(-1.0, 1.0);
                let phi = r.acos() / 3.0;
                q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos()
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn eigen_matches_characteristic_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = if rng.gen_bool(0.5) { 2 } else { 3 };
            let mut s = vec![0.0; n * n];
            for p in 0..n {
                for q in p..n {
                    let v = rng.gen_range(-5.0..5.0);
                    s[p * n + q] = v;
                    s[q * n + p] = v;
                }
            }
            let jac = lowest_eigenvalue(&s, n).unwrap();
            let cf = closed_form_min(&s, n);
            assert!(
                (jac - cf).abs() < 1e-8,
                "n={n} jacobi {jac} closed-form {cf}"
            );
        }
    }

    #[test]
    fn decomposition_identity() {
        let model = scenarios::example_1_1().model;
        let im = IndexMap::new(&model.topology);
        let b = jacobian(&model, &StateVector::zeros(im.len())).unwrap();
        for q in 0..b.dim {
            for r in 0..b.dim {
                let d = if q == r { b.diag[q] } else { 0.0 };
                assert_eq!(b.jac[q * b.dim + r], d + b.offdiag[q * b.dim + r]);
                assert_eq!(b.n_bar[q * b.dim + r], b.n_bar[r * b.dim + q]);
                assert_eq!(b.j_sym[q * b.dim + r], b.j_sym[r * b.dim + q]);
            }
        }
    }

    #[test]
    fn multiplier_coupling_is_antisymmetric() {
        let model = scenarios::example_1_1().model;
        let im = IndexMap::new(&model.topology);
        let b = jacobian(&model, &StateVector::zeros(im.len())).unwrap();
        let n = b.dim;
        let q0 = im.q0(0, 0, 0, 0);
        let l0 = im.l0(0);
        assert_eq!(b.jac[q0 * n + l0], 1.0);
        assert_eq!(b.jac[l0 * n + q0], -1.0);
        let l1 = im.l1(0, 0);
        assert_eq!(b.jac[q0 * n + l1], -0.9);
        assert_eq!(b.jac[l1 * n + q0], 0.9);
    }

    #[test]
    fn classify_abstract_maps() {
        let v = classify_bundle(&JacobianBundle::from_dense(2, ident(2))).unwrap();
        assert_eq!(v.class, MonotonicityClass::Strongly);
        assert!((v.lambda_min_sym - 1.0).abs() < 1e-12);

        let rot = JacobianBundle::from_dense(2, vec![0.0, 1.0, -1.0, 0.0]);
        let v = classify_bundle(&rot).unwrap();
        assert_eq!(v.class, MonotonicityClass::Monotone);
        assert!(v.lambda_min_sym.abs() < 1e-12);
        assert!(!v.theorem_dominance_holds);
    }

    #[test]
    fn benchmark_jacobian_is_monotone() {
        let model = scenarios::example_1_1().model;
        let im = IndexMap::new(&model.topology);
        let v = classify(&model, &[StateVector::zeros(im.len())]).unwrap();
        assert!(v.lambda_min_sym >= -1e-6, "lambda_min {}", v.lambda_min_sym);
        assert!(matches!(
            v.class,
            MonotonicityClass::Monotone | MonotonicityClass::Strongly
        ));
        // Pure multiplier rows keep the diagonal floor at zero.
        assert_eq!(v.lambda_min_diag, 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let model = scenarios::example_1_1().model;
        let ev = FEvaluator::new(&model).unwrap();
        let im = ev.index();
        let b = jacobian_of(&ev);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = im.len();
        for _ in 0..20 {
            let x = StateVector::from_vec((0..n).map(|_| rng.gen_range(0.0..50.0)).collect());
            let col = rng.gen_range(0..n);
            let h = 1e-3;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[col] += h;
            xm[col] -= h;
            let fp = ev.evaluate(&xp);
            let fm = ev.evaluate(&xm);
            for q in 0..n {
                let fd = (fp[q] - fm[q]) / (2.0 * h);
                assert!(
                    (fd - b.jac[q * n + col]).abs() < 1e-6,
                    "row {q} col {col}: fd {fd} vs {}",
                    b.jac[q * n + col]
                );
            }
        }
    }
}
