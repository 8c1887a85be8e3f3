//! Exhaustive active-set oracle for tiny affine complementarity problems.
//!
//! For the quadratic cost family the equilibrium map is affine,
//! `F(X) = J X + q`, so the variational inequality over the orthant is a
//! linear complementarity problem. Every active set `A` is enumerated: the
//! square subsystem `F_A(X) = 0, X_{A^c} = 0` is solved by full-pivot
//! elimination, and candidates are kept when `X_A > 0` and `F_{A^c} >= 0`.
//! Intended for validation of the projection solver on instances of at most
//! 22 variables.

use crate::assembly::FEvaluator;
use crate::diagnostics::jacobian_of;
use thiserror::Error;

/// Constant-Jacobian reduction `F(X) = jac * X + offset`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub dim: usize,
    /// Row-major dense Jacobian.
    pub jac: Vec<f64>,
    pub offset: Vec<f64>,
}

impl AffineMap {
    pub fn new(dim: usize, jac: Vec<f64>, offset: Vec<f64>) -> Self {
        assert_eq!(jac.len(), dim * dim);
        assert_eq!(offset.len(), dim);
        AffineMap { dim, jac, offset }
    }

    /// Extract the affine reduction of a compiled evaluator: the offset is
    /// the map's value at the origin and the Jacobian is constant.
    pub fn from_evaluator(ev: &FEvaluator) -> Self {
        let offset = ev.evaluate(&crate::assembly::StateVector::zeros(ev.len()));
        let bundle = jacobian_of(ev);
        AffineMap {
            dim: ev.len(),
            jac: bundle.jac,
            offset,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut out = self.offset.clone();
        for (q, o) in out.iter_mut().enumerate() {
            for (xr, jqr) in x.iter().zip(&self.jac[q * n..(q + 1) * n]) {
                *o += jqr * xr;
            }
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum LcpError {
    #[error("dimension {0} exceeds the enumeration bound of 22 variables")]
    TooLarge(usize),
}

const PIVOT_EPS: f64 = 1e-12;
const FEAS_EPS: f64 = 1e-8;

/// Solve `M y = rhs` by Gaussian elimination with full pivoting. Returns
/// `None` when a pivot falls below the near-singularity threshold.
fn solve_full_pivot(mut m: Vec<f64>, mut rhs: Vec<f64>, k: usize) -> Option<Vec<f64>> {
    let mut col_of = (0..k).collect::<Vec<_>>();
    for step in 0..k {
        let mut best = (step, step, 0.0f64);
        for r in step..k {
            for c in step..k {
                let v = m[r * k + c].abs();
                if v > best.2 {
                    best = (r, c, v);
                }
            }
        }
        if best.2 < PIVOT_EPS {
            return None;
        }
        let (pr, pc, _) = best;
        if pr != step {
            for c in 0..k {
                m.swap(step * k + c, pr * k + c);
            }
            rhs.swap(step, pr);
        }
        if pc != step {
            for r in 0..k {
                m.swap(r * k + step, r * k + pc);
            }
            col_of.swap(step, pc);
        }
        let piv = m[step * k + step];
        for r in (step + 1)..k {
            let factor = m[r * k + step] / piv;
            if factor != 0.0 {
                for c in step..k {
                    m[r * k + c] -= factor * m[step * k + c];
                }
                rhs[r] -= factor * rhs[step];
            }
        }
    }
    let mut y = vec![0.0; k];
    for step in (0..k).rev() {
        let mut acc = rhs[step];
        for c in (step + 1)..k {
            acc -= m[step * k + c] * y[c];
        }
        y[step] = acc / m[step * k + step];
    }
    // undo column permutation
    let mut out = vec![0.0; k];
    for (pos, &orig) in col_of.iter().enumerate() {
        out[orig] = y[pos];
    }
    Some(out)
}

/// Outcome of an exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct Enumeration {
    /// Complementarity solutions, deduplicated to 1e-8 and ordered by
    /// active-set bitmask.
    pub solutions: Vec<Vec<f64>>,
    /// Active sets whose subsystem hit a near-singular pivot and were
    /// skipped instead of solved.
    pub skipped_singular: usize,
}

/// Enumerate every active set and return all complementarity solutions,
/// deduplicated to 1e-8 and ordered by active-set bitmask.
pub fn solve_exhaustive(map: &AffineMap) -> Result<Vec<Vec<f64>>, LcpError> {
    enumerate(map).map(|e| e.solutions)
}

/// As [`solve_exhaustive`], also reporting skipped singular subsystems.
pub fn enumerate(map: &AffineMap) -> Result<Enumeration, LcpError> {
    let n = map.dim;
    if n > 22 {
        return Err(LcpError::TooLarge(n));
    }
    let mut solutions: Vec<Vec<f64>> = Vec::new();
    let mut skipped_singular = 0usize;
    'mask: for mask in 0u32..(1u32 << n) {
        let active: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        let k = active.len();
        let mut x = vec![0.0; n];
        if k > 0 {
            let mut sub = vec![0.0; k * k];
            let mut rhs = vec![0.0; k];
            for (a, &ra) in active.iter().enumerate() {
                rhs[a] = -map.offset[ra];
                for (b, &rb) in active.iter().enumerate() {
                    sub[a * k + b] = map.jac[ra * n + rb];
                }
            }
            let Some(y) = solve_full_pivot(sub, rhs, k) else {
                skipped_singular += 1;
                continue 'mask;
            };
            for (a, &ra) in active.iter().enumerate() {
                if y[a] <= 0.0 {
                    continue 'mask;
                }
                x[ra] = y[a];
            }
        }
        let f = map.apply(&x);
        for (i, &fi) in f.iter().enumerate() {
            let active_i = mask & (1 << i) != 0;
            if !active_i && fi < -FEAS_EPS {
                continue 'mask;
            }
            if active_i && fi.abs() > FEAS_EPS {
                continue 'mask;
            }
        }
        let dup = solutions.iter().any(|s| {
            s.iter()
                .zip(&x)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                <= 1e-8
        });
        if !dup {
            solutions.push(x);
        }
    }
    Ok(Enumeration {
        solutions,
        skipped_singular,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_dimensional_interior_solution() {
        let map = AffineMap::new(1, vec![2.0], vec![-6.0]);
        let sols = solve_exhaustive(&map).unwrap();
        assert_eq!(sols.len(), 1);
        assert!((sols[0][0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn singular_subsystems_are_recorded_not_solved() {
        // A zero row makes every active set containing it singular.
        let map = AffineMap::new(2, vec![1.0, 0.0, 0.0, 0.0], vec![-1.0, 0.5]);
        let e = enumerate(&map).unwrap();
        assert!(e.skipped_singular >= 1);
        assert_eq!(e.solutions, vec![vec![1.0, 0.0]]);
    }

    #[test]
    fn one_dimensional_boundary_solution() {
        let map = AffineMap::new(1, vec![2.0], vec![6.0]);
        let sols = solve_exhaustive(&map).unwrap();
        assert_eq!(sols.len(), 1);
        assert_eq!(sols[0][0], 0.0);
    }

    #[test]
    fn rejects_oversized_problems() {
        let n = 23;
        let map = AffineMap::new(n, vec![0.0; n * n], vec![0.0; n]);
        assert!(matches!(
            solve_exhaustive(&map),
            Err(LcpError::TooLarge(23))
        ));
    }

    #[test]
    fn solutions_satisfy_complementarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let n = rng.gen_range(1..6);
            let jac: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let offset: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let map = AffineMap::new(n, jac, offset);
            for sol in solve_exhaustive(&map).unwrap() {
                let f = map.apply(&sol);
                for i in 0..n {
                    assert!(sol[i] >= 0.0);
                    assert!(f[i] >= -1e-8, "F_{i} = {}", f[i]);
                    assert!((sol[i] * f[i]).abs() <= 1e-6, "x_i F_i = {}", sol[i] * f[i]);
                }
            }
        }
    }

    #[test]
    fn strictly_monotone_maps_have_one_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let n = rng.gen_range(1..6);
            // J = R R^T + eps I (positive definite) plus an antisymmetric part.
            let r: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut jac = vec![0.0; n * n];
            for a in 0..n {
                for b in 0..n {
                    let mut v = 0.0;
                    for c in 0..n {
                        v += r[a * n + c] * r[b * n + c];
                    }
                    jac[a * n + b] = v;
                }
                jac[a * n + a] += 0.3;
            }
            for a in 0..n {
                for b in (a + 1)..n {
                    let w = rng.gen_range(-1.0..1.0);
                    jac[a * n + b] += w;
                    jac[b * n + a] -= w;
                }
            }
            let offset: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let map = AffineMap::new(n, jac, offset);
            let sols = solve_exhaustive(&map).unwrap();
            assert_eq!(sols.len(), 1, "n={n}");
        }
    }

    #[test]
    fn oracle_agrees_with_projection_solver_on_minimal_chain() {
        use crate::solver::{solve, SolverConfig, StepRule};
        let model = crate::testutil::minimal_chain();
        let ev = FEvaluator::new(&model).unwrap();
        let map = AffineMap::from_evaluator(&ev);
        let sols = solve_exhaustive(&map).unwrap();
        assert_eq!(sols.len(), 1);
        let out = solve(
            &model,
            &SolverConfig {
                step: StepRule::Fixed(0.05),
                tolerance: 1e-12,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in sols[0].iter().zip(out.state.as_slice()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        // The oracle's point is an exact VI solution.
        let x = crate::assembly::StateVector::from_vec(sols[0].clone());
        assert!(crate::assembly::vi_residual(&ev, &x) <= 1e-8);
    }
}
