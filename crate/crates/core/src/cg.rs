//! Unpreconditioned conjugate gradients for symmetric positive-definite systems.

use crate::error::SolverError;
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// `‖A x − b‖₂` of the returned solution.
    pub residual_norm: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn true_residual(a: &CsrMatrix, x: &[f64], b: &[f64], r: &mut [f64]) -> f64 {
    a.mul_vec_into(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    dot(r, r).sqrt()
}

/// Solves `A x = b` until `‖A x − b‖ ≤ tol·‖b‖`.
///
/// A direction with non-positive curvature `pᵀA p ≤ 0` aborts with
/// [`SolverError::Indefinite`]. Hitting `max_iter` is not an error; the
/// outcome then has `converged == false`.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome, SolverError> {
    let n = b.len();
    if a.nrows != n || a.ncols != n {
        return Err(SolverError::Dimension(format!(
            "matrix is {}×{} but right-hand side has {} entries",
            a.nrows, a.ncols, n
        )));
    }
    let mut x = vec![0.0; n];
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            residual_norm: 0.0,
            converged: true,
        });
    }
    let target = tol * b_norm;
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    let mut restarts = 0;
    while iterations < max_iter {
        iterations += 1;
        a.mul_vec_into(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(SolverError::Indefinite {
                iteration: iterations,
                curvature,
            });
        }
        let alpha = rr / curvature;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            // Guard against drift of the recursively updated residual.
            let actual = true_residual(a, &x, b, &mut r);
            if actual <= target || restarts >= 3 {
                return Ok(CgOutcome {
                    solution: x,
                    iterations,
                    residual_norm: actual,
                    converged: actual <= target,
                });
            }
            restarts += 1;
            p.copy_from_slice(&r);
            rr = dot(&r, &r);
            continue;
        }
        let beta = rr_new / rr;
        for k in 0..n {
            p[k] = r[k] + beta * p[k];
        }
        rr = rr_new;
    }
    let residual_norm = true_residual(a, &x, b, &mut r);
    Ok(CgOutcome {
        solution: x,
        iterations,
        residual_norm,
        converged: residual_norm <= target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_closed_form() {
        let a = CsrMatrix::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let out = cg_solve(&a, &[1.0, 2.0], 1e-14, 10).unwrap();
        assert!(out.converged);
        assert!((out.solution[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((out.solution[1] - 7.0 / 11.0).abs() < 1e-14);
        assert!(out.iterations <= 2);
    }

    #[test]
    fn zero_rhs_takes_no_iterations() {
        let a = CsrMatrix::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let out = cg_solve(&a, &[0.0, 0.0], 1e-12, 10).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.solution, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_in_one_iteration() {
        let rhs = [3.0, -1.0, 2.5, 7.0];
        let out = cg_solve(&CsrMatrix::identity(4), &rhs, 1e-12, 10).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.solution, rhs.to_vec());
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        assert!(matches!(
            cg_solve(&a, &[0.0, 1.0], 1e-12, 10),
            Err(SolverError::Indefinite { .. })
        ));
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let n = 50;
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            rows[i][i] = 2.0;
            if i > 0 {
                rows[i][i - 1] = -1.0;
            }
            if i + 1 < n {
                rows[i][i + 1] = -1.0;
            }
        }
        let a = CsrMatrix::from_dense(&rows);
        let out = cg_solve(&a, &vec![1.0; n], 1e-12, 3).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
        assert!(out.residual_norm > 0.0);
    }
}
