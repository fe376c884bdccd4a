//! Dense matrix equations: Lyapunov, algebraic Riccati, generalized symmetric
//! eigenproblems.
//!
//! Two families of solvers live here. The general ones accept arbitrary dense
//! `A` and go through a Schur decomposition. The `*_modal` ones work in the
//! coordinates where the open-loop generator is `−Λ` with `Λ` diagonal and
//! positive, which is what a self-adjoint diffusion operator becomes after
//! diagonalizing the pencil `(S, M)`. With a single input column the closed
//! loop is diagonal plus rank one, and each Lyapunov solve collapses to one
//! `n × n` linear system.

use nalgebra::linalg::Schur;
use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Newton iteration cap for the Riccati solvers.
pub const MAX_NEWTON_STEPS: usize = 50;

/// Stabilizing solution of `AᵀΠ + ΠA − γ⁻¹ΠbbᵀΠ + Q = 0`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RiccatiSolution {
    pub pi: DMatrix<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Solves `AᵀX + XA + Q = 0` by Bartels–Stewart on the complex Schur form of `A`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "A is {:?}, Q is {:?}",
            a.shape(),
            q.shape()
        )));
    }
    let ac = a.map(|v| Complex::new(v, 0.0));
    let schur = Schur::try_new(ac, 1e-14, 10_000).ok_or_else(|| Error::Convergence {
        solver: "Schur decomposition",
        detail: "QR iteration did not converge".into(),
    })?;
    let (u, t) = schur.unpack();
    for i in 0..n {
        if t[(i, i)].re >= 0.0 {
            return Err(Error::Convergence {
                solver: "Lyapunov",
                detail: format!("A is not Hurwitz (eigenvalue {})", t[(i, i)]),
            });
        }
    }
    let qc = q.map(|v| Complex::new(v, 0.0));
    let c = u.adjoint() * qc * &u;

    // Tᴴ Y + Y T = −C, row by row, left to right.
    let mut y = DMatrix::<Complex<f64>>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut rhs = -c[(i, j)];
            for k in 0..i {
                rhs -= t[(k, i)].conj() * y[(k, j)];
            }
            for k in 0..j {
                rhs -= y[(i, k)] * t[(k, j)];
            }
            y[(i, j)] = rhs / (t[(i, i)].conj() + t[(j, j)]);
        }
    }
    let x = (&u * y * u.adjoint()).map(|z| z.re);
    Ok(symmetrize(x))
}

/// Newton–Kleinman for the single-input algebraic Riccati equation, started
/// from the open-loop Lyapunov solution.
pub fn solve_are(a: &DMatrix<f64>, b: &DVector<f64>, q: &DMatrix<f64>, gamma: f64) -> Result<RiccatiSolution> {
    let n = a.nrows();
    if b.len() != n {
        return Err(Error::Dimension(format!("B has {} rows, A is {n}x{n}", b.len())));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("must be positive, got {gamma}"),
        });
    }
    let tol = 1e-9 * q.norm().max(f64::MIN_POSITIVE);
    let mut pi = solve_lyapunov(a, q)?;
    let mut residual = are_residual(a, b, q, gamma, &pi);
    let mut iterations = 0;
    while residual > tol {
        if iterations == MAX_NEWTON_STEPS {
            return Err(Error::Convergence {
                solver: "Newton-Kleinman",
                detail: format!("{iterations} steps, residual {residual:.3e}"),
            });
        }
        let gain = (&pi * b) / gamma;
        let closed = a - b * gain.transpose();
        let rhs = q + &gain * gain.transpose() * gamma;
        pi = solve_lyapunov(&closed, &rhs)?;
        residual = are_residual(a, b, q, gamma, &pi);
        iterations += 1;
    }
    Ok(RiccatiSolution {
        pi,
        residual_norm: residual,
        iterations,
    })
}

/// `‖AᵀΠ + ΠA − γ⁻¹ΠbbᵀΠ + Q‖_F`.
pub fn are_residual(a: &DMatrix<f64>, b: &DVector<f64>, q: &DMatrix<f64>, gamma: f64, pi: &DMatrix<f64>) -> f64 {
    let pb = pi * b;
    let r = a.transpose() * pi + pi * a - &pb * pb.transpose() / gamma + q;
    r.norm()
}

/// Eigenpairs of `P v = λ G v`, eigenvalues descending, `Vᵀ G V = I`.
#[derive(Clone, Debug)]
pub struct GeneralizedEigen {
    pub values: DVector<f64>,
    /// Eigenvectors as columns.
    pub vectors: DMatrix<f64>,
}

pub fn generalized_symmetric_eig(p: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<GeneralizedEigen> {
    let n = p.nrows();
    if p.shape() != (n, n) || g.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "P is {:?}, G is {:?}",
            p.shape(),
            g.shape()
        )));
    }
    let chol = g
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("generalized eigenproblem metric"))?;
    let l = chol.l();
    // C = L⁻¹ P L⁻ᵀ
    let linv_p = l
        .solve_lower_triangular(p)
        .ok_or(Error::NotPositiveDefinite("generalized eigenproblem metric"))?;
    let c = l
        .solve_lower_triangular(&linv_p.transpose())
        .ok_or(Error::NotPositiveDefinite("generalized eigenproblem metric"))?;
    let eig = symmetrize(c).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut z = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        z.set_column(col, &eig.eigenvectors.column(i));
    }
    let vectors = l
        .transpose()
        .solve_upper_triangular(&z)
        .ok_or(Error::NotPositiveDefinite("generalized eigenproblem metric"))?;
    Ok(GeneralizedEigen { values, vectors })
}

/// Riccati solution in modal coordinates, where `A = −Λ` and `Q = I`.
#[derive(Clone, Debug)]
pub struct ModalRiccati {
    pub p: DMatrix<f64>,
    /// Feedback gain `k = γ⁻¹ P b`, so that `u = −kᵀw`.
    pub gain: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Solves `(−Λ − u vᵀ)ᵀ X + X (−Λ − u vᵀ) + R = 0` for symmetric `R`.
///
/// With `z = X u` the equation reads `ΛX + XΛ = R − v zᵀ − z vᵀ`, so `X` is
/// the Cauchy-weighted right-hand side and `z` solves an `n × n` system.
pub fn solve_lyapunov_modal(
    lambda: &DVector<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = lambda.len();
    if u.len() != n || v.len() != n || r.shape() != (n, n) {
        return Err(Error::Dimension("modal Lyapunov operands disagree".into()));
    }
    let cauchy = DMatrix::from_fn(n, n, |i, j| 1.0 / (lambda[i] + lambda[j]));
    let mut system = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for i in 0..n {
        let mut diag = 1.0;
        let mut acc = 0.0;
        for j in 0..n {
            let cij = cauchy[(i, j)];
            diag += cij * v[j] * u[j];
            acc += cij * r[(i, j)] * u[j];
            system[(i, j)] = v[i] * cij * u[j];
        }
        system[(i, i)] += diag;
        rhs[i] = acc;
    }
    let z = system.lu().solve(&rhs).ok_or_else(|| Error::Convergence {
        solver: "modal Lyapunov",
        detail: "closed-loop generator is singular".into(),
    })?;
    let x = DMatrix::from_fn(n, n, |i, j| {
        cauchy[(i, j)] * (r[(i, j)] - v[i] * z[j] - z[i] * v[j])
    });
    Ok(symmetrize(x))
}

/// Newton–Kleinman for `−ΛP − PΛ − γ⁻¹PbbᵀP + I = 0`.
pub fn solve_are_modal(lambda: &DVector<f64>, b: &DVector<f64>, gamma: f64) -> Result<ModalRiccati> {
    let n = lambda.len();
    if b.len() != n {
        return Err(Error::Dimension(format!("b has {} entries, expected {n}", b.len())));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("must be positive, got {gamma}"),
        });
    }
    if lambda.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Convergence {
            solver: "modal Riccati",
            detail: "open loop is not exponentially stable".into(),
        });
    }
    let identity = DMatrix::<f64>::identity(n, n);
    let tol = 1e-9 * (n as f64).sqrt();
    let mut p = DMatrix::from_diagonal(&lambda.map(|l| 0.5 / l));
    let mut residual = modal_are_residual(lambda, b, gamma, &p);
    let mut iterations = 0;
    while residual > tol {
        if iterations == MAX_NEWTON_STEPS {
            return Err(Error::Convergence {
                solver: "modal Newton-Kleinman",
                detail: format!("{iterations} steps, residual {residual:.3e}"),
            });
        }
        let k = (&p * b) / gamma;
        let rhs = &identity + &k * k.transpose() * gamma;
        p = solve_lyapunov_modal(lambda, b, &k, &rhs)?;
        residual = modal_are_residual(lambda, b, gamma, &p);
        iterations += 1;
    }
    let gain = (&p * b) / gamma;
    Ok(ModalRiccati {
        p,
        gain,
        residual_norm: residual,
        iterations,
    })
}

pub fn modal_are_residual(lambda: &DVector<f64>, b: &DVector<f64>, gamma: f64, p: &DMatrix<f64>) -> f64 {
    let n = lambda.len();
    let pb = p * b;
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            let mut r = -(lambda[i] + lambda[j]) * p[(i, j)] - pb[i] * pb[j] / gamma;
            if i == j {
                r += 1.0;
            }
            acc += r * r;
        }
    }
    acc.sqrt()
}

fn symmetrize(x: DMatrix<f64>) -> DMatrix<f64> {
    (&x + x.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Deterministic pseudo-random stable matrix: shifted so its spectral
    /// abscissa is below −0.5.
    pub(crate) fn stable_matrix(n: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let raw = DMatrix::from_fn(n, n, |_, _| next());
        let shift = raw.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        raw - DMatrix::identity(n, n) * (shift + 0.5)
    }

    #[test]
    fn scalar_lyapunov() {
        let x = solve_lyapunov(&DMatrix::from_element(1, 1, -1.0), &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert_relative_eq!(x[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_right_hand_side() {
        let a = stable_matrix(5, 3);
        let x = solve_lyapunov(&a, &DMatrix::zeros(5, 5)).unwrap();
        assert_eq!(x.amax(), 0.0);
    }

    #[test]
    fn lyapunov_residual_on_random_stable_system() {
        let a = stable_matrix(8, 11);
        let c = DMatrix::from_fn(3, 8, |i, j| ((i * 8 + j) as f64 * 0.37).sin());
        let q = c.transpose() * &c;
        let x = solve_lyapunov(&a, &q).unwrap();
        let res = (a.transpose() * &x + &x * &a + &q).norm();
        assert!(res <= 1e-10 * q.norm(), "{res}");
        assert!(x.clone().symmetric_eigen().eigenvalues.min() > -1e-12);
    }

    #[test]
    fn lyapunov_rejects_unstable_generator() {
        let a = DMatrix::from_element(1, 1, 0.5);
        assert!(matches!(
            solve_lyapunov(&a, &DMatrix::identity(1, 1)),
            Err(Error::Convergence { .. })
        ));
    }

    #[test]
    fn scalar_riccati() {
        let sol = solve_are(
            &DMatrix::from_element(1, 1, -1.0),
            &DVector::from_element(1, 1.0),
            &DMatrix::from_element(1, 1, 1.0),
            1.0,
        )
        .unwrap();
        assert_relative_eq!(sol.pi[(0, 0)], 2f64.sqrt() - 1.0, epsilon = 1e-10);
    }

    #[test]
    fn riccati_without_input_is_lyapunov() {
        let a = stable_matrix(6, 5);
        let q = DMatrix::identity(6, 6);
        let sol = solve_are(&a, &DVector::zeros(6), &q, 0.1).unwrap();
        let lyap = solve_lyapunov(&a, &q).unwrap();
        assert!((sol.pi - lyap).amax() < 1e-12);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn riccati_is_monotone_in_q() {
        for seed in 0..5 {
            let n = 3 + seed as usize;
            let a = stable_matrix(n, seed + 40);
            let b = DVector::from_fn(n, |i, _| ((i + 1) as f64).cos());
            let q = DMatrix::identity(n, n);
            let p1 = solve_are(&a, &b, &q, 0.5).unwrap().pi;
            let p2 = solve_are(&a, &b, &(&q * 1.0 + DMatrix::identity(n, n) * 0.1), 0.5).unwrap().pi;
            let diff = p2 - p1;
            assert!(diff.symmetric_eigen().eigenvalues.min() > -1e-10);
        }
    }

    #[test]
    fn generalized_eig_examples() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        let e = generalized_symmetric_eig(&i3, &i3).unwrap();
        assert!(e.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));

        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let e = generalized_symmetric_eig(&p, &DMatrix::identity(2, 2)).unwrap();
        assert_relative_eq!(e.values[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(e.values[1], 1.0, epsilon = 1e-14);
        assert_relative_eq!(e.vectors[(1, 0)].abs(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(e.vectors[(0, 1)].abs(), 1.0, epsilon = 1e-14);

        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let e = generalized_symmetric_eig(&(&g * 2.5), &g).unwrap();
        assert!(e.values.iter().all(|&v| (v - 2.5).abs() < 1e-12));
        let gram = e.vectors.transpose() * &g * &e.vectors;
        assert!((gram - DMatrix::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn generalized_eig_rejects_indefinite_metric() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            generalized_symmetric_eig(&DMatrix::identity(2, 2), &g),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn modal_lyapunov_matches_dense() {
        let n = 7;
        let lambda = DVector::from_fn(n, |i, _| 0.3 + i as f64 * 1.7);
        let u = DVector::from_fn(n, |i, _| (i as f64 + 0.5).sin());
        let v = DVector::from_fn(n, |i, _| 0.2 * (i as f64 * 1.3).cos());
        let r = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 } else { 0.1 / (1.0 + (i + j) as f64) });
        let f = -DMatrix::from_diagonal(&lambda) - &u * v.transpose();
        let dense = solve_lyapunov(&f, &r).unwrap();
        let modal = solve_lyapunov_modal(&lambda, &u, &v, &r).unwrap();
        assert!((dense - modal).amax() < 1e-12);
    }

    #[test]
    fn modal_riccati_matches_dense() {
        let n = 9;
        let lambda = DVector::from_fn(n, |i, _| 0.1 * ((i + 1) * (i + 1)) as f64);
        let b = DVector::from_fn(n, |i, _| 0.3 / (1.0 + i as f64));
        let gamma = 1e-2;
        let modal = solve_are_modal(&lambda, &b, gamma).unwrap();
        let dense = solve_are(&-DMatrix::from_diagonal(&lambda), &b, &DMatrix::identity(n, n), gamma).unwrap();
        assert!((&modal.p - &dense.pi).amax() < 1e-9 * dense.pi.amax());
        assert!(modal.residual_norm < 1e-9 * (n as f64).sqrt());
    }
}
