//! Two-site quantum oracles.
//!
//! The spin-1/2 XXZ chain segment and the spin-1 nematic interaction are
//! diagonalized exactly (dense Jacobi sweeps, no external numerics) and
//! thermal two-point functions are compared against the loop-model
//! enumeration oracle through the known correspondences
//! <S^1_x S^1_y> = P_{theta=2}(x <-> y) / 4 and
//! <A_x A_y> = 2 P_{theta=3}(x <-> y) / 9 with A = (S^3)^2 - 2/3.
//!
//! All matrices are real: the only S^2 occurrences come in pairs, and
//! S^2 = i K with real K, so S^2 (x) S^2 = -K (x) K.

use crate::error::{LoopError, Result};

/// Dense real matrix, row-major. Hamiltonians and observables here are
/// symmetric; symmetry is asserted where the eigensolver needs it.
#[derive(Debug, Clone)]
pub struct Matrix {
    pub n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n);
            for (j, &x) in row.iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        m
    }

    pub fn scaled(&self, s: f64) -> Self {
        Matrix { n: self.n, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn add(&self, other: &Matrix) -> Self {
        assert_eq!(self.n, other.n);
        Matrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn kron(&self, other: &Matrix) -> Self {
        let (p, q) = (self.n, other.n);
        let mut out = Self::zeros(p * q);
        for i in 0..p {
            for j in 0..p {
                let a = self[(i, j)];
                if a == 0.0 {
                    continue;
                }
                for k in 0..q {
                    for l in 0..q {
                        out[(i * q + k, j * q + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

const JACOBI_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the orthogonal matrix with eigenvectors as
/// columns.
pub fn jacobi_eigen(m: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    assert!(m.is_symmetric(1e-12), "jacobi_eigen needs a symmetric matrix");
    let n = m.n;
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    let scale = a.data.iter().map(|x| x.abs()).fold(0.0f64, f64::max).max(1.0);
    for _ in 0..JACOBI_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off < 1e-14 * scale {
            let eig = (0..n).map(|i| a[(i, i)]).collect();
            return Ok((eig, v));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(LoopError::JacobiNonConvergence(JACOBI_SWEEPS))
}

/// Tr(e^{-beta H} O) / Tr(e^{-beta H}), computed in the eigenbasis with
/// the spectrum shifted by its minimum so the weights never overflow.
pub fn thermal_expectation(h: &Matrix, obs: &Matrix, beta: f64) -> Result<f64> {
    let (eig, v) = jacobi_eigen(h)?;
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let n = h.n;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..n {
        let w = (-beta * (eig[k] - min)).exp();
        // <v_k | O | v_k>
        let mut d = 0.0;
        for i in 0..n {
            let mut oi = 0.0;
            for j in 0..n {
                oi += obs[(i, j)] * v[(j, k)];
            }
            d += v[(i, k)] * oi;
        }
        num += w * d;
        den += w;
    }
    Ok(num / den)
}

// spin-1/2 operators; S^2 = i K
pub fn spin_half_s1() -> Matrix {
    Matrix::from_rows(&[&[0.0, 0.5], &[0.5, 0.0]])
}

pub fn spin_half_k() -> Matrix {
    Matrix::from_rows(&[&[0.0, -0.5], &[0.5, 0.0]])
}

pub fn spin_half_s3() -> Matrix {
    Matrix::from_rows(&[&[0.5, 0.0], &[0.0, -0.5]])
}

// spin-1 operators; S^2 = i K
pub fn spin1_s1() -> Matrix {
    let r = 1.0 / 2.0f64.sqrt();
    Matrix::from_rows(&[&[0.0, r, 0.0], &[r, 0.0, r], &[0.0, r, 0.0]])
}

pub fn spin1_k() -> Matrix {
    let r = 1.0 / 2.0f64.sqrt();
    Matrix::from_rows(&[&[0.0, -r, 0.0], &[r, 0.0, -r], &[0.0, r, 0.0]])
}

pub fn spin1_s3() -> Matrix {
    Matrix::from_rows(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, -1.0]])
}

/// H = -2 (S^1 S^1 + S^2 S^2 + Delta S^3 S^3) on two spin-1/2 sites.
pub fn hamiltonian_xxz_2site(delta: f64) -> Matrix {
    let s1 = spin_half_s1();
    let k = spin_half_k();
    let s3 = spin_half_s3();
    s1.kron(&s1)
        .add(&k.kron(&k).scaled(-1.0))
        .add(&s3.kron(&s3).scaled(delta))
        .scaled(-2.0)
}

/// S.S on two spin-1 sites (real: the S^2 pair contributes -K (x) K).
fn spin1_dot() -> Matrix {
    let s1 = spin1_s1();
    let k = spin1_k();
    let s3 = spin1_s3();
    s1.kron(&s1).add(&k.kron(&k).scaled(-1.0)).add(&s3.kron(&s3))
}

/// H = -(u S.S + (S.S)^2) on two spin-1 sites. Up to an additive constant
/// this is -(u T + (1-u) theta P0) with T the transposition and P0 the
/// singlet projector, matching links of rate beta and cross probability u
/// at theta = 3.
pub fn hamiltonian_nematic_2site(u: f64) -> Matrix {
    let dot = spin1_dot();
    dot.scaled(u).add(&dot.matmul(&dot)).scaled(-1.0)
}

/// S^1 (x) S^1 on two spin-1/2 sites.
pub fn xxz_observable() -> Matrix {
    let s1 = spin_half_s1();
    s1.kron(&s1)
}

/// A (x) A with the nematic observable A = (S^3)^2 - 2/3.
pub fn nematic_observable() -> Matrix {
    let s3 = spin1_s3();
    let a = s3.matmul(&s3).add(&Matrix::identity(3).scaled(-2.0 / 3.0));
    a.kron(&a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::enumerate_edge;

    fn sorted_eigenvalues(m: &Matrix) -> Vec<f64> {
        let (mut e, _) = jacobi_eigen(m).unwrap();
        e.sort_by(f64::total_cmp);
        e
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn xxz_heisenberg_spectrum() {
        // Delta = 1: H = -2 S.S, eigenvalues 3/2 (singlet), -1/2 (triplet)
        let e = sorted_eigenvalues(&hamiltonian_xxz_2site(1.0));
        assert_close(&e, &[-0.5, -0.5, -0.5, 1.5], 1e-12);
    }

    #[test]
    fn nematic_spectra() {
        let e = sorted_eigenvalues(&hamiltonian_nematic_2site(0.0));
        let want = [-4.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0];
        assert_close(&e, &want, 1e-12);
        let e = sorted_eigenvalues(&hamiltonian_nematic_2site(1.0));
        let want = [-2.0, -2.0, -2.0, -2.0, -2.0, -2.0, 0.0, 0.0, 0.0];
        assert_close(&e, &want, 1e-12);
    }

    #[test]
    fn jacobi_residual_is_small() {
        for m in [
            hamiltonian_xxz_2site(-0.3),
            hamiltonian_nematic_2site(0.6),
            nematic_observable(),
        ] {
            let (eig, v) = jacobi_eigen(&m).unwrap();
            let n = m.n;
            // || H V - V Lambda ||_inf
            let mut worst = 0.0f64;
            for k in 0..n {
                for i in 0..n {
                    let mut hv = 0.0;
                    for j in 0..n {
                        hv += m[(i, j)] * v[(j, k)];
                    }
                    worst = worst.max((hv - eig[k] * v[(i, k)]).abs());
                }
            }
            assert!(worst < 1e-10, "residual {worst}");
            // orthogonality
            for a in 0..n {
                for b in 0..n {
                    let dot: f64 = (0..n).map(|i| v[(i, a)] * v[(i, b)]).sum();
                    let want = (a == b) as u8 as f64;
                    assert!((dot - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn xxz_matches_loop_connectivity() {
        // <S^1 S^1> = P_{theta=2, u=(1+Delta)/2}(x <-> y) / 4
        let obs = xxz_observable();
        for delta in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            for beta in [0.2, 0.6, 1.0] {
                let q = thermal_expectation(&hamiltonian_xxz_2site(delta), &obs, beta).unwrap();
                let o = enumerate_edge(2.0, (1.0 + delta) / 2.0, beta).unwrap();
                assert!(
                    (q - o.prob_connect / 4.0).abs() < 1e-8,
                    "delta={delta} beta={beta}: {q} vs {}",
                    o.prob_connect / 4.0
                );
            }
        }
    }

    #[test]
    fn nematic_matches_loop_connectivity() {
        // <A A> = 2 P_{theta=3, u}(x <-> y) / 9
        let obs = nematic_observable();
        for u in [0.0, 0.5, 1.0] {
            for beta in [0.3, 0.8] {
                let q = thermal_expectation(&hamiltonian_nematic_2site(u), &obs, beta).unwrap();
                let o = enumerate_edge(3.0, u, beta).unwrap();
                assert!(
                    (q - 2.0 * o.prob_connect / 9.0).abs() < 1e-9,
                    "u={u} beta={beta}: {q} vs {}",
                    2.0 * o.prob_connect / 9.0
                );
            }
        }
    }
}
