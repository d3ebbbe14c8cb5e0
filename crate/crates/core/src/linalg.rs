//! 3x3-block sparse matrices and a block-Jacobi preconditioned conjugate
//! gradient solver.

use nalgebra::Matrix3;
use thiserror::Error;

use crate::geometry::Vec3;
use crate::par::{self, Exec};

pub type Mat3 = Matrix3<f64>;

/// Symmetric block matrix whose sparsity follows vertex adjacency.
#[derive(Debug, Clone)]
pub struct BlockCsr {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    diag: Vec<usize>,
    pub blocks: Vec<Mat3>,
}

impl BlockCsr {
    /// Pattern from tets: every pair of vertices in a tet is coupled.
    /// Returns the matrix and, per tet, the block slot of each `(a, b)` pair
    /// in row-major order.
    pub fn from_tets(n: usize, tets: &[[usize; 4]]) -> (Self, Vec<[usize; 16]>) {
        let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for t in tets {
            for &a in t {
                for &b in t {
                    adj[a].push(b);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut diag = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, row) in adj.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup();
            diag.push(cols.len() + row.binary_search(&i).unwrap());
            cols.extend_from_slice(row);
            row_ptr.push(cols.len());
        }
        let m = Self {
            blocks: vec![Mat3::zeros(); cols.len()],
            row_ptr,
            cols,
            diag,
        };
        let slots = tets
            .iter()
            .map(|t| {
                let mut s = [0usize; 16];
                for a in 0..4 {
                    for b in 0..4 {
                        s[4 * a + b] = m.slot(t[a], t[b]).unwrap();
                    }
                }
                s
            })
            .collect();
        (m, slots)
    }

    pub fn rows(&self) -> usize {
        self.diag.len()
    }

    pub fn slot(&self, row: usize, col: usize) -> Option<usize> {
        let (lo, hi) = (self.row_ptr[row], self.row_ptr[row + 1]);
        self.cols[lo..hi].binary_search(&col).ok().map(|k| lo + k)
    }

    pub fn diag_slot(&self, row: usize) -> usize {
        self.diag[row]
    }

    pub fn clear(&mut self) {
        self.blocks.iter_mut().for_each(|b| *b = Mat3::zeros());
    }

    pub fn mul_into(&self, exec: Exec, x: &[Vec3], y: &mut [Vec3]) {
        par::fill(exec, y, |i| {
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let (mut a0, mut a1, mut a2) = (0.0, 0.0, 0.0);
            for (b, &c) in self.blocks[lo..hi].iter().zip(&self.cols[lo..hi]) {
                let m = b.as_slice();
                let v = &x[c];
                let (v0, v1, v2) = (v.x, v.y, v.z);
                a0 += m[0] * v0 + m[3] * v1 + m[6] * v2;
                a1 += m[1] * v0 + m[4] * v1 + m[7] * v2;
                a2 += m[2] * v0 + m[5] * v1 + m[8] * v2;
            }
            Vec3::new(a0, a1, a2)
        });
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.rows();
        let mut d = nalgebra::DMatrix::zeros(3 * n, 3 * n);
        for i in 0..n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[k];
                d.view_mut((3 * i, 3 * j), (3, 3)).copy_from(&self.blocks[k]);
            }
        }
        d
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("non-finite value in linear solve")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

fn vdot(exec: Exec, a: &[Vec3], b: &[Vec3]) -> f64 {
    par::sum(exec, a.len(), |i| a[i].dot(&b[i]))
}

/// Solves `A x = b` on the unpinned vertices; pinned entries of `x` are zero.
/// `x` holds the initial guess on entry.
pub fn pcg(
    exec: Exec,
    a: &BlockCsr,
    b: &[Vec3],
    x: &mut [Vec3],
    pinned: &[bool],
    tol: f64,
    max_iter: usize,
) -> Result<CgStats, SolveError> {
    let n = a.rows();
    let free = |i: usize, v: Vec3| if pinned[i] { Vec3::zeros() } else { v };
    for i in 0..n {
        x[i] = free(i, x[i]);
    }
    let bnorm = vdot(exec, b, b).sqrt();
    if !bnorm.is_finite() {
        return Err(SolveError::NonFinite);
    }
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = Vec3::zeros());
        return Ok(CgStats::default());
    }
    let precond: Vec<Mat3> = (0..n)
        .map(|i| {
            let d = a.blocks[a.diag_slot(i)];
            d.try_inverse().unwrap_or_else(|| {
                Mat3::from_diagonal(&d.diagonal().map(|x| if x != 0.0 { 1.0 / x } else { 1.0 }))
            })
        })
        .collect();

    let mut ax = vec![Vec3::zeros(); n];
    a.mul_into(exec, x, &mut ax);
    let mut r: Vec<Vec3> = (0..n).map(|i| free(i, b[i] - ax[i])).collect();
    let mut z: Vec<Vec3> = (0..n).map(|i| precond[i] * r[i]).collect();
    let mut p = z.clone();
    let mut ap = vec![Vec3::zeros(); n];
    let mut rz = vdot(exec, &r, &z);
    let mut residual = vdot(exec, &r, &r).sqrt() / bnorm;
    let mut iterations = 0;
    while residual > tol {
        if iterations == max_iter {
            return Err(SolveError::NotConverged { iterations, residual });
        }
        a.mul_into(exec, &p, &mut ap);
        for i in 0..n {
            ap[i] = free(i, ap[i]);
        }
        let pap = vdot(exec, &p, &ap);
        if !(pap.is_finite() && pap > 0.0) {
            return Err(if pap.is_finite() {
                SolveError::NotConverged { iterations, residual }
            } else {
                SolveError::NonFinite
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            z[i] = precond[i] * r[i];
        }
        let rz_new = vdot(exec, &r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        residual = vdot(exec, &r, &r).sqrt() / bnorm;
        if !residual.is_finite() {
            return Err(SolveError::NonFinite);
        }
        iterations += 1;
    }
    Ok(CgStats { iterations, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> (BlockCsr, Vec<[usize; 16]>) {
        let tets: Vec<[usize; 4]> = (0..n - 3).map(|i| [i, i + 1, i + 2, i + 3]).collect();
        BlockCsr::from_tets(n, &tets)
    }

    #[test]
    fn pattern_is_symmetric() {
        let (m, slots) = chain(7);
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(m.slot(i, j).is_some(), m.slot(j, i).is_some());
            }
        }
        assert_eq!(slots[0][0], m.diag_slot(0));
        assert_eq!(slots[0][4 * 1 + 2], m.slot(1, 2).unwrap());
    }

    #[test]
    fn pcg_solves_spd_system() {
        let n = 9;
        let (mut m, slots) = chain(n);
        for s in &slots {
            for a in 0..4 {
                for b in 0..4 {
                    let v = if a == b { 3.0 } else { -1.0 };
                    m.blocks[s[4 * a + b]] += Mat3::identity() * v;
                }
            }
        }
        for i in 0..n {
            let d = m.diag_slot(i);
            m.blocks[d] += Mat3::identity() * 0.5;
        }
        let truth: Vec<Vec3> = (0..n).map(|i| Vec3::new(i as f64, 1.0, -(i as f64) * 0.5)).collect();
        let mut b = vec![Vec3::zeros(); n];
        m.mul_into(Exec::Sequential, &truth, &mut b);
        let mut x = vec![Vec3::zeros(); n];
        let stats = pcg(Exec::Sequential, &m, &b, &mut x, &vec![false; n], 1e-12, 200).unwrap();
        assert!(stats.residual <= 1e-12);
        for i in 0..n {
            assert!((x[i] - truth[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn pcg_reports_non_convergence() {
        let (mut m, _) = chain(6);
        for i in 0..6 {
            let d = m.diag_slot(i);
            m.blocks[d] = Mat3::identity() * (1.0 + i as f64);
        }
        let b = vec![Vec3::new(1.0, 2.0, 3.0); 6];
        let mut x = vec![Vec3::zeros(); 6];
        let mut m2 = m.clone();
        // Off-diagonal coupling makes the Jacobi guess inexact.
        let s = m2.slot(0, 1).unwrap();
        m2.blocks[s] = Mat3::identity() * 0.3;
        let s = m2.slot(1, 0).unwrap();
        m2.blocks[s] = Mat3::identity() * 0.3;
        let err = pcg(Exec::Sequential, &m2, &b, &mut x, &vec![false; 6], 1e-14, 0).unwrap_err();
        assert!(matches!(err, SolveError::NotConverged { iterations: 0, .. }));
    }
}
