//! Background estimate, inter-frame covariance, and its eigendecomposition.
//!
//! The covariance is an N x N matrix over the frame index, never a
//! pixel-space matrix, so no frame vectorization is involved and N stays
//! small. The eigensolver is a cyclic Jacobi rotation scheme, which is
//! foolproof for symmetric matrices of this size.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::matrix::SquareMatrix;
use crate::numeric::pairwise_sum;
use crate::synth::FringeStack;

/// Ratio `lambda1 / lambda0` below which the stack is treated as carrying no
/// quadrature pair.
pub const DEGENERACY_RATIO: f64 = 1e-9;

/// Maximum Jacobi sweeps before giving up.
const MAX_SWEEPS: usize = 100;

/// Background image, covariance matrix, and its full eigensystem.
///
/// Eigenvalues are sorted descending; `eigenvectors` holds the matching
/// orthonormal eigenvectors as columns. Each column is signed so that its
/// entry of largest magnitude is non-negative (ties broken by lowest index),
/// which makes the decomposition deterministic.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    pub background: Image,
    pub covariance: SquareMatrix,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: SquareMatrix,
}

impl PcaBasis {
    /// Copy of eigenvector `j` (column of the eigenvector matrix).
    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        self.eigenvectors.column(j)
    }

    /// `lambda1 / lambda0`, the degeneracy diagnostic.
    pub fn second_component_ratio(&self) -> f64 {
        if self.eigenvalues[0] > 0.0 {
            self.eigenvalues[1] / self.eigenvalues[0]
        } else {
            0.0
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.eigenvalues.len() < 2 || !(self.second_component_ratio() > DEGENERACY_RATIO)
    }
}

/// Per-pixel mean over the frames: `a_hat = (1/N) sum_n I_n`.
pub fn estimate_background(stack: &FringeStack) -> Result<Image> {
    if stack.is_empty() {
        return Err(Error::invalid("cannot estimate a background from an empty stack"));
    }
    let n = stack.len() as f64;
    let (w, h) = (stack.width(), stack.height());
    let mut out = Image::zeros(w, h);
    let frames: Vec<&[f64]> = stack.frames().iter().map(|f| f.as_slice()).collect();
    out.as_mut_slice()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, row)| {
            for (x, v) in row.iter_mut().enumerate() {
                let idx = y * w + x;
                *v = frames.iter().map(|f| f[idx]).sum::<f64>() / n;
            }
        });
    Ok(out)
}

/// Inter-frame covariance:
/// `C[m][n] = (1/L^2) sum_xy (I_m - a_hat)(I_n - a_hat)`.
///
/// Only the upper triangle is computed; the lower half is mirrored, so the
/// result is symmetric by construction. Pixel sums use pairwise reduction in
/// a fixed order, making the entries independent of the thread count.
pub fn covariance(stack: &FringeStack, background: &Image) -> Result<SquareMatrix> {
    if stack.is_empty() {
        return Err(Error::invalid("cannot compute covariance of an empty stack"));
    }
    if !background.same_dims(stack.frame(0)) {
        return Err(Error::invalid("background dimensions do not match frames"));
    }
    let n = stack.len();
    let pixels = stack.pixels() as f64;

    let deviations: Vec<Vec<f64>> = stack
        .frames()
        .par_iter()
        .map(|f| {
            f.as_slice()
                .iter()
                .zip(background.as_slice())
                .map(|(v, a)| v - a)
                .collect()
        })
        .collect();

    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|m| (m..n).map(move |k| (m, k))).collect();
    let entries: Vec<((usize, usize), f64)> = pairs
        .par_iter()
        .map(|&(m, k)| {
            let products: Vec<f64> = deviations[m]
                .iter()
                .zip(&deviations[k])
                .map(|(a, b)| a * b)
                .collect();
            ((m, k), pairwise_sum(&products) / pixels)
        })
        .collect();

    let mut c = SquareMatrix::zeros(n);
    for ((m, k), v) in entries {
        c.set(m, k, v);
        c.set(k, m, v);
    }
    Ok(c)
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues sorted descending and the matching orthonormal
/// eigenvectors as columns, signed deterministically. Convergence is declared
/// when the off-diagonal Frobenius norm falls below `1e-14 * ||C||_F`.
pub fn symmetric_eig(c: &SquareMatrix) -> Result<(Vec<f64>, SquareMatrix)> {
    let n = c.n();
    if n == 0 {
        return Err(Error::invalid("cannot decompose an empty matrix"));
    }
    let scale = c.max_abs();
    let max_asym = c.max_asymmetry();
    if scale > 0.0 && max_asym > 1e-12 * scale {
        return Err(Error::NotSymmetric { max_asym });
    }

    let norm = c.frobenius_norm();
    let tol = 1e-14 * norm;
    let mut a = c.clone();
    let mut v = SquareMatrix::identity(n);

    let mut converged = norm == 0.0;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                // Stable rotation angle from the classic two-sided scheme.
                let theta = 0.5 * (a.get(q, q) - a.get(p, p)) / apq;
                let t = if theta.abs() > 1e150 {
                    // Avoid overflow of theta^2; the rotation is tiny anyway.
                    0.5 / theta
                } else {
                    let s = theta.signum();
                    s / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let cos = 1.0 / (t * t + 1.0).sqrt();
                let sin = t * cos;
                let tau = sin / (1.0 + cos);

                let app = a.get(p, p);
                let aqq = a.get(q, q);
                a.set(p, p, app - t * apq);
                a.set(q, q, aqq + t * apq);
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);

                for j in 0..n {
                    if j != p && j != q {
                        let ajp = a.get(j, p);
                        let ajq = a.get(j, q);
                        let njp = ajp - sin * (ajq + tau * ajp);
                        let njq = ajq + sin * (ajp - tau * ajq);
                        a.set(j, p, njp);
                        a.set(p, j, njp);
                        a.set(j, q, njq);
                        a.set(q, j, njq);
                    }
                }
                for j in 0..n {
                    let vjp = v.get(j, p);
                    let vjq = v.get(j, q);
                    v.set(j, p, vjp - sin * (vjq + tau * vjp));
                    v.set(j, q, vjq + sin * (vjp - tau * vjq));
                }
            }
        }
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * a.get(p, q) * a.get(p, q);
            }
        }
        converged = off.sqrt() <= tol;
    }
    if !converged {
        return Err(Error::EigNoConvergence { sweeps });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a.get(j, j)
            .partial_cmp(&a.get(i, i))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });

    let eigenvalues: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = SquareMatrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src);
        fix_sign(&mut col);
        for (r, val) in col.iter().enumerate() {
            vectors.set(r, dst, *val);
        }
    }
    Ok((eigenvalues, vectors))
}

/// Flips a vector so its entry of largest magnitude is non-negative;
/// magnitude ties resolve to the lowest index.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, val) in v.iter().enumerate() {
        if val.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for val in v.iter_mut() {
            *val = -*val;
        }
    }
}

/// Full PCA pipeline: background, covariance, eigendecomposition.
///
/// Fails with [`Error::DegenerateSecondComponent`] when the second eigenvalue
/// carries no energy relative to the first, because no quadrature pair can be
/// formed from such data.
pub fn pca_basis(stack: &FringeStack) -> Result<PcaBasis> {
    if stack.len() < 3 {
        return Err(Error::invalid(format!(
            "PCA needs >= 3 frames, got {}",
            stack.len()
        )));
    }
    let background = estimate_background(stack)?;
    let covariance_matrix = covariance(stack, &background)?;
    let (eigenvalues, eigenvectors) = symmetric_eig(&covariance_matrix)?;

    let l0 = eigenvalues[0];
    let l1 = eigenvalues[1];
    let ratio = if l0 > 0.0 { l1 / l0 } else { 0.0 };
    if !(l0 > 0.0) || !(ratio > DEGENERACY_RATIO) {
        return Err(Error::DegenerateSecondComponent { ratio });
    }

    Ok(PcaBasis { background, covariance: covariance_matrix, eigenvalues, eigenvectors })
}
