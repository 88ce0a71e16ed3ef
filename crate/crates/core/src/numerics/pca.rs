//! Component-wise standardization followed by principal component analysis.
//!
//! The decomposition runs on the covariance matrix of the standardized data
//! with a cyclic Jacobi sweep, which is dependency-free and bit-deterministic
//! for a given input.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Fitted projection: per-column statistics plus the top-`m` principal
/// directions stored as a row-major `[input_dim, output_dim]` matrix.
#[derive(Clone, Debug)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub components: Vec<f64>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl PcaModel {
    /// Projects one `input_dim` vector to `output_dim` coordinates.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimMismatch {
                context: "pca_transform",
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let standardized: Vec<f64> = x
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        let mut out = vec![0.0; self.output_dim];
        for (i, z) in standardized.iter().enumerate() {
            let row = &self.components[i * self.output_dim..(i + 1) * self.output_dim];
            for (o, c) in out.iter_mut().zip(row) {
                *o += z * c;
            }
        }
        Ok(out)
    }

    /// Maps `output_dim` coordinates back to the original space; exact only
    /// for points lying in the retained subspace.
    pub fn inverse_transform(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.output_dim {
            return Err(Error::DimMismatch {
                context: "pca_inverse_transform",
                expected: self.output_dim,
                got: y.len(),
            });
        }
        let mut out = vec![0.0; self.input_dim];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.components[i * self.output_dim..(i + 1) * self.output_dim];
            let z: f64 = row.iter().zip(y).map(|(c, v)| c * v).sum();
            *o = z * self.scale[i] + self.mean[i];
        }
        Ok(out)
    }
}

pub fn fit_pca(x: &Tensor, output_dim: usize) -> Result<PcaModel> {
    let shape = x.shape();
    if shape.len() != 2 {
        return Err(Error::Pca {
            message: format!("expected a 2-d matrix, got shape {shape:?}"),
        });
    }
    let (rows, dim) = (shape[0], shape[1]);
    if rows < 2 {
        return Err(Error::Pca {
            message: format!("need at least 2 rows, got {rows}"),
        });
    }
    if dim < output_dim {
        return Err(Error::Pca {
            message: format!("cannot project {dim} input dims up to {output_dim}"),
        });
    }
    if rows < output_dim {
        return Err(Error::Pca {
            message: format!("need at least {output_dim} rows, got {rows}"),
        });
    }

    let values = x.values();
    let mut mean = vec![0.0; dim];
    for row in values.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= rows as f64;
    }
    let mut scale = vec![0.0; dim];
    for row in values.chunks_exact(dim) {
        for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in scale.iter_mut() {
        *s = (*s / rows as f64).sqrt();
        // Constant columns standardize to zero rather than failing.
        if *s == 0.0 {
            *s = 1.0;
        }
    }

    // Covariance of the standardized matrix, sample-normalized.
    let standardized: Vec<f64> = values
        .iter()
        .enumerate()
        .map(|(i, v)| (v - mean[i % dim]) / scale[i % dim])
        .collect();
    drop(values);
    let mut cov = vec![0.0; dim * dim];
    for row in standardized.chunks_exact(dim) {
        for i in 0..dim {
            let vi = row[i];
            let cov_row = &mut cov[i * dim..(i + 1) * dim];
            for (c, &vj) in cov_row.iter_mut().zip(row) {
                *c += vi * vj;
            }
        }
    }
    for c in cov.iter_mut() {
        *c /= (rows - 1) as f64;
    }

    let (eigenvalues, eigenvectors) = jacobi_eigen(&cov, dim);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eigenvalues[b]
            .partial_cmp(&eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut components = vec![0.0; dim * output_dim];
    for (j, &col) in order.iter().take(output_dim).enumerate() {
        // Sign convention: the largest-magnitude entry is positive.
        let mut best = 0;
        for i in 1..dim {
            if eigenvectors[i * dim + col].abs() > eigenvectors[best * dim + col].abs() {
                best = i;
            }
        }
        let flip = if eigenvectors[best * dim + col] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dim {
            components[i * output_dim + j] = flip * eigenvectors[i * dim + col];
        }
    }

    Ok(PcaModel {
        mean,
        scale,
        components,
        input_dim: dim,
        output_dim,
    })
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns the
/// eigenvalues and the matrix whose columns are the matching eigenvectors.
fn jacobi_eigen(matrix: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frobenius: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = frobenius * 1e-14 + f64::MIN_POSITIVE;

    for _sweep in 0..100 {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    s += a[p * n + q] * a[p * n + q];
                }
            }
            s.sqrt()
        };
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= threshold / (n as f64) {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for i in 0..n {
                    if i != p && i != q {
                        let aip = a[i * n + p];
                        let aiq = a[i * n + q];
                        a[i * n + p] = c * aip - s * aiq;
                        a[p * n + i] = a[i * n + p];
                        a[i * n + q] = s * aip + c * aiq;
                        a[q * n + i] = a[i * n + q];
                    }
                }
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }

    let eigenvalues: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    (eigenvalues, v)
}
