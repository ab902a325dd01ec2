//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix. `vectors` holds eigenvectors as columns,
/// ordered like `values` (ascending).
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Tensor,
}

fn check_square(m: &Tensor) -> Result<usize> {
    if m.rank() != 2 || m.shape()[0] != m.shape()[1] {
        return Err(Error::domain(format!("expected a square matrix, got {:?}", m.shape())));
    }
    Ok(m.shape()[0])
}

pub fn sym_eig(m: &Tensor) -> Result<SymEig> {
    let n = check_square(m)?;
    for i in 0..n {
        for j in i + 1..n {
            if (m.get2(i, j) - m.get2(j, i)).abs() > 1e-9 {
                return Err(Error::domain(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut a: Vec<f64> = m.data().to_vec();
    // Work on the exactly symmetrized copy.
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (a[i * n + j] + a[j * n + i]);
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    let mut v = Tensor::identity(n).into_data();
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let threshold = 1e-12 * frob.max(1.0);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[row * n + col] = v[row * n + src];
        }
    }
    Ok(SymEig { values, vectors: Tensor::new(vec![n, n], vectors)? })
}

impl SymEig {
    /// `V * diag(f(lambda)) * V^T`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Tensor {
        let n = self.values.len();
        let v = self.vectors.data();
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let s: f64 = (0..n).map(|k| v[i * n + k] * fl[k] * v[j * n + k]).sum();
                out[i * n + j] = s;
                out[j * n + i] = s;
            }
        }
        Tensor::new(vec![n, n], out).expect("finite reconstruction")
    }
}

/// Principal square root of a symmetric PSD matrix; negative eigenvalues are
/// clamped to zero.
pub fn psd_sqrt(m: &Tensor) -> Result<Tensor> {
    Ok(sym_eig(m)?.reconstruct_with(|l| l.max(0.0).sqrt()))
}

pub fn trace(m: &Tensor) -> f64 {
    let n = m.shape()[0];
    (0..n).map(|i| m.get2(i, i)).sum()
}
