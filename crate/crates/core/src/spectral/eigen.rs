use crate::tensor::Tensor;

use super::SpectralError;

#[derive(Debug, Clone, Copy)]
pub struct EigConfig {
    /// Largest matrix order accepted by the dense solver.
    pub dense_limit: usize,
    pub max_sweeps: usize,
}

impl Default for EigConfig {
    fn default() -> Self {
        EigConfig {
            dense_limit: 2048,
            max_sweeps: 100,
        }
    }
}

/// Eigenpairs of a symmetric matrix, ascending by eigenvalue.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: Tensor,
}

impl SymEigen {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        let n = self.values.len();
        (0..n).map(|i| self.vectors.at2(i, j)).collect()
    }
}

pub fn sym_eig(a: &Tensor) -> Result<SymEigen, SpectralError> {
    sym_eig_with(a, EigConfig::default())
}

/// Cyclic Jacobi rotations. Each eigenvector is signed so that its
/// largest-magnitude component is positive.
pub fn sym_eig_with(a: &Tensor, config: EigConfig) -> Result<SymEigen, SpectralError> {
    let n = match a.shape() {
        [r, c] if r == c => *r,
        s => return Err(SpectralError::NotSquare(s.to_vec())),
    };
    if n > config.dense_limit {
        return Err(SpectralError::TooLarge {
            n,
            limit: config.dense_limit,
        });
    }
    let scale = a.max_abs().max(1.0);
    let mut asym: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            asym = asym.max((a.at2(i, j) - a.at2(j, i)).abs());
        }
    }
    if asym > 1e-10 * scale {
        return Err(SpectralError::NotSymmetric(asym));
    }

    let mut m = a.data().to_vec();
    // symmetrize exactly so rotations see one value per pair
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frob;
    let mut converged = false;
    for _ in 0..config.max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() <= tol {
                    continue;
                }
                rotated = true;
                rotate(&mut m, &mut v, n, p, q);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SpectralError::NonConvergence(config.max_sweeps));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        let mut best = 0;
        for r in 1..n {
            if v[r * n + src].abs() > v[best * n + src].abs() {
                best = r;
            }
        }
        let sign = if v[best * n + src] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vectors[r * n + col] = sign * v[r * n + src];
        }
    }
    Ok(SymEigen {
        values,
        vectors: Tensor::from_parts(vec![n, n], vectors),
    })
}

/// Applies the rotation that annihilates `m[p][q]`, updating the
/// accumulated eigenvector matrix `v`.
fn rotate(m: &mut [f64], v: &mut [f64], n: usize, p: usize, q: usize) {
    let apq = m[p * n + q];
    let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        let (akp, akq) = (m[k * n + p], m[k * n + q]);
        m[k * n + p] = c * akp - s * akq;
        m[k * n + q] = s * akp + c * akq;
    }
    for k in 0..n {
        let (apk, aqk) = (m[p * n + k], m[q * n + k]);
        m[p * n + k] = c * apk - s * aqk;
        m[q * n + k] = s * apk + c * aqk;
    }
    m[p * n + q] = 0.0;
    m[q * n + p] = 0.0;

    for k in 0..n {
        let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
        v[k * n + p] = c * vkp - s * vkq;
        v[k * n + q] = s * vkp + c * vkq;
    }
}
