use crate::tensor::Tensor;

use super::{GroupAssignment, SpectralError};

const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric nonnegative weight matrix with zero diagonal, plus degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    weights: Tensor,
    degrees: Vec<f64>,
}

impl SimilarityGraph {
    pub fn new(weights: Tensor) -> Result<Self, SpectralError> {
        let n = match weights.shape() {
            [r, c] if r == c => *r,
            s => return Err(SpectralError::NotSquare(s.to_vec())),
        };
        let mut max_asym: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let w = weights.at2(i, j);
                if w < 0.0 || (i == j && w != 0.0) {
                    return Err(SpectralError::InvalidWeight { row: i, col: j, value: w });
                }
                max_asym = max_asym.max((w - weights.at2(j, i)).abs());
            }
        }
        if max_asym > SYMMETRY_TOL {
            return Err(SpectralError::NotSymmetric(max_asym));
        }
        let degrees = weights.data().chunks(n).map(|row| row.iter().sum()).collect();
        Ok(SimilarityGraph { weights, degrees })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SpectralError> {
        let t = Tensor::from_rows(rows)
            .map_err(|e| SpectralError::InvalidAssignment(format!("weights: {e}")))?;
        Self::new(t)
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.at2(i, j)
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Same graph with every weight multiplied by `alpha > 0`.
    pub fn scaled(&self, alpha: f64) -> Result<Self, SpectralError> {
        Self::new(self.weights.map(|w| w * alpha))
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    sab / (saa.sqrt() * sbb.sqrt())
}

/// `w_ij = |corr(x_i, x_j)|` off the diagonal, zero on it.
pub fn similarity_from_series(names: &[String], series: &[&[f64]]) -> Result<SimilarityGraph, SpectralError> {
    let n = series.len();
    let len = series.first().map_or(0, |s| s.len());
    if n < 2 || len < 2 {
        return Err(SpectralError::TooFewSeries { need: 2, got: n });
    }
    for (i, s) in series.iter().enumerate() {
        if s.len() != len {
            return Err(SpectralError::LengthMismatch {
                name: names[i].clone(),
                len: s.len(),
                expected: len,
            });
        }
        let first = s[0];
        if s.iter().all(|&v| v == first) {
            return Err(SpectralError::ZeroVariance(names[i].clone()));
        }
    }
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let r = pearson(series[i], series[j]).abs().min(1.0);
            w[i * n + j] = r;
            w[j * n + i] = r;
        }
    }
    SimilarityGraph::new(Tensor::from_parts(vec![n, n], w))
}

fn check_len(g: &SimilarityGraph, a: &GroupAssignment) -> Result<(), SpectralError> {
    if a.len() != g.n() {
        return Err(SpectralError::InvalidAssignment(format!(
            "{} labels for {} vertices",
            a.len(),
            g.n()
        )));
    }
    Ok(())
}

/// Per-group `link(A_k, Ā_k)` and `vol(A_k)`.
fn link_and_volume(g: &SimilarityGraph, a: &GroupAssignment) -> (Vec<f64>, Vec<f64>) {
    let labels = a.labels();
    let mut link = vec![0.0; a.k()];
    let mut vol = vec![0.0; a.k()];
    for i in 0..g.n() {
        let gi = labels[i];
        vol[gi] += g.degrees[i];
        for j in 0..g.n() {
            if labels[j] != gi {
                link[gi] += g.weight(i, j);
            }
        }
    }
    (link, vol)
}

/// `½ Σ_k link(A_k, Ā_k)`.
pub fn cut_value(g: &SimilarityGraph, a: &GroupAssignment) -> Result<f64, SpectralError> {
    check_len(g, a)?;
    let (link, _) = link_and_volume(g, a);
    Ok(0.5 * link.iter().sum::<f64>())
}

/// `½ Σ_k link(A_k, Ā_k) / vol(A_k)`.
pub fn ncut_value(g: &SimilarityGraph, a: &GroupAssignment) -> Result<f64, SpectralError> {
    check_len(g, a)?;
    let (link, vol) = link_and_volume(g, a);
    let mut total = 0.0;
    for (k, (l, v)) in link.iter().zip(&vol).enumerate() {
        if *v <= 0.0 {
            return Err(SpectralError::ZeroVolume(k));
        }
        total += l / v;
    }
    Ok(0.5 * total)
}

#[derive(Debug, Clone)]
pub struct Laplacians {
    /// `D − W`
    pub unnormalized: Tensor,
    /// `D^{-1/2} (D − W) D^{-1/2}`
    pub symmetric: Tensor,
    /// `d_i^{-1/2}`, used to map symmetric eigenvectors to random-walk ones.
    pub inv_sqrt_degrees: Vec<f64>,
}

pub fn laplacians(g: &SimilarityGraph) -> Result<Laplacians, SpectralError> {
    let n = g.n();
    if let Some(i) = g.degrees.iter().position(|&d| d <= 0.0) {
        return Err(SpectralError::IsolatedVertex(i));
    }
    let sqrt_d: Vec<f64> = g.degrees.iter().map(|d| d.sqrt()).collect();
    let mut l = vec![0.0; n * n];
    let mut ls = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let w = g.weight(i, j);
            if i == j {
                l[i * n + j] = g.degrees[i] - w;
                ls[i * n + j] = 1.0;
            } else {
                l[i * n + j] = -w;
                ls[i * n + j] = -w / (sqrt_d[i] * sqrt_d[j]);
            }
        }
    }
    Ok(Laplacians {
        unnormalized: Tensor::from_parts(vec![n, n], l),
        symmetric: Tensor::from_parts(vec![n, n], ls),
        inv_sqrt_degrees: sqrt_d.iter().map(|s| 1.0 / s).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::sym_eig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path3() -> SimilarityGraph {
        SimilarityGraph::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap()
    }

    fn two_edges() -> SimilarityGraph {
        SimilarityGraph::from_rows(&[
            vec![0.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ])
        .unwrap()
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn graph_validation() {
        assert!(SimilarityGraph::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.0]]).is_err());
        assert!(SimilarityGraph::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]).is_err());
        assert!(SimilarityGraph::from_rows(&[vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
        assert_eq!(path3().degrees(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn correlation_examples() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 7) % 13) as f64).collect();
        let double: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let g = similarity_from_series(&names(3), &[&x, &double, &neg]).unwrap();
        assert!((g.weight(0, 1) - 1.0).abs() < 1e-12);
        assert!((g.weight(0, 2) - 1.0).abs() < 1e-12);
        assert_eq!(g.weight(1, 1), 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = similarity_from_series(&names(2), &[&a, &b]).unwrap();
        assert!(g.weight(0, 1) < 0.05);
    }

    #[test]
    fn zero_variance_is_named() {
        let x = [1.0, 2.0, 3.0];
        let c = [4.0, 4.0, 4.0];
        let err = similarity_from_series(&["a".into(), "flat".into()], &[&x, &c]).unwrap_err();
        assert!(matches!(err, SpectralError::ZeroVariance(ref n) if n == "flat"));
    }

    #[test]
    fn cut_examples() {
        let g = two_edges();
        let a = GroupAssignment::new(vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(cut_value(&g, &a).unwrap(), 0.0);
        assert_eq!(ncut_value(&g, &a).unwrap(), 0.0);

        let edge = SimilarityGraph::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let split = GroupAssignment::new(vec![0, 1], 2).unwrap();
        assert_eq!(cut_value(&edge, &split).unwrap(), 1.0);
    }

    #[test]
    fn ncut_path_graph() {
        let a = GroupAssignment::new(vec![0, 1, 1], 2).unwrap();
        let v = ncut_value(&path3(), &a).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-15);
        let empty = GroupAssignment::new(vec![0, 0, 0], 2).unwrap();
        assert!(matches!(ncut_value(&path3(), &empty), Err(SpectralError::ZeroVolume(1))));
    }

    #[test]
    fn ncut_invariant_under_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 6;
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let w = rng.gen_range(0.0..1.0);
                rows[i][j] = w;
                rows[j][i] = w;
            }
        }
        let g = SimilarityGraph::from_rows(&rows).unwrap();
        let a = GroupAssignment::new(vec![0, 1, 2, 0, 1, 2], 3).unwrap();
        let b = GroupAssignment::new(vec![2, 0, 1, 2, 0, 1], 3).unwrap();
        let (va, vb) = (ncut_value(&g, &a).unwrap(), ncut_value(&g, &b).unwrap());
        assert!((va - vb).abs() < 1e-15);

        // direct double sum
        let mut direct = 0.0;
        for i in 0..n {
            for j in 0..n {
                if a.labels()[i] != a.labels()[j] {
                    direct += rows[i][j];
                }
            }
        }
        assert!((cut_value(&g, &a).unwrap() - 0.5 * direct).abs() < 1e-12);
    }

    #[test]
    fn laplacian_examples() {
        let edge = SimilarityGraph::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let l = laplacians(&edge).unwrap();
        assert_eq!(l.unnormalized.data(), &[1.0, -1.0, -1.0, 1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let n = 7;
            let mut rows = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i + 1..n {
                    let w = rng.gen_range(0.0..2.0);
                    rows[i][j] = w;
                    rows[j][i] = w;
                }
            }
            let g = SimilarityGraph::from_rows(&rows).unwrap();
            let l = laplacians(&g).unwrap();
            for row in l.unnormalized.data().chunks(n) {
                assert!(row.iter().sum::<f64>().abs() < 1e-12);
            }
            let eig = sym_eig(&l.symmetric).unwrap();
            for &lam in &eig.values {
                assert!((-1e-10..=2.0 + 1e-10).contains(&lam), "{lam}");
            }
        }
    }

    #[test]
    fn isolated_vertex_rejected() {
        let g = SimilarityGraph::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        assert!(matches!(laplacians(&g), Err(SpectralError::IsolatedVertex(2))));
    }
}
