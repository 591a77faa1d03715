use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{ProbeError, Result};

/// Principal-component projection of a set of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// One row per input vector, `k` columns.
    pub coordinates: Vec<Vec<f64>>,
    /// Fraction of total variance carried by each kept component.
    pub explained_variance: Vec<f64>,
    /// Unit-length principal directions, largest variance first.
    pub components: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
}

/// Projects `vectors` onto their top `k` principal components. Each
/// component's sign is fixed so that its largest-magnitude entry is
/// positive.
pub fn pca_project(vectors: &[Vec<f64>], k: usize) -> Result<Projection> {
    if vectors.len() < 2 {
        return Err(ProbeError::Argument(format!("PCA needs at least 2 vectors, got {}", vectors.len())));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) {
        return Err(ProbeError::Argument("vectors differ in length".into()));
    }
    if k == 0 || k > dim {
        return Err(ProbeError::Argument(format!("cannot keep {k} components of {dim}-d vectors")));
    }
    let n = vectors.len();
    let mut mean = DVector::<f64>::zeros(dim);
    for v in vectors {
        mean += DVector::from_column_slice(v);
    }
    mean /= n as f64;
    let centered = DMatrix::from_fn(n, dim, |i, j| vectors[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let trace: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();

    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        let mut u: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let pivot = u
            .iter()
            .copied()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(_, x)| x)
            .unwrap_or(0.0);
        if pivot < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(u);
        explained_variance.push(if trace > 0.0 { eig.eigenvalues[c].max(0.0) / trace } else { 0.0 });
    }
    let coordinates = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|u| (0..dim).map(|j| centered[(i, j)] * u[j]).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        coordinates,
        explained_variance,
        components,
        mean: mean.iter().copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_dominant_axis() {
        // points spread along (1, 1, 0) with small noise on z
        let vectors: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64 - 9.5;
                vec![t + 3.0, t - 1.0, 0.01 * (i % 3) as f64]
            })
            .collect();
        let p = pca_project(&vectors, 2).unwrap();
        let s = 0.5f64.sqrt();
        assert!((p.components[0][0] - s).abs() < 1e-9 && (p.components[0][1] - s).abs() < 1e-9);
        assert!(p.explained_variance[0] > 0.999);
        assert!(p.explained_variance[0] >= p.explained_variance[1]);
        assert_eq!(p.coordinates.len(), 20);
        let sum0: f64 = p.coordinates.iter().map(|c| c[0]).sum();
        assert!(sum0.abs() < 1e-9);
        assert!(p.coordinates[19][0] > 0.0);
    }

    #[test]
    fn sign_convention_is_stable_under_input_negation() {
        let vectors: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64 * 0.1]).collect();
        let neg: Vec<Vec<f64>> = vectors.iter().map(|v| v.iter().map(|x| -x).collect()).collect();
        let a = pca_project(&vectors, 1).unwrap();
        let b = pca_project(&neg, 1).unwrap();
        for (x, y) in a.components[0].iter().zip(&b.components[0]) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(pca_project(&[vec![1.0]], 1).is_err());
        assert!(pca_project(&[vec![1.0], vec![2.0]], 2).is_err());
        assert!(pca_project(&[vec![1.0], vec![2.0, 3.0]], 1).is_err());
        assert!(pca_project(&[vec![1.0], vec![2.0]], 0).is_err());
    }
}
