use serde::{Deserialize, Serialize};

use super::{NeuralError, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// How many principal components to keep.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Retention {
    /// Smallest `k` whose cumulative squared singular values reach this fraction.
    Fraction(f64),
    Components(usize),
}

impl Retention {
    pub fn validate(self) -> Result<()> {
        match self {
            Self::Fraction(f) if !(f > 0.0 && f <= 1.0) => Err(NeuralError::Shape(format!("variance fraction {f} not in (0, 1]"))),
            _ => Ok(()),
        }
    }
}

/// Mean-centered principal subspace; rows of `components` are orthonormal.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaBasis<T> {
    pub mean: Vec<T>,
    /// `k × D`, ordered by decreasing singular value.
    pub components: Matrix<T>,
    pub singular_values: Vec<T>,
    /// Sum of all squared singular values, retained or not.
    pub total_energy: T,
}

/// Singular values and right singular vectors of `data` (rows are samples),
/// by one-sided Jacobi rotations. Returns `(sigma, V)` with `V` as rows,
/// sorted by decreasing sigma. Directions with sigma at or below `floor`, or
/// at rounding level relative to the largest sigma, are dropped.
pub fn svd_right<T: Real>(data: &Matrix<T>, floor: T) -> (Vec<T>, Matrix<T>, T) {
    let (m, d) = (data.rows(), data.cols());
    // Orthogonalize whichever side is smaller, tracking the right vectors.
    let (mut vecs, mut acc): (Vec<Vec<T>>, Option<Vec<Vec<T>>>) = if m <= d {
        ((0..m).map(|r| data.row(r).to_vec()).collect(), None)
    } else {
        let cols = (0..d).map(|c| (0..m).map(|r| data[(r, c)]).collect()).collect();
        let eye = (0..d).map(|i| (0..d).map(|j| if i == j { T::one() } else { T::zero() }).collect()).collect();
        (cols, Some(eye))
    };
    let n = vecs.len();
    let tol = T::epsilon() * T::of(n.max(1) as f64);
    for _sweep in 0..80 {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let a = dot(&vecs[i], &vecs[i]);
                let b = dot(&vecs[j], &vecs[j]);
                let g = dot(&vecs[i], &vecs[j]);
                if g == T::zero() || g.abs() <= tol * (a * b).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (b - a) / (T::of(2.0) * g);
                let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut vecs, i, j, c, s);
                if let Some(acc) = acc.as_mut() {
                    rotate(acc, i, j, c, s);
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<T> = vecs.iter().map(|v| dot(v, v).sqrt()).collect();
    let total: T = norms.iter().map(|&s| s * s).sum();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap().then(x.cmp(&y)));
    let smax = order.first().map(|&i| norms[i]).unwrap_or(T::zero());
    let cutoff = smax * T::epsilon() * T::of((m.max(d) * 8) as f64);
    let mut sigma = Vec::new();
    let mut rows = Vec::new();
    for &i in &order {
        if norms[i] <= cutoff || norms[i] <= floor || norms[i] == T::zero() {
            break;
        }
        sigma.push(norms[i]);
        match &acc {
            None => rows.extend(vecs[i].iter().map(|&x| x / norms[i])),
            Some(acc) => rows.extend_from_slice(&acc[i]),
        }
    }
    let k = sigma.len();
    (sigma, Matrix::from_vec(k, d, rows), total)
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    crate::linalg::dot(a, b)
}

fn rotate<T: Real>(vecs: &mut [Vec<T>], i: usize, j: usize, c: T, s: T) {
    let (lo, hi) = vecs.split_at_mut(j);
    for (x, y) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Fits a basis to the rows of `data`. `max_k` caps the component count.
pub fn pca_fit<T: Real>(data: &Matrix<T>, retention: Retention, max_k: Option<usize>) -> Result<PcaBasis<T>> {
    retention.validate()?;
    let (m, d) = (data.rows(), data.cols());
    if m < 2 {
        return Err(NeuralError::Shape(format!("PCA needs at least 2 samples, got {m}")));
    }
    if let Retention::Components(k) = retention {
        if k > m.min(d) {
            return Err(NeuralError::Shape(format!("k = {k} exceeds min({m}, {d})")));
        }
    }
    let mut mean = vec![T::zero(); d];
    for r in 0..m {
        for (acc, &x) in mean.iter_mut().zip(data.row(r)) {
            *acc += x;
        }
    }
    let inv = T::one() / T::of(m as f64);
    for x in &mut mean {
        *x *= inv;
    }
    let mut centered = data.clone();
    for r in 0..m {
        for (x, &mu) in centered.row_mut(r).iter_mut().zip(&mean) {
            *x -= mu;
        }
    }
    // Centering leaves rounding noise of order eps * |data| per entry.
    let scale = data.as_slice().iter().fold(T::zero(), |m, x| m.max(x.abs()));
    let floor = scale * T::epsilon() * T::of(16.0 * ((m * d) as f64).sqrt());
    let (sigma, v, total) = svd_right(&centered, floor);
    let rank = sigma.len();
    let mut k = match retention {
        Retention::Components(k) => k.min(rank),
        Retention::Fraction(f) => {
            let goal = T::of(f) * total * (T::one() - T::of(1e-12));
            let mut cum = T::zero();
            let mut k = rank;
            for (i, &s) in sigma.iter().enumerate() {
                cum += s * s;
                if cum >= goal {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };
    if let Some(cap) = max_k {
        k = k.min(cap);
    }
    let components = Matrix::from_vec(k, d, v.as_slice()[..k * d].to_vec());
    Ok(PcaBasis { mean, components, singular_values: sigma[..k].to_vec(), total_energy: total })
}

impl<T: Real> PcaBasis<T> {
    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `C (v − mean)`.
    pub fn project(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.dim() {
            return Err(NeuralError::WidthMismatch { expected: self.dim(), got: v.len() });
        }
        let centered: Vec<T> = v.iter().zip(&self.mean).map(|(&x, &m)| x - m).collect();
        Ok((0..self.k()).map(|i| dot(self.components.row(i), &centered)).collect())
    }

    /// `mean + Cᵀ c`.
    pub fn reconstruct(&self, coeffs: &[T]) -> Result<Vec<T>> {
        if coeffs.len() != self.k() {
            return Err(NeuralError::WidthMismatch { expected: self.k(), got: coeffs.len() });
        }
        let mut out = self.mean.clone();
        for (i, &c) in coeffs.iter().enumerate() {
            crate::linalg::axpy(&mut out, c, self.components.row(i));
        }
        Ok(out)
    }

    /// Energy left out of the retained components.
    pub fn tail_energy(&self) -> T {
        let kept: T = self.singular_values.iter().map(|&s| s * s).sum();
        (self.total_energy - kept).max(T::zero())
    }

    pub fn max_orthonormality_error(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.k() {
            for j in i..self.k() {
                let target = if i == j { T::one() } else { T::zero() };
                worst = worst.max((dot(self.components.row(i), self.components.row(j)) - target).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(m, d, (0..m * d).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn line_needs_one_component() {
        let data = Matrix::from_rows(&(0..10).map(|i| vec![i as f64, 2.0 * i as f64, -1.0 * i as f64 + 3.0]).collect::<Vec<_>>());
        let b = pca_fit(&data, Retention::Fraction(1.0), None).unwrap();
        assert_eq!(b.k(), 1);
        assert!(b.tail_energy() < 1e-20);
    }

    #[test]
    fn isotropic_cloud_has_equal_singular_values() {
        // Oracle: for unit-variance independent coordinates, sigma_i^2 / M -> 1.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 4000;
        let data = Matrix::from_vec(m, 2, (0..2 * m).map(|_| rng.gen_range(-3f64.sqrt()..3f64.sqrt())).collect());
        let b = pca_fit(&data, Retention::Components(2), None).unwrap();
        let var: Vec<f64> = b.singular_values.iter().map(|s| s * s / m as f64).collect();
        assert!((var[0] - 1.0).abs() < 0.1 && (var[1] - 1.0).abs() < 0.1, "{var:?}");
        assert!(var[0] / var[1] < 1.15);
    }

    #[test]
    fn complete_basis_round_trip_and_unit_coefficients() {
        for (m, d) in [(12, 5), (5, 12)] {
            let data = random(m, d, 9);
            let k = m.min(d) - usize::from(m <= d);
            let b = pca_fit(&data, Retention::Components(k), None).unwrap();
            assert!(b.max_orthonormality_error() < 1e-10);
            assert!(b.singular_values.windows(2).all(|w| w[0] >= w[1]));
            assert!(b.project(&b.mean).unwrap().iter().all(|&c| c == 0.0));
            for i in 0..b.k() {
                let v: Vec<f64> = b.mean.iter().zip(b.components.row(i)).map(|(m, c)| m + c).collect();
                let c = b.project(&v).unwrap();
                for (j, cj) in c.iter().enumerate() {
                    assert!((cj - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
                }
            }
            // Centered data spans at most min(m - 1, d) directions.
            for r in 0..m {
                let back = b.reconstruct(&b.project(data.row(r)).unwrap()).unwrap();
                for (x, y) in back.iter().zip(data.row(r)) {
                    assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn reconstruction_error_is_tail_energy_and_monotone() {
        let data = random(30, 8, 4);
        let mut prev = f64::INFINITY;
        for k in 0..=8 {
            let b = pca_fit(&data, Retention::Components(k), None).unwrap();
            let mut err = 0.0;
            for r in 0..30 {
                let back = b.reconstruct(&b.project(data.row(r)).unwrap()).unwrap();
                err += back.iter().zip(data.row(r)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            }
            assert!((err - b.tail_energy()).abs() < 1e-6 * b.total_energy.max(1.0), "k={k}: {err} vs {}", b.tail_energy());
            assert!(err <= prev + 1e-9);
            prev = err;
        }
    }

    #[test]
    fn constant_data_has_zero_components() {
        let data = Matrix::from_rows(&vec![vec![1.0, 2.0, 3.0]; 5]);
        let b = pca_fit(&data, Retention::Fraction(0.999), None).unwrap();
        assert_eq!(b.k(), 0);
        assert_eq!(b.reconstruct(&[]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(pca_fit(&Matrix::<f64>::zeros(1, 3), Retention::Components(1), None).is_err());
        assert!(pca_fit(&data, Retention::Fraction(0.0), None).is_err());
    }
}
