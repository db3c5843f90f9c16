//! Complex principal component analysis with eigenvalue whitening.
//!
//! `z = Lambda^-1/2 U^H (o - mean)` and `o = U Lambda^1/2 z + mean`, where
//! `U` holds the top `P` eigenvectors of the Hermitian covariance
//! `(1/N) sum (o - mean)(o - mean)^H`.

use nalgebra::DMatrix;

use crate::complex::{CMat, CVec, Matrix, C64};
use crate::error::{check_len, Error, Result};

/// Retained eigenvalues must exceed this fraction of the largest one.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Default number of retained components.
pub const DEFAULT_COMPONENTS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct CpcaBasis {
    /// Offset subtracted before projection; all zeros when `centered` is false.
    pub mean: CVec,
    /// `F x P` orthonormal columns.
    pub u: CMat,
    /// Descending, all positive.
    pub lambda: Vec<f64>,
    pub centered: bool,
}

impl CpcaBasis {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn components(&self) -> usize {
        self.lambda.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_len("CpcaBasis U rows", self.mean.len(), self.u.rows())?;
        check_len("CpcaBasis U cols", self.lambda.len(), self.u.cols())?;
        if !self.lambda.iter().all(|l| *l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidConfig(
                "CPCA eigenvalues must be positive and finite".into(),
            ));
        }
        if self.lambda.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "CPCA eigenvalues must be sorted descending".into(),
            ));
        }
        Ok(())
    }
}

/// Hermitian covariance of `frames` around `offset`.
fn covariance(frames: &[CVec], offset: &[C64]) -> DMatrix<C64> {
    let f = offset.len();
    let mut cov = DMatrix::<C64>::zeros(f, f);
    let mut centered = vec![C64::new(0.0, 0.0); f];
    for o in frames {
        for (c, (x, m)) in centered.iter_mut().zip(o.iter().zip(offset)) {
            *c = x - m;
        }
        for a in 0..f {
            let ca = centered[a];
            for b in a..f {
                cov[(a, b)] += ca * centered[b].conj();
            }
        }
    }
    let n = frames.len() as f64;
    for a in 0..f {
        for b in a..f {
            let v = cov[(a, b)] / n;
            cov[(a, b)] = v;
            cov[(b, a)] = v.conj();
        }
        cov[(a, a)].im = 0.0;
    }
    cov
}

/// Fits a `components`-dimensional basis. With `centered = false` the
/// covariance is taken around zero.
pub fn cpca_fit(frames: &[CVec], components: usize, centered: bool) -> Result<CpcaBasis> {
    let first = frames.first().ok_or(Error::TooFewFrames {
        frames: 0,
        needed: components.max(1),
    })?;
    let f = first.len();
    if components == 0 || components > f {
        return Err(Error::InvalidConfig(format!(
            "CPCA components must be in 1..={f}, got {components}"
        )));
    }
    if frames.len() < components {
        return Err(Error::TooFewFrames {
            frames: frames.len(),
            needed: components,
        });
    }
    for o in frames {
        check_len("cpca_fit frame", f, o.len())?;
    }
    let mut mean = vec![C64::new(0.0, 0.0); f];
    if centered {
        for o in frames {
            for (m, x) in mean.iter_mut().zip(o) {
                *m += x;
            }
        }
        let n = frames.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
    }
    let cov = covariance(frames, &mean);
    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambda_max = eig.eigenvalues[order[0]].max(0.0);
    let floor = EIGEN_FLOOR * lambda_max;
    let rank = order.iter().filter(|&&k| eig.eigenvalues[k] > floor).count();
    if rank < components {
        return Err(Error::RankDeficient {
            rank,
            requested: components,
        });
    }
    let mut u = CMat::zeros(f, components);
    let mut lambda = Vec::with_capacity(components);
    for (col, &k) in order.iter().take(components).enumerate() {
        lambda.push(eig.eigenvalues[k]);
        let v = eig.eigenvectors.column(k);
        // Rotate so the largest-magnitude entry (first on ties) is real positive.
        let mut pivot = 0;
        for row in 1..f {
            if v[row].norm() > v[pivot].norm() {
                pivot = row;
            }
        }
        let phase = v[pivot].conj() / v[pivot].norm();
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        for row in 0..f {
            u.set(row, col, v[row] * phase / norm);
        }
        let fixed = u.get(pivot, col);
        u.set(pivot, col, C64::new(fixed.norm(), 0.0));
    }
    Ok(CpcaBasis {
        mean,
        u,
        lambda,
        centered,
    })
}

/// `Lambda^-1/2 U^H (o - mean)`.
pub fn cpca_transform(o: &[C64], basis: &CpcaBasis) -> Result<CVec> {
    check_len("cpca_transform input", basis.input_dim(), o.len())?;
    let p = basis.components();
    let mut z = vec![C64::new(0.0, 0.0); p];
    for (row, (x, m)) in o.iter().zip(&basis.mean).enumerate() {
        let d = x - m;
        for (zk, u) in z.iter_mut().zip(basis.u.row(row)) {
            *zk += u.conj() * d;
        }
    }
    for (zk, l) in z.iter_mut().zip(&basis.lambda) {
        *zk /= l.sqrt();
    }
    Ok(z)
}

/// `U Lambda^1/2 z + mean`.
pub fn cpca_inverse(z: &[C64], basis: &CpcaBasis) -> Result<CVec> {
    check_len("cpca_inverse input", basis.components(), z.len())?;
    let scaled: CVec = z.iter().zip(&basis.lambda).map(|(z, l)| z * l.sqrt()).collect();
    Ok((0..basis.input_dim())
        .map(|row| basis.mean[row] + basis.u.row(row).iter().zip(&scaled).map(|(u, s)| u * s).sum::<C64>())
        .collect())
}

pub fn cpca_transform_all(frames: &[CVec], basis: &CpcaBasis) -> Result<Vec<CVec>> {
    frames.iter().map(|o| cpca_transform(o, basis)).collect()
}

pub fn cpca_inverse_all(features: &[CVec], basis: &CpcaBasis) -> Result<Vec<CVec>> {
    features.iter().map(|z| cpca_inverse(z, basis)).collect()
}

/// Mean over frames of `||o - inverse(transform(o))||^2`.
pub fn cpca_reconstruction_error(frames: &[CVec], basis: &CpcaBasis) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut total = 0.0;
    for o in frames {
        let back = cpca_inverse(&cpca_transform(o, basis)?, basis)?;
        total += o.iter().zip(&back).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
    }
    Ok(total / frames.len() as f64)
}

/// Column `k` of `U`.
pub fn basis_column(basis: &CpcaBasis, k: usize) -> CVec {
    (0..basis.input_dim()).map(|row| basis.u.get(row, k)).collect()
}

/// Column-major copy of `U`, the order used on disk.
pub fn u_column_major(basis: &CpcaBasis) -> CVec {
    let (f, p) = (basis.input_dim(), basis.components());
    let mut out = Vec::with_capacity(f * p);
    for k in 0..p {
        for row in 0..f {
            out.push(basis.u.get(row, k));
        }
    }
    out
}

/// Builds `U` from column-major data.
pub fn u_from_column_major(f: usize, p: usize, data: &[C64]) -> Result<CMat> {
    check_len("U column-major length", f * p, data.len())?;
    Ok(Matrix::from_fn(f, p, |row, k| data[k * f + row]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::SeededRng;

    fn white(n: usize, f: usize, rng: &mut SeededRng) -> Vec<CVec> {
        let s = 0.5f64.sqrt();
        (0..n)
            .map(|_| (0..f).map(|_| C64::new(s * rng.normal(), s * rng.normal())).collect())
            .collect()
    }

    fn correlated(n: usize, f: usize, rng: &mut SeededRng) -> Vec<CVec> {
        let mix = Matrix::from_fn(f, f, |a, b| {
            C64::new(((a * 7 + b * 3) % 5) as f64 - 2.0, ((a + 2 * b) % 3) as f64 - 1.0) / (1.0 + a as f64)
        });
        white(n, f, rng)
            .into_iter()
            .map(|w| {
                (0..f)
                    .map(|a| C64::new(1.0, -0.5) + (0..f).map(|b| mix.get(a, b) * w[b]).sum::<C64>())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn white_noise_has_unit_eigenvalues() {
        let data = white(10_000, 4, &mut SeededRng::new(1, 0));
        let basis = cpca_fit(&data, 4, true).unwrap();
        for l in &basis.lambda {
            assert!((l - 1.0).abs() < 0.06, "{l}");
        }
    }

    #[test]
    fn orthonormal_sorted_and_phase_fixed() {
        let data = correlated(500, 5, &mut SeededRng::new(2, 0));
        let basis = cpca_fit(&data, 3, true).unwrap();
        assert!(basis.lambda.windows(2).all(|w| w[0] >= w[1]));
        for a in 0..3 {
            let ua = basis_column(&basis, a);
            for b in 0..3 {
                let ub = basis_column(&basis, b);
                let dot: C64 = ua.iter().zip(&ub).map(|(x, y)| x.conj() * y).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - C64::new(expect, 0.0)).norm() < 1e-10);
            }
            let pivot = ua
                .iter()
                .cloned()
                .fold(C64::new(0.0, 0.0), |m, x| if x.norm() > m.norm() { x } else { m });
            assert!(pivot.im == 0.0 && pivot.re > 0.0);
        }
    }

    #[test]
    fn eigen_residual_is_small() {
        let data = correlated(400, 6, &mut SeededRng::new(3, 0));
        let basis = cpca_fit(&data, 6, true).unwrap();
        let cov = covariance(&data, &basis.mean);
        for k in 0..6 {
            let u = basis_column(&basis, k);
            let mut resid = 0.0;
            for a in 0..6 {
                let cu: C64 = (0..6).map(|b| cov[(a, b)] * u[b]).sum();
                resid += (cu - basis.lambda[k] * u[a]).norm_sqr();
            }
            assert!(resid.sqrt() < 1e-8);
        }
    }

    #[test]
    fn transform_examples() {
        let data = correlated(300, 4, &mut SeededRng::new(4, 0));
        let basis = cpca_fit(&data, 2, true).unwrap();
        let z = cpca_transform(&basis.mean, &basis).unwrap();
        assert!(z.iter().all(|x| x.norm() < 1e-12));
        let o: CVec = basis
            .mean
            .iter()
            .zip(basis_column(&basis, 0))
            .map(|(m, u)| m + basis.lambda[0].sqrt() * u)
            .collect();
        let z = cpca_transform(&o, &basis).unwrap();
        assert!((z[0] - C64::new(1.0, 0.0)).norm() < 1e-10 && z[1].norm() < 1e-10);
        assert_eq!(cpca_inverse(&[C64::new(0.0, 0.0); 2], &basis).unwrap(), basis.mean);
    }

    #[test]
    fn whitened_training_set_has_unit_variance() {
        let data = correlated(10_000, 4, &mut SeededRng::new(5, 0));
        let basis = cpca_fit(&data, 3, true).unwrap();
        let z = cpca_transform_all(&data, &basis).unwrap();
        for k in 0..3 {
            let var = z.iter().map(|v| v[k].norm_sqr()).sum::<f64>() / z.len() as f64;
            assert!((var - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn partial_roundtrip_is_orthogonal_projection() {
        let mut rng = SeededRng::new(6, 0);
        let data = correlated(300, 5, &mut rng);
        let basis = cpca_fit(&data, 2, true).unwrap();
        let o: CVec = (0..5).map(|_| C64::new(rng.normal(), rng.normal())).collect();
        let back = cpca_inverse(&cpca_transform(&o, &basis).unwrap(), &basis).unwrap();
        // Independent projector U U^H applied to the centered input.
        for a in 0..5 {
            let mut proj = basis.mean[a];
            for b in 0..5 {
                let uu: C64 = (0..2).map(|k| basis.u.get(a, k) * basis.u.get(b, k).conj()).sum();
                proj += uu * (o[b] - basis.mean[b]);
            }
            assert!((proj - back[a]).norm() < 1e-10);
        }
    }

    #[test]
    fn exact_subspace_reconstructs() {
        let mut rng = SeededRng::new(7, 0);
        let basis_vecs: Vec<CVec> = (0..2)
            .map(|_| (0..6).map(|_| C64::new(rng.normal(), rng.normal())).collect())
            .collect();
        let data: Vec<CVec> = (0..50)
            .map(|_| {
                let (a, b) = (
                    C64::new(rng.normal(), rng.normal()),
                    C64::new(rng.normal(), rng.normal()),
                );
                (0..6).map(|k| a * basis_vecs[0][k] + b * basis_vecs[1][k]).collect()
            })
            .collect();
        let basis = cpca_fit(&data, 2, false).unwrap();
        assert!(cpca_reconstruction_error(&data, &basis).unwrap() < 1e-16);
        assert!(matches!(
            cpca_fit(&data, 3, false),
            Err(Error::RankDeficient { rank: 2, requested: 3 })
        ));
    }

    #[test]
    fn argument_errors() {
        let data = white(3, 4, &mut SeededRng::new(8, 0));
        assert!(matches!(cpca_fit(&data, 4, true), Err(Error::TooFewFrames { .. })));
        assert!(cpca_fit(&data, 5, true).is_err());
        assert!(cpca_fit(&data, 0, true).is_err());
        let basis = cpca_fit(&data, 2, true).unwrap();
        assert!(cpca_transform(&[C64::new(0.0, 0.0); 3], &basis).is_err());
    }

    #[test]
    fn column_major_roundtrip() {
        let data = correlated(100, 4, &mut SeededRng::new(9, 0));
        let basis = cpca_fit(&data, 3, true).unwrap();
        let cm = u_column_major(&basis);
        assert_eq!(u_from_column_major(4, 3, &cm).unwrap(), basis.u);
    }
}
