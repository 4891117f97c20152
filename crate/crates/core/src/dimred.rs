//! Standardization and principal component analysis.
//!
//! The fitted [`PcaModel`] carries its own centering and scaling vectors so a
//! single object maps raw feature rows to component scores:
//! `y = ((x - mean) / scale) · V`.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};

/// Standard deviations below this are treated as zero and replaced by 1.
pub const SCALE_FLOOR: f64 = 1e-12;

/// Largest `min(n, d)` solved with a dense SVD under [`PcaSolver::Auto`].
pub const EXACT_SVD_LIMIT: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Column means and population standard deviations.
pub fn fit_standardizer(x: &DMatrix<f64>) -> Result<Standardizer> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::arg("train_features", "standardizer needs at least 2 rows"));
    }
    check_finite(x)?;
    let mut mean = Vec::with_capacity(x.ncols());
    let mut scale = Vec::with_capacity(x.ncols());
    for col in x.column_iter() {
        let m = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        let s = var.sqrt();
        mean.push(m);
        scale.push(if s < SCALE_FLOOR { 1.0 } else { s });
    }
    Ok(Standardizer { mean, scale })
}

impl Standardizer {
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: x.ncols(),
            });
        }
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.mean[j], self.scale[j]);
            col.apply(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }

    /// Identity transform for `d` features.
    pub fn identity(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            scale: vec![1.0; d],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PcaSolver {
    /// Dense SVD for small problems, subspace iteration otherwise.
    #[default]
    Auto,
    Exact,
    Subspace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub d: usize,
    pub k: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// d×k matrix whose columns are the retained principal directions.
    pub components: DMatrix<f64>,
    /// Leading singular values of the centered training matrix, nonincreasing.
    pub singular_values: Vec<f64>,
}

fn check_finite(x: &DMatrix<f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::arg("train_features", "non-finite entry"))
    }
}

pub fn fit_pca(x: &DMatrix<f64>, k: usize) -> Result<PcaModel> {
    fit_pca_with(x, k, PcaSolver::Auto)
}

pub fn fit_pca_with(x: &DMatrix<f64>, k: usize, solver: PcaSolver) -> Result<PcaModel> {
    let (n, d) = x.shape();
    let r = n.min(d);
    if k < 1 || k > r {
        return Err(Error::arg("k", format!("{k} is outside 1..={r}")));
    }
    check_finite(x)?;
    let mean: Vec<f64> = x.column_iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        let m = mean[j];
        col.apply(|v| *v -= m);
    }
    let exact = match solver {
        PcaSolver::Exact => true,
        PcaSolver::Subspace => false,
        PcaSolver::Auto => r <= EXACT_SVD_LIMIT,
    };
    let (mut components, singular_values) = if exact {
        exact_svd(centered, k)?
    } else {
        subspace_svd(&centered, k)?
    };
    canonicalize_signs(&mut components);
    Ok(PcaModel {
        d,
        k,
        mean,
        scale: vec![1.0; d],
        components,
        singular_values,
    })
}

fn sorted_right_vectors(s: &nalgebra::DVector<f64>, v_t: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let d = v_t.ncols();
    let mut comps = DMatrix::zeros(d, k);
    for (j, &src) in order.iter().take(k).enumerate() {
        for i in 0..d {
            comps[(i, j)] = v_t[(src, i)];
        }
    }
    (comps, order.iter().map(|&i| s[i]).collect())
}

fn exact_svd(centered: DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let svd = centered.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::arg("train_features", "SVD did not converge"))?;
    Ok(sorted_right_vectors(&svd.singular_values, &v_t, k))
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Block subspace iteration on XᵀX followed by a Rayleigh–Ritz step.
fn subspace_svd(centered: &DMatrix<f64>, k: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    const POWER_ITERS: usize = 4;
    const OVERSAMPLE: usize = 10;
    let (n, d) = centered.shape();
    let l = (k + OVERSAMPLE).min(n.min(d));
    let mut r = rng(derive_seed(d as u64, "pca-start", n as u64));
    let omega = DMatrix::from_fn(d, l, |_, _| StandardNormal.sample(&mut r));
    let xt = centered.transpose();
    let mut q = orthonormalize(centered * omega);
    for _ in 0..POWER_ITERS {
        let z = orthonormalize(&xt * &q);
        q = orthonormalize(centered * z);
    }
    // B = Qᵀ X, computed as (Xᵀ Q)ᵀ
    let b = (&xt * &q).transpose();
    let svd = b.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::arg("train_features", "SVD did not converge"))?;
    Ok(sorted_right_vectors(&svd.singular_values, &v_t, k))
}

/// Flips each column so its largest-magnitude entry (first on ties) is positive.
fn canonicalize_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl PcaModel {
    /// Absorbs a standardizer fitted before this model, so raw rows project directly.
    pub fn with_standardizer(mut self, st: &Standardizer) -> Result<Self> {
        if st.mean.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: st.mean.len(),
            });
        }
        for j in 0..self.d {
            self.mean[j] = st.mean[j] + st.scale[j] * self.mean[j];
            self.scale[j] *= st.scale[j];
        }
        Ok(self)
    }

    pub fn project_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: row.len(),
            });
        }
        let z: Vec<f64> = row
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| (x - m) / s)
            .collect();
        Ok(self
            .components
            .column_iter()
            .map(|c| dot(&z, c.as_slice()))
            .collect())
    }

    /// Projects each row independently; a row's scores never depend on its batch.
    pub fn project<R: AsRef<[f64]> + Sync>(&self, rows: &[R]) -> Result<Vec<Vec<f64>>> {
        rows.par_iter().map(|r| self.project_row(r.as_ref())).collect()
    }

    pub fn project_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
        let y = self.project(&rows)?;
        Ok(DMatrix::from_fn(y.len(), self.k, |i, j| y[i][j]))
    }

    pub fn reconstruct_row(&self, scores: &[f64]) -> Result<Vec<f64>> {
        if scores.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: scores.len(),
            });
        }
        Ok((0..self.d)
            .map(|i| {
                let z: f64 = (0..self.k).map(|j| self.components[(i, j)] * scores[j]).sum();
                z * self.scale[i] + self.mean[i]
            })
            .collect())
    }

    pub fn to_json(&self) -> PcaJson {
        PcaJson {
            d: self.d,
            k: self.k,
            mean: self.mean.clone(),
            scale: self.scale.clone(),
            components: (0..self.d)
                .flat_map(|i| (0..self.k).map(move |j| (i, j)))
                .map(|(i, j)| self.components[(i, j)])
                .collect(),
            singular_values: self.singular_values.clone(),
        }
    }

    pub fn from_json(j: PcaJson) -> Result<Self> {
        if j.mean.len() != j.d || j.scale.len() != j.d {
            return Err(Error::schema("mean/scale", "length differs from d"));
        }
        if j.components.len() != j.d * j.k || j.k == 0 {
            return Err(Error::schema("components", "expected d×k entries"));
        }
        if j.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::schema("scale", "entries must be positive"));
        }
        if j.singular_values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::schema("singular_values", "must be nonincreasing"));
        }
        Ok(Self {
            d: j.d,
            k: j.k,
            components: DMatrix::from_row_slice(j.d, j.k, &j.components),
            mean: j.mean,
            scale: j.scale,
            singular_values: j.singular_values,
        })
    }
}

/// On-disk form of a fitted model; `components` is the d×k matrix in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaJson {
    pub d: usize,
    pub k: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub components: Vec<f64>,
    pub singular_values: Vec<f64>,
}

/// Builds an n×d matrix from feature rows.
pub fn rows_to_matrix<R: AsRef<[f64]>>(rows: &[R]) -> Result<DMatrix<f64>> {
    let d = rows.first().map_or(0, |r| r.as_ref().len());
    if rows.iter().any(|r| r.as_ref().len() != d) {
        return Err(Error::arg("rows", "ragged feature rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i].as_ref()[j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn standardizer_hand_case() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 3.0, 5.0]);
        let st = fit_standardizer(&x).unwrap();
        assert_eq!(st.mean, vec![2.0, 5.0]);
        assert_eq!(st.scale, vec![1.0, 1.0]);
        let z = st.apply(&x).unwrap();
        assert_eq!(z.column(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0]);
    }

    #[test]
    fn standardized_training_columns_have_zero_mean() {
        let x = DMatrix::from_fn(7, 3, |i, j| ((i * 13 + j * 7) % 5) as f64 * 1.7 + j as f64);
        let st = fit_standardizer(&x).unwrap();
        let z = st.apply(&x).unwrap();
        for c in z.column_iter() {
            assert!(c.mean().abs() < 1e-10);
        }
    }

    #[test]
    fn standardizer_needs_two_rows() {
        assert!(fit_standardizer(&DMatrix::from_row_slice(1, 2, &[1.0, 2.0])).is_err());
    }

    #[test]
    fn axis_aligned_data_gives_first_axis() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 2.0, 0.0, -2.0, 0.0]);
        for solver in [PcaSolver::Exact, PcaSolver::Subspace] {
            let m = fit_pca_with(&x, 1, solver).unwrap();
            assert_abs_diff_eq!(m.components[(0, 0)], 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(m.components[(1, 0)], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn k_out_of_range() {
        let x = DMatrix::from_fn(5, 3, |i, j| (i + j) as f64);
        assert!(fit_pca(&x, 0).is_err());
        assert!(fit_pca(&x, 4).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let mut x = DMatrix::from_fn(5, 3, |i, j| (i * j) as f64);
        x[(2, 1)] = f64::NAN;
        assert!(fit_pca(&x, 1).is_err());
    }

    #[test]
    fn mean_projects_to_zero() {
        let x = DMatrix::from_fn(8, 4, |i, j| ((i * 31 + j * 17) % 11) as f64);
        let st = fit_standardizer(&x).unwrap();
        let m = fit_pca(&st.apply(&x).unwrap(), 3).unwrap().with_standardizer(&st).unwrap();
        let y = m.project_row(&st.mean).unwrap();
        assert!(y.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn dimension_mismatch_on_project() {
        let x = DMatrix::from_fn(8, 4, |i, j| ((i * 31 + j * 17) % 11) as f64);
        let m = fit_pca(&x, 2).unwrap();
        assert!(m.project_row(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let x = DMatrix::from_fn(9, 5, |i, j| ((i * 7 + j * 3) % 13) as f64 * 0.37);
        let m = fit_pca(&x, 3).unwrap();
        let text = serde_json::to_string(&m.to_json()).unwrap();
        let back = PcaModel::from_json(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
