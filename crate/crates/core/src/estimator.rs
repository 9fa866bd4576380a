//! Covariance estimators: sample covariance, localization and its special
//! cases, the separable Kronecker comparator, PSD repair and inversion.

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};
use crate::lattice::{for_each_window_run, LatticeSpec, ScalingVector};
use crate::localfn::LocalizationFunction;
use crate::par;

/// Dense symmetric p×p matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix(DMatrix<f64>);

impl CovMatrix {
    /// Symmetrizes `m` as (m + mᵀ)/2.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        Ok(Self::symmetrized(m))
    }

    pub(crate) fn symmetrized(mut m: DMatrix<f64>) -> Self {
        let p = m.nrows();
        for j in 0..p {
            for i in (j + 1)..p {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self(m)
    }

    /// Wraps a matrix the caller guarantees to be exactly symmetric.
    pub(crate) fn from_symmetric(m: DMatrix<f64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        Self(m)
    }

    pub fn from_fn(p: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(p, p, f))
    }

    /// Builds from p² values in row-major order.
    pub fn from_row_major(p: usize, values: &[f64]) -> Result<Self> {
        if values.len() != p * p {
            return Err(Error::DimensionMismatch {
                expected: p * p,
                found: values.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(p, p, values))
    }

    pub fn identity(p: usize) -> Self {
        Self(DMatrix::identity(p, p))
    }

    pub fn zeros(p: usize) -> Self {
        Self(DMatrix::zeros(p, p))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)))
    }

    pub fn p(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Column j, which equals row j.
    pub fn column(&self, j: usize) -> &[f64] {
        let p = self.p();
        &self.0.as_slice()[j * p..(j + 1) * p]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.p()).map(|i| self.0[(i, i)]).collect()
    }

    /// Entry-wise difference, exactly symmetric.
    pub fn sub(&self, other: &CovMatrix) -> Result<CovMatrix> {
        self.check_same(other)?;
        Ok(Self(&self.0 - &other.0))
    }

    pub fn check_same(&self, other: &CovMatrix) -> Result<()> {
        if self.p() != other.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: other.p(),
            });
        }
        Ok(())
    }

    /// Principal submatrix on `idx`.
    pub fn submatrix(&self, idx: &[usize]) -> Result<CovMatrix> {
        if let Some(&i) = idx.iter().find(|&&i| i >= self.p()) {
            return Err(Error::IndexOutOfRange { index: i, len: self.p() });
        }
        Ok(Self(DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
            self.0[(idx[a], idx[b])]
        })))
    }

    /// Kronecker product a ⊗ b.
    pub fn kronecker(a: &CovMatrix, b: &CovMatrix) -> CovMatrix {
        Self(a.0.kronecker(&b.0))
    }
}

/// n observations of a p-vector, stored n×p.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(DMatrix<f64>);

impl DataMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("data has non-finite entries".into()));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix produced from finite inputs by this crate.
    pub(crate) fn from_trusted(m: DMatrix<f64>) -> Self {
        Self(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyInput)?;
        let p = first.len();
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: r.len(),
            });
        }
        Self::new(DMatrix::from_fn(rows.len(), p, |m, j| rows[m][j]))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn p(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn row(&self, m: usize) -> Vec<f64> {
        self.0.row(m).iter().copied().collect()
    }

    /// The rows listed in `idx`, in that order.
    pub fn select_rows(&self, idx: &[usize]) -> DataMatrix {
        Self(self.0.select_rows(idx))
    }
}

/// Unbiased sample covariance with divisor n − 1.
pub fn sample_covariance(data: &DataMatrix) -> Result<CovMatrix> {
    let n = data.n();
    if n < 2 {
        return Err(Error::TooFewSamples { n, required: 2 });
    }
    let x = data.as_matrix();
    let mut xc = x.clone();
    for mut col in xc.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    let mut g = xc.transpose() * &xc;
    g /= (n - 1) as f64;
    Ok(CovMatrix::symmetrized(g))
}

/// Precomputed weights h(δ/k_h) for one (lattice, h, k_h) triple.
#[derive(Debug, Clone)]
pub struct Localizer<'a> {
    spec: &'a LatticeSpec,
    ext: Vec<usize>,
    table: Vec<f64>,
    coords: Vec<usize>,
}

impl<'a> Localizer<'a> {
    pub fn new(spec: &'a LatticeSpec, h: &LocalizationFunction, k: &ScalingVector) -> Result<Self> {
        let d = spec.order();
        if k.arity() != d {
            return Err(Error::ArityMismatch {
                expected: d,
                found: k.arity(),
            });
        }
        h.check_arity(d)?;
        // every shipped h vanishes once some δ_ℓ ≥ k_ℓ, so only this box matters
        let ext: Vec<usize> = k
            .as_slice()
            .iter()
            .zip(spec.dims())
            .map(|(&kl, &pl)| kl.min(pl))
            .collect();
        let size: usize = ext.iter().product();
        let mut table = Vec::with_capacity(size);
        let mut delta = vec![0usize; d];
        let mut buf = vec![0.0; d];
        for _ in 0..size {
            table.push(h.eval_scaled(&delta, k.as_slice(), &mut buf));
            for (x, &e) in delta.iter_mut().zip(&ext) {
                *x += 1;
                if *x < e {
                    break;
                }
                *x = 0;
            }
        }
        let coords = if spec.is_regular() {
            Vec::new()
        } else {
            spec.site_coords_flat()
        };
        Ok(Self {
            spec,
            ext,
            table,
            coords,
        })
    }

    /// Weight for a coordinate difference.
    pub fn weight(&self, delta: &[usize]) -> f64 {
        let mut idx = 0;
        let mut stride = 1;
        for (&dl, &e) in delta.iter().zip(&self.ext) {
            if dl >= e {
                return 0.0;
            }
            idx += dl * stride;
            stride *= e;
        }
        self.table[idx]
    }

    /// Calls `f(j, w)` for every site j whose weight against site i may be
    /// nonzero. Indices are in estimator order.
    #[inline]
    pub(crate) fn for_each_support<F: FnMut(usize, f64)>(&self, i: usize, mut f: F) {
        let spec = self.spec;
        if spec.is_regular() {
            let a = spec.coord0(i);
            let a1 = a[0];
            for_each_window_run(spec.dims(), spec.strides(), &self.ext, &a, |j0, b1, len, outer| {
                let row = &self.table[outer..];
                for t in 0..len {
                    f(j0 + t, row[(b1 + t).abs_diff(a1)]);
                }
            });
        } else {
            let d = spec.order();
            let ci = &self.coords[i * d..(i + 1) * d];
            let p = spec.site_count();
            let mut delta = vec![0usize; d];
            'sites: for j in 0..p {
                let cj = &self.coords[j * d..(j + 1) * d];
                for l in 0..d {
                    delta[l] = ci[l].abs_diff(cj[l]);
                    if delta[l] >= self.ext[l] {
                        continue 'sites;
                    }
                }
                f(j, self.weight(&delta));
            }
        }
    }

    /// L_h(S; k_h): entry (i,j) of S scaled by h(δ_ij/k_h).
    pub fn apply(&self, s: &CovMatrix) -> Result<CovMatrix> {
        let p = self.spec.site_count();
        if s.p() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: s.p(),
            });
        }
        let mut out = vec![0.0; p * p];
        par::for_each_row_mut(&mut out, p, |i, col| {
            let src = s.column(i);
            self.for_each_support(i, |j, w| col[j] = src[j] * w);
        });
        Ok(CovMatrix::from_symmetric(DMatrix::from_vec(p, p, out)))
    }
}

/// Localization estimator L_h(S; k_h).
pub fn localize(
    s: &CovMatrix,
    spec: &LatticeSpec,
    h: &LocalizationFunction,
    k_h: &ScalingVector,
) -> Result<CovMatrix> {
    Localizer::new(spec, h, k_h)?.apply(s)
}

/// Keeps entries whose coordinate difference lies strictly inside k.
pub fn multi_band(s: &CovMatrix, spec: &LatticeSpec, k: &ScalingVector) -> Result<CovMatrix> {
    localize(s, spec, &LocalizationFunction::banding(), k)
}

/// Keeps entries with |i − j| ≤ k.
pub fn band_1d(s: &CovMatrix, k: usize) -> Result<CovMatrix> {
    let p = s.p();
    if k >= p {
        return Err(Error::InvalidArgument(format!(
            "bandwidth {k} must be below the dimension {p}"
        )));
    }
    multi_band(s, &LatticeSpec::line(p)?, &ScalingVector::new(vec![k + 1])?)
}

/// Scales entry (i,j) by φ(|i − j|; k/2, k).
pub fn taper_1d(s: &CovMatrix, k: usize) -> Result<CovMatrix> {
    if k < 2 || !k.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "taper width {k} must be even and at least 2"
        )));
    }
    localize(
        s,
        &LatticeSpec::line(s.p())?,
        &LocalizationFunction::tapering(vec![0.5])?,
        &ScalingVector::new(vec![k])?,
    )
}

/// Result of a nearest Kronecker product fit S ≈ Σ₂ ⊗ Σ₁.
#[derive(Debug, Clone)]
pub struct KroneckerFit {
    /// p1×p1 factor, normalized to trace p1.
    pub sigma1: CovMatrix,
    /// p2×p2 factor.
    pub sigma2: CovMatrix,
    /// ‖S − Σ₂ ⊗ Σ₁‖_F.
    pub residual: f64,
    pub iterations: usize,
}

impl KroneckerFit {
    pub fn product(&self) -> CovMatrix {
        CovMatrix::kronecker(&self.sigma2, &self.sigma1)
    }
}

/// Frobenius-nearest Σ₂ ⊗ Σ₁ to S, where sites are ordered with the p1
/// index varying fastest.
pub fn nearest_kronecker(
    s: &CovMatrix,
    p1: usize,
    p2: usize,
    iters: usize,
    tol: f64,
) -> Result<KroneckerFit> {
    if p1 == 0 || p2 == 0 || s.p() != p1 * p2 {
        return Err(Error::DimensionMismatch {
            expected: p1 * p2,
            found: s.p(),
        });
    }
    let m = s.as_matrix();
    // R[(b,b'), (a,a')] = S[a + p1 b, a' + p1 b']
    let r = DMatrix::from_fn(p2 * p2, p1 * p1, |row, col| {
        let (b, bp) = (row % p2, row / p2);
        let (a, ap) = (col % p1, col / p1);
        m[(a + p1 * b, ap + p1 * bp)]
    });
    let mut v = DMatrix::<f64>::identity(p1, p1).reshape_generic(
        nalgebra::Dyn(p1 * p1),
        nalgebra::Dyn(1),
    );
    v /= v.norm();
    let mut sigma = 0.0;
    let mut u = &r * &v;
    let mut iterations = 0;
    let mut converged = false;
    let mut change = f64::INFINITY;
    while iterations < iters {
        iterations += 1;
        u = &r * &v;
        let w = r.tr_mul(&u);
        let wn = w.norm();
        if wn == 0.0 {
            sigma = 0.0;
            converged = true;
            break;
        }
        let next = wn.sqrt();
        v = w / wn;
        change = (next - sigma).abs();
        sigma = next;
        if change <= tol * sigma.max(f64::MIN_POSITIVE) {
            converged = true;
            u = &r * &v;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "nearest Kronecker power iteration",
            iterations,
            residual: change,
        });
    }
    // best rank-one approximation is u vᵀ with ‖v‖ = 1
    let mut s1 = DMatrix::from_column_slice(p1, p1, v.as_slice());
    let mut s2 = DMatrix::from_column_slice(p2, p2, u.as_slice());
    let tr = s1.trace();
    if sigma == 0.0 || tr == 0.0 {
        s1 = DMatrix::identity(p1, p1);
        s2 = DMatrix::zeros(p2, p2);
    } else {
        let scale = tr / p1 as f64;
        s1 /= scale;
        s2 *= scale;
    }
    let sigma1 = CovMatrix::symmetrized(s1);
    let sigma2 = CovMatrix::symmetrized(s2);
    let residual = (m - sigma2.0.kronecker(&sigma1.0)).norm();
    Ok(KroneckerFit {
        sigma1,
        sigma2,
        residual,
        iterations,
    })
}

/// Tolerance below the floor accepted without eigen-repair.
const PSD_SLACK: f64 = 1e-10;

fn shifted_cholesky_ok(m: &DMatrix<f64>, shift: f64) -> bool {
    let mut a = m.clone();
    for i in 0..a.nrows() {
        a[(i, i)] -= shift;
    }
    Cholesky::new(a).is_some()
}

/// Symmetric eigendecomposition (ascending eigenvalues, eigenvectors as columns).
pub(crate) fn symmetric_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let p = m.nrows();
    let fm = faer::Mat::<f64>::from_fn(p, p, |i, j| m[(i, j)]);
    let eig = fm
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::NoConvergence {
            what: "symmetric eigensolver",
            iterations: 0,
            residual: f64::NAN,
        })?;
    let vals: Vec<f64> = (0..p).map(|i| eig.S().column_vector()[i]).collect();
    let u = eig.U();
    let vecs = DMatrix::from_fn(p, p, |i, j| u[(i, j)]);
    Ok((vals, vecs))
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn eigenvalues(m: &CovMatrix) -> Result<Vec<f64>> {
    Ok(symmetric_eigen(&m.0)?.0)
}

/// Clamps eigenvalues to at least `floor`. Matrices already within
/// 1e−10 of that are returned unchanged.
pub fn psd_project(m: &CovMatrix, floor: f64) -> Result<CovMatrix> {
    if !(floor >= 0.0) {
        return Err(Error::InvalidArgument(format!("floor {floor} must be non-negative")));
    }
    if m.p() == 0 || shifted_cholesky_ok(&m.0, floor - PSD_SLACK) {
        return Ok(m.clone());
    }
    let (vals, vecs) = symmetric_eigen(&m.0)?;
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= vals[j].max(floor);
    }
    Ok(CovMatrix::symmetrized(scaled * vecs.transpose()))
}

/// Inverse of M, refusing matrices whose smallest eigenvalue is not above
/// `min_eig_guard`.
pub fn precision(m: &CovMatrix, min_eig_guard: f64) -> Result<CovMatrix> {
    if !shifted_cholesky_ok(&m.0, min_eig_guard) {
        return Err(Error::NotPositiveDefinite(format!(
            "smallest eigenvalue is not above {min_eig_guard}"
        )));
    }
    let chol = Cholesky::new(m.0.clone())
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    Ok(CovMatrix::symmetrized(chol.inverse()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, p: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    fn random_sym(p: usize, seed: u64) -> CovMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CovMatrix::new(DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    fn random_pd(p: usize, seed: u64) -> CovMatrix {
        let a = random_data(p + 3, p, seed);
        let mut g = a.as_matrix().tr_mul(a.as_matrix());
        for i in 0..p {
            g[(i, i)] += 0.5;
        }
        CovMatrix::new(g).unwrap()
    }

    #[test]
    fn sample_covariance_examples() {
        let d = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let s = sample_covariance(&d).unwrap();
        assert_eq!(s.as_matrix(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
        let c = DataMatrix::from_rows(&vec![vec![3.0, -1.0, 2.0]; 4]).unwrap();
        assert!(sample_covariance(&c).unwrap().as_matrix().iter().all(|&x| x == 0.0));
        let one = DataMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(matches!(sample_covariance(&one), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn sample_covariance_matches_naive() {
        let d = random_data(5, 3, 7);
        let s = sample_covariance(&d).unwrap();
        let x = d.as_matrix();
        for i in 0..3 {
            for j in 0..3 {
                let mi = (0..5).map(|m| x[(m, i)]).sum::<f64>() / 5.0;
                let mj = (0..5).map(|m| x[(m, j)]).sum::<f64>() / 5.0;
                let v = (0..5).map(|m| (x[(m, i)] - mi) * (x[(m, j)] - mj)).sum::<f64>() / 4.0;
                assert!((s.get(i, j) - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn localize_examples() {
        let spec = LatticeSpec::new(vec![3, 3]).unwrap();
        let s = random_sym(9, 1);
        let full = ScalingVector::new(vec![3, 3]).unwrap();
        let b = LocalizationFunction::banding();
        assert_eq!(localize(&s, &spec, &b, &full).unwrap(), s);
        let ones = ScalingVector::new(vec![1, 1]).unwrap();
        let diag = localize(&s, &spec, &b, &ones).unwrap();
        assert_eq!(diag, CovMatrix::from_diagonal(&s.diagonal()).unwrap());
        for h in [
            LocalizationFunction::gaspari_cohn(),
            LocalizationFunction::tapering(vec![0.3]).unwrap(),
        ] {
            let out = localize(&s, &spec, &h, &ScalingVector::new(vec![2, 3]).unwrap()).unwrap();
            assert_eq!(out.diagonal(), s.diagonal());
            for i in 0..9 {
                for j in 0..9 {
                    assert!(out.get(i, j).abs() <= s.get(i, j).abs());
                }
            }
        }
        assert!(localize(&s, &LatticeSpec::line(8).unwrap(), &b, &ScalingVector::new(vec![2]).unwrap()).is_err());
        assert!(localize(&s, &spec, &b, &ScalingVector::new(vec![2]).unwrap()).is_err());
    }

    #[test]
    fn localize_matches_bruteforce() {
        let spec = LatticeSpec::new(vec![4, 3, 5]).unwrap();
        let s = random_sym(60, 2);
        let k = ScalingVector::new(vec![3, 2, 4]).unwrap();
        for h in [
            LocalizationFunction::banding(),
            LocalizationFunction::gaspari_cohn(),
            LocalizationFunction::tapering(vec![0.5, 0.25, 0.75]).unwrap(),
        ] {
            let out = localize(&s, &spec, &h, &k).unwrap();
            for i in 0..60 {
                for j in 0..60 {
                    let dl = spec.delta(i, j).unwrap();
                    let z: Vec<f64> = dl.0.iter().zip(k.as_slice()).map(|(a, b)| *a as f64 / *b as f64).collect();
                    assert_eq!(out.get(i, j), s.get(i, j) * h.eval(&z).unwrap());
                }
            }
        }
    }

    #[test]
    fn band_and_taper_1d() {
        let s = random_sym(6, 3);
        assert_eq!(band_1d(&s, 5).unwrap(), s);
        assert_eq!(band_1d(&s, 0).unwrap(), CovMatrix::from_diagonal(&s.diagonal()).unwrap());
        let tri = band_1d(&s, 1).unwrap();
        for i in 0..6usize {
            for j in 0..6 {
                let want = if i.abs_diff(j) <= 1 { s.get(i, j) } else { 0.0 };
                assert_eq!(tri.get(i, j), want);
            }
        }
        assert!(band_1d(&s, 6).is_err());
        let ones = CovMatrix::from_fn(20, |_, _| 1.0).unwrap();
        let t = taper_1d(&ones, 8).unwrap();
        assert_eq!(t.get(0, 4), 1.0);
        assert!((t.get(0, 6) - 0.5).abs() < 1e-15);
        assert_eq!(t.get(0, 8), 0.0);
        assert_eq!(t.get(3, 15), 0.0);
        assert!(taper_1d(&ones, 3).is_err());
        assert!(taper_1d(&ones, 0).is_err());
    }

    #[test]
    fn irregular_matches_submatrix_of_full() {
        let dims = vec![5, 4];
        let full = LatticeSpec::new(dims.clone()).unwrap();
        let active = vec![0, 3, 4, 7, 11, 12, 18, 19];
        let irr = LatticeSpec::with_active(dims, active.clone()).unwrap();
        let s_sub = random_sym(active.len(), 4);
        let mut big = DMatrix::zeros(20, 20);
        for (a, &i) in active.iter().enumerate() {
            for (b, &j) in active.iter().enumerate() {
                big[(i, j)] = s_sub.get(a, b);
            }
        }
        let big = CovMatrix::new(big).unwrap();
        let k = ScalingVector::new(vec![3, 2]).unwrap();
        for h in [LocalizationFunction::tapering(vec![0.5]).unwrap(), LocalizationFunction::gaspari_cohn()] {
            let a = localize(&s_sub, &irr, &h, &k).unwrap();
            let b = localize(&big, &full, &h, &k).unwrap().submatrix(&active).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn kronecker_exact_and_perturbed() {
        let a = random_pd(3, 5);
        let b = random_pd(4, 6);
        let s = CovMatrix::kronecker(&a, &b);
        let fit = nearest_kronecker(&s, 4, 3, 1000, 1e-14).unwrap();
        assert!(fit.residual <= 1e-10, "{}", fit.residual);
        assert!((fit.sigma1.as_matrix().trace() - 4.0).abs() < 1e-12);
        // B recovered up to scale
        let scale = b.as_matrix().trace() / 4.0;
        assert!((fit.sigma1.as_matrix() * scale - b.as_matrix()).norm() < 1e-9);
        let e = random_sym(12, 9).into_inner() * 1e-3;
        let noisy = CovMatrix::new(s.as_matrix() + &e).unwrap();
        let fit = nearest_kronecker(&noisy, 4, 3, 1000, 1e-14).unwrap();
        assert!(fit.residual <= e.norm() + 1e-10);
        let one = CovMatrix::from_diagonal(&[2.5]).unwrap();
        let fit = nearest_kronecker(&one, 1, 1, 100, 1e-14).unwrap();
        assert!((fit.product().get(0, 0) - 2.5).abs() < 1e-14);
        assert!(nearest_kronecker(&one, 2, 1, 100, 1e-14).is_err());
    }

    #[test]
    fn psd_project_examples() {
        let pd = random_pd(6, 10);
        assert_eq!(psd_project(&pd, 0.0).unwrap(), pd);
        let m = CovMatrix::from_diagonal(&[1.0, -1.0]).unwrap();
        let r = psd_project(&m, 0.0).unwrap();
        assert!((r.as_matrix() - DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0]))).norm() < 1e-15);
    }

    #[test]
    fn psd_project_is_nearest_and_idempotent() {
        let m = random_sym(20, 11);
        let out = psd_project(&m, 0.0).unwrap();
        // independent route: nalgebra's eigensolver
        let e = m.as_matrix().clone().symmetric_eigen();
        let clamped = e.eigenvalues.map(|x| x.max(0.0));
        let oracle = &e.eigenvectors * DMatrix::from_diagonal(&clamped) * e.eigenvectors.transpose();
        assert!((out.as_matrix() - oracle).amax() < 1e-12);
        assert!(eigenvalues(&out).unwrap()[0] >= -1e-10);
        let again = psd_project(&out, 0.0).unwrap();
        assert!((again.as_matrix() - out.as_matrix()).amax() < 1e-12);
        let floored = psd_project(&m, 0.3).unwrap();
        assert!(eigenvalues(&floored).unwrap()[0] >= 0.3 - 1e-10);
    }

    #[test]
    fn precision_examples() {
        assert_eq!(precision(&CovMatrix::identity(4), 1e-12).unwrap(), CovMatrix::identity(4));
        let d = precision(&CovMatrix::from_diagonal(&[2.0, 4.0]).unwrap(), 1e-12).unwrap();
        assert!((d.get(0, 0) - 0.5).abs() < 1e-15 && (d.get(1, 1) - 0.25).abs() < 1e-15);
        assert_eq!(d.get(0, 1), 0.0);
        let m = random_pd(10, 12);
        let inv = precision(&m, 1e-8).unwrap();
        assert!((m.as_matrix() * inv.as_matrix() - DMatrix::<f64>::identity(10, 10)).amax() < 1e-10);
        let bad = CovMatrix::from_diagonal(&[1.0, 1e-9]).unwrap();
        assert!(matches!(precision(&bad, 1e-6), Err(Error::NotPositiveDefinite(_))));
    }
}
