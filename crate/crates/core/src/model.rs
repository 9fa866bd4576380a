//! Decay functions, optimal scaling, synthetic covariance settings, class
//! diagnostics and Gaussian / Student-t samplers.

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{eigenvalues, psd_project, CovMatrix, DataMatrix};
use crate::lattice::{LatticeSpec, ScalingVector};
use crate::rng::{derive_seed, Stream};

/// Additive decay family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DecayFamily {
    /// Σ_ℓ k_ℓ^{−α_ℓ} 1{0 < k_ℓ < p_ℓ} + 1{k_ℓ = 0}.
    Polynomial { alpha: Vec<f64> },
    /// Σ_ℓ β_ℓ^{−k_ℓ} 1{k_ℓ < p_ℓ}.
    Exponential { beta: Vec<f64> },
}

/// Covariance decay function τ(k) on a lattice box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DecaySpecRepr", into = "DecaySpecRepr")]
pub struct DecaySpec {
    family: DecayFamily,
    dims: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DecaySpecRepr {
    #[serde(flatten)]
    family: DecayFamily,
    dims: Vec<usize>,
}

impl TryFrom<DecaySpecRepr> for DecaySpec {
    type Error = Error;
    fn try_from(r: DecaySpecRepr) -> Result<Self> {
        DecaySpec::new(r.family, r.dims)
    }
}

impl From<DecaySpec> for DecaySpecRepr {
    fn from(s: DecaySpec) -> Self {
        DecaySpecRepr {
            family: s.family,
            dims: s.dims,
        }
    }
}

impl DecaySpec {
    pub fn new(family: DecayFamily, dims: Vec<usize>) -> Result<Self> {
        let params = match &family {
            DecayFamily::Polynomial { alpha } => {
                if alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                    return Err(Error::InvalidArgument("decay exponents must be positive".into()));
                }
                alpha.len()
            }
            DecayFamily::Exponential { beta } => {
                if beta.iter().any(|b| !(*b > 1.0 && b.is_finite())) {
                    return Err(Error::InvalidArgument("decay bases must exceed 1".into()));
                }
                beta.len()
            }
        };
        if params != dims.len() {
            return Err(Error::ArityMismatch {
                expected: dims.len(),
                found: params,
            });
        }
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::InvalidLattice("decay dims must be positive".into()));
        }
        Ok(Self { family, dims })
    }

    pub fn polynomial(alpha: Vec<f64>, dims: Vec<usize>) -> Result<Self> {
        Self::new(DecayFamily::Polynomial { alpha }, dims)
    }

    pub fn exponential(beta: Vec<f64>, dims: Vec<usize>) -> Result<Self> {
        Self::new(DecayFamily::Exponential { beta }, dims)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn family(&self) -> &DecayFamily {
        &self.family
    }

    /// Contribution of dimension ℓ at window k_ℓ.
    fn term(&self, l: usize, k: usize) -> f64 {
        let p = self.dims[l];
        match &self.family {
            DecayFamily::Polynomial { alpha } => {
                if k == 0 {
                    1.0
                } else if k < p {
                    (k as f64).powf(-alpha[l])
                } else {
                    0.0
                }
            }
            DecayFamily::Exponential { beta } => {
                if k < p {
                    beta[l].powi(-(k as i32))
                } else {
                    0.0
                }
            }
        }
    }

    /// τ(k) for k in the box [0, p]; components of 0 are allowed.
    pub fn eval(&self, k: &[usize]) -> Result<f64> {
        if k.len() != self.dims.len() {
            return Err(Error::ArityMismatch {
                expected: self.dims.len(),
                found: k.len(),
            });
        }
        Ok((0..k.len()).map(|l| self.term(l, k[l])).sum())
    }
}

/// τ(k) (see [`DecaySpec::eval`]).
pub fn decay_eval(tau: &DecaySpec, k: &[usize]) -> Result<f64> {
    tau.eval(k)
}

/// Exact minimizer of τ²(k) + V(k)/n over k ∈ {1..p_1}×…×{1..p_d}.
///
/// Depth-first enumeration in lexicographic order, cutting any branch whose
/// partial volume alone already reaches the best objective. Ties go to the
/// smaller V(k), then to the lexicographically smaller k.
pub fn optimal_scaling(tau: &DecaySpec, n: usize) -> Result<(ScalingVector, f64)> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    let d = tau.dims.len();
    let nf = n as f64;
    // tables of per-dimension terms, indexed by k_ℓ − 1
    let terms: Vec<Vec<f64>> = (0..d)
        .map(|l| (1..=tau.dims[l]).map(|k| tau.term(l, k)).collect())
        .collect();
    struct Search<'a> {
        terms: &'a [Vec<f64>],
        nf: f64,
        best: f64,
        best_v: f64,
        best_k: Vec<usize>,
        cur: Vec<usize>,
    }
    impl Search<'_> {
        fn go(&mut self, l: usize, tsum: f64, vol: f64) {
            if l == self.terms.len() {
                let obj = tsum * tsum + vol / self.nf;
                if obj < self.best || (obj == self.best && vol < self.best_v) {
                    self.best = obj;
                    self.best_v = vol;
                    self.best_k.clone_from(&self.cur);
                }
                return;
            }
            for k in 1..=self.terms[l].len() {
                let v = vol * k as f64;
                if v / self.nf >= self.best && !(v / self.nf == self.best && v < self.best_v) {
                    break;
                }
                self.cur[l] = k;
                self.go(l + 1, tsum + self.terms[l][k - 1], v);
            }
        }
    }
    let mut s = Search {
        terms: &terms,
        nf,
        best: f64::INFINITY,
        best_v: f64::INFINITY,
        best_k: vec![1; d],
        cur: vec![1; d],
    };
    s.go(0, 0.0, 1.0);
    Ok((ScalingVector::new(s.best_k)?, s.best))
}

/// Draws the frozen amplitude vector a_i ~ Unif(0.5, 1.5).
pub fn draw_amplitudes(p: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[Stream::Truth as u64]));
    (0..p).map(|_| rng.random_range(0.5..1.5)).collect()
}

fn check_amplitudes(a: &[f64], p: usize) -> Result<()> {
    if a.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: a.len(),
        });
    }
    if a.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidArgument("amplitudes must be positive".into()));
    }
    Ok(())
}

/// σ_ij = √(a_i a_j) exp(−‖(s_i − s_j)/ℓ‖²/2), with unit length scales by default.
pub fn gen_setting1(spec: &LatticeSpec, a: &[f64], length_scales: Option<&[f64]>) -> Result<CovMatrix> {
    let p = spec.site_count();
    let d = spec.order();
    check_amplitudes(a, p)?;
    let ls = match length_scales {
        Some(ls) if ls.len() != d => {
            return Err(Error::ArityMismatch {
                expected: d,
                found: ls.len(),
            })
        }
        Some(ls) if ls.iter().any(|x| !(*x > 0.0)) => {
            return Err(Error::InvalidArgument("length scales must be positive".into()))
        }
        Some(ls) => ls.to_vec(),
        None => vec![1.0; d],
    };
    let coords = spec.site_coords_flat();
    let m = DMatrix::from_fn(p, p, |i, j| {
        let r2: f64 = (0..d)
            .map(|l| {
                let t = coords[i * d + l].abs_diff(coords[j * d + l]) as f64 / ls[l];
                t * t
            })
            .sum();
        (a[i] * a[j]).sqrt() * (-0.5 * r2).exp()
    });
    CovMatrix::new(m)
}

/// Block diagonal with p2 blocks of size p1; block k has entries 2·(k/p2)^{|i−j|}.
pub fn gen_setting2(p1: usize, p2: usize) -> Result<CovMatrix> {
    if p1 == 0 || p2 == 0 {
        return Err(Error::InvalidArgument("block sizes must be positive".into()));
    }
    let p = p1 * p2;
    CovMatrix::from_fn(p, |i, j| {
        let (bi, bj) = (i / p1, j / p1);
        if bi != bj {
            return 0.0;
        }
        let r = (bi + 1) as f64 / p2 as f64;
        2.0 * r.powi(i.abs_diff(j) as i32)
    })
}

/// Product-polynomial covariance before projection: √(a_i a_j) ∏ f_ℓ(δ_ℓ) with f_ℓ(0) = 1 and
/// f_ℓ(δ) = δ^{−α_ℓ−1} otherwise. Not PSD in general.
pub fn gen_setting3_raw(spec: &LatticeSpec, a: &[f64], alpha: &[f64]) -> Result<CovMatrix> {
    if spec.order() != 3 {
        return Err(Error::InvalidLattice(format!(
            "the product-polynomial generator needs a 3-order lattice, got order {}",
            spec.order()
        )));
    }
    if alpha.len() != 3 {
        return Err(Error::ArityMismatch {
            expected: 3,
            found: alpha.len(),
        });
    }
    if alpha.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::InvalidArgument("decay exponents must be positive".into()));
    }
    let p = spec.site_count();
    check_amplitudes(a, p)?;
    // per-dimension factor tables
    let f: Vec<Vec<f64>> = (0..3)
        .map(|l| {
            (0..spec.dims()[l])
                .map(|dl| if dl == 0 { 1.0 } else { (dl as f64).powf(-alpha[l] - 1.0) })
                .collect()
        })
        .collect();
    let coords = spec.site_coords_flat();
    CovMatrix::from_fn(p, |i, j| {
        let mut v = (a[i] * a[j]).sqrt();
        for l in 0..3 {
            v *= f[l][coords[i * 3 + l].abs_diff(coords[j * 3 + l])];
        }
        v
    })
}

/// Product-polynomial truth: the raw matrix with negative eigenvalues clamped to 0.
pub fn gen_setting3(spec: &LatticeSpec, a: &[f64], alpha: &[f64]) -> Result<CovMatrix> {
    psd_project(&gen_setting3_raw(spec, a, alpha)?, 0.0)
}

/// Covariance generator for the simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "setting", rename_all = "kebab-case")]
pub enum GeneratorSpec {
    GaussKernel {
        lattice: LatticeSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        length_scales: Option<Vec<f64>>,
    },
    BlockAr {
        p1: usize,
        p2: usize,
    },
    ProductPoly {
        lattice: LatticeSpec,
        alpha: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a: Option<Vec<f64>>,
    },
}

impl GeneratorSpec {
    /// Lattice the generated covariance lives on. The block AR generator lives on a p1×p2 lattice.
    pub fn lattice(&self) -> Result<LatticeSpec> {
        match self {
            GeneratorSpec::GaussKernel { lattice, .. } | GeneratorSpec::ProductPoly { lattice, .. } => {
                Ok(lattice.clone())
            }
            GeneratorSpec::BlockAr { p1, p2 } => LatticeSpec::new(vec![*p1, *p2]),
        }
    }

    /// Replaces a missing amplitude vector by a frozen draw from `seed`.
    pub fn freeze(&self, seed: u64) -> Result<GeneratorSpec> {
        let mut g = self.clone();
        let p = self.lattice()?.site_count();
        match &mut g {
            GeneratorSpec::GaussKernel { a, .. } | GeneratorSpec::ProductPoly { a, .. } => {
                if a.is_none() {
                    *a = Some(draw_amplitudes(p, seed));
                }
            }
            GeneratorSpec::BlockAr { .. } => {}
        }
        Ok(g)
    }

    /// Frozen amplitude vector, if the setting has one.
    pub fn amplitudes(&self) -> Option<&[f64]> {
        match self {
            GeneratorSpec::GaussKernel { a, .. } | GeneratorSpec::ProductPoly { a, .. } => a.as_deref(),
            GeneratorSpec::BlockAr { .. } => None,
        }
    }

    /// The true covariance. Amplitudes must have been frozen.
    pub fn covariance(&self) -> Result<CovMatrix> {
        let missing = || Error::InvalidArgument("amplitudes not frozen".into());
        match self {
            GeneratorSpec::GaussKernel {
                lattice,
                a,
                length_scales,
            } => gen_setting1(lattice, a.as_ref().ok_or_else(missing)?, length_scales.as_deref()),
            GeneratorSpec::BlockAr { p1, p2 } => gen_setting2(*p1, *p2),
            GeneratorSpec::ProductPoly { lattice, alpha, a } => {
                gen_setting3(lattice, a.as_ref().ok_or_else(missing)?, alpha)
            }
        }
    }
}

/// One row of a class diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct TailRow {
    pub k: ScalingVector,
    /// max_i Σ_{j: δ_ij outside the non-strict k-zone} |σ_ij|
    pub tail: f64,
    pub tau: f64,
}

impl TailRow {
    pub fn ratio(&self) -> f64 {
        if self.tau > 0.0 {
            self.tail / self.tau
        } else if self.tail <= BOUNDARY_TOL {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Tail mass treated as zero where τ vanishes.
const BOUNDARY_TOL: f64 = 1e-12;

/// Multi-bandable class diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub rows: Vec<TailRow>,
    /// Smallest C with tail ≤ C·τ on every row where τ > 0.
    pub fitted_constant: f64,
    /// Tail mass vanishes on every row where τ does.
    pub boundary_ok: bool,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl ClassReport {
    /// Whether every row satisfies tail ≤ C·τ.
    pub fn passes(&self, c: f64) -> bool {
        self.boundary_ok && self.rows.iter().all(|r| r.tail <= c * r.tau + BOUNDARY_TOL)
    }
}

/// Column tail sums outside the non-strict k-zone.
pub fn kzone_tail(sigma: &CovMatrix, spec: &LatticeSpec, k: &ScalingVector) -> Result<f64> {
    let p = spec.site_count();
    if sigma.p() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: sigma.p(),
        });
    }
    if k.arity() != spec.order() {
        return Err(Error::ArityMismatch {
            expected: spec.order(),
            found: k.arity(),
        });
    }
    let d = spec.order();
    let coords = spec.site_coords_flat();
    let kk = k.as_slice();
    let mut worst = 0.0f64;
    for i in 0..p {
        let col = sigma.column(i);
        let mut s = 0.0;
        for (j, v) in col.iter().enumerate() {
            let outside = (0..d).any(|l| coords[i * d + l].abs_diff(coords[j * d + l]) > kk[l]);
            if outside {
                s += v.abs();
            }
        }
        worst = worst.max(s);
    }
    Ok(worst)
}

/// max_j Σ_{|i−j| ≥ lag} |σ_ij| in the vectorized (1-D) ordering.
pub fn tail_1d(sigma: &CovMatrix, lag: usize) -> f64 {
    let p = sigma.p();
    (0..p)
        .map(|j| {
            sigma
                .column(j)
                .iter()
                .enumerate()
                .filter(|(i, _)| i.abs_diff(j) >= lag)
                .map(|(_, v)| v.abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Checks the tail condition of the multi-bandable class at each sampled k
/// and reports the extreme eigenvalues.
pub fn class_check(
    sigma: &CovMatrix,
    spec: &LatticeSpec,
    tau: &DecaySpec,
    sample_ks: &[ScalingVector],
) -> Result<ClassReport> {
    if tau.dims() != spec.dims() {
        return Err(Error::InvalidArgument("decay dims differ from the lattice".into()));
    }
    let mut rows = Vec::with_capacity(sample_ks.len());
    for k in sample_ks {
        rows.push(TailRow {
            k: k.clone(),
            tail: kzone_tail(sigma, spec, k)?,
            tau: tau.eval(k.as_slice())?,
        });
    }
    let fitted_constant = rows
        .iter()
        .filter(|r| r.tau > 0.0)
        .map(|r| r.tail / r.tau)
        .fold(0.0, f64::max);
    let boundary_ok = rows.iter().all(|r| r.tau > 0.0 || r.tail <= BOUNDARY_TOL);
    let ev = eigenvalues(sigma)?;
    Ok(ClassReport {
        rows,
        fitted_constant,
        boundary_ok,
        lambda_min: ev.first().copied().unwrap_or(0.0),
        lambda_max: ev.last().copied().unwrap_or(0.0),
    })
}

/// Jitter added when the plain Cholesky factorization fails.
const SAMPLER_JITTER: f64 = 1e-10;

/// A factor L with L Lᵀ ≈ Σ for drawing correlated samples.
#[derive(Debug, Clone)]
pub struct Sampler {
    lower: DMatrix<f64>,
}

impl Sampler {
    /// Factorizes Σ. Sites with zero variance get zero columns; the rest is
    /// Cholesky-factorized, retrying once with 1e−10 added to the diagonal.
    pub fn new(sigma: &CovMatrix) -> Result<Self> {
        let p = sigma.p();
        let m = sigma.as_matrix();
        let live: Vec<usize> = (0..p).filter(|&i| m[(i, i)] != 0.0).collect();
        for i in (0..p).filter(|i| m[(*i, *i)] == 0.0) {
            if m.column(i).iter().any(|&v| v != 0.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "site {i} has zero variance but nonzero covariance"
                )));
            }
        }
        let sub = m.select_rows(&live).select_columns(&live);
        let l = match Cholesky::new(sub.clone()) {
            Some(c) => c.unpack(),
            None => {
                let mut j = sub;
                for t in 0..j.nrows() {
                    j[(t, t)] += SAMPLER_JITTER;
                }
                Cholesky::new(j)
                    .ok_or_else(|| {
                        Error::NotPositiveDefinite(
                            "covariance is not positive semidefinite (Cholesky failed after jitter)".into(),
                        )
                    })?
                    .unpack()
            }
        };
        let mut lower = DMatrix::zeros(p, p);
        for (a, &i) in live.iter().enumerate() {
            for (b, &j) in live.iter().enumerate().take(a + 1) {
                lower[(i, j)] = l[(a, b)];
            }
        }
        Ok(Self { lower })
    }

    pub fn p(&self) -> usize {
        self.lower.nrows()
    }

    fn standard_normals(&self, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let p = self.p();
        let z: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(rng)).collect();
        DMatrix::from_row_slice(n, p, &z)
    }

    /// n Gaussian rows with covariance Σ.
    pub fn gaussian(&self, n: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[Stream::Data as u64]));
        let z = self.standard_normals(n, &mut rng);
        DataMatrix::from_trusted(z * self.lower.transpose())
    }

    /// n multivariate-t rows with `dof` degrees of freedom, scaled so the
    /// population covariance is Σ. Uses the same normal draws as
    /// [`Sampler::gaussian`] for the same seed.
    pub fn student_t(&self, dof: u32, n: usize, seed: u64) -> Result<DataMatrix> {
        if dof <= 2 {
            return Err(Error::InvalidArgument(format!(
                "t distribution needs more than 2 degrees of freedom, got {dof}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[Stream::Data as u64]));
        let mut z = self.standard_normals(n, &mut rng);
        let mut crng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[Stream::Data as u64, 1]));
        let chi = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for m in 0..n {
            let w: f64 = chi.sample(&mut crng);
            let s = ((dof as f64 - 2.0) / w).sqrt();
            z.row_mut(m).scale_mut(s);
        }
        Ok(DataMatrix::from_trusted(z * self.lower.transpose()))
    }
}

/// n i.i.d. N(0, Σ) rows, deterministic in `seed`.
pub fn sample_gaussian(sigma: &CovMatrix, n: usize, seed: u64) -> Result<DataMatrix> {
    Ok(Sampler::new(sigma)?.gaussian(n, seed))
}

/// n i.i.d. multivariate-t rows with covariance Σ, deterministic in `seed`.
pub fn sample_t(sigma: &CovMatrix, dof: u32, n: usize, seed: u64) -> Result<DataMatrix> {
    Sampler::new(sigma)?.student_t(dof, n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::sample_covariance;
    use crate::metrics::frobenius_norm;

    #[test]
    fn decay_examples() {
        let t = DecaySpec::polynomial(vec![0.5, 1.0], vec![10, 10]).unwrap();
        assert_eq!(t.eval(&[0, 10]).unwrap(), 1.0);
        let t1 = DecaySpec::polynomial(vec![0.5], vec![100]).unwrap();
        assert_eq!(t1.eval(&[4]).unwrap(), 0.5);
        let e = DecaySpec::exponential(vec![2.0, 2.0], vec![10, 6]).unwrap();
        assert_eq!(e.eval(&[3, 6]).unwrap(), 0.125);
        assert_eq!(e.eval(&[10, 6]).unwrap(), 0.0);
        assert!(DecaySpec::exponential(vec![1.0], vec![3]).is_err());
        assert!(DecaySpec::polynomial(vec![1.0, 1.0], vec![3]).is_err());
        assert!(t.eval(&[1]).is_err());
    }

    #[test]
    fn decay_is_monotone_and_bounded() {
        for tau in [
            DecaySpec::polynomial(vec![0.4, 1.3], vec![7, 9]).unwrap(),
            DecaySpec::exponential(vec![1.5, 3.0], vec![7, 9]).unwrap(),
        ] {
            let top = tau.eval(&[1, 1]).unwrap();
            for a in 1..=7 {
                for b in 1..=9 {
                    let v = tau.eval(&[a, b]).unwrap();
                    assert!(v >= 0.0 && v <= top);
                    if a < 7 {
                        assert!(tau.eval(&[a + 1, b]).unwrap() <= v);
                    }
                    if b < 9 {
                        assert!(tau.eval(&[a, b + 1]).unwrap() <= v);
                    }
                }
            }
        }
    }

    fn brute_optimum(tau: &DecaySpec, n: usize) -> (Vec<usize>, f64) {
        let dims = tau.dims().to_vec();
        let total: usize = dims.iter().product();
        let mut best = (vec![], f64::INFINITY, f64::INFINITY);
        for i in 0..total {
            let mut r = i;
            let k: Vec<usize> = dims
                .iter()
                .map(|&p| {
                    let c = r % p;
                    r /= p;
                    c + 1
                })
                .collect();
            let t = tau.eval(&k).unwrap();
            let v: f64 = k.iter().map(|&x| x as f64).product();
            let obj = t * t + v / n as f64;
            let better = obj < best.1
                || (obj == best.1 && (v < best.2 || (v == best.2 && k < best.0)));
            if better {
                best = (k, obj, v);
            }
        }
        (best.0, best.1)
    }

    #[test]
    fn optimal_scaling_matches_bruteforce() {
        for (tau, n) in [
            (DecaySpec::polynomial(vec![1.0, 0.5], vec![20, 20]).unwrap(), 500),
            (DecaySpec::polynomial(vec![2.0], vec![15]).unwrap(), 10_000),
            (DecaySpec::exponential(vec![1.2, 2.0, 4.0], vec![6, 7, 8]).unwrap(), 300),
            (DecaySpec::polynomial(vec![0.3, 0.3], vec![5, 4]).unwrap(), 100_000),
        ] {
            let (k, v) = optimal_scaling(&tau, n).unwrap();
            let (bk, bv) = brute_optimum(&tau, n);
            assert_eq!(k.as_slice(), &bk[..]);
            assert_eq!(v, bv);
        }
    }

    #[test]
    fn optimal_scaling_rates() {
        for n in [100usize, 1_000, 10_000, 100_000, 1_000_000] {
            let tau = DecaySpec::polynomial(vec![1.0], vec![1_000_000]).unwrap();
            let (k, _) = optimal_scaling(&tau, n).unwrap();
            let target = (n as f64).powf(1.0 / 3.0);
            let ratio = k.as_slice()[0] as f64 / target;
            assert!((0.5..=2.0).contains(&ratio), "n={n} k={k}");
            let tau = DecaySpec::exponential(vec![2.0], vec![1000]).unwrap();
            let (k, _) = optimal_scaling(&tau, n).unwrap();
            let ratio = k.as_slice()[0] as f64 / (n as f64).ln();
            assert!((0.3..=3.0).contains(&ratio), "n={n} k={k}");
        }
        // p below n^{1/(2α+1)}: the boundary face wins
        let tau = DecaySpec::polynomial(vec![1.0], vec![5]).unwrap();
        assert_eq!(optimal_scaling(&tau, 100_000).unwrap().0.as_slice(), &[5]);
    }

    #[test]
    fn setting1_examples() {
        let spec = LatticeSpec::new(vec![4, 4]).unwrap();
        let s = gen_setting1(&spec, &[1.0; 16], None).unwrap();
        assert_eq!(s.get(5, 5), 1.0);
        assert!((s.get(0, 1) - (-0.5f64).exp()).abs() < 1e-15);
        let spec = LatticeSpec::new(vec![9, 9, 9]).unwrap();
        let a = draw_amplitudes(729, 3);
        assert!(a.iter().all(|x| (0.5..1.5).contains(x)));
        let s = gen_setting1(&spec, &a, None).unwrap();
        assert!(eigenvalues(&s).unwrap()[0] >= -1e-10);
        for i in 0..729 {
            assert_eq!(s.get(i, i), a[i]);
        }
    }

    #[test]
    fn setting2_examples() {
        let s = gen_setting2(3, 4).unwrap();
        assert_eq!(s.get(0, 0), 2.0);
        assert_eq!(s.get(9, 11), 2.0);
        assert_eq!(s.get(2, 3), 0.0);
        assert!((s.get(0, 2) - 2.0 * 0.25f64.powi(2)).abs() < 1e-15);
        assert!(eigenvalues(&s).unwrap()[0] >= -1e-12);
    }

    #[test]
    fn setting3_examples() {
        let spec = LatticeSpec::new(vec![3, 3, 3]).unwrap();
        let alpha = [0.4, 0.6, 0.8];
        let raw = gen_setting3_raw(&spec, &[1.0; 27], &alpha).unwrap();
        assert_eq!(raw.get(4, 4), 1.0);
        let i = spec.coord_to_index(&[1, 1, 1]).unwrap();
        let j = spec.coord_to_index(&[2, 2, 2]).unwrap();
        assert_eq!(raw.get(i, j), 1.0);
        let j = spec.coord_to_index(&[3, 1, 1]).unwrap();
        assert!((raw.get(i, j) - 2f64.powf(-1.4)).abs() < 1e-15);
        assert!((raw.get(i, j) - 0.3789).abs() < 1e-4);
        let truth = gen_setting3(&spec, &[1.0; 27], &alpha).unwrap();
        assert!(eigenvalues(&truth).unwrap()[0] >= -1e-10);
        assert!(gen_setting3_raw(&LatticeSpec::new(vec![3, 3]).unwrap(), &[1.0; 9], &alpha).is_err());
    }

    #[test]
    fn generator_json_and_freeze() {
        let g: GeneratorSpec = serde_json::from_str(
            r#"{"setting":"product-poly","lattice":{"dims":[3,3,3]},"alpha":[0.4,0.6,0.8]}"#,
        )
        .unwrap();
        assert!(g.covariance().is_err());
        let f = g.freeze(5).unwrap();
        assert_eq!(f.amplitudes().unwrap().len(), 27);
        assert_eq!(f, g.freeze(5).unwrap());
        let back: GeneratorSpec = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back, f);
        let d: DecaySpec =
            serde_json::from_str(r#"{"family":"polynomial","alpha":[1.0],"dims":[100]}"#).unwrap();
        assert_eq!(d.eval(&[4]).unwrap(), 0.25);
    }

    #[test]
    fn class_check_diagonal_and_setting3() {
        let spec = LatticeSpec::new(vec![4, 5]).unwrap();
        let diag = CovMatrix::from_diagonal(&[1.5; 20]).unwrap();
        let tau = DecaySpec::polynomial(vec![1.0, 1.0], vec![4, 5]).unwrap();
        let ks: Vec<ScalingVector> = [[1, 1], [2, 3], [3, 4]]
            .iter()
            .map(|k| ScalingVector::new(k.to_vec()).unwrap())
            .collect();
        let r = class_check(&diag, &spec, &tau, &ks).unwrap();
        assert!(r.rows.iter().all(|row| row.tail == 0.0));
        assert!(r.passes(0.0));

        let spec = LatticeSpec::new(vec![6, 6, 6]).unwrap();
        let alpha = vec![0.4, 0.6, 0.8];
        let truth = gen_setting3(&spec, &vec![1.0; 216], &alpha).unwrap();
        let tau = DecaySpec::polynomial(alpha, vec![6, 6, 6]).unwrap();
        let ks: Vec<ScalingVector> = [[1, 1, 1], [2, 2, 2], [3, 1, 4], [5, 5, 5], [6, 6, 6]]
            .iter()
            .map(|k| ScalingVector::new(k.to_vec()).unwrap())
            .collect();
        let r = class_check(&truth, &spec, &tau, &ks).unwrap();
        assert!(r.boundary_ok);
        assert!(r.passes(r.fitted_constant));
        assert!(r.fitted_constant.is_finite());
    }

    #[test]
    fn gaussian_sampler() {
        let id = CovMatrix::identity(4);
        let x = sample_gaussian(&id, 10_000, 1).unwrap();
        let s = sample_covariance(&x).unwrap();
        let err = frobenius_norm(&s.sub(&id).unwrap()) / frobenius_norm(&id);
        assert!(err < 0.05, "{err}");
        assert_eq!(x, sample_gaussian(&id, 10_000, 1).unwrap());
        assert_ne!(x, sample_gaussian(&id, 10_000, 2).unwrap());
        let z = sample_gaussian(&CovMatrix::zeros(3), 5, 1).unwrap();
        assert!(z.as_matrix().iter().all(|&v| v == 0.0));
        // rank-deficient PSD input goes through the jittered retry
        let v = [1.0, 2.0, -1.0];
        let r1 = CovMatrix::from_fn(3, |i, j| v[i] * v[j]).unwrap();
        assert!(sample_gaussian(&r1, 10, 0).is_ok());
        let bad = CovMatrix::from_diagonal(&[1.0, -1.0]).unwrap();
        assert!(matches!(sample_gaussian(&bad, 3, 0), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn sampler_converges_within_monte_carlo_bands() {
        let sigma = CovMatrix::new(DMatrix::from_row_slice(3, 3, &[2.0, 0.6, 0.0, 0.6, 1.0, -0.3, 0.0, -0.3, 0.5])).unwrap();
        let n = 100_000;
        let x = sample_gaussian(&sigma, n, 9).unwrap();
        let s = sample_covariance(&x).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                // Var(x_i x_j) = σ_ii σ_jj + σ_ij²
                let sd = ((sigma.get(i, i) * sigma.get(j, j) + sigma.get(i, j).powi(2)) / n as f64).sqrt();
                assert!((s.get(i, j) - sigma.get(i, j)).abs() <= 3.0 * sd, "{i},{j}");
            }
        }
    }

    #[test]
    fn t_sampler() {
        let id = CovMatrix::identity(2);
        let x = sample_t(&id, 10, 100_000, 4).unwrap();
        let s = sample_covariance(&x).unwrap();
        assert!(frobenius_norm(&s.sub(&id).unwrap()) / frobenius_norm(&id) < 0.05);
        assert_eq!(x, sample_t(&id, 10, 100_000, 4).unwrap());
        assert!(sample_t(&id, 2, 10, 4).is_err());
        // very large dof: close to the Gaussian draw sharing the same normals
        let g = sample_gaussian(&id, 2000, 8).unwrap();
        let t = sample_t(&id, 1_000_000, 2000, 8).unwrap();
        let sg = sample_covariance(&g).unwrap();
        let st = sample_covariance(&t).unwrap();
        assert!((sg.as_matrix() - st.as_matrix()).amax() < 0.01);
    }
}
