//! Matrix norms and reconstruction-error metrics.

use nalgebra::DVector;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::CovMatrix;

pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-10;
pub const DEFAULT_SPECTRAL_MAX_ITER: usize = 100_000;

/// Seed of the deterministic power-iteration start vector.
const START_SEED: u64 = 0x005e_ed0f_5ec7;
/// Iterations without progress before a random restart.
const STAGNATION_LIMIT: usize = 50;

/// Outcome of a power-iteration norm computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn random_unit(p: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let v = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    let n = v.norm();
    v / n
}

/// Largest absolute eigenvalue of a symmetric matrix by power iteration.
///
/// The iterate's growth ‖Mv‖ converges to |λ|max even when ±λ are both
/// dominant. Iteration stops once the geometric tail bound of the remaining
/// change falls below `tol` relative to the estimate.
pub fn spectral_norm(m: &CovMatrix, tol: f64, max_iter: usize) -> SpectralEstimate {
    let p = m.p();
    let a = m.as_matrix();
    if p == 0 || a.iter().all(|&x| x == 0.0) {
        return SpectralEstimate {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut v = random_unit(p, &mut rng);
    let mut mu = 0.0f64;
    let mut best = 0.0f64;
    let mut prev_delta = f64::INFINITY;
    let mut stalled = 0;
    let mut w = DVector::zeros(p);
    for it in 1..=max_iter {
        w.gemv(1.0, a, &v, 0.0);
        let next = w.norm();
        best = best.max(next);
        if next == 0.0 {
            // v fell into the null space
            v = random_unit(p, &mut rng);
            mu = 0.0;
            prev_delta = f64::INFINITY;
            continue;
        }
        std::mem::swap(&mut v, &mut w);
        v /= next;
        let delta = (next - mu).abs();
        mu = next;
        let r = delta / prev_delta;
        let tail = if r < 1.0 { delta * r / (1.0 - r) } else { f64::INFINITY };
        if delta <= tol * mu && tail <= tol * mu {
            return SpectralEstimate {
                value: mu.max(best),
                iterations: it,
                converged: true,
            };
        }
        if r >= 1.0 && delta > tol * mu {
            stalled += 1;
            if stalled >= STAGNATION_LIMIT {
                let fresh = random_unit(p, &mut rng);
                v = (v + fresh).normalize();
                stalled = 0;
            }
        } else {
            stalled = 0;
        }
        prev_delta = delta;
    }
    SpectralEstimate {
        value: mu.max(best),
        iterations: max_iter,
        converged: false,
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

pub fn frobenius_norm(m: &CovMatrix) -> f64 {
    compensated_sum(m.as_matrix().iter().map(|x| x * x)).sqrt()
}

/// Maximum absolute column sum.
pub fn l1_operator_norm(m: &CovMatrix) -> f64 {
    m.as_matrix()
        .column_iter()
        .map(|c| compensated_sum(c.iter().map(|x| x.abs())))
        .fold(0.0, f64::max)
}

/// Sum of absolute entries.
pub fn l1_entrywise_norm(m: &CovMatrix) -> f64 {
    compensated_sum(m.as_matrix().iter().map(|x| x.abs()))
}

/// Which matrix L1 norm a score uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum L1Kind {
    #[default]
    Operator,
    Entrywise,
}

impl L1Kind {
    pub fn norm(self, m: &CovMatrix) -> f64 {
        match self {
            L1Kind::Operator => l1_operator_norm(m),
            L1Kind::Entrywise => l1_entrywise_norm(m),
        }
    }
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Fraction of positions where the signs of x and y differ, with sign(0) = 0.
pub fn sign_hamming(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let diff = x.iter().zip(y).filter(|(a, b)| sign(**a) != sign(**b)).count();
    Ok(diff as f64 / x.len() as f64)
}

/// Norms of an estimation error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub spectral: f64,
    pub frobenius: f64,
    pub l1_operator: f64,
    pub spectral_converged: bool,
    pub spectral_iterations: usize,
}

/// Norms of `estimate − truth`.
pub fn error_report(estimate: &CovMatrix, truth: &CovMatrix, tol: f64) -> Result<ErrorReport> {
    let diff = estimate.sub(truth)?;
    let s = spectral_norm(&diff, tol, DEFAULT_SPECTRAL_MAX_ITER);
    Ok(ErrorReport {
        spectral: s.value,
        frobenius: frobenius_norm(&diff),
        l1_operator: l1_operator_norm(&diff),
        spectral_converged: s.converged,
        spectral_iterations: s.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn random_sym(p: usize, seed: u64) -> CovMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CovMatrix::new(DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn spectral_examples() {
        let d = CovMatrix::from_diagonal(&[3.0, -5.0]).unwrap();
        let s = spectral_norm(&d, 1e-12, 10_000);
        assert!(s.converged);
        assert!((s.value - 5.0).abs() < 1e-10);
        for p in [1, 7, 30] {
            let s = spectral_norm(&CovMatrix::identity(p), 1e-12, 100);
            assert!((s.value - 1.0).abs() < 1e-14);
        }
        assert_eq!(spectral_norm(&CovMatrix::zeros(4), 1e-10, 10).value, 0.0);
        // ±λ tie
        let t = CovMatrix::from_diagonal(&[2.0, -2.0, 1.0]).unwrap();
        assert!((spectral_norm(&t, 1e-12, 1000).value - 2.0).abs() < 1e-10);
    }

    #[test]
    fn spectral_matches_dense() {
        for seed in 0..50 {
            let m = random_sym(32, seed);
            let e = m.as_matrix().clone().symmetric_eigen();
            let want = e.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let got = spectral_norm(&m, DEFAULT_SPECTRAL_TOL, DEFAULT_SPECTRAL_MAX_ITER);
            assert!(got.converged);
            assert!((got.value - want).abs() <= 1e-8 * want, "seed {seed}");
        }
    }

    #[test]
    fn spectral_is_deterministic() {
        let m = random_sym(16, 3);
        assert_eq!(spectral_norm(&m, 1e-10, 10_000), spectral_norm(&m, 1e-10, 10_000));
    }

    #[test]
    fn other_norms() {
        assert!((frobenius_norm(&CovMatrix::identity(9)) - 3.0).abs() < 1e-15);
        assert_eq!(frobenius_norm(&CovMatrix::zeros(3)), 0.0);
        let v = [1.0, -2.0, 0.5, 3.0];
        let vv = CovMatrix::from_fn(4, |i, j| v[i] * v[j]).unwrap();
        let n2: f64 = v.iter().map(|x| x * x).sum();
        assert!((frobenius_norm(&vv) - n2).abs() < 1e-14);
        assert_eq!(l1_operator_norm(&CovMatrix::identity(5)), 1.0);
        assert_eq!(l1_operator_norm(&CovMatrix::from_diagonal(&[1.0, -4.0, 2.0]).unwrap()), 4.0);
        // column sums of [[1,−2],[3,4]] are 4 and 6 (not symmetric, so test on the raw rule)
        let raw = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 4.0]);
        let col_max = raw
            .column_iter()
            .map(|c| c.iter().map(|x: &f64| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        assert_eq!(col_max, 6.0);
        assert_eq!(l1_entrywise_norm(&CovMatrix::identity(5)), 5.0);
    }

    #[test]
    fn sign_hamming_examples() {
        let x = [1.0, -1.0, 0.0, 2.0];
        assert_eq!(sign_hamming(&x, &x).unwrap(), 0.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(sign_hamming(&[1.0, -3.0], &[-1.0, 3.0]).unwrap(), 1.0);
        assert_eq!(sign_hamming(&x, &neg).unwrap(), 0.75);
        assert_eq!(sign_hamming(&x, &[1.0, 1.0, 0.0, -2.0]).unwrap(), 0.5);
        assert!(sign_hamming(&x, &[1.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn norm_inequalities(p in 2usize..20, seed in 0u64..10_000) {
            let m = random_sym(p, seed);
            let s = spectral_norm(&m, 1e-12, DEFAULT_SPECTRAL_MAX_ITER).value;
            let f = frobenius_norm(&m);
            prop_assert!(s <= f * (1.0 + 1e-9));
            prop_assert!(f <= (p as f64).sqrt() * s * (1.0 + 1e-9));
            prop_assert!(s <= l1_operator_norm(&m) * (1.0 + 1e-9));
        }

        #[test]
        fn spectral_permutation_invariant(p in 2usize..16, seed in 0u64..10_000) {
            let m = random_sym(p, seed);
            let mut perm: Vec<usize> = (0..p).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xff);
            for i in (1..p).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let pm = m.submatrix(&perm).unwrap();
            let a = spectral_norm(&m, 1e-12, DEFAULT_SPECTRAL_MAX_ITER).value;
            let b = spectral_norm(&pm, 1e-12, DEFAULT_SPECTRAL_MAX_ITER).value;
            prop_assert!((a - b).abs() <= 1e-9 * a);
        }
    }
}
