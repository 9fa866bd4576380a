//! Index arithmetic on d-order lattices.
//!
//! Sites are vectorized mixed-radix with dimension 1 varying fastest. External
//! coordinates are 1-based; linear indices are 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw serialized form, validated on conversion.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct LatticeSpecRepr {
    dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    active: Option<Vec<usize>>,
}

/// Dimensions of a d-order lattice and an optional set of occupied sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LatticeSpecRepr", into = "LatticeSpecRepr")]
pub struct LatticeSpec {
    dims: Vec<usize>,
    strides: Vec<usize>,
    active: Option<Vec<usize>>,
}

impl TryFrom<LatticeSpecRepr> for LatticeSpec {
    type Error = Error;

    fn try_from(r: LatticeSpecRepr) -> Result<Self> {
        match r.active {
            Some(active) => LatticeSpec::with_active(r.dims, active),
            None => LatticeSpec::new(r.dims),
        }
    }
}

impl From<LatticeSpec> for LatticeSpecRepr {
    fn from(s: LatticeSpec) -> Self {
        LatticeSpecRepr {
            dims: s.dims,
            active: s.active,
        }
    }
}

impl LatticeSpec {
    /// A regular lattice with side lengths `dims`.
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidLattice("lattice order must be at least 1".into()));
        }
        if let Some(pos) = dims.iter().position(|&p| p == 0) {
            return Err(Error::InvalidLattice(format!(
                "dimension {} has zero length",
                pos + 1
            )));
        }
        let mut strides = Vec::with_capacity(dims.len());
        let mut acc: usize = 1;
        for &p in &dims {
            strides.push(acc);
            acc = acc
                .checked_mul(p)
                .ok_or_else(|| Error::InvalidLattice("site count overflows".into()))?;
        }
        Ok(Self {
            dims,
            strides,
            active: None,
        })
    }

    /// A lattice restricted to the strictly increasing linear indices `active`.
    pub fn with_active(dims: Vec<usize>, active: Vec<usize>) -> Result<Self> {
        let mut spec = Self::new(dims)?;
        let p = spec.full_size();
        if active.is_empty() {
            return Err(Error::InvalidLattice("active set is empty".into()));
        }
        if active.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidLattice(
                "active indices must be strictly increasing".into(),
            ));
        }
        if let Some(&last) = active.last() {
            if last >= p {
                return Err(Error::IndexOutOfRange { index: last, len: p });
            }
        }
        spec.active = Some(active);
        Ok(spec)
    }

    /// A one-dimensional lattice with `p` sites.
    pub fn line(p: usize) -> Result<Self> {
        Self::new(vec![p])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Lattice order d.
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    /// Number of sites of the embedding regular lattice, ∏ p_ℓ.
    pub fn full_size(&self) -> usize {
        self.dims.iter().product()
    }

    /// Number of sites the estimators operate on (active set size if present).
    pub fn site_count(&self) -> usize {
        self.active
            .as_ref()
            .map_or_else(|| self.full_size(), |a| a.len())
    }

    pub fn active(&self) -> Option<&[usize]> {
        self.active.as_deref()
    }

    pub fn is_regular(&self) -> bool {
        self.active.is_none()
    }

    pub(crate) fn strides(&self) -> &[usize] {
        &self.strides
    }

    fn check_index(&self, i: usize) -> Result<()> {
        let p = self.full_size();
        if i >= p {
            Err(Error::IndexOutOfRange { index: i, len: p })
        } else {
            Ok(())
        }
    }

    /// 1-based coordinate of linear index `i`.
    pub fn index_to_coord(&self, i: usize) -> Result<Vec<usize>> {
        self.check_index(i)?;
        Ok(self.coord0(i).into_iter().map(|c| c + 1).collect())
    }

    /// Linear index of the 1-based coordinate `coord`.
    pub fn coord_to_index(&self, coord: &[usize]) -> Result<usize> {
        if coord.len() != self.order() {
            return Err(Error::ArityMismatch {
                expected: self.order(),
                found: coord.len(),
            });
        }
        let mut idx = 0;
        for (l, (&c, &p)) in coord.iter().zip(&self.dims).enumerate() {
            if c == 0 || c > p {
                return Err(Error::InvalidArgument(format!(
                    "coordinate {c} outside 1..={p} in dimension {}",
                    l + 1
                )));
            }
            idx += (c - 1) * self.strides[l];
        }
        Ok(idx)
    }

    /// 0-based coordinate of a linear index known to be in range.
    pub(crate) fn coord0(&self, mut i: usize) -> Vec<usize> {
        self.dims
            .iter()
            .map(|&p| {
                let c = i % p;
                i /= p;
                c
            })
            .collect()
    }

    /// Absolute coordinate difference between linear indices `i` and `j`.
    pub fn delta(&self, i: usize, j: usize) -> Result<CoordDelta> {
        self.check_index(i)?;
        self.check_index(j)?;
        let (a, b) = (self.coord0(i), self.coord0(j));
        Ok(CoordDelta(
            a.iter().zip(&b).map(|(x, y)| x.abs_diff(*y)).collect(),
        ))
    }

    /// Linear lattice indices of the estimator's sites, in estimator order.
    pub fn site_indices(&self) -> Vec<usize> {
        match &self.active {
            Some(a) => a.clone(),
            None => (0..self.full_size()).collect(),
        }
    }

    /// 0-based coordinates of every estimator site, flattened site-major.
    pub(crate) fn site_coords_flat(&self) -> Vec<usize> {
        let d = self.order();
        let idx = self.site_indices();
        let mut out = Vec::with_capacity(idx.len() * d);
        for i in idx {
            out.extend(self.coord0(i));
        }
        out
    }

    /// Checks that `k` has this lattice's arity and fits inside its box.
    pub fn check_within(&self, k: &ScalingVector) -> Result<()> {
        if k.arity() != self.order() {
            return Err(Error::ArityMismatch {
                expected: self.order(),
                found: k.arity(),
            });
        }
        for (l, (&kl, &p)) in k.as_slice().iter().zip(&self.dims).enumerate() {
            if kl > p {
                return Err(Error::InvalidArgument(format!(
                    "scaling component k_{} = {kl} exceeds lattice side {p}",
                    l + 1
                )));
            }
        }
        Ok(())
    }
}

/// Component-wise absolute coordinate difference of two sites.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoordDelta(pub Vec<usize>);

impl CoordDelta {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }
}

/// A vector of positive per-dimension window sizes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ScalingVector(Vec<usize>);

impl TryFrom<Vec<usize>> for ScalingVector {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        ScalingVector::new(v)
    }
}

impl From<ScalingVector> for Vec<usize> {
    fn from(k: ScalingVector) -> Self {
        k.0
    }
}

impl ScalingVector {
    pub fn new(k: Vec<usize>) -> Result<Self> {
        if k.is_empty() {
            return Err(Error::EmptyInput);
        }
        if k.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "scaling vector {k:?} has a zero component"
            )));
        }
        k.iter()
            .try_fold(1u64, |acc, &x| acc.checked_mul(x as u64))
            .ok_or_else(|| Error::InvalidArgument("scaling volume overflows".into()))?;
        Ok(Self(k))
    }

    /// The all-`v` vector of arity `d`.
    pub fn uniform(d: usize, v: usize) -> Result<Self> {
        Self::new(vec![v; d])
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    /// V(k) = ∏ k_ℓ.
    pub fn volume(&self) -> u64 {
        self.0.iter().map(|&x| x as u64).product()
    }
}

impl std::fmt::Display for ScalingVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|k| k.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

/// Whether `delta` lies in the preserved k-zone: δ_ℓ ≤ k_ℓ for all ℓ, or
/// δ_ℓ < k_ℓ when `strict`.
pub fn in_kzone(delta: &CoordDelta, k: &ScalingVector, strict: bool) -> Result<bool> {
    if delta.arity() != k.arity() {
        return Err(Error::ArityMismatch {
            expected: k.arity(),
            found: delta.arity(),
        });
    }
    let mut pairs = delta.0.iter().zip(&k.0);
    Ok(if strict {
        pairs.all(|(d, k)| d < k)
    } else {
        pairs.all(|(d, k)| d <= k)
    })
}

/// Embeds an irregular set of 1-based sites in the smallest regular lattice
/// containing them.
pub fn embed_irregular(sites: &[Vec<usize>]) -> Result<LatticeSpec> {
    let first = sites.first().ok_or(Error::EmptyInput)?;
    let d = first.len();
    if d == 0 {
        return Err(Error::InvalidLattice("sites have zero arity".into()));
    }
    let mut dims = vec![0usize; d];
    for s in sites {
        if s.len() != d {
            return Err(Error::ArityMismatch {
                expected: d,
                found: s.len(),
            });
        }
        for (m, &c) in dims.iter_mut().zip(s) {
            if c == 0 {
                return Err(Error::InvalidArgument(format!(
                    "site {s:?} has a non-positive coordinate"
                )));
            }
            *m = (*m).max(c);
        }
    }
    let full = LatticeSpec::new(dims.clone())?;
    let mut idx = Vec::with_capacity(sites.len());
    for s in sites {
        idx.push((full.coord_to_index(s)?, s));
    }
    idx.sort_unstable_by_key(|(i, _)| *i);
    if let Some(w) = idx.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateSite(w[0].1.clone()));
    }
    LatticeSpec::with_active(dims, idx.into_iter().map(|(i, _)| i).collect())
}

/// Enumerates, for one row site `a` of a regular lattice, the contiguous runs
/// of column sites whose coordinate difference satisfies δ_ℓ < `ext_ℓ`.
///
/// For each run `f(j_start, b1_start, len, outer)` is called, where `j_start`
/// is the linear index of the first column site, `b1_start` its dimension-1
/// coordinate and `outer` the mixed-radix index (radix `ext`) of the
/// dimension 2..d part of δ. The dimension-1 part is added by the caller.
pub(crate) fn for_each_window_run<F>(
    dims: &[usize],
    strides: &[usize],
    ext: &[usize],
    a: &[usize],
    mut f: F,
) where
    F: FnMut(usize, usize, usize, usize),
{
    let d = dims.len();
    let lo: Vec<usize> = (0..d).map(|l| a[l].saturating_sub(ext[l] - 1)).collect();
    let hi: Vec<usize> = (0..d).map(|l| (a[l] + ext[l] - 1).min(dims[l] - 1)).collect();
    let mut tstride = vec![1usize; d];
    for l in 1..d {
        tstride[l] = tstride[l - 1] * ext[l - 1];
    }
    let len = hi[0] - lo[0] + 1;
    let mut b: Vec<usize> = lo.clone();
    loop {
        let mut j = lo[0];
        let mut outer = 0;
        for l in 1..d {
            j += b[l] * strides[l];
            outer += a[l].abs_diff(b[l]) * tstride[l];
        }
        f(j, lo[0], len, outer);
        // odometer over dimensions 2..d
        let mut l = 1;
        loop {
            if l >= d {
                return;
            }
            if b[l] < hi[l] {
                b[l] += 1;
                break;
            }
            b[l] = lo[l];
            l += 1;
        }
    }
}
