//! Localization functions h on [0,1]^d and their multi-banding decomposition.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::ScalingVector;

/// Weights smaller than this are dropped from a [`WeightMap`].
pub const WEIGHT_PRUNE: f64 = 1e-15;

/// Samples per profile and tolerance used when validating tabulated profiles.
const PROFILE_CHECK_SAMPLES: usize = 1000;
const PROFILE_CHECK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Kind {
    MultiplicativeBanding,
    MultiplicativeTapering { c: Vec<f64> },
    GaspariCohnL2,
    ProductOfProfiles { profiles: Vec<Vec<f64>> },
}

/// A localization function h. Tapering plateaus and tabulated profiles given
/// with a single entry apply to every dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Kind", into = "Kind")]
pub struct LocalizationFunction {
    kind: Kind,
}

impl TryFrom<Kind> for LocalizationFunction {
    type Error = Error;
    fn try_from(kind: Kind) -> Result<Self> {
        match &kind {
            Kind::MultiplicativeTapering { c } => {
                if c.is_empty() {
                    return Err(Error::InvalidArgument("tapering needs plateau constants".into()));
                }
                if let Some(x) = c.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
                    return Err(Error::InvalidArgument(format!(
                        "plateau constant {x} outside (0,1)"
                    )));
                }
            }
            Kind::ProductOfProfiles { profiles } => {
                if profiles.is_empty() {
                    return Err(Error::InvalidArgument("no profiles given".into()));
                }
                for (l, t) in profiles.iter().enumerate() {
                    validate_profile(t).map_err(|e| {
                        Error::InvalidArgument(format!("profile {}: {e}", l + 1))
                    })?;
                }
            }
            _ => {}
        }
        Ok(Self { kind })
    }
}

impl From<LocalizationFunction> for Kind {
    fn from(h: LocalizationFunction) -> Self {
        h.kind
    }
}

fn validate_profile(t: &[f64]) -> std::result::Result<(), String> {
    if t.len() < 2 {
        return Err("needs at least two nodes".into());
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err("non-finite node value".into());
    }
    if (t[0] - 1.0).abs() > PROFILE_CHECK_TOL {
        return Err(format!("value at 0 is {} rather than 1", t[0]));
    }
    let mut prev = tabulated(t, 0.0);
    for s in 1..=PROFILE_CHECK_SAMPLES {
        let z = s as f64 / PROFILE_CHECK_SAMPLES as f64;
        let v = tabulated(t, z);
        if !(-PROFILE_CHECK_TOL..=1.0 + PROFILE_CHECK_TOL).contains(&v) {
            return Err(format!("value {v} at z={z} outside [0,1]"));
        }
        if v > prev + PROFILE_CHECK_TOL {
            return Err(format!("increases near z={z}"));
        }
        prev = v;
    }
    Ok(())
}

/// Piecewise-linear interpolation through nodes at t/(m−1), zero for z ≥ 1.
fn tabulated(t: &[f64], z: f64) -> f64 {
    if z >= 1.0 {
        return 0.0;
    }
    let m = t.len() - 1;
    let x = z * m as f64;
    let i = (x.floor() as usize).min(m - 1);
    let frac = x - i as f64;
    t[i] + (t[i + 1] - t[i]) * frac
}

/// Linear taper φ(z; a, b): 1 up to a, linear down to 0 at b.
pub fn linear_taper(z: f64, a: f64, b: f64) -> f64 {
    if z <= a {
        1.0
    } else if z <= b {
        (b - z) / (b - a)
    } else {
        0.0
    }
}

/// The Gaspari–Cohn piecewise quintic, supported on [0, 2].
pub fn gaspari_cohn(z: f64) -> f64 {
    if z <= 1.0 {
        1.0 - 5.0 / 3.0 * z * z + 5.0 / 8.0 * z.powi(3) + 0.5 * z.powi(4) - 0.25 * z.powi(5)
    } else if z < 2.0 {
        -2.0 / (3.0 * z) + 4.0 - 5.0 * z + 5.0 / 3.0 * z * z + 5.0 / 8.0 * z.powi(3)
            - 0.5 * z.powi(4)
            + z.powi(5) / 12.0
    } else {
        0.0
    }
}

fn pick<T>(v: &[T], l: usize) -> &T {
    if v.len() == 1 {
        &v[0]
    } else {
        &v[l]
    }
}

impl LocalizationFunction {
    /// h(z) = ∏ 1{z_ℓ < 1}.
    pub fn banding() -> Self {
        Self {
            kind: Kind::MultiplicativeBanding,
        }
    }

    /// h(z) = ∏ φ(z_ℓ; c_ℓ, 1).
    pub fn tapering(c: Vec<f64>) -> Result<Self> {
        Kind::MultiplicativeTapering { c }.try_into()
    }

    /// h(z) = GC(2‖z‖₂).
    pub fn gaspari_cohn() -> Self {
        Self {
            kind: Kind::GaspariCohnL2,
        }
    }

    /// h(z) = ∏ h_ℓ(z_ℓ) with each h_ℓ tabulated on an equispaced grid of [0,1].
    pub fn profiles(profiles: Vec<Vec<f64>>) -> Result<Self> {
        Kind::ProductOfProfiles { profiles }.try_into()
    }

    /// Short label used in CSV output.
    pub fn label(&self) -> &'static str {
        match self.kind {
            Kind::MultiplicativeBanding => "banding",
            Kind::MultiplicativeTapering { .. } => "tapering",
            Kind::GaspariCohnL2 => "gc",
            Kind::ProductOfProfiles { .. } => "profiles",
        }
    }

    pub fn is_gaspari_cohn(&self) -> bool {
        matches!(self.kind, Kind::GaspariCohnL2)
    }

    /// Fixed arity, if this function carries per-dimension parameters.
    pub fn arity(&self) -> Option<usize> {
        match &self.kind {
            Kind::MultiplicativeTapering { c } if c.len() > 1 => Some(c.len()),
            Kind::ProductOfProfiles { profiles } if profiles.len() > 1 => Some(profiles.len()),
            _ => None,
        }
    }

    /// Errors unless h can be evaluated on d-vectors.
    pub fn check_arity(&self, d: usize) -> Result<()> {
        match self.arity() {
            Some(a) if a != d => Err(Error::ArityMismatch {
                expected: a,
                found: d,
            }),
            _ => Ok(()),
        }
    }

    /// Plateau corner c with h = 1 on [0,c]; `None` for Gaspari–Cohn.
    pub fn plateau(&self, d: usize) -> Option<Vec<f64>> {
        match &self.kind {
            Kind::MultiplicativeBanding => Some(vec![1.0 - f64::EPSILON; d]),
            Kind::MultiplicativeTapering { c } => Some((0..d).map(|l| *pick(c, l)).collect()),
            Kind::GaspariCohnL2 => None,
            Kind::ProductOfProfiles { profiles } => Some(
                (0..d)
                    .map(|l| {
                        let t = pick(profiles, l);
                        let ones = t.iter().take_while(|v| **v >= 1.0).count();
                        ones.saturating_sub(1) as f64 / (t.len() - 1) as f64
                    })
                    .collect(),
            ),
        }
    }

    /// h(z) for z with non-negative components.
    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        self.check_arity(z.len())?;
        if z.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(x) = z.iter().find(|x| !(**x >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "argument component {x} is negative or NaN"
            )));
        }
        Ok(self.eval_unchecked(z))
    }

    pub(crate) fn eval_unchecked(&self, z: &[f64]) -> f64 {
        match &self.kind {
            Kind::MultiplicativeBanding => {
                if z.iter().all(|&x| x < 1.0) {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::MultiplicativeTapering { c } => z
                .iter()
                .enumerate()
                .map(|(l, &x)| linear_taper(x, *pick(c, l), 1.0))
                .product(),
            Kind::GaspariCohnL2 => {
                let r = z.iter().map(|x| x * x).sum::<f64>().sqrt();
                gaspari_cohn(2.0 * r)
            }
            Kind::ProductOfProfiles { profiles } => z
                .iter()
                .enumerate()
                .map(|(l, &x)| tabulated(pick(profiles, l), x))
                .product(),
        }
    }

    /// h(δ / k) for an integer coordinate difference.
    pub(crate) fn eval_scaled(&self, delta: &[usize], k: &[usize], buf: &mut [f64]) -> f64 {
        for ((b, &dl), &kl) in buf.iter_mut().zip(delta).zip(k) {
            *b = dl as f64 / kl as f64;
        }
        self.eval_unchecked(buf)
    }
}

/// Alternating corner sum of h over the box [a, b].
pub fn qvol(h: &LocalizationFunction, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ArityMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if let Some(l) = (0..a.len()).find(|&l| a[l] > b[l]) {
        return Err(Error::InvalidArgument(format!(
            "box corner a exceeds b in dimension {}",
            l + 1
        )));
    }
    h.check_arity(a.len())?;
    if a.iter().chain(b).any(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidArgument("box corners must be non-negative".into()));
    }
    Ok(qvol_unchecked(h, a, b, &mut vec![0.0; a.len()]))
}

fn qvol_unchecked(h: &LocalizationFunction, a: &[f64], b: &[f64], z: &mut [f64]) -> f64 {
    let d = a.len();
    let free: Vec<usize> = (0..d).filter(|&l| a[l] != b[l]).collect();
    let mut total = 0.0;
    for mask in 0u32..(1u32 << free.len()) {
        z.copy_from_slice(b);
        for (bit, &l) in free.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                z[l] = a[l];
            }
        }
        let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * h.eval_unchecked(z);
    }
    total
}

/// Sum of |qvol| over the uniform grid of [0,1]^d with `resolution` cells per
/// dimension; a lower bound on the Vitali variation of h.
pub fn vitali_variation(h: &LocalizationFunction, d: usize, resolution: usize) -> Result<f64> {
    if resolution < 2 {
        return Err(Error::InvalidArgument("resolution must be at least 2".into()));
    }
    if d == 0 {
        return Err(Error::EmptyInput);
    }
    h.check_arity(d)?;
    let cells = resolution
        .checked_pow(d as u32)
        .ok_or_else(|| Error::InvalidArgument("grid too large".into()))?;
    let n = resolution as f64;
    let mut idx = vec![0usize; d];
    let (mut a, mut b, mut z) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut total = 0.0;
    for _ in 0..cells {
        for l in 0..d {
            a[l] = idx[l] as f64 / n;
            b[l] = (idx[l] + 1) as f64 / n;
        }
        total += qvol_unchecked(h, &a, &b, &mut z).abs();
        for x in idx.iter_mut() {
            *x += 1;
            if *x < resolution {
                break;
            }
            *x = 0;
        }
    }
    Ok(total)
}

/// Weights w(k) over the integer box {1..k_h}^d expressing a localization
/// estimator as a combination of multi-banding estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMap {
    base: ScalingVector,
    entries: BTreeMap<ScalingVector, f64>,
}

impl WeightMap {
    pub fn base(&self) -> &ScalingVector {
        &self.base
    }

    pub fn entries(&self) -> &BTreeMap<ScalingVector, f64> {
        &self.entries
    }

    pub fn get(&self, k: &ScalingVector) -> f64 {
        self.entries.get(k).copied().unwrap_or(0.0)
    }

    /// Σ over k with δ strictly inside k of w(k).
    pub fn reconstruct(&self, delta: &[usize]) -> f64 {
        self.entries
            .iter()
            .filter(|(k, _)| k.as_slice().iter().zip(delta).all(|(k, d)| d < k))
            .map(|(_, w)| w)
            .sum()
    }
}

/// w(k) = Σ_{u∈{0,1}^d} (−1)^{|u|} h((k − 1 + u)/k_h), i.e. (−1)^d times the
/// quasi-volume of h over the cell [(k−1)/k_h, k/k_h].
pub fn weight_decomposition(h: &LocalizationFunction, k_h: &ScalingVector) -> Result<WeightMap> {
    let d = k_h.arity();
    h.check_arity(d)?;
    let kh = k_h.as_slice();
    let (mut a, mut b, mut z) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut k = vec![1usize; d];
    let mut entries = BTreeMap::new();
    let sign = if d.is_multiple_of(2) { 1.0 } else { -1.0 };
    loop {
        for l in 0..d {
            a[l] = (k[l] - 1) as f64 / kh[l] as f64;
            b[l] = k[l] as f64 / kh[l] as f64;
        }
        let w = sign * qvol_unchecked(h, &a, &b, &mut z);
        if w.abs() >= WEIGHT_PRUNE {
            entries.insert(ScalingVector::new(k.clone())?, w);
        }
        let mut l = 0;
        loop {
            if l == d {
                return Ok(WeightMap {
                    base: k_h.clone(),
                    entries,
                });
            }
            if k[l] < kh[l] {
                k[l] += 1;
                break;
            }
            k[l] = 1;
            l += 1;
        }
    }
}
