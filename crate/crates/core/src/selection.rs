//! Choice of the scaling vector by repeated sample splitting.
//!
//! For each of N random splits the data are divided into a first part of
//! ⌊n/3⌋ rows and a second part holding the rest. Each candidate k is scored
//! by Σ_b ‖L_h(S_b⁽¹⁾; k) − S_b⁽²⁾‖₁ and the smallest total wins.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{DataMatrix, Localizer};
use crate::lattice::{LatticeSpec, ScalingVector};
use crate::localfn::LocalizationFunction;
use crate::metrics::L1Kind;
use crate::par;
use crate::rng::{stream_rng, Stream};

pub const DEFAULT_SPLITS: usize = 50;

/// Settings for split-based selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub candidates: Vec<ScalingVector>,
    #[serde(default = "default_splits")]
    pub splits: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub norm: L1Kind,
}

fn default_splits() -> usize {
    DEFAULT_SPLITS
}

impl SelectionConfig {
    pub fn new(candidates: Vec<ScalingVector>, seed: u64) -> Self {
        Self {
            candidates,
            splits: DEFAULT_SPLITS,
            seed,
            norm: L1Kind::Operator,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::InvalidArgument("candidate grid is empty".into()));
        }
        if self.splits == 0 {
            return Err(Error::InvalidArgument("at least one split is required".into()));
        }
        if let Some(k) = self.candidates.iter().find(|k| k.arity() != d) {
            return Err(Error::ArityMismatch {
                expected: d,
                found: k.arity(),
            });
        }
        Ok(())
    }
}

/// Candidate score summary over splits.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub k: ScalingVector,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub selected: ScalingVector,
    /// One row per candidate, in grid order.
    pub table: Vec<ScoreRow>,
}

/// All k with 1 ≤ k_ℓ ≤ p_ℓ and V(k) ≤ n, in lexicographic order.
pub fn default_grid(dims: &[usize], n: usize) -> Vec<ScalingVector> {
    box_grid(dims, n)
}

/// All k with 1 ≤ k_ℓ ≤ upper_ℓ and V(k) ≤ n, in lexicographic order.
pub fn box_grid(upper: &[usize], n: usize) -> Vec<ScalingVector> {
    let mut out = Vec::new();
    let mut k = vec![1usize; upper.len()];
    fn rec(l: usize, vol: usize, upper: &[usize], n: usize, k: &mut Vec<usize>, out: &mut Vec<ScalingVector>) {
        if l == upper.len() {
            out.push(ScalingVector::new(k.clone()).expect("components are positive"));
            return;
        }
        for v in 1..=upper[l] {
            if vol * v > n {
                break;
            }
            k[l] = v;
            rec(l + 1, vol * v, upper, n, k, out);
        }
    }
    rec(0, 1, upper, n.max(1), &mut k, &mut out);
    out
}

/// Per-dimension window beyond which h(δ/k) no longer changes on the lattice:
/// p_ℓ for banding and functions without a plateau, otherwise the smallest k
/// that puts every lag up to p_ℓ − 1 on the plateau [0, c_ℓ].
pub fn saturation_bounds(h: &LocalizationFunction, dims: &[usize]) -> Vec<usize> {
    let plateau = match h.plateau(dims.len()) {
        Some(c) if h.label() != "banding" => c,
        _ => return dims.to_vec(),
    };
    dims.iter()
        .zip(plateau)
        .map(|(&p, c)| {
            if c > 0.0 {
                p.max(((p - 1) as f64 / c).ceil() as usize)
            } else {
                p
            }
        })
        .collect()
}

/// Default candidates for h: every k up to the saturation bounds with V(k) ≤ n.
pub fn default_grid_for(h: &LocalizationFunction, dims: &[usize], n: usize) -> Vec<ScalingVector> {
    box_grid(&saturation_bounds(h, dims), n)
}

/// Row indices of the first part of split `b`.
fn split_rows(n: usize, seed: u64, b: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, Stream::Splits, b as u64);
    idx.shuffle(&mut rng);
    idx.truncate(n / 3);
    idx
}

/// Data centred by the overall mean together with its Gram matrix, shared
/// across splits.
struct Prepared {
    xc: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl Prepared {
    fn new(data: &DataMatrix) -> Self {
        let n = data.n();
        let mut xc = data.as_matrix().clone();
        for mut col in xc.column_iter_mut() {
            let mean = col.sum() / n as f64;
            col.add_scalar_mut(-mean);
        }
        let gram = xc.transpose() * &xc;
        Self { xc, gram }
    }

    /// Sample covariances of the two parts of a split. The second part's Gram
    /// matrix is the total minus the first part's.
    fn split_covariances(&self, rows: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.xc.nrows();
        let n1 = rows.len();
        let n2 = n - n1;
        let x1 = self.xc.select_rows(rows);
        let g1 = x1.transpose() * &x1;
        let m1: DVector<f64> = x1.row_sum().transpose() / n1 as f64;
        // overall column means of xc are zero, so the second part's mean is −n1 m1 / n2
        let m2 = &m1 * (-(n1 as f64) / n2 as f64);
        let mut s1 = g1.clone();
        s1.ger(-(n1 as f64), &m1, &m1, 1.0);
        s1 /= (n1 - 1) as f64;
        let mut s2 = &self.gram - g1;
        s2.ger(-(n2 as f64), &m2, &m2, 1.0);
        s2 /= (n2 - 1) as f64;
        (symmetrize(s1), symmetrize(s2))
    }
}

fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let p = m.nrows();
    for j in 0..p {
        for i in (j + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Σ_j |S2_ij| for every column i.
fn column_bases(s2: &DMatrix<f64>) -> Vec<f64> {
    let p = s2.nrows();
    let a2 = s2.as_slice();
    (0..p)
        .map(|i| a2[i * p..(i + 1) * p].iter().map(|v| v.abs()).sum())
        .collect()
}

/// Σ_j |L(S1; k)_ij − S2_ij| for column i, touching only the support of k.
#[inline]
fn column_score(s1: &DMatrix<f64>, s2: &DMatrix<f64>, base: &[f64], i: usize, loc: &Localizer<'_>) -> f64 {
    let p = s1.nrows();
    let c1 = &s1.as_slice()[i * p..(i + 1) * p];
    let c2 = &s2.as_slice()[i * p..(i + 1) * p];
    let mut corr = 0.0;
    loc.for_each_support(i, |j, w| {
        corr += (w * c1[j] - c2[j]).abs() - c2[j].abs();
    });
    base[i] + corr
}

/// Operator 1-norm loss of one candidate and the first column attaining it.
fn operator_score(s1: &DMatrix<f64>, s2: &DMatrix<f64>, base: &[f64], loc: &Localizer<'_>) -> (f64, usize) {
    let mut best = (0.0f64, 0);
    for i in 0..s1.nrows() {
        let col = column_score(s1, s2, base, i, loc);
        if col > best.0 {
            best = (col, i);
        }
    }
    best
}

/// ‖L(S1; k) − S2‖₁ for every candidate.
fn score_split(s1: &DMatrix<f64>, s2: &DMatrix<f64>, locs: &[Localizer<'_>], norm: L1Kind) -> Vec<f64> {
    let base = column_bases(s2);
    locs.iter()
        .map(|loc| match norm {
            L1Kind::Operator => operator_score(s1, s2, &base, loc).0,
            L1Kind::Entrywise => (0..s1.nrows()).map(|i| column_score(s1, s2, &base, i, loc)).sum(),
        })
        .collect()
}

/// Candidates scored in full per pass of [`select_best`].
const PRUNE_BATCH: usize = 8;
/// Columns with the largest held-out mass that seed the lower bounds.
const PRUNE_SEED_COLUMNS: usize = 4;

/// Lower bounds for one split: the largest column loss over `cols`.
struct SplitBounds {
    cols: Vec<usize>,
    lb: Vec<f64>,
}

/// Whether candidate `c` with summed score `total` beats the incumbent.
fn beats(cands: &[ScalingVector], c: usize, total: f64, best: Option<(usize, f64)>) -> bool {
    match best {
        None => true,
        Some((b, bt)) => {
            total < bt
                || (total == bt && (cands[c].volume(), cands[c].as_slice()) < (cands[b].volume(), cands[b].as_slice()))
        }
    }
}

/// The candidate [`select_scaling`] would pick, without the score table.
///
/// Under the operator norm any single column sum bounds a split's loss from
/// below, so a candidate whose bound summed over splits exceeds the best full
/// total so far can never win and is skipped. Bounds start from the columns
/// with the largest held-out mass and are tightened with the argmax column
/// of every fully scored candidate. Other norms fall back to the full table.
pub fn select_best(
    data: &DataMatrix,
    spec: &LatticeSpec,
    h: &LocalizationFunction,
    cfg: &SelectionConfig,
) -> Result<ScalingVector> {
    if cfg.norm != L1Kind::Operator {
        return Ok(select_scaling(data, spec, h, cfg)?.selected);
    }
    check_inputs(data, spec)?;
    cfg.validate(spec.order())?;
    let prep = Prepared::new(data);
    let locs = localizers(spec, h, &cfg.candidates)?;
    let (n, p, nc) = (data.n(), data.p(), locs.len());
    let split = |b: usize| {
        let (s1, s2) = prep.split_covariances(&split_rows(n, cfg.seed, b));
        let base = column_bases(&s2);
        (s1, s2, base)
    };

    let mut bounds: Vec<SplitBounds> = par::map_range(cfg.splits, |b| {
        let (s1, s2, base) = split(b);
        let mut cols: Vec<usize> = (0..p).collect();
        cols.sort_by(|&x, &y| base[y].total_cmp(&base[x]).then(x.cmp(&y)));
        cols.truncate(PRUNE_SEED_COLUMNS);
        let lb = locs
            .iter()
            .map(|loc| cols.iter().fold(0.0f64, |m, &i| m.max(column_score(&s1, &s2, &base, i, loc))))
            .collect();
        SplitBounds { cols, lb }
    });

    let mut scored = vec![false; nc];
    let mut best: Option<(usize, f64)> = None;
    loop {
        let cut = best.map_or(f64::INFINITY, |b| b.1);
        // summed in split order, like the full totals, so a bound never exceeds its total
        let mut pending: Vec<(f64, usize)> = (0..nc)
            .filter(|&c| !scored[c])
            .map(|c| (bounds.iter().map(|s| s.lb[c]).sum::<f64>(), c))
            .filter(|&(lb, _)| lb <= cut)
            .collect();
        if pending.is_empty() {
            break;
        }
        pending.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let batch: Vec<usize> = pending.iter().take(PRUNE_BATCH).map(|&(_, c)| c).collect();
        let rest: Vec<usize> = pending.iter().skip(PRUNE_BATCH).map(|&(_, c)| c).collect();

        let passes = par::map_range(cfg.splits, |b| {
            let (s1, s2, base) = split(b);
            let known = &bounds[b].cols;
            let mut fresh = Vec::new();
            let scores: Vec<f64> = batch
                .iter()
                .map(|&c| {
                    let (v, arg) = operator_score(&s1, &s2, &base, &locs[c]);
                    if !known.contains(&arg) && !fresh.contains(&arg) {
                        fresh.push(arg);
                    }
                    v
                })
                .collect();
            let lb: Vec<f64> = rest
                .iter()
                .map(|&c| {
                    fresh
                        .iter()
                        .fold(bounds[b].lb[c], |m, &i| m.max(column_score(&s1, &s2, &base, i, &locs[c])))
                })
                .collect();
            (scores, fresh, lb)
        });

        let mut totals = vec![0.0; batch.len()];
        let mut per_split: Vec<Vec<f64>> = Vec::with_capacity(cfg.splits);
        for ((scores, fresh, lb), sb) in passes.into_iter().zip(bounds.iter_mut()) {
            sb.cols.extend(fresh);
            for (&c, v) in rest.iter().zip(lb) {
                sb.lb[c] = v;
            }
            per_split.push(scores);
        }
        for (t, total) in totals.iter_mut().enumerate() {
            *total = per_split.iter().map(|row| row[t]).sum();
        }
        for (&c, &total) in batch.iter().zip(&totals) {
            scored[c] = true;
            if beats(&cfg.candidates, c, total, best) {
                best = Some((c, total));
            }
        }
    }
    let (b, _) = best.expect("the candidate grid is non-empty");
    Ok(cfg.candidates[b].clone())
}

fn check_inputs(data: &DataMatrix, spec: &LatticeSpec) -> Result<()> {
    if data.n() < 6 {
        return Err(Error::TooFewSamples {
            n: data.n(),
            required: 6,
        });
    }
    if data.p() != spec.site_count() {
        return Err(Error::DimensionMismatch {
            expected: spec.site_count(),
            found: data.p(),
        });
    }
    Ok(())
}

fn localizers<'a>(
    spec: &'a LatticeSpec,
    h: &LocalizationFunction,
    cands: &[ScalingVector],
) -> Result<Vec<Localizer<'a>>> {
    cands.iter().map(|k| Localizer::new(spec, h, k)).collect()
}

/// Scores of every candidate on split `b` alone.
pub fn split_scores(
    data: &DataMatrix,
    spec: &LatticeSpec,
    h: &LocalizationFunction,
    cfg: &SelectionConfig,
    b: usize,
) -> Result<Vec<f64>> {
    check_inputs(data, spec)?;
    cfg.validate(spec.order())?;
    let prep = Prepared::new(data);
    let locs = localizers(spec, h, &cfg.candidates)?;
    let (s1, s2) = prep.split_covariances(&split_rows(data.n(), cfg.seed, b));
    Ok(score_split(&s1, &s2, &locs, cfg.norm))
}

/// Per-split score matrix, indexed [split][candidate].
pub fn score_matrix(
    data: &DataMatrix,
    spec: &LatticeSpec,
    h: &LocalizationFunction,
    cfg: &SelectionConfig,
) -> Result<Vec<Vec<f64>>> {
    check_inputs(data, spec)?;
    cfg.validate(spec.order())?;
    let prep = Prepared::new(data);
    let locs = localizers(spec, h, &cfg.candidates)?;
    let n = data.n();
    Ok(par::map_range(cfg.splits, |b| {
        let (s1, s2) = prep.split_covariances(&split_rows(n, cfg.seed, b));
        score_split(&s1, &s2, &locs, cfg.norm)
    }))
}

fn summarize(cands: &[ScalingVector], scores: &[Vec<f64>]) -> Selection {
    let nb = scores.len() as f64;
    let mut table = Vec::with_capacity(cands.len());
    let mut best: Option<(usize, f64)> = None;
    for (c, k) in cands.iter().enumerate() {
        // splits are summed in index order so totals do not depend on scheduling
        let total: f64 = scores.iter().map(|row| row[c]).sum();
        let mean = total / nb;
        let std = if scores.len() > 1 {
            (scores.iter().map(|row| (row[c] - mean).powi(2)).sum::<f64>() / (nb - 1.0)).sqrt()
        } else {
            0.0
        };
        table.push(ScoreRow {
            k: k.clone(),
            mean,
            std,
        });
        if beats(cands, c, total, best) {
            best = Some((c, total));
        }
    }
    let b = best.map(|(b, _)| b).unwrap_or(0);
    Selection {
        selected: cands[b].clone(),
        table,
    }
}

/// Selects k for the localization estimator with function h.
pub fn select_scaling(
    data: &DataMatrix,
    spec: &LatticeSpec,
    h: &LocalizationFunction,
    cfg: &SelectionConfig,
) -> Result<Selection> {
    let scores = score_matrix(data, spec, h, cfg)?;
    Ok(summarize(&cfg.candidates, &scores))
}

/// One-dimensional comparator estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparator1d {
    /// Keep |i − j| ≤ k.
    Banding,
    /// Weight φ(|i − j|; k/2, k), k even.
    Tapering,
}

impl Comparator1d {
    pub fn function(self) -> LocalizationFunction {
        match self {
            Comparator1d::Banding => LocalizationFunction::banding(),
            Comparator1d::Tapering => {
                LocalizationFunction::tapering(vec![0.5]).expect("0.5 is a valid plateau")
            }
        }
    }

    /// Window size of the equivalent 1-D localization.
    pub fn window(self, k: usize) -> Result<ScalingVector> {
        match self {
            Comparator1d::Banding => ScalingVector::new(vec![k + 1]),
            Comparator1d::Tapering => {
                if k < 2 || !k.is_multiple_of(2) {
                    return Err(Error::InvalidArgument(format!(
                        "taper width {k} must be even and at least 2"
                    )));
                }
                ScalingVector::new(vec![k])
            }
        }
    }

    /// Default grid of widths for dimension p: every width up to the full
    /// band (even widths for tapering).
    pub fn default_grid(self, p: usize) -> Vec<usize> {
        match self {
            Comparator1d::Banding => (0..p.max(1)).collect(),
            Comparator1d::Tapering => (2..=p.max(2)).step_by(2).collect(),
        }
    }
}

/// Selects the bandwidth of a 1-D banding or tapering comparator applied to
/// the vectorized data. The candidates and seed come from `grid` and `cfg`;
/// `cfg.candidates` is ignored.
pub fn select_bandwidth_1d(
    data: &DataMatrix,
    estimator: Comparator1d,
    grid: &[usize],
    cfg: &SelectionConfig,
) -> Result<(usize, Vec<ScoreRow>)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("bandwidth grid is empty".into()));
    }
    let spec = LatticeSpec::line(data.p())?;
    let cands = grid
        .iter()
        .map(|&k| estimator.window(k))
        .collect::<Result<Vec<_>>>()?;
    let inner = SelectionConfig {
        candidates: cands,
        ..cfg.clone()
    };
    let sel = select_scaling(data, &spec, &estimator.function(), &inner)?;
    let pos = inner
        .candidates
        .iter()
        .position(|k| *k == sel.selected)
        .expect("selected candidate comes from the grid");
    Ok((grid[pos], sel.table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{localize, sample_covariance, CovMatrix};
    use crate::model::sample_gaussian;

    fn sv(k: &[usize]) -> ScalingVector {
        ScalingVector::new(k.to_vec()).unwrap()
    }

    #[test]
    fn default_grid_respects_volume() {
        let g = default_grid(&[3, 4], 6);
        assert!(g.iter().all(|k| k.volume() <= 6));
        assert!(g.contains(&sv(&[3, 2])) && !g.contains(&sv(&[3, 3])));
        assert_eq!(g.len(), 4 + 3 + 2);
        assert_eq!(default_grid(&[5], 100).len(), 5);
        let taper = LocalizationFunction::tapering(vec![0.5]).unwrap();
        assert_eq!(saturation_bounds(&taper, &[10, 1, 4]), vec![18, 1, 6]);
        assert_eq!(saturation_bounds(&LocalizationFunction::banding(), &[10, 3]), vec![10, 3]);
        assert_eq!(saturation_bounds(&LocalizationFunction::gaspari_cohn(), &[7]), vec![7]);
        assert_eq!(default_grid_for(&taper, &[10], 100).len(), 18);
    }

    #[test]
    fn pruned_choice_matches_full_table() {
        let spec = LatticeSpec::new(vec![5, 4, 3]).unwrap();
        let a: Vec<f64> = (0..60).map(|i| 0.5 + (i % 7) as f64 / 7.0).collect();
        let truth = crate::model::gen_setting1(&spec, &a, Some(&[2.0, 1.0, 0.5])).unwrap();
        let hs = [
            LocalizationFunction::banding(),
            LocalizationFunction::tapering(vec![0.5]).unwrap(),
            LocalizationFunction::gaspari_cohn(),
        ];
        for seed in 0..6u64 {
            let x = sample_gaussian(&truth, 30 + 20 * seed as usize, seed).unwrap();
            for h in &hs {
                let cfg = SelectionConfig {
                    candidates: default_grid_for(h, spec.dims(), x.n()),
                    splits: 7,
                    seed: seed + 100,
                    norm: L1Kind::Operator,
                };
                let full = select_scaling(&x, &spec, h, &cfg).unwrap().selected;
                assert_eq!(select_best(&x, &spec, h, &cfg).unwrap(), full, "seed {seed} {h:?}");
            }
        }
    }

    #[test]
    fn pruned_choice_keeps_tie_order() {
        // identical candidates tie exactly; the smaller volume, then the
        // lexicographically smaller k, must win as in the full table
        let spec = LatticeSpec::new(vec![3, 3]).unwrap();
        let x = sample_gaussian(&CovMatrix::identity(9), 20, 4).unwrap();
        let cfg = SelectionConfig {
            candidates: vec![sv(&[9, 9]), sv(&[3, 4]), sv(&[4, 3]), sv(&[3, 3])],
            splits: 4,
            seed: 2,
            norm: L1Kind::Operator,
        };
        let h = LocalizationFunction::banding();
        assert_eq!(select_scaling(&x, &spec, &h, &cfg).unwrap().selected, sv(&[3, 3]));
        assert_eq!(select_best(&x, &spec, &h, &cfg).unwrap(), sv(&[3, 3]));
    }

    #[test]
    fn split_covariances_match_direct() {
        let spec = LatticeSpec::new(vec![3, 2]).unwrap();
        let truth = CovMatrix::identity(6);
        let x = sample_gaussian(&truth, 30, 2).unwrap();
        let prep = Prepared::new(&x);
        let rows = split_rows(30, 5, 0);
        let (s1, s2) = prep.split_covariances(&rows);
        let rest: Vec<usize> = (0..30).filter(|i| !rows.contains(i)).collect();
        let d1 = sample_covariance(&x.select_rows(&rows)).unwrap();
        let d2 = sample_covariance(&x.select_rows(&rest)).unwrap();
        assert!((s1 - d1.as_matrix()).amax() < 1e-12);
        assert!((s2 - d2.as_matrix()).amax() < 1e-12);
        assert_eq!(spec.site_count(), 6);
    }

    #[test]
    fn fast_scores_match_bruteforce() {
        let spec = LatticeSpec::new(vec![4, 3, 2]).unwrap();
        let truth = crate::model::gen_setting1(&spec, &[1.0; 24], None).unwrap();
        let x = sample_gaussian(&truth, 40, 3).unwrap();
        let cands = default_grid(spec.dims(), 40);
        for h in [LocalizationFunction::banding(), LocalizationFunction::gaspari_cohn()] {
            for norm in [L1Kind::Operator, L1Kind::Entrywise] {
                let cfg = SelectionConfig {
                    candidates: cands.clone(),
                    splits: 3,
                    seed: 11,
                    norm,
                };
                for b in 0..3 {
                    let fast = split_scores(&x, &spec, &h, &cfg, b).unwrap();
                    let rows = split_rows(40, 11, b);
                    let rest: Vec<usize> = (0..40).filter(|i| !rows.contains(i)).collect();
                    let s1 = sample_covariance(&x.select_rows(&rows)).unwrap();
                    let s2 = sample_covariance(&x.select_rows(&rest)).unwrap();
                    for (k, f) in cands.iter().zip(&fast) {
                        let l = localize(&s1, &spec, &h, k).unwrap();
                        let want = norm.norm(&l.sub(&s2).unwrap());
                        assert!((f - want).abs() < 1e-9 * want.max(1.0), "{k} {f} {want}");
                    }
                }
            }
        }
    }

    #[test]
    fn singleton_and_errors() {
        let spec = LatticeSpec::new(vec![5]).unwrap();
        let x = sample_gaussian(&CovMatrix::identity(5), 12, 1).unwrap();
        let h = LocalizationFunction::banding();
        let cfg = SelectionConfig::new(vec![sv(&[3])], 0);
        assert_eq!(select_scaling(&x, &spec, &h, &cfg).unwrap().selected, sv(&[3]));
        let few = sample_gaussian(&CovMatrix::identity(5), 5, 1).unwrap();
        assert!(matches!(select_scaling(&few, &spec, &h, &cfg), Err(Error::TooFewSamples { .. })));
        let empty = SelectionConfig::new(vec![], 0);
        assert!(select_scaling(&x, &spec, &h, &empty).is_err());
        let (k, _) = select_bandwidth_1d(&x, Comparator1d::Tapering, &[4], &cfg).unwrap();
        assert_eq!(k, 4);
        assert!(select_bandwidth_1d(&x, Comparator1d::Tapering, &[3], &cfg).is_err());
    }

    #[test]
    fn deterministic_and_additive() {
        let spec = LatticeSpec::new(vec![4, 4]).unwrap();
        let truth = crate::model::gen_setting1(&spec, &[1.0; 16], None).unwrap();
        let x = sample_gaussian(&truth, 30, 4).unwrap();
        let h = LocalizationFunction::tapering(vec![0.5]).unwrap();
        let mut cfg = SelectionConfig::new(default_grid(spec.dims(), 30), 9);
        cfg.splits = 7;
        let a = select_scaling(&x, &spec, &h, &cfg).unwrap();
        assert_eq!(a, select_scaling(&x, &spec, &h, &cfg).unwrap());
        let mut sum = vec![0.0; cfg.candidates.len()];
        for b in 0..7 {
            for (s, v) in sum.iter_mut().zip(split_scores(&x, &spec, &h, &cfg, b).unwrap()) {
                *s += v;
            }
        }
        for (row, s) in a.table.iter().zip(&sum) {
            assert!((row.mean * 7.0 - s).abs() < 1e-9 * s);
        }
    }

    #[test]
    fn relabeling_equivariance() {
        let spec = LatticeSpec::new(vec![4, 3]).unwrap();
        let t = LatticeSpec::new(vec![3, 4]).unwrap();
        let truth = crate::model::gen_setting1(&spec, &[1.0; 12], Some(&[2.0, 0.7])).unwrap();
        let x = sample_gaussian(&truth, 60, 5).unwrap();
        // the same data with the dimension labels swapped
        let perm: Vec<usize> = (0..12)
            .map(|i| {
                let c = t.index_to_coord(i).unwrap();
                spec.coord_to_index(&[c[1], c[0]]).unwrap()
            })
            .collect();
        let xt = DataMatrix::new(x.as_matrix().select_columns(&perm)).unwrap();
        let grid = default_grid(spec.dims(), 60);
        let grid_t: Vec<ScalingVector> = grid.iter().map(|k| sv(&[k.as_slice()[1], k.as_slice()[0]])).collect();
        let h = LocalizationFunction::banding();
        let a = select_scaling(&x, &spec, &h, &SelectionConfig::new(grid, 3)).unwrap();
        let b = select_scaling(&xt, &t, &h, &SelectionConfig::new(grid_t, 3)).unwrap();
        assert_eq!(a.selected.as_slice(), &[b.selected.as_slice()[1], b.selected.as_slice()[0]]);
    }
}
