//! Experiment configs and Monte Carlo drivers: estimator specs, the
//! simulation runner behind the comparison tables, and rate-slope studies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    band_1d, localize, nearest_kronecker, psd_project, sample_covariance, taper_1d, CovMatrix,
    DataMatrix,
};
use crate::lattice::{LatticeSpec, ScalingVector};
use crate::localfn::LocalizationFunction;
use crate::metrics::{error_report, ErrorReport, L1Kind, DEFAULT_SPECTRAL_TOL};
use crate::model::{optimal_scaling, DecayFamily, DecaySpec, GeneratorSpec, Sampler};
use crate::par;
use crate::rng::derive_seed;
use crate::selection::{
    default_grid_for, select_bandwidth_1d, select_best, Comparator1d, SelectionConfig,
    DEFAULT_SPLITS,
};

pub const CONFIG_VERSION: u32 = 1;

const KRONECKER_ITERS: usize = 1000;
const KRONECKER_TOL: f64 = 1e-12;

/// The literal `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Auto {
    Auto,
}

/// How a scaling vector is chosen: fixed, selected from an explicit grid,
/// or selected from the default grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScaleChoice {
    Fixed(ScalingVector),
    Grid { grid: Vec<ScalingVector> },
    Auto(Auto),
}

impl Default for ScaleChoice {
    fn default() -> Self {
        ScaleChoice::Auto(Auto::Auto)
    }
}

/// Same as [`ScaleChoice`] for a scalar 1-D width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WidthChoice {
    Fixed(usize),
    Grid { grid: Vec<usize> },
    Auto(Auto),
}

impl Default for WidthChoice {
    fn default() -> Self {
        WidthChoice::Auto(Auto::Auto)
    }
}

fn default_zsk_h() -> LocalizationFunction {
    LocalizationFunction::tapering(vec![0.5]).expect("0.5 is a valid plateau")
}

/// A covariance estimator as named in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum EstimatorSpec {
    Sample {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    /// Localization L_h(S; k) on the data lattice.
    Localize {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        h: LocalizationFunction,
        #[serde(default)]
        k: ScaleChoice,
    },
    /// 1-D banding of the vectorized data.
    Band1d {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default)]
        k: WidthChoice,
    },
    /// 1-D tapering of the vectorized data.
    Taper1d {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default)]
        k: WidthChoice,
    },
    /// Nearest Kronecker product to a doubly localized estimate (d = 2).
    Zsk {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        #[serde(default = "default_zsk_h")]
        h: LocalizationFunction,
        #[serde(default)]
        k: ScaleChoice,
    },
    /// The true covariance.
    Oracle {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Identity {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
}

/// Inputs shared by every estimator fitted on one sample.
#[derive(Debug, Clone, Copy)]
pub struct FitContext<'a> {
    pub spec: &'a LatticeSpec,
    pub data: &'a DataMatrix,
    pub sample: &'a CovMatrix,
    pub truth: Option<&'a CovMatrix>,
    pub splits: usize,
    pub seed: u64,
    pub norm: L1Kind,
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub estimate: CovMatrix,
    /// Tuning parameter used, if the estimator has one.
    pub tuning: Option<Vec<usize>>,
}

impl EstimatorSpec {
    pub fn localize(h: LocalizationFunction, k: ScaleChoice) -> Self {
        EstimatorSpec::Localize { name: None, h, k }
    }

    pub fn name(&self) -> String {
        use EstimatorSpec::*;
        let given = match self {
            Sample { name }
            | Localize { name, .. }
            | Band1d { name, .. }
            | Taper1d { name, .. }
            | Zsk { name, .. }
            | Oracle { name }
            | Identity { name } => name.clone(),
        };
        given.unwrap_or_else(|| match self {
            Sample { .. } => "sample".into(),
            Localize { h, .. } => format!("localize-{}", h.label()),
            Band1d { .. } => "band1d".into(),
            Taper1d { .. } => "taper1d".into(),
            Zsk { .. } => "zsk".into(),
            Oracle { .. } => "oracle".into(),
            Identity { .. } => "identity".into(),
        })
    }

    /// Checks the estimator against a lattice without touching data.
    pub fn validate(&self, spec: &LatticeSpec) -> Result<()> {
        let d = spec.order();
        let check_scale = |k: &ScaleChoice| -> Result<()> {
            let ks: &[ScalingVector] = match k {
                ScaleChoice::Fixed(k) => std::slice::from_ref(k),
                ScaleChoice::Grid { grid } => {
                    if grid.is_empty() {
                        return Err(Error::InvalidArgument("candidate grid is empty".into()));
                    }
                    grid
                }
                ScaleChoice::Auto(_) => &[],
            };
            match ks.iter().find(|k| k.arity() != d) {
                Some(k) => Err(Error::ArityMismatch {
                    expected: d,
                    found: k.arity(),
                }),
                None => Ok(()),
            }
        };
        let check_width = |k: &WidthChoice, est: Comparator1d| -> Result<()> {
            let ws: &[usize] = match k {
                WidthChoice::Fixed(w) => std::slice::from_ref(w),
                WidthChoice::Grid { grid } => {
                    if grid.is_empty() {
                        return Err(Error::InvalidArgument("bandwidth grid is empty".into()));
                    }
                    grid
                }
                WidthChoice::Auto(_) => &[],
            };
            for &w in ws {
                est.window(w)?;
                if est == Comparator1d::Banding && w >= spec.site_count() {
                    return Err(Error::InvalidArgument(format!(
                        "bandwidth {w} must be below the dimension {}",
                        spec.site_count()
                    )));
                }
            }
            Ok(())
        };
        match self {
            EstimatorSpec::Localize { h, k, .. } => {
                h.check_arity(d)?;
                check_scale(k)
            }
            EstimatorSpec::Zsk { h, k, .. } => {
                if d != 2 || !spec.is_regular() {
                    return Err(Error::InvalidArgument(
                        "the separable estimator needs a regular 2-order lattice".into(),
                    ));
                }
                h.check_arity(d)?;
                check_scale(k)
            }
            EstimatorSpec::Band1d { k, .. } => check_width(k, Comparator1d::Banding),
            EstimatorSpec::Taper1d { k, .. } => check_width(k, Comparator1d::Tapering),
            _ => Ok(()),
        }
    }

    fn selection_config(ctx: &FitContext<'_>, candidates: Vec<ScalingVector>) -> SelectionConfig {
        SelectionConfig {
            candidates,
            splits: ctx.splits,
            seed: ctx.seed,
            norm: ctx.norm,
        }
    }

    fn select_k(&self, h: &LocalizationFunction, k: &ScaleChoice, ctx: &FitContext<'_>) -> Result<ScalingVector> {
        let cands = match k {
            ScaleChoice::Fixed(k) => return Ok(k.clone()),
            ScaleChoice::Grid { grid } => grid.clone(),
            ScaleChoice::Auto(_) => default_grid_for(h, ctx.spec.dims(), ctx.data.n()),
        };
        let cfg = Self::selection_config(ctx, cands);
        select_best(ctx.data, ctx.spec, h, &cfg)
    }

    fn select_width(k: &WidthChoice, est: Comparator1d, ctx: &FitContext<'_>) -> Result<usize> {
        let grid = match k {
            WidthChoice::Fixed(w) => return Ok(*w),
            WidthChoice::Grid { grid } => grid.clone(),
            WidthChoice::Auto(_) => est.default_grid(ctx.data.p()),
        };
        let cfg = Self::selection_config(ctx, Vec::new());
        Ok(select_bandwidth_1d(ctx.data, est, &grid, &cfg)?.0)
    }

    /// Replaces any selected tuning parameter by the value chosen on `ctx`.
    pub fn resolve(&self, ctx: &FitContext<'_>) -> Result<EstimatorSpec> {
        let name = Some(self.name());
        Ok(match self {
            EstimatorSpec::Localize { h, k, .. } => EstimatorSpec::Localize {
                name,
                h: h.clone(),
                k: ScaleChoice::Fixed(self.select_k(h, k, ctx)?),
            },
            EstimatorSpec::Zsk { h, k, .. } => EstimatorSpec::Zsk {
                name,
                h: h.clone(),
                k: ScaleChoice::Fixed(self.select_k(h, k, ctx)?),
            },
            EstimatorSpec::Band1d { k, .. } => EstimatorSpec::Band1d {
                name,
                k: WidthChoice::Fixed(Self::select_width(k, Comparator1d::Banding, ctx)?),
            },
            EstimatorSpec::Taper1d { k, .. } => EstimatorSpec::Taper1d {
                name,
                k: WidthChoice::Fixed(Self::select_width(k, Comparator1d::Tapering, ctx)?),
            },
            other => other.clone(),
        })
    }

    /// Fits the estimator, selecting tuning parameters on the data if needed.
    pub fn fit(&self, ctx: &FitContext<'_>) -> Result<Fitted> {
        let p = ctx.sample.p();
        match self.resolve(ctx)? {
            EstimatorSpec::Sample { .. } => Ok(Fitted {
                estimate: ctx.sample.clone(),
                tuning: None,
            }),
            EstimatorSpec::Localize {
                h,
                k: ScaleChoice::Fixed(k),
                ..
            } => Ok(Fitted {
                estimate: localize(ctx.sample, ctx.spec, &h, &k)?,
                tuning: Some(k.as_slice().to_vec()),
            }),
            EstimatorSpec::Zsk {
                h,
                k: ScaleChoice::Fixed(k),
                ..
            } => {
                let doubly = localize(ctx.sample, ctx.spec, &h, &k)?;
                let dims = ctx.spec.dims();
                let fit = nearest_kronecker(&doubly, dims[0], dims[1], KRONECKER_ITERS, KRONECKER_TOL)?;
                Ok(Fitted {
                    estimate: fit.product(),
                    tuning: Some(k.as_slice().to_vec()),
                })
            }
            EstimatorSpec::Band1d {
                k: WidthChoice::Fixed(w),
                ..
            } => Ok(Fitted {
                estimate: band_1d(ctx.sample, w)?,
                tuning: Some(vec![w]),
            }),
            EstimatorSpec::Taper1d {
                k: WidthChoice::Fixed(w),
                ..
            } => Ok(Fitted {
                estimate: taper_1d(ctx.sample, w)?,
                tuning: Some(vec![w]),
            }),
            EstimatorSpec::Oracle { .. } => Ok(Fitted {
                estimate: ctx
                    .truth
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument("oracle estimator needs the truth".into()))?,
                tuning: None,
            }),
            EstimatorSpec::Identity { .. } => Ok(Fitted {
                estimate: CovMatrix::identity(p),
                tuning: None,
            }),
            _ => unreachable!("resolve fixes every tuning parameter"),
        }
    }
}

/// Sampling distribution of the synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Distribution {
    #[default]
    Gaussian,
    T { dof: u32 },
}

impl Distribution {
    pub fn label(&self) -> String {
        match self {
            Distribution::Gaussian => "gaussian".into(),
            Distribution::T { dof } => format!("t{dof}"),
        }
    }

    pub fn draw(&self, sampler: &Sampler, n: usize, seed: u64) -> Result<DataMatrix> {
        match *self {
            Distribution::Gaussian => Ok(sampler.gaussian(n, seed)),
            Distribution::T { dof } => sampler.student_t(dof, n, seed),
        }
    }
}

fn default_splits() -> usize {
    DEFAULT_SPLITS
}

fn default_tol() -> f64 {
    DEFAULT_SPECTRAL_TOL
}

/// Line number (1-based) of the first occurrence of `"key"` in `text`.
pub(crate) fn locate_key(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

/// A config error pointing at the line where `key` appears.
pub(crate) fn config_error(text: &str, key: &str, msg: impl std::fmt::Display) -> Error {
    match locate_key(text, key) {
        Some(line) => Error::Parse(format!("line {line}: {key}: {msg}")),
        None => Error::Parse(format!("{key}: {msg}")),
    }
}

pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
    })
}

pub(crate) fn check_version(text: &str, version: u32) -> Result<()> {
    if version != CONFIG_VERSION {
        return Err(config_error(
            text,
            "version",
            format!("unsupported schema version {version} (expected {CONFIG_VERSION})"),
        ));
    }
    Ok(())
}

/// Config of a Monte Carlo comparison of estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub distribution: Distribution,
    pub n: Vec<usize>,
    pub estimators: Vec<EstimatorSpec>,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_splits")]
    pub splits: usize,
    #[serde(default)]
    pub norm: L1Kind,
    #[serde(default = "default_tol")]
    pub spectral_tol: f64,
    /// Project each estimate onto the PSD cone before scoring.
    #[serde(default)]
    pub psd_repair: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ExperimentConfig {
    /// Parses and validates a JSON config. Errors name the offending line.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = parse_json(text)?;
        cfg.validate_with(text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with("")
    }

    fn validate_with(&self, text: &str) -> Result<()> {
        check_version(text, self.version)?;
        if self.reps == 0 {
            return Err(config_error(text, "reps", "must be at least 1"));
        }
        if self.n.is_empty() {
            return Err(config_error(text, "n", "needs at least one sample size"));
        }
        if let Some(n) = self.n.iter().find(|&&n| n < 2) {
            return Err(config_error(text, "n", format!("sample size {n} is below 2")));
        }
        if self.splits == 0 {
            return Err(config_error(text, "splits", "must be at least 1"));
        }
        if !(self.spectral_tol > 0.0) {
            return Err(config_error(text, "spectral_tol", "must be positive"));
        }
        if self.estimators.is_empty() {
            return Err(config_error(text, "estimators", "needs at least one estimator"));
        }
        if let Distribution::T { dof } = self.distribution {
            if dof <= 2 {
                return Err(config_error(text, "dof", "must exceed 2"));
            }
        }
        let spec = self
            .generator
            .lattice()
            .map_err(|e| config_error(text, "generator", e))?;
        for e in &self.estimators {
            e.validate(&spec)
                .map_err(|err| config_error(text, "estimators", format!("{}: {err}", e.name())))?;
        }
        Ok(())
    }
}

/// One (replicate, estimator, n) outcome.
#[derive(Debug, Clone)]
pub struct SimRow {
    pub replicate: usize,
    pub estimator: String,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub report: ErrorReport,
    pub tuning: Option<Vec<usize>>,
}

/// Mean and standard deviation of each norm for one (estimator, n) cell.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub estimator: String,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub reps: usize,
    pub spectral: (f64, f64),
    pub frobenius: (f64, f64),
    pub l1: (f64, f64),
    /// Componentwise mean of the tuning parameter.
    pub mean_tuning: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    /// Generator with its amplitudes frozen.
    pub generator: GeneratorSpec,
    pub rows: Vec<SimRow>,
}

pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Runs every (n, replicate, estimator) cell. Replicates run in parallel; rows
/// come back ordered by n, then replicate, then estimator.
pub fn run_simulation(cfg: &ExperimentConfig) -> Result<SimulationOutput> {
    cfg.validate()?;
    let generator = cfg.generator.freeze(cfg.seed)?;
    let spec = generator.lattice()?;
    let truth = generator.covariance()?;
    let sampler = Sampler::new(&truth)?;
    let (p, d) = (spec.site_count(), spec.order());
    let names: Vec<String> = cfg.estimators.iter().map(|e| e.name()).collect();
    let mut rows = Vec::new();
    for &n in &cfg.n {
        let per_rep = par::map_range(cfg.reps, |rep| -> Result<Vec<SimRow>> {
            let seed = derive_seed(cfg.seed, &[n as u64, rep as u64]);
            let data = cfg.distribution.draw(&sampler, n, seed)?;
            let sample = sample_covariance(&data)?;
            let ctx = FitContext {
                spec: &spec,
                data: &data,
                sample: &sample,
                truth: Some(&truth),
                splits: cfg.splits,
                seed: derive_seed(seed, &[1]),
                norm: cfg.norm,
            };
            let mut out = Vec::with_capacity(cfg.estimators.len());
            for (e, name) in cfg.estimators.iter().zip(&names) {
                let fitted = e.fit(&ctx)?;
                let est = if cfg.psd_repair {
                    psd_project(&fitted.estimate, 0.0)?
                } else {
                    fitted.estimate
                };
                out.push(SimRow {
                    replicate: rep,
                    estimator: name.clone(),
                    n,
                    p,
                    d,
                    report: error_report(&est, &truth, cfg.spectral_tol)?,
                    tuning: fitted.tuning,
                });
            }
            Ok(out)
        });
        for r in per_rep {
            rows.extend(r?);
        }
    }
    Ok(SimulationOutput { generator, rows })
}

/// Aggregates rows into one summary per (n, estimator), in first-seen order.
pub fn summarize(rows: &[SimRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(usize, String)> = Vec::new();
    for r in rows {
        let key = (r.n, r.estimator.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(n, name)| {
            let cell: Vec<&SimRow> = rows.iter().filter(|r| r.n == n && r.estimator == name).collect();
            let col = |f: fn(&ErrorReport) -> f64| mean_sd(&cell.iter().map(|r| f(&r.report)).collect::<Vec<_>>());
            let tunings: Vec<&Vec<usize>> = cell.iter().filter_map(|r| r.tuning.as_ref()).collect();
            let mean_tuning = (tunings.len() == cell.len() && !tunings.is_empty()).then(|| {
                (0..tunings[0].len())
                    .map(|l| tunings.iter().map(|t| t[l] as f64).sum::<f64>() / tunings.len() as f64)
                    .collect()
            });
            SummaryRow {
                estimator: name,
                n,
                p: cell[0].p,
                d: cell[0].d,
                reps: cell.len(),
                spectral: col(|r| r.spectral),
                frobenius: col(|r| r.frobenius),
                l1: col(|r| r.l1_operator),
                mean_tuning,
            }
        })
        .collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("x")
}

pub const ROWS_HEADER: &str = "replicate,estimator,n,p,d,spectral,frobenius,l1,selected_k";
pub const SUMMARY_HEADER: &str =
    "estimator,n,p,d,reps,spectral_mean,spectral_sd,frobenius_mean,frobenius_sd,l1_mean,l1_sd,mean_selected_k";

/// Per-replicate CSV, headed by the provenance comment `prelude`.
pub fn rows_csv(prelude: &str, rows: &[SimRow]) -> String {
    let mut s = format!("{prelude}\n{ROWS_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.replicate,
            r.estimator,
            r.n,
            r.p,
            r.d,
            r.report.spectral,
            r.report.frobenius,
            r.report.l1_operator,
            r.tuning.as_deref().map(join).unwrap_or_default()
        ));
    }
    s
}

pub fn summary_csv(prelude: &str, summary: &[SummaryRow]) -> String {
    let mut s = format!("{prelude}\n{SUMMARY_HEADER}\n");
    for r in summary {
        let k = r
            .mean_tuning
            .as_ref()
            .map(|t| t.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("x"))
            .unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.estimator,
            r.n,
            r.p,
            r.d,
            r.reps,
            r.spectral.0,
            r.spectral.1,
            r.frobenius.0,
            r.frobenius.1,
            r.l1.0,
            r.l1.1,
            k
        ));
    }
    s
}

fn default_rates_h() -> LocalizationFunction {
    LocalizationFunction::banding()
}

fn default_rates_scale() -> f64 {
    0.5
}

/// Config of a convergence-rate study on a separable Toeplitz truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub version: u32,
    /// Decay family and lattice dims.
    pub decay: DecaySpec,
    pub n: Vec<usize>,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rates_h")]
    pub h: LocalizationFunction,
    /// Off-diagonal scale of the polynomial truth; keeps it positive definite.
    #[serde(default = "default_rates_scale")]
    pub off_diagonal: f64,
    #[serde(default = "default_tol")]
    pub spectral_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl RatesConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = parse_json(text)?;
        cfg.validate_with(text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with("")
    }

    fn validate_with(&self, text: &str) -> Result<()> {
        check_version(text, self.version)?;
        if self.reps == 0 {
            return Err(config_error(text, "reps", "must be at least 1"));
        }
        if self.n.len() < 2 {
            return Err(config_error(text, "n", "a slope needs at least two sample sizes"));
        }
        if let Some(n) = self.n.iter().find(|&&n| n < 2) {
            return Err(config_error(text, "n", format!("sample size {n} is below 2")));
        }
        if !(self.off_diagonal > 0.0 && self.off_diagonal <= 0.5) {
            return Err(config_error(text, "off_diagonal", "must lie in (0, 0.5]"));
        }
        self.h
            .check_arity(self.decay.dims().len())
            .map_err(|e| config_error(text, "h", e))
    }
}

/// 1-D Toeplitz factor of the rate-study truth for dimension `l`.
pub fn rates_factor(decay: &DecaySpec, l: usize, off_diagonal: f64) -> Result<CovMatrix> {
    let p = decay.dims()[l];
    match decay.family() {
        DecayFamily::Polynomial { alpha } => {
            let a = alpha[l];
            CovMatrix::from_fn(p, |i, j| {
                let t = i.abs_diff(j);
                if t == 0 {
                    1.0
                } else {
                    off_diagonal * (t as f64).powf(-a - 1.0)
                }
            })
        }
        DecayFamily::Exponential { beta } => {
            let b = beta[l];
            CovMatrix::from_fn(p, |i, j| b.powi(-(i.abs_diff(j) as i32)))
        }
    }
}

/// Kronecker product of the per-dimension factors, dim 1 varying fastest.
pub fn rates_truth(decay: &DecaySpec, off_diagonal: f64) -> Result<CovMatrix> {
    let d = decay.dims().len();
    let mut sigma = rates_factor(decay, 0, off_diagonal)?;
    for l in 1..d {
        sigma = CovMatrix::kronecker(&rates_factor(decay, l, off_diagonal)?, &sigma);
    }
    Ok(sigma)
}

#[derive(Debug, Clone)]
pub struct RatePoint {
    pub n: usize,
    pub k: ScalingVector,
    pub mean_error: f64,
    pub mean_sq_error: f64,
    pub sd_sq_error: f64,
    /// n · mean squared error / ln n, flat under an exponential rate.
    pub log_scaled: f64,
}

#[derive(Debug, Clone)]
pub struct RatesOutput {
    pub points: Vec<RatePoint>,
    /// Least-squares slope of ln(mean squared spectral error) on ln n.
    pub slope: f64,
}

/// Ordinary least-squares slope of y on x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Localization at the theoretically optimal k* for each n, scored in the
/// spectral norm.
pub fn run_rates(cfg: &RatesConfig) -> Result<RatesOutput> {
    cfg.validate()?;
    let truth = rates_truth(&cfg.decay, cfg.off_diagonal)?;
    let spec = LatticeSpec::new(cfg.decay.dims().to_vec())?;
    let sampler = Sampler::new(&truth)?;
    let mut points = Vec::with_capacity(cfg.n.len());
    for &n in &cfg.n {
        let (k, _) = optimal_scaling(&cfg.decay, n)?;
        let errs = par::map_range(cfg.reps, |rep| -> Result<f64> {
            let data = sampler.gaussian(n, derive_seed(cfg.seed, &[n as u64, rep as u64]));
            let est = localize(&sample_covariance(&data)?, &spec, &cfg.h, &k)?;
            Ok(error_report(&est, &truth, cfg.spectral_tol)?.spectral)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let sq: Vec<f64> = errs.iter().map(|e| e * e).collect();
        let (mean_sq_error, sd_sq_error) = mean_sd(&sq);
        points.push(RatePoint {
            n,
            k,
            mean_error: mean_sd(&errs).0,
            mean_sq_error,
            sd_sq_error,
            log_scaled: n as f64 * mean_sq_error / (n as f64).ln(),
        });
    }
    let x: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.mean_sq_error.ln()).collect();
    Ok(RatesOutput {
        slope: ols_slope(&x, &y),
        points,
    })
}

pub const RATES_HEADER: &str = "n,k,mean_spectral,mean_sq_spectral,sd_sq_spectral,n_mse_over_log_n,slope";

pub fn rates_csv(prelude: &str, out: &RatesOutput) -> String {
    let mut s = format!("{prelude}\n{RATES_HEADER}\n");
    for p in &out.points {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            p.n, p.k, p.mean_error, p.mean_sq_error, p.sd_sq_error, p.log_scaled, out.slope
        ));
    }
    s
}
