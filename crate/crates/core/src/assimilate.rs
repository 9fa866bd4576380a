//! 3DVar reconstruction and the synthetic field-reconstruction benchmark.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{psd_project, sample_covariance, CovMatrix};
use crate::experiment::{
    check_version, config_error, parse_json, Auto, EstimatorSpec, FitContext, ScaleChoice,
    WidthChoice,
};
use crate::lattice::LatticeSpec;
use crate::localfn::LocalizationFunction;
use crate::metrics::{sign_hamming, L1Kind};
use crate::model::{GeneratorSpec, Sampler};
use crate::par;
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::selection::DEFAULT_SPLITS;

/// Diagonal jitter added to the innovation matrix in the benchmark.
pub const INNOVATION_JITTER: f64 = 1e-10;

/// One analysis step: prior mean, observed sites, observations, noise
/// variance and background covariance.
#[derive(Debug, Clone)]
pub struct AssimilationProblem<'a> {
    pub x0: Vec<f64>,
    /// Sorted, unique observed site indices (the rows of H).
    pub obs_indices: Vec<usize>,
    pub y: Vec<f64>,
    /// R = r_var · I.
    pub r_var: f64,
    pub sigma_hat: &'a CovMatrix,
}

impl AssimilationProblem<'_> {
    pub fn validate(&self) -> Result<()> {
        let p = self.sigma_hat.p();
        if self.x0.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: self.x0.len(),
            });
        }
        if self.obs_indices.is_empty() {
            return Err(Error::InvalidArgument("at least one observation is required".into()));
        }
        if self.y.len() != self.obs_indices.len() {
            return Err(Error::DimensionMismatch {
                expected: self.obs_indices.len(),
                found: self.y.len(),
            });
        }
        if !self.obs_indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "observation indices must be sorted and unique".into(),
            ));
        }
        if let Some(&i) = self.obs_indices.last().filter(|&&i| i >= p) {
            return Err(Error::IndexOutOfRange { index: i, len: p });
        }
        if !(self.r_var > 0.0 && self.r_var.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "observation noise variance must be positive, got {}",
                self.r_var
            )));
        }
        Ok(())
    }
}

/// x̂ = x0 + Σ̂Hᵀ(HΣ̂Hᵀ + R)⁻¹(y − Hx0), solved by Cholesky.
pub fn three_dvar(prob: &AssimilationProblem<'_>) -> Result<Vec<f64>> {
    three_dvar_jittered(prob, 0.0)
}

/// [`three_dvar`] with `jitter` added to the innovation diagonal.
pub fn three_dvar_jittered(prob: &AssimilationProblem<'_>, jitter: f64) -> Result<Vec<f64>> {
    prob.validate()?;
    let s = prob.sigma_hat.as_matrix();
    let obs = &prob.obs_indices;
    let m = obs.len();
    let mut innov = DMatrix::from_fn(m, m, |a, b| s[(obs[a], obs[b])]);
    for a in 0..m {
        innov[(a, a)] += prob.r_var + jitter;
    }
    let chol = Cholesky::new(innov).ok_or_else(|| {
        Error::NotPositiveDefinite("innovation matrix HΣ̂Hᵀ + R (is Σ̂ indefinite?)".into())
    })?;
    let resid = DVector::from_fn(m, |a, _| prob.y[a] - prob.x0[obs[a]]);
    let z = chol.solve(&resid);
    let p = prob.sigma_hat.p();
    Ok((0..p)
        .map(|i| prob.x0[i] + obs.iter().zip(z.iter()).map(|(&j, zj)| s[(i, j)] * zj).sum::<f64>())
        .collect())
}

/// Reconstruction errors on the unobserved sites of one replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionError {
    pub l2: f64,
    pub l1: f64,
    pub sign_hamming: f64,
}

/// Errors of `x_hat` against `truth` over the sites not in `obs` (sorted).
pub fn reconstruction_error(x_hat: &[f64], truth: &[f64], obs: &[usize]) -> Result<ReconstructionError> {
    if x_hat.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: x_hat.len(),
        });
    }
    let hidden: Vec<usize> = (0..truth.len()).filter(|i| obs.binary_search(i).is_err()).collect();
    if hidden.is_empty() {
        return Ok(ReconstructionError {
            l2: 0.0,
            l1: 0.0,
            sign_hamming: 0.0,
        });
    }
    let est: Vec<f64> = hidden.iter().map(|&i| x_hat[i]).collect();
    let tru: Vec<f64> = hidden.iter().map(|&i| truth[i]).collect();
    let diff = est.iter().zip(&tru).map(|(a, b)| a - b);
    Ok(ReconstructionError {
        l2: diff.clone().map(|e| e * e).sum::<f64>().sqrt(),
        l1: diff.map(f64::abs).sum(),
        sign_hamming: sign_hamming(&est, &tru)?,
    })
}

/// Linear-interpolation sample quantile (R type 7).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn default_dims() -> Vec<usize> {
    vec![12, 12, 8]
}
fn default_length_scales() -> Vec<f64> {
    vec![3.0, 3.0, 2.0]
}
fn default_n_train() -> usize {
    53
}
fn default_obs_fraction() -> f64 {
    0.05
}
fn default_noise_var() -> f64 {
    0.01
}
fn default_reps() -> usize {
    100
}
fn default_splits() -> usize {
    DEFAULT_SPLITS
}

/// Grid of 1-D widths below p: every width up to 40, then a sparse tail
/// reaching a couple of horizontal layers of the default lattice.
fn sparse_width_grid(p: usize, even: bool) -> Vec<usize> {
    let mut g: Vec<usize> = (0..=40).collect();
    g.extend([48, 60, 72, 96, 120, 144, 168, 192, 240, 288]);
    g.retain(|&k| k < p);
    if even {
        g.retain(|&k| k >= 2 && k % 2 == 0);
    }
    g
}

/// The default comparison: sample covariance, multiplicative banding and
/// tapering on the lattice, and 1-D banding and tapering of the vectorized
/// field with p sites.
pub fn default_benchmark_estimators(p: usize) -> Vec<EstimatorSpec> {
    vec![
        EstimatorSpec::Sample { name: None },
        EstimatorSpec::Localize {
            name: Some("localize-banding".into()),
            h: LocalizationFunction::banding(),
            k: ScaleChoice::Auto(Auto::Auto),
        },
        EstimatorSpec::Localize {
            name: Some("localize-tapering".into()),
            h: LocalizationFunction::tapering(vec![0.5]).expect("valid plateau"),
            k: ScaleChoice::Auto(Auto::Auto),
        },
        EstimatorSpec::Band1d {
            name: None,
            k: WidthChoice::Grid {
                grid: sparse_width_grid(p, false),
            },
        },
        EstimatorSpec::Taper1d {
            name: None,
            k: WidthChoice::Grid {
                grid: sparse_width_grid(p, true),
            },
        },
    ]
}

/// Config of the field-reconstruction benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub version: u32,
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_length_scales")]
    pub length_scales: Vec<f64>,
    /// Site amplitudes; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<f64>>,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_obs_fraction")]
    pub obs_fraction: f64,
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_splits")]
    pub splits: usize,
    #[serde(default)]
    pub norm: L1Kind,
    /// Defaults to [`default_benchmark_estimators`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<EstimatorSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            version: crate::experiment::CONFIG_VERSION,
            dims: default_dims(),
            length_scales: default_length_scales(),
            a: None,
            n_train: default_n_train(),
            obs_fraction: default_obs_fraction(),
            noise_var: default_noise_var(),
            reps: default_reps(),
            seed: 0,
            splits: default_splits(),
            norm: L1Kind::Operator,
            estimators: None,
            output: None,
        }
    }
}

impl BenchmarkConfig {
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
        if !(self.obs_fraction > 0.0 && self.obs_fraction < 1.0) {
            return Err(config_error(text, "obs_fraction", "must lie strictly between 0 and 1"));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return Err(config_error(text, "noise_var", "must be positive"));
        }
        if self.reps == 0 {
            return Err(config_error(text, "reps", "must be at least 1"));
        }
        if self.n_train < 6 {
            return Err(config_error(text, "n_train", "must be at least 6 for scale selection"));
        }
        if self.splits == 0 {
            return Err(config_error(text, "splits", "must be at least 1"));
        }
        let spec = LatticeSpec::new(self.dims.clone()).map_err(|e| config_error(text, "dims", e))?;
        if self.estimators.as_ref().is_some_and(|e| e.is_empty()) {
            return Err(config_error(text, "estimators", "needs at least one estimator"));
        }
        if self.length_scales.len() != spec.order() {
            return Err(config_error(
                text,
                "length_scales",
                format!("needs {} entries", spec.order()),
            ));
        }
        if let Some(a) = &self.a {
            if a.len() != spec.site_count() {
                return Err(config_error(text, "a", format!("needs {} entries", spec.site_count())));
            }
        }
        for e in &self.estimator_list() {
            e.validate(&spec)
                .map_err(|err| config_error(text, "estimators", format!("{}: {err}", e.name())))?;
        }
        Ok(())
    }

    /// The truth generator: a Gaussian-kernel field on `dims`.
    pub fn generator(&self) -> Result<GeneratorSpec> {
        Ok(GeneratorSpec::GaussKernel {
            lattice: LatticeSpec::new(self.dims.clone())?,
            a: self.a.clone(),
            length_scales: Some(self.length_scales.clone()),
        })
    }

    /// The configured estimators, or the default comparison.
    pub fn estimator_list(&self) -> Vec<EstimatorSpec> {
        self.estimators
            .clone()
            .unwrap_or_else(|| default_benchmark_estimators(self.dims.iter().product()))
    }

    /// Number of observed sites per replicate.
    pub fn obs_count(&self) -> usize {
        let p: usize = self.dims.iter().product();
        ((self.obs_fraction * p as f64).round() as usize).clamp(1, p)
    }
}

/// Table row: mean errors over replicates and 5%/95% quantiles of L2.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub estimator: String,
    pub mean_l2: f64,
    pub mean_l1: f64,
    pub mean_sign_hamming: f64,
    pub q05: f64,
    pub q95: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub generator: GeneratorSpec,
    /// Estimators with their tuning fixed on the pilot sample.
    pub resolved: Vec<EstimatorSpec>,
    /// Indexed [estimator][replicate].
    pub errors: Vec<Vec<ReconstructionError>>,
    pub rows: Vec<BenchRow>,
}

fn observation_mask(p: usize, m: usize, seed: u64, rep: usize) -> Vec<usize> {
    let mut rng = stream_rng(seed, Stream::Mask, rep as u64);
    let mut idx = rand::seq::index::sample(&mut rng, p, m).into_vec();
    idx.sort_unstable();
    idx
}

/// Runs the benchmark. Tuning parameters are selected once on a pilot
/// training sample; each replicate then draws its own training sample, test
/// field, observation mask and noise.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkOutput> {
    cfg.validate()?;
    let generator = cfg.generator()?.freeze(cfg.seed)?;
    let spec = generator.lattice()?;
    let truth = generator.covariance()?;
    let sampler = Sampler::new(&truth)?;
    let p = spec.site_count();

    let pilot = sampler.gaussian(cfg.n_train, derive_seed(cfg.seed, &[Stream::Pilot as u64]));
    let pilot_s = sample_covariance(&pilot)?;
    let ctx = FitContext {
        spec: &spec,
        data: &pilot,
        sample: &pilot_s,
        truth: Some(&truth),
        splits: cfg.splits,
        seed: derive_seed(cfg.seed, &[Stream::Splits as u64]),
        norm: cfg.norm,
    };
    let resolved = cfg
        .estimator_list()
        .iter()
        .map(|e| e.resolve(&ctx))
        .collect::<Result<Vec<_>>>()?;

    let m = cfg.obs_count();
    let noise_sd = cfg.noise_var.sqrt();
    let per_rep = par::map_range(cfg.reps, |rep| -> Result<Vec<ReconstructionError>> {
        let train = sampler.gaussian(cfg.n_train, derive_seed(cfg.seed, &[Stream::Data as u64, rep as u64]));
        let s = sample_covariance(&train)?;
        let field = sampler
            .gaussian(1, derive_seed(cfg.seed, &[Stream::Test as u64, rep as u64]))
            .row(0);
        let obs = observation_mask(p, m, cfg.seed, rep);
        let mut noise = stream_rng(cfg.seed, Stream::Noise, rep as u64);
        let y: Vec<f64> = obs
            .iter()
            .map(|&i| {
                let e: f64 = StandardNormal.sample(&mut noise);
                field[i] + noise_sd * e
            })
            .collect();
        let fit_ctx = FitContext {
            data: &train,
            sample: &s,
            ..ctx
        };
        resolved
            .iter()
            .map(|e| {
                let est = psd_project(&e.fit(&fit_ctx)?.estimate, 0.0)?;
                let prob = AssimilationProblem {
                    x0: vec![0.0; p],
                    obs_indices: obs.clone(),
                    y: y.clone(),
                    r_var: cfg.noise_var,
                    sigma_hat: &est,
                };
                let x_hat = three_dvar_jittered(&prob, INNOVATION_JITTER)?;
                reconstruction_error(&x_hat, &field, &obs)
            })
            .collect()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let errors: Vec<Vec<ReconstructionError>> = (0..resolved.len())
        .map(|e| per_rep.iter().map(|r| r[e]).collect())
        .collect();
    let rows = resolved
        .iter()
        .zip(&errors)
        .map(|(e, errs)| {
            let n = errs.len() as f64;
            let l2: Vec<f64> = errs.iter().map(|r| r.l2).collect();
            BenchRow {
                estimator: e.name(),
                mean_l2: l2.iter().sum::<f64>() / n,
                mean_l1: errs.iter().map(|r| r.l1).sum::<f64>() / n,
                mean_sign_hamming: errs.iter().map(|r| r.sign_hamming).sum::<f64>() / n,
                q05: quantile(&l2, 0.05),
                q95: quantile(&l2, 0.95),
            }
        })
        .collect();
    Ok(BenchmarkOutput {
        generator,
        resolved,
        errors,
        rows,
    })
}

pub const BENCH_HEADER: &str = "estimator,mean_l2,mean_l1,mean_sign_hamming,q05,q95";

/// Benchmark table, with one comment line per tuned estimator after `prelude`.
pub fn benchmark_csv(prelude: &str, out: &BenchmarkOutput) -> String {
    let mut s = format!("{prelude}\n");
    for e in &out.resolved {
        let tuning = match e {
            EstimatorSpec::Localize {
                k: ScaleChoice::Fixed(k),
                ..
            }
            | EstimatorSpec::Zsk {
                k: ScaleChoice::Fixed(k),
                ..
            } => Some(k.to_string()),
            EstimatorSpec::Band1d {
                k: WidthChoice::Fixed(w),
                ..
            }
            | EstimatorSpec::Taper1d {
                k: WidthChoice::Fixed(w),
                ..
            } => Some(w.to_string()),
            _ => None,
        };
        if let Some(t) = tuning {
            s.push_str(&format!("# {}: k = {t}\n", e.name()));
        }
    }
    s.push_str(BENCH_HEADER);
    s.push('\n');
    for r in &out.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.estimator, r.mean_l2, r.mean_l1, r.mean_sign_hamming, r.q05, r.q95
        ));
    }
    s
}
