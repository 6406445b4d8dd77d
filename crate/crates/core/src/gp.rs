//! Exact Gaussian-process slip regression, one model per terrain class.
//!
//! Squared-exponential kernel, zero prior mean, Cholesky-factorized exact
//! inference. Hyperparameters come from a deterministic log-spaced grid
//! search maximizing the log marginal likelihood.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

/// Jitter escalation ladder: added to the diagonal until the covariance
/// factorizes, starting at 1e-10 and growing tenfold up to 1e-4.
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GPHyperparams {
    /// Kernel lengthscale in radians of pitch.
    pub lengthscale: f64,
    /// Kernel signal variance (dimensionless slip squared).
    pub signal_variance: f64,
    /// Observation noise variance.
    pub noise_variance: f64,
}

impl GPHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.signal_variance > 0.0 && self.noise_variance > 0.0) {
            return Err(Error::param("GP hyperparameters must be strictly positive"));
        }
        Ok(())
    }

    fn kernel(&self, a: f64, b: f64) -> f64 {
        let d = (a - b) / self.lengthscale;
        self.signal_variance * (-0.5 * d * d).exp()
    }
}

/// Pitch/slip training pairs for one terrain class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub pitches: Vec<f64>,
    pub slips: Vec<f64>,
    pub class_id: u16,
}

impl TrainingSet {
    pub fn validate(&self) -> Result<()> {
        if self.pitches.is_empty() || self.pitches.len() != self.slips.len() {
            return Err(Error::param("training set must be non-empty and aligned"));
        }
        let span = 45.0f64.to_radians() + 1e-12;
        if self.pitches.iter().any(|p| !p.is_finite() || p.abs() > span) {
            return Err(Error::param("training pitches must lie within ±45°"));
        }
        if self.slips.iter().any(|s| !s.is_finite()) {
            return Err(Error::param("training slips must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.pitches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pitches.is_empty()
    }
}

/// Log-spaced hyperparameter candidates, scanned lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub lengthscales: Vec<f64>,
    pub signal_variances: Vec<f64>,
    pub noise_variances: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            lengthscales: vec![0.05, 0.1, 0.2, 0.4, 0.8],
            signal_variances: vec![0.01, 0.04, 0.16, 0.64],
            noise_variances: vec![1e-4, 1e-3, 1e-2, 0.1, 0.25],
        }
    }
}

impl HyperGrid {
    fn iter(&self) -> impl Iterator<Item = GPHyperparams> + '_ {
        self.lengthscales.iter().flat_map(move |&l| {
            self.signal_variances.iter().flat_map(move |&sv| {
                self.noise_variances.iter().map(move |&nv| GPHyperparams {
                    lengthscale: l,
                    signal_variance: sv,
                    noise_variance: nv,
                })
            })
        })
    }
}

/// A fitted class-dependent slip regressor. Immutable after fit.
#[derive(Debug, Clone)]
pub struct GPModel {
    hyperparams: GPHyperparams,
    training_set: TrainingSet,
    /// Lower-triangular factor of K + (noise + jitter) I.
    chol_lower: DMatrix<f64>,
    /// Precomputed (K + noise I)^-1 y.
    alpha: DVector<f64>,
    /// Jitter that was needed for the factorization to succeed.
    jitter: f64,
    log_marginal: f64,
}

fn factorize(
    hp: &GPHyperparams,
    set: &TrainingSet,
) -> Option<(DMatrix<f64>, DVector<f64>, f64, f64)> {
    let n = set.len();
    let base = DMatrix::from_fn(n, n, |i, j| {
        let mut k = hp.kernel(set.pitches[i], set.pitches[j]);
        if i == j {
            k += hp.noise_variance;
        }
        k
    });
    let y = DVector::from_column_slice(&set.slips);

    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-12) {
        let mut k = base.clone();
        for i in 0..n {
            k[(i, i)] += jitter;
        }
        if let Some(chol) = nalgebra::Cholesky::new(k) {
            let alpha = chol.solve(&y);
            let lower = chol.unpack();
            let log_det: f64 = (0..n).map(|i| lower[(i, i)].ln()).sum::<f64>() * 2.0;
            let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;
            return Some((lower, alpha, jitter, lml));
        }
        jitter *= 10.0;
    }
    None
}

/// Fit a GP by exhaustive grid search over `grid`, keeping the point with
/// the highest log marginal likelihood (first wins on exact ties).
pub fn fit(training_set: TrainingSet, grid: &HyperGrid) -> Result<GPModel> {
    training_set.validate()?;
    if grid.lengthscales.is_empty()
        || grid.signal_variances.is_empty()
        || grid.noise_variances.is_empty()
    {
        return Err(Error::param("hyperparameter grid must be non-empty"));
    }

    let mut best: Option<(GPHyperparams, DMatrix<f64>, DVector<f64>, f64, f64)> = None;
    for hp in grid.iter() {
        hp.validate()?;
        if let Some((lower, alpha, jitter, lml)) = factorize(&hp, &training_set) {
            let better = match &best {
                None => true,
                Some((_, _, _, _, best_lml)) => lml > *best_lml,
            };
            if better {
                best = Some((hp, lower, alpha, jitter, lml));
            }
        }
    }

    let (hyperparams, chol_lower, alpha, jitter, log_marginal) = best.ok_or(Error::Fit {
        class: training_set.class_id,
        reason: "covariance ill-conditioned for every grid point after jitter escalation"
            .to_string(),
    })?;
    Ok(GPModel { hyperparams, training_set, chol_lower, alpha, jitter, log_marginal })
}

/// Rebuild a model from known hyperparameters (model persistence path).
pub fn fit_with_hyperparams(training_set: TrainingSet, hp: GPHyperparams) -> Result<GPModel> {
    training_set.validate()?;
    hp.validate()?;
    let class = training_set.class_id;
    let (chol_lower, alpha, jitter, log_marginal) =
        factorize(&hp, &training_set).ok_or(Error::Fit {
            class,
            reason: "covariance ill-conditioned after jitter escalation".to_string(),
        })?;
    Ok(GPModel { hyperparams: hp, training_set, chol_lower, alpha, jitter, log_marginal })
}

impl GPModel {
    pub fn hyperparams(&self) -> &GPHyperparams {
        &self.hyperparams
    }

    pub fn training_set(&self) -> &TrainingSet {
        &self.training_set
    }

    pub fn class_id(&self) -> u16 {
        self.training_set.class_id
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Exact log marginal likelihood of the training data.
    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal
    }

    /// Posterior predictive mean and variance at pitch `phi`. The variance
    /// includes observation noise and never exceeds
    /// `signal_variance + noise_variance`.
    pub fn predict(&self, phi: f64) -> (f64, f64) {
        let n = self.training_set.len();
        let kstar = DVector::from_fn(n, |i, _| {
            self.hyperparams.kernel(self.training_set.pitches[i], phi)
        });
        let mean = kstar.dot(&self.alpha);
        let v = self
            .chol_lower
            .solve_lower_triangular(&kstar)
            .expect("factor is lower-triangular with positive diagonal");
        let prior = self.hyperparams.signal_variance + self.hyperparams.noise_variance;
        let var = (prior - v.dot(&v)).max(1e-18);
        (mean, var)
    }
}

// ── persistence ──────────────────────────────────────────────────────────────
// Hyperparameters and raw training data only; the factorization is
// recomputed on load so files stay portable across linear-algebra versions.

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    hyperparams: GPHyperparams,
    training_set: TrainingSet,
}

pub fn save_model(path: &Path, model: &GPModel) -> Result<()> {
    let file = ModelFile {
        hyperparams: model.hyperparams,
        training_set: model.training_set.clone(),
    };
    std::fs::write(path, serde_json::to_vec_pretty(&file)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<GPModel> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    fit_with_hyperparams(file.training_set, file.hyperparams)
}

/// Conventional model file name for a class.
pub fn model_file_name(class_id: u16) -> String {
    format!("gp_{class_id}.json")
}
