//! Ground-truth slip models and the simulated slip measurement process.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dataset::ProblemInstance;
use crate::grid::Cell;
use crate::{Error, Result};

/// Parameters of the latent slip mean `s0 + amp * tanh(steep * phi)`.
///
/// The family is monotone in pitch, bounded, and produces both driving
/// (positive) and braking (negative) slips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipParams {
    /// Slip offset on flat ground (dimensionless).
    pub s0: f64,
    /// Saturation amplitude (dimensionless).
    pub amp: f64,
    /// Transition steepness (1/radian).
    pub steep: f64,
}

/// A class-dependent ground-truth slip model: latent mean plus additive
/// zero-mean Gaussian measurement noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlipGroundTruth {
    pub class_id: u16,
    pub params: SlipParams,
    /// Base noise standard deviation (dimensionless).
    pub noise_sigma: f64,
    /// ES/AA mode: noise grows with terrain gradient magnitude.
    pub noise_scales_with_gradient: bool,
    /// Gain of the gradient scaling; ignored when the flag is off.
    pub noise_gain: f64,
}

impl SlipGroundTruth {
    /// Latent slip mean at pitch `phi` (radians).
    pub fn mean(&self, phi: f64) -> f64 {
        self.params.s0 + self.params.amp * (self.params.steep * phi).tanh()
    }

    /// Measurement noise standard deviation at pitch `phi`.
    ///
    /// In ES/AA mode the noise rises from `noise_sigma` on flat ground to
    /// `noise_sigma * (1 + noise_gain)` at saturation pitch, following the
    /// normalized slip deviation `tanh^2(steep * phi)`.
    pub fn noise_sigma_at(&self, phi: f64) -> f64 {
        if self.noise_scales_with_gradient {
            let t = (self.params.steep * phi).tanh();
            self.noise_sigma * (1.0 + self.noise_gain * t * t)
        } else {
            self.noise_sigma
        }
    }

    /// One noisy slip measurement at pitch `phi`.
    pub fn draw<R: Rng>(&self, phi: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mean(phi) + self.noise_sigma_at(phi) * z
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if !(p.steep > 0.0) || !(p.amp >= 0.0) {
            return Err(Error::param(format!(
                "class {}: amp must be >= 0 and steep > 0",
                self.class_id
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::param(format!(
                "class {}: noise_sigma must be >= 0",
                self.class_id
            )));
        }
        // Mean stays in (-1, 1.5] over the ±45° pitch envelope.
        let span = 45.0f64.to_radians();
        let lo = self.mean(-span);
        let hi = self.mean(span);
        if !(lo > -1.0 && hi <= 1.5) {
            return Err(Error::param(format!(
                "class {}: mean range [{lo:.3}, {hi:.3}] leaves (-1, 1.5]",
                self.class_id
            )));
        }
        Ok(())
    }
}

/// Draw the noisy slip a rover would experience on the directed edge
/// `from -> to` of the instance, using the ground-truth class at the edge's
/// source cell. The output is not clamped; values beyond ±1 are meaningful
/// failures.
pub fn sample_slip<R: Rng>(
    instance: &ProblemInstance,
    from: Cell,
    to: Cell,
    rng: &mut R,
) -> Result<f64> {
    let phi = instance.heightmap.pitch_at_edge(from, to)?;
    let class = instance.classmap.class_at(from);
    let model = instance.slip_model(class)?;
    Ok(model.draw(phi, rng))
}
