use serde::{Deserialize, Serialize};

use super::FlashError;

/// Process-variation and wear parameters of the cell model.
///
/// Charges are in units where the digitization threshold is
/// `charge_threshold`; program rates are charge units per interrupt tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariationParams {
    /// Mean of `ln r` for every cell.
    pub rate_mu: f64,
    /// Standard deviation of `ln r` for cells in ordinary bytes.
    pub rate_sigma: f64,
    /// Fraction of bytes whose eight cells share (almost) the same rate.
    pub coherent_byte_fraction: f64,
    /// Standard deviation of `ln r` inside a coherent byte.
    pub coherent_byte_sigma: f64,
    /// Per-cell Gaussian charge noise added by every program operation.
    pub op_noise_sigma: f64,
    /// Half-width of the read-unstable band around the threshold.
    pub weak_band: f64,
    /// Rate of the exponential gap distribution between weak cells (per bit).
    pub weak_gap_lambda: f64,
    /// Per-read flip probability of a weak cell inside the band.
    pub read_flip_prob: f64,
    /// Fractional program-rate increase at 100% life.
    pub age_rate_alpha: f64,
    /// Fractional op-noise increase at 100% life.
    pub age_noise_beta: f64,
    /// Rated program/erase cycles.
    pub pec_rating: u32,
    /// Number of interrupt ticks in a full (uninterrupted) program.
    pub ticks_per_program: u32,
    pub charge_threshold: f64,
}

impl Default for VariationParams {
    fn default() -> Self {
        Self {
            // Median cell crosses the threshold half-way between ticks 20 and 21.
            rate_mu: -(20.5f64).ln(),
            rate_sigma: 0.0375,
            coherent_byte_fraction: 0.10,
            coherent_byte_sigma: 0.003,
            op_noise_sigma: 1e-6,
            weak_band: 1e-4,
            weak_gap_lambda: 0.02,
            // 1 - (1 - p)^5 = 0.95
            read_flip_prob: 0.45,
            age_rate_alpha: 0.004,
            age_noise_beta: 1.0,
            pec_rating: 3000,
            ticks_per_program: 64,
            charge_threshold: 1.0,
        }
    }
}

impl VariationParams {
    pub fn validate(&self) -> Result<(), FlashError> {
        let bad = |what: &str| Err(FlashError::Config(what.to_string()));
        let finite = [
            self.rate_mu,
            self.rate_sigma,
            self.coherent_byte_fraction,
            self.coherent_byte_sigma,
            self.op_noise_sigma,
            self.weak_band,
            self.weak_gap_lambda,
            self.read_flip_prob,
            self.age_rate_alpha,
            self.age_noise_beta,
            self.charge_threshold,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("variation parameters must be finite");
        }
        if self.rate_sigma <= 0.0 {
            return bad("rate_sigma must be > 0");
        }
        if self.coherent_byte_sigma < 0.0 {
            return bad("coherent_byte_sigma must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.coherent_byte_fraction) {
            return bad("coherent_byte_fraction must be in [0, 1]");
        }
        if self.op_noise_sigma < 0.0 {
            return bad("op_noise_sigma must be >= 0");
        }
        if self.weak_band < 0.0 {
            return bad("weak_band must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.read_flip_prob) {
            return bad("read_flip_prob must be in [0, 1]");
        }
        if self.weak_gap_lambda <= 0.0 {
            return bad("weak_gap_lambda must be > 0");
        }
        if self.pec_rating == 0 {
            return bad("pec_rating must be >= 1");
        }
        if self.ticks_per_program < 2 {
            return bad("ticks_per_program must be >= 2");
        }
        if self.charge_threshold <= 0.0 {
            return bad("charge_threshold must be > 0");
        }
        Ok(())
    }
}
