use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants and per-flow weights.
///
/// `power` and `noise` are linear powers on a common scale. Configs built
/// through [`SystemParams::from_physical`] express both relative to the noise
/// power, so `noise == 1`; rate formulas only see the ratio, while the
/// perturbation coefficient `Φ_k` reads `noise` directly.
///
/// `lambda` is the mean arrival rate per flow in bit/s/Hz (bit/s divided by
/// the system bandwidth).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub power: f64,
    pub noise: f64,
    pub bandwidth_hz: f64,
    pub slot_s: f64,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl SystemParams {
    /// Builds noise-normalized parameters from physical Watts.
    pub fn from_physical(
        power_w: f64,
        noise_w: f64,
        bandwidth_hz: f64,
        slot_s: f64,
        beta: Vec<f64>,
        gamma: Vec<f64>,
        lambda_bps: &[f64],
    ) -> Result<Self> {
        if !(noise_w > 0.0) {
            return Err(Error::config("noise", "must be > 0"));
        }
        if !(bandwidth_hz > 0.0) {
            return Err(Error::config("bandwidth_hz", "must be > 0"));
        }
        let p = Self {
            power: power_w / noise_w,
            noise: 1.0,
            bandwidth_hz,
            slot_s,
            beta,
            gamma,
            lambda: lambda_bps.iter().map(|l| l / bandwidth_hz).collect(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn num_flows(&self) -> usize {
        self.beta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("power", self.power)?;
        positive("noise", self.noise)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("slot_s", self.slot_s)?;
        let k = self.beta.len();
        if k == 0 {
            return Err(Error::config("beta", "need at least one flow"));
        }
        if self.gamma.len() != k || self.lambda.len() != k {
            return Err(Error::config("gamma/lambda", "per-flow vectors must have equal length"));
        }
        for (i, &b) in self.beta.iter().enumerate() {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::config(format!("beta[{i}]"), "must be >= 0"));
            }
        }
        for (i, &g) in self.gamma.iter().enumerate() {
            positive(&format!("gamma[{i}]"), g)?;
        }
        for (i, &l) in self.lambda.iter().enumerate() {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::config(format!("lambda[{i}]"), "must be >= 0"));
            }
        }
        Ok(())
    }

    /// Copy with every `γ_k` multiplied by `factor`.
    pub fn with_gamma_multiplier(&self, factor: f64) -> Self {
        let mut p = self.clone();
        p.gamma.iter_mut().for_each(|g| *g *= factor);
        p
    }

    /// Average SNR `P·L/N0` for a link with path gain `gain`.
    pub fn snr(&self, gain: f64) -> f64 {
        self.power * gain / self.noise
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(23.0) - 0.199_526_231_5).abs() < 1e-9);
        assert!((watts_to_dbm(dbm_to_watts(-104.0)) + 104.0).abs() < 1e-9);
    }

    #[test]
    fn physical_is_noise_normalized() {
        let p = SystemParams::from_physical(0.2, 1e-13, 1e7, 0.01, vec![1.0], vec![0.1], &[3e7]).unwrap();
        assert_eq!(p.noise, 1.0);
        assert!((p.power - 2e12).abs() < 1.0);
        assert!((p.lambda[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn validation_names_field() {
        let mut p = SystemParams::from_physical(0.2, 1e-13, 1e7, 0.01, vec![1.0], vec![0.1], &[3e7]).unwrap();
        p.gamma[0] = -1.0;
        match p.validate().unwrap_err() {
            Error::Config { field, .. } => assert_eq!(field, "gamma[0]"),
            e => panic!("unexpected {e}"),
        }
    }
}
