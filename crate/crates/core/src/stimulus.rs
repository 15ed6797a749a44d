//! Per-rail electrical modulation: a switched square wave for thermography and
//! a DC-biased sine for laser logic state imaging.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Waveform {
    Square,
    Sine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationSpec {
    pub waveform: Waveform,
    pub frequency_hz: f64,
    pub amplitude_vpp: f64,
    pub dc_offset_v: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

impl ModulationSpec {
    /// 50 Hz on/off switching of a 0.82 V rail.
    pub fn lit_default() -> Self {
        ModulationSpec {
            waveform: Waveform::Square,
            frequency_hz: 50.0,
            amplitude_vpp: 0.82,
            dc_offset_v: 0.41,
            phase_rad: 0.0,
        }
    }

    /// 2 MHz, 100 mVpp ripple around a 0.82 V supply.
    pub fn llsi_default() -> Self {
        ModulationSpec {
            waveform: Waveform::Sine,
            frequency_hz: 2.0e6,
            amplitude_vpp: 0.1,
            dc_offset_v: 0.82,
            phase_rad: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz.is_finite() && self.frequency_hz > 0.0) {
            return Err(Error::validation("modulation.frequency_hz", "must be > 0"));
        }
        if !(self.amplitude_vpp.is_finite() && self.amplitude_vpp >= 0.0) {
            return Err(Error::validation("modulation.amplitude_vpp", "must be >= 0"));
        }
        if self.waveform == Waveform::Sine && self.dc_offset_v - self.amplitude_vpp / 2.0 < 0.0 {
            return Err(Error::validation(
                "modulation",
                "sine trough dc_offset_v - amplitude_vpp/2 must not go below 0 V",
            ));
        }
        Ok(())
    }

    pub fn angular_frequency(&self) -> f64 {
        2.0 * PI * self.frequency_hz
    }

    pub fn period_s(&self) -> f64 {
        1.0 / self.frequency_hz
    }

    pub fn v_max(&self) -> f64 {
        self.dc_offset_v + self.amplitude_vpp / 2.0
    }

    pub fn v_min(&self) -> f64 {
        self.dc_offset_v - self.amplitude_vpp / 2.0
    }
}

/// Supply voltage at time `t` seconds.
pub fn sample_waveform(spec: &ModulationSpec, t: f64) -> f64 {
    let s = (spec.angular_frequency() * t + spec.phase_rad).sin();
    let shape = match spec.waveform {
        Waveform::Sine => s,
        Waveform::Square => {
            if s >= 0.0 {
                1.0
            } else {
                -1.0
            }
        }
    };
    spec.dc_offset_v + spec.amplitude_vpp / 2.0 * shape
}

/// Instantaneous dissipation scale in `[0, 1]`.
///
/// Square waves switch the rail fully on and off; sine ripple scales power as
/// `(v / v_max)²`. Unmodulated specs dissipate steadily at 1.0.
pub fn power_waveform(spec: &ModulationSpec, t: f64) -> Result<f64> {
    if spec.amplitude_vpp == 0.0 {
        if spec.dc_offset_v == 0.0 {
            return Err(Error::DegenerateSpec);
        }
        return Ok(1.0);
    }
    let v = sample_waveform(spec, t);
    Ok(match spec.waveform {
        Waveform::Square => ((v - spec.v_min()) / (spec.v_max() - spec.v_min())).clamp(0.0, 1.0),
        Waveform::Sine => (v / spec.v_max()).powi(2).clamp(0.0, 1.0),
    })
}
