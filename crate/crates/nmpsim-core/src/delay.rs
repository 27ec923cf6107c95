//! Mouth-to-ear delay arithmetic.
//!
//! The mouth-to-ear delay of an uncompressed audio stream decomposes into
//! the sound-card blocking delay on each side plus the one-way network
//! delay. Blocking delay is `frame_size / sampling_rate` plus a constant
//! hardware term, so trading frame size against sampling rate trades
//! audio quality against latency — that trade is what the controller
//! exercises when the network alone cannot stay under the ensemble
//! performance threshold.
//!
//! All delays are carried in milliseconds as `f64`; the seconds-based
//! frame arithmetic is converted at this boundary.

use alloc::string::String;
use alloc::vec::Vec;

/// One sound-card configuration: a frame size / sampling rate pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AudioConfig {
    /// Short identifier, e.g. `"128@22050"`. Unique within a profile.
    pub label: String,
    /// Samples processed per hardware tick.
    pub frame_size: u32,
    /// Samples acquired per second (Hz).
    pub sampling_rate: u32,
}

impl AudioConfig {
    pub fn new(label: impl Into<String>, frame_size: u32, sampling_rate: u32) -> Result<Self, DelayError> {
        let config = AudioConfig {
            label: label.into(),
            frame_size,
            sampling_rate,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), DelayError> {
        if self.frame_size == 0 {
            return Err(DelayError::ZeroFrameSize);
        }
        if self.sampling_rate == 0 {
            return Err(DelayError::ZeroSamplingRate);
        }
        Ok(())
    }

    /// Duration of one frame in milliseconds (`frame_size / sampling_rate`).
    pub fn frame_period_ms(&self) -> f64 {
        self.frame_size as f64 / self.sampling_rate as f64 * 1_000.0
    }
}

/// A profiled sound-card: hardware constant plus the configurations it
/// supports, ordered from most-preferred (highest quality) to least.
///
/// Index 0 is the default set an endpoint starts with; the controller
/// walks toward higher indices when it needs a lower blocking delay.
#[derive(Clone, Debug, PartialEq)]
pub struct SoundcardProfile {
    pub endpoint_id: String,
    /// Constant hardware delay in milliseconds.
    pub d0_ms: f64,
    pub configs: Vec<AudioConfig>,
}

impl SoundcardProfile {
    pub fn new(
        endpoint_id: impl Into<String>,
        d0_ms: f64,
        configs: Vec<AudioConfig>,
    ) -> Result<Self, DelayError> {
        let profile = SoundcardProfile {
            endpoint_id: endpoint_id.into(),
            d0_ms,
            configs,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), DelayError> {
        if self.d0_ms < 0.0 || !self.d0_ms.is_finite() {
            return Err(DelayError::NegativeInput(self.d0_ms));
        }
        if self.configs.is_empty() {
            return Err(DelayError::EmptyConfigList);
        }
        for (i, config) in self.configs.iter().enumerate() {
            config.validate()?;
            if self.configs[..i].iter().any(|c| c.label == config.label) {
                return Err(DelayError::DuplicateLabel(config.label.clone()));
            }
        }
        Ok(())
    }

    /// Blocking delay of the config at `index`.
    pub fn blocking_ms(&self, index: usize) -> Result<f64, DelayError> {
        let config = self
            .configs
            .get(index)
            .ok_or(DelayError::ConfigIndexOutOfRange(index))?;
        blocking_delay(config, self.d0_ms)
    }

    pub fn config_by_label(&self, label: &str) -> Option<&AudioConfig> {
        self.configs.iter().find(|c| c.label == label)
    }
}

/// Per-instant decomposition of the mouth-to-ear delay.
///
/// Processing terms are carried for structural completeness but pinned
/// to zero: the stream is uncompressed, so no codec latency applies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayBreakdown {
    /// Transmitter sound-card blocking delay.
    pub blocking_tx_ms: f64,
    /// Receiver sound-card blocking delay.
    pub blocking_rx_ms: f64,
    /// Transmitter-side processing (encoding) delay; zero for uncompressed audio.
    pub processing_tx_ms: f64,
    /// Receiver-side processing (decoding) delay; zero for uncompressed audio.
    pub processing_rx_ms: f64,
    /// One-way network delay.
    pub network_ms: f64,
    /// Total mouth-to-ear delay.
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DelayError {
    #[error("frame size must be at least 1 sample")]
    ZeroFrameSize,
    #[error("sampling rate must be at least 1 Hz")]
    ZeroSamplingRate,
    #[error("delay inputs must be non-negative, got {0} ms")]
    NegativeInput(f64),
    #[error("config list must not be empty")]
    EmptyConfigList,
    #[error("duplicate config label `{0}`")]
    DuplicateLabel(String),
    #[error("config index {0} out of range")]
    ConfigIndexOutOfRange(usize),
    #[error("gain baseline must be positive, got {0} ms")]
    NonPositiveBaseline(f64),
}

/// Blocking delay of one sound-card configuration in milliseconds:
/// `frame_size / sampling_rate` converted to ms, plus the hardware
/// constant `d0_ms`.
pub fn blocking_delay(config: &AudioConfig, d0_ms: f64) -> Result<f64, DelayError> {
    config.validate()?;
    if d0_ms < 0.0 || !d0_ms.is_finite() {
        return Err(DelayError::NegativeInput(d0_ms));
    }
    Ok(config.frame_period_ms() + d0_ms)
}

/// Composes a mouth-to-ear delay from its parts.
///
/// Blocking terms are summed pairwise before the network term is added,
/// so the symmetric case collapses to exactly `2 * blocking + network`.
pub fn mouth_to_ear(
    blocking_tx_ms: f64,
    blocking_rx_ms: f64,
    network_ms: f64,
) -> Result<DelayBreakdown, DelayError> {
    for &value in &[blocking_tx_ms, blocking_rx_ms, network_ms] {
        if value < 0.0 || !value.is_finite() {
            return Err(DelayError::NegativeInput(value));
        }
    }
    let processing_tx_ms = 0.0;
    let processing_rx_ms = 0.0;
    let total_ms = (blocking_tx_ms + blocking_rx_ms) + (processing_tx_ms + processing_rx_ms) + network_ms;
    Ok(DelayBreakdown {
        blocking_tx_ms,
        blocking_rx_ms,
        processing_tx_ms,
        processing_rx_ms,
        network_ms,
        total_ms,
    })
}

/// Relative mouth-to-ear improvement in percent:
/// `(d_mode1 - d_mode2) / d_mode1 * 100`.
///
/// `d_mode1_ms` is the delay without the audio modification, `d_mode2_ms`
/// the delay with it.
pub fn gain(d_mode1_ms: f64, d_mode2_ms: f64) -> Result<f64, DelayError> {
    if d_mode1_ms <= 0.0 || !d_mode1_ms.is_finite() {
        return Err(DelayError::NonPositiveBaseline(d_mode1_ms));
    }
    if d_mode2_ms < 0.0 || !d_mode2_ms.is_finite() {
        return Err(DelayError::NegativeInput(d_mode2_ms));
    }
    Ok((d_mode1_ms - d_mode2_ms) / d_mode1_ms * 100.0)
}

/// Total mouth-to-ear change from switching both endpoints between two
/// configurations: `2 * (blocking(a) - blocking(b))`.
///
/// The hardware constant appears on both sides of the difference and
/// cancels algebraically, so it never enters the computation; `d0_ms` is
/// still validated because callers pass the real profile constant.
pub fn blocking_delta_both_sides(
    cfg_a: &AudioConfig,
    cfg_b: &AudioConfig,
    d0_ms: f64,
) -> Result<f64, DelayError> {
    if d0_ms < 0.0 || !d0_ms.is_finite() {
        return Err(DelayError::NegativeInput(d0_ms));
    }
    let a = blocking_delay(cfg_a, 0.0)?;
    let b = blocking_delay(cfg_b, 0.0)?;
    Ok(2.0 * (a - b))
}
