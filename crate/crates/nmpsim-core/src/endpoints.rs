//! Transmitter and receiver endpoints.
//!
//! Each endpoint pairs an audio side (profile, synthetic frame
//! generation or consumption, configuration switching) with a network
//! side (stream transmission, probe participation). Frames carry only
//! sample counts — the waveform itself has no bearing on delay behavior.

use alloc::string::String;
use alloc::vec::Vec;

use crate::delay::{blocking_delay, AudioConfig, DelayError, SoundcardProfile};
use crate::netsim::FlowId;
use crate::time::SimTime;

/// Which side of the stream an endpoint plays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EndpointRole {
    Transmitter,
    Receiver,
}

/// One synthetic audio frame in flight.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioFrame {
    pub flow_id: FlowId,
    pub frame_seq: u64,
    /// Label of the configuration active when the frame was captured.
    /// Measurement always uses the stamped configuration, so frames that
    /// straddle a configuration switch stay accounted to the setting
    /// that produced them.
    pub config_label: String,
    pub captured_at: SimTime,
    /// Samples in the frame; no audio content is carried.
    pub payload_samples: u32,
}

/// Response of an endpoint to a configuration-change request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModificationAck {
    pub requested_index: usize,
    pub accepted: bool,
}

/// A receiver-side measurement of one delivered frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMeasurement {
    pub frame_seq: u64,
    pub arrived_at: SimTime,
    /// Span from capture to arrival: transmitter blocking plus transit.
    pub capture_to_arrival_ms: f64,
    /// Receiver blocking delay of the stamped configuration.
    pub blocking_rx_ms: f64,
    /// Measured mouth-to-ear total.
    pub total_ms: f64,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EndpointError {
    #[error("operation requires the {0:?} role")]
    WrongRole(EndpointRole),
    #[error("frame stamped with unknown config `{0}`")]
    UnknownConfig(String),
    #[error("no valid audio configuration among {0} candidates")]
    NoValidConfig(usize),
    #[error(transparent)]
    Delay(#[from] DelayError),
}

/// Result of profiling a sound-card: the usable profile plus whatever
/// candidates failed validation.
#[derive(Clone, Debug)]
pub struct ProfileBuild {
    pub profile: SoundcardProfile,
    pub rejected: Vec<AudioConfig>,
}

/// Profiles a sound-card from candidate configurations, preserving
/// preference order. Invalid candidates are dropped individually; an
/// all-invalid list is an error.
pub fn build_audio_profile(
    endpoint_id: &str,
    d0_ms: f64,
    candidates: Vec<AudioConfig>,
) -> Result<ProfileBuild, EndpointError> {
    let total = candidates.len();
    let mut kept = Vec::with_capacity(total);
    let mut rejected = Vec::new();
    for config in candidates {
        match blocking_delay(&config, d0_ms) {
            Ok(_) => kept.push(config),
            Err(_) => rejected.push(config),
        }
    }
    if kept.is_empty() {
        return Err(EndpointError::NoValidConfig(total));
    }
    let profile = SoundcardProfile::new(endpoint_id, d0_ms, kept)?;
    Ok(ProfileBuild { profile, rejected })
}

/// Mutable state of one endpoint. All mutation happens through event
/// processing; there is no shared access.
#[derive(Clone, Debug)]
pub struct EndpointState {
    pub endpoint_id: String,
    pub role: EndpointRole,
    pub profile: SoundcardProfile,
    pub active_config_index: usize,
    /// Set by a modification request; the transmitter adopts it at the
    /// next frame boundary.
    pub pending_config_index: Option<usize>,
    pub flow_id: FlowId,
    pub frames_sent: u64,
    pub frames_received: u64,
    pub frames_dropped: u64,
    pub last_frame_mouth_to_ear_ms: Option<f64>,
}

impl EndpointState {
    pub fn new(
        endpoint_id: impl Into<String>,
        role: EndpointRole,
        profile: SoundcardProfile,
        flow_id: impl Into<FlowId>,
    ) -> Result<Self, EndpointError> {
        profile.validate()?;
        Ok(EndpointState {
            endpoint_id: endpoint_id.into(),
            role,
            profile,
            active_config_index: 0,
            pending_config_index: None,
            flow_id: flow_id.into(),
            frames_sent: 0,
            frames_received: 0,
            frames_dropped: 0,
            last_frame_mouth_to_ear_ms: None,
        })
    }

    pub fn active_config(&self) -> &AudioConfig {
        &self.profile.configs[self.active_config_index]
    }

    /// Blocking delay of the currently active configuration.
    pub fn active_blocking_ms(&self) -> f64 {
        self.profile
            .blocking_ms(self.active_config_index)
            .expect("active index is always valid")
    }

    /// Virtual time between consecutive frames at the active
    /// configuration; frames are scheduled on exactly this cadence.
    pub fn frame_period_ms(&self) -> f64 {
        self.active_config().frame_period_ms()
    }

    /// Transmitter tick: adopts any pending configuration at this frame
    /// boundary, then emits the next frame. The capture timestamp sits
    /// one blocking delay before the send, mirroring where the sound
    /// card spends that time.
    pub fn stream_tick(&mut self, now: SimTime) -> Option<AudioFrame> {
        if self.role != EndpointRole::Transmitter {
            return None;
        }
        if let Some(index) = self.pending_config_index.take() {
            self.active_config_index = index;
        }
        let config = self.active_config().clone();
        let blocking_ns = crate::time::ms_to_nanos(self.active_blocking_ms());
        let captured_at = SimTime::from_nanos(now.as_nanos().saturating_sub(blocking_ns));
        let frame = AudioFrame {
            flow_id: self.flow_id.clone(),
            frame_seq: self.frames_sent,
            config_label: config.label.clone(),
            captured_at,
            payload_samples: config.frame_size,
        };
        self.frames_sent += 1;
        Some(frame)
    }

    /// Counts a frame that could not be forwarded for lack of a route.
    pub fn record_drop(&mut self) {
        self.frames_dropped += 1;
    }

    /// Receiver side: measures a delivered frame. The capture-to-arrival
    /// span already contains the transmitter's blocking delay, so adding
    /// the receiver's blocking delay completes the mouth-to-ear total.
    /// The blocking delay comes from the frame's stamped configuration.
    pub fn on_frame_received(&mut self, frame: &AudioFrame, now: SimTime) -> Result<FrameMeasurement, EndpointError> {
        if self.role != EndpointRole::Receiver {
            return Err(EndpointError::WrongRole(EndpointRole::Receiver));
        }
        let stamped = self
            .profile
            .config_by_label(&frame.config_label)
            .ok_or_else(|| EndpointError::UnknownConfig(frame.config_label.clone()))?;
        let blocking_rx_ms = blocking_delay(stamped, self.profile.d0_ms)?;
        let capture_to_arrival_ms = now.ms_since(frame.captured_at);
        let total_ms = capture_to_arrival_ms + blocking_rx_ms;
        self.frames_received += 1;
        self.last_frame_mouth_to_ear_ms = Some(total_ms);
        Ok(FrameMeasurement {
            frame_seq: frame.frame_seq,
            arrived_at: now,
            capture_to_arrival_ms,
            blocking_rx_ms,
            total_ms,
        })
    }

    /// Applies a controller-requested configuration switch. The
    /// transmitter defers to the next frame boundary so no fractional
    /// frame is ever produced; the receiver has no cadence to respect
    /// and switches immediately. Out-of-range indices are refused.
    pub fn apply_audio_modification(&mut self, requested_index: usize, _now: SimTime) -> ModificationAck {
        if requested_index >= self.profile.configs.len() {
            return ModificationAck {
                requested_index,
                accepted: false,
            };
        }
        if requested_index == self.active_config_index {
            self.pending_config_index = None;
        } else {
            match self.role {
                EndpointRole::Transmitter => self.pending_config_index = Some(requested_index),
                EndpointRole::Receiver => self.active_config_index = requested_index,
            }
        }
        ModificationAck {
            requested_index,
            accepted: true,
        }
    }
}
