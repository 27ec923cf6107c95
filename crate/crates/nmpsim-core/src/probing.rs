//! End-host path delay monitoring.
//!
//! The sender periodically fires one probe per enumerated path; the
//! receiver echoes each probe back over the path it arrived on, and the
//! sender turns the round trip into a per-path delay estimate for the
//! controller. Switches play no part in the measurement — probe flows
//! are pinned per path and never follow the audio flow's rules.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;

use crate::netsim::PathId;
use crate::time::SimTime;

/// Direction marker of a probe packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeDirection {
    Outbound,
    Echoed,
}

/// One monitoring packet. Echoes preserve the path and send timestamp so
/// the sender can compute the round trip without any clock agreement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProbePacket {
    pub path_id: PathId,
    /// Strictly increasing per path.
    pub sequence_number: u64,
    pub sent_at: SimTime,
    pub direction: ProbeDirection,
}

/// A completed round-trip measurement for one path.
#[derive(Clone, Debug, PartialEq)]
pub struct RttSample {
    pub path_id: PathId,
    pub rtt_ms: f64,
    pub measured_at: SimTime,
}

/// What one probe round produced: the probes actually sent, and the
/// paths skipped because they had no route.
#[derive(Clone, Debug, Default)]
pub struct ProbeRound {
    pub probes: Vec<ProbePacket>,
    pub stale: Vec<PathId>,
}

/// How a round-trip measurement maps to the one-way network delay.
/// Symmetric links make halving exact; the raw reading is kept available
/// because plotted delay conventions differ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RttDivisor {
    /// Use the RTT as-is.
    Raw,
    /// Halve the RTT into a one-way estimate.
    Halved,
}

impl RttDivisor {
    pub fn from_u32(value: u32) -> Option<Self> {
        match value {
            1 => Some(RttDivisor::Raw),
            2 => Some(RttDivisor::Halved),
            _ => None,
        }
    }

    pub fn factor(self) -> f64 {
        match self {
            RttDivisor::Raw => 1.0,
            RttDivisor::Halved => 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ProbeError {
    #[error("no samples recorded for path `{0}`")]
    NoData(String),
    #[error("cannot echo an already-echoed probe")]
    DoubleEcho,
    #[error("expected an echoed probe")]
    NotAnEcho,
    #[error("probe for unknown path `{0}`")]
    UnknownPath(String),
    #[error("estimator window must be at least 1")]
    ZeroWindow,
}

/// Median of the most recent `window` RTT values, mapped to a one-way
/// estimate by the divisor. An even sample count averages the two middle
/// values.
pub fn estimate_network_delay(
    samples: &[RttSample],
    window: usize,
    divisor: RttDivisor,
) -> Result<f64, ProbeError> {
    if window == 0 {
        return Err(ProbeError::ZeroWindow);
    }
    if samples.is_empty() {
        return Err(ProbeError::NoData(String::from("<no samples>")));
    }
    let start = samples.len().saturating_sub(window);
    let mut rtts: Vec<f64> = samples[start..].iter().map(|s| s.rtt_ms).collect();
    rtts.sort_unstable_by(f64::total_cmp);
    let mid = rtts.len() / 2;
    let median = if rtts.len() % 2 == 1 {
        rtts[mid]
    } else {
        (rtts[mid - 1] + rtts[mid]) / 2.0
    };
    Ok(median / divisor.factor())
}

struct PathProbeState {
    next_seq: u64,
    samples: VecDeque<RttSample>,
}

/// Sender-side probe state: per-path sequence counters and a bounded
/// ring of recent round-trip samples.
pub struct Prober {
    window: usize,
    divisor: RttDivisor,
    per_path: BTreeMap<PathId, PathProbeState>,
}

impl Prober {
    pub fn new(paths: &[PathId], window: usize, divisor: RttDivisor) -> Result<Self, ProbeError> {
        if window == 0 {
            return Err(ProbeError::ZeroWindow);
        }
        Ok(Prober {
            window,
            divisor,
            per_path: paths
                .iter()
                .map(|p| {
                    (
                        p.clone(),
                        PathProbeState {
                            next_seq: 0,
                            samples: VecDeque::with_capacity(window),
                        },
                    )
                })
                .collect(),
        })
    }

    pub fn paths(&self) -> impl Iterator<Item = &PathId> {
        self.per_path.keys()
    }

    /// Builds one outbound probe per routable path. Unroutable paths are
    /// skipped and reported stale instead of failing the round.
    pub fn probe_round(&mut self, now: SimTime, is_routable: &dyn Fn(&PathId) -> bool) -> ProbeRound {
        let mut round = ProbeRound::default();
        for (path_id, state) in self.per_path.iter_mut() {
            if !is_routable(path_id) {
                round.stale.push(path_id.clone());
                continue;
            }
            round.probes.push(ProbePacket {
                path_id: path_id.clone(),
                sequence_number: state.next_seq,
                sent_at: now,
                direction: ProbeDirection::Outbound,
            });
            state.next_seq += 1;
        }
        round
    }

    /// Receiver side: turns an outbound probe around on the same path.
    pub fn echo(probe: &ProbePacket) -> Result<ProbePacket, ProbeError> {
        match probe.direction {
            ProbeDirection::Outbound => Ok(ProbePacket {
                direction: ProbeDirection::Echoed,
                ..probe.clone()
            }),
            ProbeDirection::Echoed => Err(ProbeError::DoubleEcho),
        }
    }

    /// Sender side: folds a returned echo into the path's sample ring
    /// and returns the measurement.
    pub fn record_echo(&mut self, probe: &ProbePacket, now: SimTime) -> Result<RttSample, ProbeError> {
        if probe.direction != ProbeDirection::Echoed {
            return Err(ProbeError::NotAnEcho);
        }
        let state = self
            .per_path
            .get_mut(&probe.path_id)
            .ok_or_else(|| ProbeError::UnknownPath(probe.path_id.as_str().into()))?;
        let sample = RttSample {
            path_id: probe.path_id.clone(),
            rtt_ms: now.ms_since(probe.sent_at),
            measured_at: now,
        };
        if state.samples.len() == self.window {
            state.samples.pop_front();
        }
        state.samples.push_back(sample.clone());
        Ok(sample)
    }

    /// Current one-way estimate for a path.
    pub fn estimate(&self, path_id: &PathId) -> Result<f64, ProbeError> {
        let state = self
            .per_path
            .get(path_id)
            .ok_or_else(|| ProbeError::UnknownPath(path_id.as_str().into()))?;
        if state.samples.is_empty() {
            return Err(ProbeError::NoData(path_id.as_str().into()));
        }
        let samples: Vec<RttSample> = state.samples.iter().cloned().collect();
        estimate_network_delay(&samples, self.window, self.divisor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn pid(s: &str) -> PathId {
        PathId::new(s)
    }

    fn sample(path: &str, rtt: f64, at: f64) -> RttSample {
        RttSample {
            path_id: pid(path),
            rtt_ms: rtt,
            measured_at: SimTime::from_secs_f64(at),
        }
    }

    #[test]
    fn constant_samples_halve_symmetrically() {
        let samples = vec![sample("p", 10.0, 1.0), sample("p", 10.0, 2.0), sample("p", 10.0, 3.0)];
        assert_eq!(estimate_network_delay(&samples, 3, RttDivisor::Halved).unwrap(), 5.0);
    }

    #[test]
    fn median_rejects_outlier() {
        let samples = vec![sample("p", 10.0, 1.0), sample("p", 30.0, 2.0), sample("p", 10.0, 3.0)];
        assert_eq!(estimate_network_delay(&samples, 3, RttDivisor::Halved).unwrap(), 5.0);
    }

    #[test]
    fn raw_divisor_keeps_rtt() {
        let samples = vec![sample("p", 12.4, 1.0)];
        assert_eq!(estimate_network_delay(&samples, 3, RttDivisor::Raw).unwrap(), 12.4);
    }

    #[test]
    fn empty_samples_are_no_data() {
        assert!(matches!(
            estimate_network_delay(&[], 3, RttDivisor::Halved),
            Err(ProbeError::NoData(_))
        ));
    }

    #[test]
    fn even_window_averages_middles() {
        let samples = vec![sample("p", 10.0, 1.0), sample("p", 30.0, 2.0)];
        assert_eq!(estimate_network_delay(&samples, 2, RttDivisor::Halved).unwrap(), 10.0);
    }

    #[test]
    fn round_produces_one_probe_per_path() {
        let paths = [pid("1-2-5"), pid("1-3-5"), pid("1-4-5")];
        let mut prober = Prober::new(&paths, 3, RttDivisor::Halved).unwrap();
        let round = prober.probe_round(SimTime::from_secs_f64(10.0), &|_| true);
        assert_eq!(round.probes.len(), 3);
        assert!(round.stale.is_empty());
        let ids: Vec<&str> = round.probes.iter().map(|p| p.path_id.as_str()).collect();
        assert_eq!(ids, ["1-2-5", "1-3-5", "1-4-5"]);
        assert!(round.probes.iter().all(|p| p.sequence_number == 0));

        // Sequence numbers advance per path.
        let next = prober.probe_round(SimTime::from_secs_f64(11.0), &|_| true);
        assert!(next.probes.iter().all(|p| p.sequence_number == 1));
    }

    #[test]
    fn empty_path_list_yields_empty_round() {
        let mut prober = Prober::new(&[], 3, RttDivisor::Halved).unwrap();
        let round = prober.probe_round(SimTime::ZERO, &|_| true);
        assert!(round.probes.is_empty());
        assert!(round.stale.is_empty());
    }

    #[test]
    fn unroutable_path_is_reported_stale() {
        let paths = [pid("1-2-5"), pid("1-3-5"), pid("1-4-5")];
        let mut prober = Prober::new(&paths, 3, RttDivisor::Halved).unwrap();
        let round = prober.probe_round(SimTime::ZERO, &|p| p.as_str() != "1-3-5");
        assert_eq!(round.probes.len(), 2);
        assert_eq!(round.stale, vec![pid("1-3-5")]);
    }

    #[test]
    fn echo_preserves_path_and_timestamp() {
        let probe = ProbePacket {
            path_id: pid("1-3-5"),
            sequence_number: 7,
            sent_at: SimTime::from_secs_f64(5.0),
            direction: ProbeDirection::Outbound,
        };
        let echoed = Prober::echo(&probe).unwrap();
        assert_eq!(echoed.path_id, probe.path_id);
        assert_eq!(echoed.sent_at, probe.sent_at);
        assert_eq!(echoed.direction, ProbeDirection::Echoed);
        assert_eq!(Prober::echo(&echoed), Err(ProbeError::DoubleEcho));
    }

    #[test]
    fn echo_round_trip_measures_rtt() {
        let paths = [pid("1-3-5")];
        let mut prober = Prober::new(&paths, 3, RttDivisor::Halved).unwrap();
        let round = prober.probe_round(SimTime::from_secs_f64(1.0), &|_| true);
        let echoed = Prober::echo(&round.probes[0]).unwrap();
        // 5 ms out, 5 ms back.
        let sample = prober
            .record_echo(&echoed, SimTime::from_secs_f64(1.0).after_ms(10.0))
            .unwrap();
        assert_eq!(sample.rtt_ms, 10.0);
        assert_eq!(prober.estimate(&pid("1-3-5")).unwrap(), 5.0);
    }

    #[test]
    fn recording_an_outbound_probe_is_rejected() {
        let paths = [pid("1-3-5")];
        let mut prober = Prober::new(&paths, 3, RttDivisor::Halved).unwrap();
        let round = prober.probe_round(SimTime::ZERO, &|_| true);
        assert_eq!(
            prober.record_echo(&round.probes[0], SimTime::from_secs_f64(1.0)),
            Err(ProbeError::NotAnEcho)
        );
    }

    #[test]
    fn sample_ring_is_bounded_by_window() {
        let paths = [pid("p")];
        let mut prober = Prober::new(&paths, 3, RttDivisor::Halved).unwrap();
        for i in 0..10 {
            let round = prober.probe_round(SimTime::from_secs_f64(i as f64), &|_| true);
            let echoed = Prober::echo(&round.probes[0]).unwrap();
            let rtt = if i < 9 { 50.0 } else { 10.0 };
            prober
                .record_echo(&echoed, SimTime::from_secs_f64(i as f64).after_ms(rtt))
                .unwrap();
        }
        // Median over the last three: [50, 50, 10] -> 50 / 2.
        assert_eq!(prober.estimate(&pid("p")).unwrap(), 25.0);
        assert_eq!(prober.per_path[&pid("p")].samples.len(), 3);
    }
}
