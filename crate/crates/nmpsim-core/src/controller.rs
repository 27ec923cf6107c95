//! The SDN controller.
//!
//! Three concerns share one deterministic state machine, mirroring the
//! controller-side module split of the modeled system:
//!
//! * an audio-profile registry (collects per-endpoint sound-card
//!   profiles and negotiates configuration changes),
//! * a path selector (assigns the flow to the lowest-delay path and
//!   reroutes when another path is strictly better by the threshold),
//! * a network monitor table (per-path one-way delay estimates fed by
//!   the end-host probing loop).
//!
//! Rerouting is always attempted before an audio modification: only when
//! no path can keep the predicted mouth-to-ear delay under the ensemble
//! performance threshold does the controller ask both endpoints to step
//! to a lower-blocking-delay configuration.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::delay::{mouth_to_ear, DelayError, SoundcardProfile};
use crate::netsim::PathId;
use crate::probing::RttDivisor;
use crate::time::SimTime;

/// Estimates kept per path beyond the latest value.
const MONITOR_HISTORY_CAP: usize = 32;

/// Controller tuning. Defaults follow the modeled deployment: a 25 ms
/// ensemble performance threshold and a strict 2 ms rerouting gate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControllerConfig {
    /// Ensemble performance threshold: the mouth-to-ear ceiling in ms.
    pub ept_ms: f64,
    /// Minimum strict improvement before the flow moves to another path.
    pub reroute_threshold_ms: f64,
    /// Minimum virtual seconds between transitions, so two stable paths
    /// can never trade the flow back and forth.
    pub min_dwell_s: f64,
    /// Safety margin subtracted from the threshold when predicting.
    pub guard_margin_ms: f64,
    /// How probe round trips map to one-way estimates.
    pub rtt_divisor: RttDivisor,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            ept_ms: 25.0,
            reroute_threshold_ms: 2.0,
            min_dwell_s: 5.0,
            guard_margin_ms: 0.0,
            rtt_divisor: RttDivisor::Halved,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        for (name, value) in [
            ("ept_ms", self.ept_ms),
            ("reroute_threshold_ms", self.reroute_threshold_ms),
            ("min_dwell_s", self.min_dwell_s),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ControllerError::InvalidConfig(name));
            }
        }
        if !(self.guard_margin_ms >= 0.0) || !self.guard_margin_ms.is_finite() {
            return Err(ControllerError::InvalidConfig("guard_margin_ms"));
        }
        Ok(())
    }

    fn prediction_limit_ms(&self) -> f64 {
        self.ept_ms - self.guard_margin_ms
    }
}

/// What a transition did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransitionAction {
    PathAssignment,
    Rerouting,
    AudioModification,
}

impl TransitionAction {
    pub fn label(self) -> &'static str {
        match self {
            TransitionAction::PathAssignment => "path-assignment",
            TransitionAction::Rerouting => "rerouting",
            TransitionAction::AudioModification => "audio-modification",
        }
    }
}

impl fmt::Display for TransitionAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One row of the transition log. Audio modifications keep
/// `next_path == current_path`; the first event of a run is always a
/// path assignment with no current path.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionEvent {
    pub time: SimTime,
    pub current_path: Option<PathId>,
    pub next_path: PathId,
    pub action: TransitionAction,
}

/// Latest estimate and bounded history for one path.
#[derive(Clone, Debug)]
pub struct MonitorEntry {
    pub estimate_ms: f64,
    pub updated_at: SimTime,
    pub history: VecDeque<(SimTime, f64)>,
}

/// Per-path delay estimates over the enumerated path universe.
#[derive(Clone, Debug, Default)]
pub struct MonitorTable {
    entries: BTreeMap<PathId, Option<MonitorEntry>>,
}

impl MonitorTable {
    pub fn new(paths: &[PathId]) -> Self {
        MonitorTable {
            entries: paths.iter().map(|p| (p.clone(), None)).collect(),
        }
    }

    pub fn update(&mut self, path_id: &PathId, estimate_ms: f64, now: SimTime) -> Result<(), ControllerError> {
        let slot = self
            .entries
            .get_mut(path_id)
            .ok_or_else(|| ControllerError::UnknownPath(path_id.as_str().into()))?;
        match slot {
            Some(entry) => {
                if now < entry.updated_at {
                    return Err(ControllerError::StaleUpdate(path_id.as_str().into()));
                }
                entry.estimate_ms = estimate_ms;
                entry.updated_at = now;
                if entry.history.len() == MONITOR_HISTORY_CAP {
                    entry.history.pop_front();
                }
                entry.history.push_back((now, estimate_ms));
            }
            None => {
                let mut history = VecDeque::new();
                history.push_back((now, estimate_ms));
                *slot = Some(MonitorEntry {
                    estimate_ms,
                    updated_at: now,
                    history,
                });
            }
        }
        Ok(())
    }

    pub fn estimate(&self, path_id: &PathId) -> Option<f64> {
        self.entries.get(path_id)?.as_ref().map(|e| e.estimate_ms)
    }

    pub fn paths(&self) -> impl Iterator<Item = &PathId> {
        self.entries.keys()
    }

    pub fn all_estimated(&self) -> bool {
        !self.entries.is_empty() && self.entries.values().all(Option::is_some)
    }

    /// Estimated paths in canonical order.
    pub fn estimates(&self) -> impl Iterator<Item = (&PathId, f64)> {
        self.entries
            .iter()
            .filter_map(|(p, e)| e.as_ref().map(|e| (p, e.estimate_ms)))
    }

    /// Lowest-estimate path; ties resolve to the lowest path id.
    pub fn min_estimate(&self) -> Option<(&PathId, f64)> {
        let mut best: Option<(&PathId, f64)> = None;
        for (path, est) in self.estimates() {
            if best.map_or(true, |(_, b)| est < b) {
                best = Some((path, est));
            }
        }
        best
    }

    /// Lowest-estimate path other than `exclude`; ties resolve to the
    /// lowest path id.
    pub fn best_alternative(&self, exclude: &PathId) -> Option<(&PathId, f64)> {
        let mut best: Option<(&PathId, f64)> = None;
        for (path, est) in self.estimates() {
            if path == exclude {
                continue;
            }
            if best.map_or(true, |(_, b)| est < b) {
                best = Some((path, est));
            }
        }
        best
    }
}

/// Outcome of a profile registration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Registration {
    New,
    /// The endpoint was already registered; its profile was replaced and
    /// its active configuration reset to the default.
    Rejoined,
}

/// Sound-card profiles and active configuration indices per endpoint.
#[derive(Clone, Debug, Default)]
pub struct AudioProfileRegistry {
    profiles: BTreeMap<String, SoundcardProfile>,
    active: BTreeMap<String, usize>,
}

impl AudioProfileRegistry {
    pub fn register(&mut self, endpoint_id: &str, profile: SoundcardProfile) -> Result<Registration, ControllerError> {
        profile.validate()?;
        let outcome = if self.profiles.contains_key(endpoint_id) {
            Registration::Rejoined
        } else {
            Registration::New
        };
        self.profiles.insert(endpoint_id.into(), profile);
        self.active.insert(endpoint_id.into(), 0);
        Ok(outcome)
    }

    pub fn profile(&self, endpoint_id: &str) -> Option<&SoundcardProfile> {
        self.profiles.get(endpoint_id)
    }

    pub fn active_index(&self, endpoint_id: &str) -> Option<usize> {
        self.active.get(endpoint_id).copied()
    }

    pub fn set_active(&mut self, endpoint_id: &str, index: usize) -> Result<(), ControllerError> {
        let profile = self
            .profiles
            .get(endpoint_id)
            .ok_or_else(|| ControllerError::MissingProfile(endpoint_id.into()))?;
        if index >= profile.configs.len() {
            return Err(ControllerError::IndexOutOfRange(index));
        }
        self.active.insert(endpoint_id.into(), index);
        Ok(())
    }

    pub fn endpoint_count(&self) -> usize {
        self.profiles.len()
    }

    pub fn endpoint_ids(&self) -> impl Iterator<Item = &String> {
        self.profiles.keys()
    }

    /// Configuration indices addressable on every registered endpoint.
    pub fn shared_config_count(&self) -> usize {
        self.profiles.values().map(|p| p.configs.len()).min().unwrap_or(0)
    }

    /// The common active index, when every endpoint agrees.
    pub fn current_shared_index(&self) -> Option<usize> {
        let mut iter = self.active.values();
        let first = *iter.next()?;
        iter.all(|&i| i == first).then_some(first)
    }

    /// Active indices are equal on all endpoints.
    pub fn is_synchronized(&self) -> bool {
        self.current_shared_index().is_some() || self.active.is_empty()
    }

    pub fn blocking_ms(&self, endpoint_id: &str, index: usize) -> Result<f64, ControllerError> {
        let profile = self
            .profiles
            .get(endpoint_id)
            .ok_or_else(|| ControllerError::MissingProfile(endpoint_id.into()))?;
        Ok(profile.blocking_ms(index)?)
    }
}

/// A configuration change the controller wants both endpoints to apply.
#[derive(Clone, Debug, PartialEq)]
pub struct ModificationRequest {
    pub requested_index: usize,
    /// The best path this request was computed against.
    pub best_path: PathId,
    /// Predicted mouth-to-ear delay on that path at the new index.
    pub predicted_ms: f64,
    /// True when no combination meets the threshold and this is the
    /// minimum-delay fallback.
    pub infeasible: bool,
}

/// Logged when no (path, configuration) combination can satisfy the
/// threshold; the controller still moves to the least-bad combination.
#[derive(Clone, Debug, PartialEq)]
pub struct InfeasibilityNotice {
    pub time: SimTime,
    pub path: PathId,
    pub config_index: usize,
    pub predicted_ms: f64,
}

/// Pure outcome of the threshold check, before any state changes.
#[derive(Clone, Debug, PartialEq)]
pub enum NegotiationDecision {
    /// Some path keeps the current configuration under the limit.
    ReroutingSuffices,
    /// Step both endpoints to this configuration index.
    Modify {
        index: usize,
        best_path: PathId,
        predicted_ms: f64,
    },
    /// No combination meets the limit; this is the global minimum.
    Infeasible {
        path: PathId,
        index: usize,
        predicted_ms: f64,
    },
}

/// Everything one monitor update produced.
#[derive(Clone, Debug, Default)]
pub struct UpdateOutcome {
    /// Transitions appended to the log by this update, in order.
    pub events: Vec<TransitionEvent>,
    /// A modification request to dispatch to both endpoints.
    pub modification: Option<ModificationRequest>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error("unknown path `{0}`")]
    UnknownPath(String),
    #[error("update for `{0}` is older than the stored estimate")]
    StaleUpdate(String),
    #[error("no estimate for path `{0}`")]
    NoEstimate(String),
    #[error("no profile registered for endpoint `{0}`")]
    MissingProfile(String),
    #[error("negotiation requires exactly two registered endpoints, have {0}")]
    WrongEndpointCount(usize),
    #[error("configuration index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("invalid controller config field `{0}`")]
    InvalidConfig(&'static str),
    #[error("unexpected modification acknowledgment from `{0}`")]
    UnexpectedAck(String),
    #[error(transparent)]
    Delay(#[from] DelayError),
}

struct PendingModification {
    index: usize,
    awaiting: BTreeSet<String>,
}

/// The controller state machine. Driven by monitor updates and
/// modification acknowledgments; never invoked concurrently.
pub struct Controller {
    cfg: ControllerConfig,
    monitor: MonitorTable,
    registry: AudioProfileRegistry,
    current_path: Option<PathId>,
    last_transition_at: Option<SimTime>,
    pending: Option<PendingModification>,
    log: Vec<TransitionEvent>,
    notices: Vec<InfeasibilityNotice>,
    rejoins: u64,
    /// When false the controller never initiates audio modifications;
    /// path selection and rerouting are unaffected.
    interaction_enabled: bool,
}

impl Controller {
    pub fn new(cfg: ControllerConfig, paths: &[PathId]) -> Result<Self, ControllerError> {
        cfg.validate()?;
        Ok(Controller {
            cfg,
            monitor: MonitorTable::new(paths),
            registry: AudioProfileRegistry::default(),
            current_path: None,
            last_transition_at: None,
            pending: None,
            log: Vec::new(),
            notices: Vec::new(),
            rejoins: 0,
            interaction_enabled: true,
        })
    }

    pub fn set_interaction_enabled(&mut self, enabled: bool) {
        self.interaction_enabled = enabled;
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn monitor(&self) -> &MonitorTable {
        &self.monitor
    }

    pub fn registry(&self) -> &AudioProfileRegistry {
        &self.registry
    }

    pub fn current_path(&self) -> Option<&PathId> {
        self.current_path.as_ref()
    }

    pub fn transition_log(&self) -> &[TransitionEvent] {
        &self.log
    }

    pub fn notices(&self) -> &[InfeasibilityNotice] {
        &self.notices
    }

    pub fn rejoin_count(&self) -> u64 {
        self.rejoins
    }

    /// Index the endpoints are on, or are being moved to by an
    /// in-flight modification. This is the configuration the
    /// controller's own predictions assume.
    pub fn effective_config_index(&self) -> Option<usize> {
        match &self.pending {
            Some(p) => Some(p.index),
            None => self.registry.current_shared_index(),
        }
    }

    pub fn has_pending_modification(&self) -> bool {
        self.pending.is_some()
    }

    /// Stores an endpoint's audio profile, resetting its active
    /// configuration to the default. Re-registration replaces the
    /// profile and counts as a re-join.
    pub fn register_profile(
        &mut self,
        endpoint_id: &str,
        profile: SoundcardProfile,
    ) -> Result<Registration, ControllerError> {
        let outcome = self.registry.register(endpoint_id, profile)?;
        if outcome == Registration::Rejoined {
            self.rejoins += 1;
        }
        Ok(outcome)
    }

    /// Predicted mouth-to-ear delay of `path_id` with both endpoints at
    /// `config_index`: blocking on each side plus the path estimate.
    pub fn predicted_mouth_to_ear(&self, path_id: &PathId, config_index: usize) -> Result<f64, ControllerError> {
        if self.registry.endpoint_count() != 2 {
            return Err(ControllerError::WrongEndpointCount(self.registry.endpoint_count()));
        }
        let estimate = self
            .monitor
            .estimate(path_id)
            .ok_or_else(|| ControllerError::NoEstimate(path_id.as_str().into()))?;
        let mut blockings = self
            .registry
            .endpoint_ids()
            .map(|id| self.registry.blocking_ms(id, config_index))
            .collect::<Result<Vec<f64>, _>>()?;
        let rx = blockings.pop().expect("two endpoints");
        let tx = blockings.pop().expect("two endpoints");
        Ok(mouth_to_ear(tx, rx, estimate)?.total_ms)
    }

    /// Assigns the flow to the minimum-estimate path once every
    /// enumerated path has been probed at least once. Defers otherwise.
    pub fn select_initial_path(&mut self, now: SimTime) -> Option<TransitionEvent> {
        if self.current_path.is_some() || !self.monitor.all_estimated() {
            return None;
        }
        let (best, _) = self.monitor.min_estimate()?;
        let event = TransitionEvent {
            time: now,
            current_path: None,
            next_path: best.clone(),
            action: TransitionAction::PathAssignment,
        };
        self.apply_transition(event.clone(), now);
        Some(event)
    }

    /// The reroute the controller would take right now, if any: the best
    /// alternative path when it undercuts the current estimate by more
    /// than the threshold and the dwell time has elapsed.
    pub fn reroute_candidate(&self, now: SimTime) -> Option<(PathId, f64)> {
        let current = self.current_path.as_ref()?;
        let current_est = self.monitor.estimate(current)?;
        let (best, best_est) = self.monitor.best_alternative(current)?;
        let improvement = current_est - best_est;
        if improvement > self.cfg.reroute_threshold_ms && self.dwell_elapsed(now) {
            Some((best.clone(), improvement))
        } else {
            None
        }
    }

    fn dwell_elapsed(&self, now: SimTime) -> bool {
        match self.last_transition_at {
            Some(last) => now.secs_since(last) >= self.cfg.min_dwell_s,
            None => true,
        }
    }

    /// Executes `reroute_candidate`, logging the transition.
    pub fn maybe_reroute(&mut self, now: SimTime) -> Option<TransitionEvent> {
        let (next, _) = self.reroute_candidate(now)?;
        let event = TransitionEvent {
            time: now,
            current_path: self.current_path.clone(),
            next_path: next,
            action: TransitionAction::Rerouting,
        };
        self.apply_transition(event.clone(), now);
        Some(event)
    }

    /// Pure threshold check over the full (path, configuration) space.
    ///
    /// If any path already meets the limit at the current configuration,
    /// rerouting is the right tool and no negotiation happens. Otherwise
    /// the scan walks from the current index toward less-preferred
    /// configurations and picks the first one whose best-path prediction
    /// meets the limit; when nothing does, it reports the global
    /// minimum-prediction combination.
    pub fn negotiation_decision(&self) -> Result<NegotiationDecision, ControllerError> {
        if self.registry.endpoint_count() != 2 {
            return Err(ControllerError::WrongEndpointCount(self.registry.endpoint_count()));
        }
        let current_index = self
            .registry
            .current_shared_index()
            .ok_or_else(|| ControllerError::MissingProfile(String::from("<desynchronized>")))?;
        let limit = self.cfg.prediction_limit_ms();
        let (best_path, _) = self
            .monitor
            .min_estimate()
            .ok_or_else(|| ControllerError::NoEstimate(String::from("<none>")))?;
        let best_path = best_path.clone();

        if self.predicted_mouth_to_ear(&best_path, current_index)? <= limit {
            return Ok(NegotiationDecision::ReroutingSuffices);
        }

        let shared = self.registry.shared_config_count();
        for index in current_index + 1..shared {
            let predicted = self.predicted_mouth_to_ear(&best_path, index)?;
            if predicted <= limit {
                return Ok(NegotiationDecision::Modify {
                    index,
                    best_path,
                    predicted_ms: predicted,
                });
            }
        }

        // Nothing satisfies the threshold: fall back to the minimum
        // prediction over every combination, preferring lower indices
        // and lower path ids on ties.
        let mut minimum: Option<(f64, usize, PathId)> = None;
        for index in 0..shared {
            for (path, _) in self.monitor.estimates() {
                let predicted = self.predicted_mouth_to_ear(path, index)?;
                if minimum.as_ref().map_or(true, |(m, _, _)| predicted < *m) {
                    minimum = Some((predicted, index, path.clone()));
                }
            }
        }
        let (predicted_ms, index, path) =
            minimum.ok_or_else(|| ControllerError::NoEstimate(String::from("<none>")))?;
        Ok(NegotiationDecision::Infeasible {
            path,
            index,
            predicted_ms,
        })
    }

    /// Runs the threshold check and, when a modification is warranted,
    /// logs the transition, opens the pending negotiation, and returns
    /// the request to dispatch to both endpoints.
    pub fn check_ept_and_negotiate(&mut self, now: SimTime) -> Result<Option<ModificationRequest>, ControllerError> {
        if self.pending.is_some() || !self.monitor.all_estimated() {
            return Ok(None);
        }
        let Some(current_path) = self.current_path.clone() else {
            return Ok(None);
        };
        let request = match self.negotiation_decision()? {
            NegotiationDecision::ReroutingSuffices => return Ok(None),
            NegotiationDecision::Modify {
                index,
                best_path,
                predicted_ms,
            } => ModificationRequest {
                requested_index: index,
                best_path,
                predicted_ms,
                infeasible: false,
            },
            NegotiationDecision::Infeasible {
                path,
                index,
                predicted_ms,
            } => {
                self.notices.push(InfeasibilityNotice {
                    time: now,
                    path: path.clone(),
                    config_index: index,
                    predicted_ms,
                });
                let current_index = self
                    .registry
                    .current_shared_index()
                    .ok_or_else(|| ControllerError::MissingProfile(String::from("<desynchronized>")))?;
                if index == current_index {
                    // Already on the least-bad combination; nothing to request.
                    return Ok(None);
                }
                ModificationRequest {
                    requested_index: index,
                    best_path: path,
                    predicted_ms,
                    infeasible: true,
                }
            }
        };
        self.open_modification(&request);
        let event = TransitionEvent {
            time: now,
            current_path: Some(current_path.clone()),
            next_path: current_path,
            action: TransitionAction::AudioModification,
        };
        self.apply_transition(event, now);
        Ok(Some(request))
    }

    fn open_modification(&mut self, request: &ModificationRequest) {
        self.pending = Some(PendingModification {
            index: request.requested_index,
            awaiting: self.registry.endpoint_ids().cloned().collect(),
        });
    }

    /// Folds one estimate into the monitor table and runs the decision
    /// pipeline: initial assignment, then rerouting, then negotiation.
    /// At most one transition is logged per virtual instant, so the log
    /// timestamps are strictly increasing.
    pub fn on_monitor_update(
        &mut self,
        path_id: &PathId,
        estimate_ms: f64,
        now: SimTime,
    ) -> Result<UpdateOutcome, ControllerError> {
        self.monitor.update(path_id, estimate_ms, now)?;
        let mut outcome = UpdateOutcome::default();

        if self.current_path.is_none() {
            if let Some(event) = self.select_initial_path(now) {
                outcome.events.push(event);
            }
        } else if let Some(event) = self.maybe_reroute(now) {
            outcome.events.push(event);
        }

        let transitioned_now = self.last_transition_at == Some(now);
        if self.interaction_enabled
            && self.current_path.is_some()
            && !transitioned_now
            && self.registry.endpoint_count() == 2
        {
            if let Some(request) = self.check_ept_and_negotiate(now)? {
                outcome
                    .events
                    .push(self.log.last().cloned().expect("negotiation logs an event"));
                outcome.modification = Some(request);
            }
        }
        Ok(outcome)
    }

    /// Endpoint response to a modification request. Accepted acks update
    /// the registry; once both endpoints have answered, the negotiation
    /// closes. A rejection produces a corrected retry request clamped to
    /// the shared configuration range.
    pub fn on_modification_ack(
        &mut self,
        endpoint_id: &str,
        index: usize,
        accepted: bool,
        _now: SimTime,
    ) -> Result<Option<ModificationRequest>, ControllerError> {
        let pending = self
            .pending
            .as_mut()
            .ok_or_else(|| ControllerError::UnexpectedAck(endpoint_id.into()))?;
        if pending.index != index || !pending.awaiting.remove(endpoint_id) {
            return Err(ControllerError::UnexpectedAck(endpoint_id.into()));
        }
        if accepted {
            self.registry.set_active(endpoint_id, index)?;
            if self.pending.as_ref().is_some_and(|p| p.awaiting.is_empty()) {
                self.pending = None;
            }
            return Ok(None);
        }
        // Rejection: clamp to the highest index valid on every endpoint
        // and retry both sides.
        let corrected = self.registry.shared_config_count().saturating_sub(1);
        let best_path = self
            .monitor
            .min_estimate()
            .map(|(p, _)| p.clone())
            .ok_or_else(|| ControllerError::NoEstimate(String::from("<none>")))?;
        let predicted_ms = self.predicted_mouth_to_ear(&best_path, corrected)?;
        let request = ModificationRequest {
            requested_index: corrected,
            best_path,
            predicted_ms,
            infeasible: false,
        };
        self.open_modification(&request);
        Ok(Some(request))
    }

    fn apply_transition(&mut self, event: TransitionEvent, now: SimTime) {
        debug_assert!(
            self.log.last().map_or(true, |last| last.time < now),
            "transitions must be strictly ordered in time"
        );
        self.current_path = Some(event.next_path.clone());
        self.last_transition_at = Some(now);
        self.log.push(event);
    }
}
