//! Scenario orchestration.
//!
//! Wires the fabric, prober, controller, and endpoints into one event
//! loop over virtual time and replays a declarative scenario: probe
//! rounds feed per-path estimates to the controller, injections degrade
//! links on schedule, the audio stream runs at its frame cadence, and
//! every controller decision lands back in the fabric and the endpoints
//! through zero-delay control messages.
//!
//! One time-series row is emitted per completed probe round, after all
//! of the round's measurements and any resulting decisions have been
//! processed. The row's mouth-to-ear value is the controller's own
//! prediction (estimate plus blocking on both sides) — the quantity the
//! threshold guarantee is enforced on. Per-frame measurements are kept
//! alongside for inspection.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::controller::{
    Controller, ControllerConfig, InfeasibilityNotice, TransitionAction, TransitionEvent,
};
use crate::delay::{gain, AudioConfig, DelayError};
use crate::endpoints::{
    build_audio_profile, AudioFrame, EndpointError, EndpointRole, EndpointState, FrameMeasurement,
};
use crate::netsim::{
    EventQueue, Fabric, FlowId, InjectionTarget, LatencyInjection, NetsimError, NodeId, PathId,
    Topology,
};
use crate::probing::{ProbeError, ProbePacket, Prober};
use crate::time::SimTime;

const AUDIO_FLOW: &str = "audio";

fn probe_flow(path_id: &PathId) -> FlowId {
    format!("probe:{path_id}")
}

fn probe_echo_flow(path_id: &PathId) -> FlowId {
    format!("probe-echo:{path_id}")
}

/// Sound-card description of one endpoint as the scenario states it.
#[derive(Clone, Debug)]
pub struct EndpointSpec {
    /// Host this endpoint lives on; must match the flow's source or
    /// destination host.
    pub host: NodeId,
    pub d0_ms: f64,
    /// Candidate configurations in preference order.
    pub configs: Vec<AudioConfig>,
}

/// A complete, self-contained experiment description.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub topology: Topology,
    pub src_host: NodeId,
    pub dst_host: NodeId,
    pub probe_period_s: f64,
    /// Estimator window (number of round trips the median runs over).
    pub probe_window: usize,
    pub controller: ControllerConfig,
    pub transmitter: EndpointSpec,
    pub receiver: EndpointSpec,
    /// Optional per-switch forwarding time.
    pub switch_processing_ms: BTreeMap<NodeId, f64>,
    /// Latency changes to apply, sorted by time.
    pub injections: Vec<LatencyInjection>,
    pub stream_start_s: f64,
    pub duration_s: f64,
    pub seed: u64,
    /// When false, the controller never asks the endpoints to change
    /// configuration; routing decisions are unaffected.
    pub interaction_enabled: bool,
}

impl Scenario {
    /// Every invariant violation in the scenario, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut problems = self.topology.violations();

        for host in [&self.src_host, &self.dst_host] {
            if !self.topology.hosts.contains(host) {
                problems.push(format!("flow host `{host}` is not a declared host"));
            }
        }
        if self.src_host == self.dst_host {
            problems.push(String::from("flow source and destination hosts must differ"));
        }

        if !(self.probe_period_s > 0.0) || !self.probe_period_s.is_finite() {
            problems.push(String::from("probe_period_s must be positive"));
        }
        if self.probe_window == 0 {
            problems.push(String::from("probe_window must be at least 1"));
        }
        if let Err(e) = self.controller.validate() {
            problems.push(format!("controller config: {e}"));
        }
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            problems.push(String::from("duration_s must be positive"));
        }
        if !(self.stream_start_s >= 0.0) || !self.stream_start_s.is_finite() {
            problems.push(String::from("stream_start_s must be non-negative"));
        }

        for (role, spec, expected_host) in [
            ("transmitter", &self.transmitter, &self.src_host),
            ("receiver", &self.receiver, &self.dst_host),
        ] {
            if &spec.host != expected_host {
                problems.push(format!(
                    "{role} host `{}` must match the flow's `{expected_host}`",
                    spec.host
                ));
            }
            match build_audio_profile(&spec.host, spec.d0_ms, spec.configs.clone()) {
                Ok(build) => {
                    for rejected in build.rejected {
                        problems.push(format!("{role} config `{}` is invalid", rejected.label));
                    }
                }
                Err(e) => problems.push(format!("{role} profile: {e}")),
            }
        }

        for (switch, ms) in &self.switch_processing_ms {
            if !self.topology.switches.contains(switch) {
                problems.push(format!("switch_processing references unknown switch `{switch}`"));
            }
            if !(*ms >= 0.0) || !ms.is_finite() {
                problems.push(format!("switch_processing for `{switch}` must be non-negative"));
            }
        }

        let paths = self
            .topology
            .enumerate_paths(&self.src_host, &self.dst_host)
            .unwrap_or_default();
        if paths.is_empty() {
            problems.push(format!(
                "no path connects `{}` to `{}`",
                self.src_host, self.dst_host
            ));
        }

        let end = SimTime::from_secs_f64(self.duration_s.max(0.0));
        let mut previous = SimTime::ZERO;
        for (i, injection) in self.injections.iter().enumerate() {
            if injection.at < previous {
                problems.push(format!("injection #{i} is out of order; sort the schedule by time"));
            }
            previous = injection.at;
            if injection.at > end {
                problems.push(format!("injection #{i} happens after the scenario ends"));
            }
            if !injection.added_latency_ms.is_finite() {
                problems.push(format!("injection #{i} has a non-finite latency change"));
            }
            match &injection.target {
                InjectionTarget::Path(path_id) => {
                    if !paths.iter().any(|p| &p.path_id == path_id) {
                        problems.push(format!("injection #{i} targets unknown path `{path_id}`"));
                    }
                }
                InjectionTarget::Link { a, b } => {
                    if self.topology.link_between(a, b).is_none() {
                        problems.push(format!("injection #{i} targets unknown link `{a}`-`{b}`"));
                    }
                }
            }
        }

        problems
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let problems = self.violations();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SimError::InvalidScenario(problems))
        }
    }
}

/// Marker attached to the time-series row on which something happened.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowEvent {
    Transition(TransitionAction),
    InfeasibilityNotice,
}

impl RowEvent {
    pub fn label(self) -> &'static str {
        match self {
            RowEvent::Transition(action) => action.label(),
            RowEvent::InfeasibilityNotice => "infeasibility-notice",
        }
    }
}

/// One report row, emitted per completed probe round.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesRow {
    pub time: SimTime,
    pub active_path: Option<PathId>,
    /// Controller-side one-way estimate of the active path.
    pub network_est_ms: Option<f64>,
    /// Ground-truth base delay of the active path at this instant.
    pub network_truth_ms: Option<f64>,
    pub blocking_tx_ms: f64,
    pub blocking_rx_ms: f64,
    /// Predicted mouth-to-ear delay of the active path.
    pub mouth_to_ear_ms: Option<f64>,
    pub events: Vec<RowEvent>,
}

/// Aggregates derivable from the rows and the transition log.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunSummary {
    /// Average and maximum gain over the comparison window; zero for a
    /// single run (filled in by `compare_modes`).
    pub avg_gain_pct: f64,
    pub max_gain_pct: f64,
    /// Rows whose predicted mouth-to-ear delay exceeded the threshold.
    pub ept_violations: u64,
    pub reroutes: u64,
}

/// Audio-flow counters at the end of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FrameStats {
    pub sent: u64,
    pub received: u64,
    pub dropped: u64,
}

/// Everything one scenario run produced.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub transitions: Vec<TransitionEvent>,
    pub rows: Vec<TimeSeriesRow>,
    pub summary: RunSummary,
    pub notices: Vec<InfeasibilityNotice>,
    pub frames: FrameStats,
    pub frame_measurements: Vec<FrameMeasurement>,
    /// Probe rounds that skipped a path for lack of a route.
    pub stale_probes: u64,
}

/// Gain of the interaction-enabled run over the disabled one.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GainSummary {
    pub avg_gain_pct: f64,
    pub max_gain_pct: f64,
    /// False when the enabled run never modified the audio
    /// configuration; gains are zero in that case.
    pub modification_occurred: bool,
    /// Index of the first compared row.
    pub window_start_row: usize,
    pub window_rows: usize,
}

/// The two aligned runs and their gain summary.
#[derive(Clone, Debug)]
pub struct CompareReport {
    pub enabled: RunReport,
    pub disabled: RunReport,
    pub gain: GainSummary,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),
    #[error(transparent)]
    Netsim(#[from] NetsimError),
    #[error(transparent)]
    Controller(#[from] crate::controller::ControllerError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Endpoint(#[from] EndpointError),
    #[error(transparent)]
    Delay(#[from] DelayError),
}

enum Event {
    Injection(usize),
    ProbeRound,
    ProbeArrival(ProbePacket),
    EchoArrival(ProbePacket),
    FrameTick,
    FrameArrival(AudioFrame),
    ModificationRequest { endpoint: NodeId, index: usize },
    ModificationAck { endpoint: NodeId, index: usize, accepted: bool },
}

struct Simulation<'a> {
    scenario: &'a Scenario,
    end: SimTime,
    fabric: Fabric,
    prober: Prober,
    controller: Controller,
    tx: EndpointState,
    rx: EndpointState,
    queue: EventQueue<Event>,
    /// Outstanding echoes per probe round, keyed by the round's send time.
    outstanding: BTreeMap<SimTime, usize>,
    pending_row_events: Vec<RowEvent>,
    rows: Vec<TimeSeriesRow>,
    frame_measurements: Vec<FrameMeasurement>,
    stale_probes: u64,
    notices_seen: usize,
}

impl<'a> Simulation<'a> {
    fn new(scenario: &'a Scenario) -> Result<Self, SimError> {
        let mut fabric = Fabric::new(scenario.topology.clone(), scenario.seed)?;
        for (switch, ms) in &scenario.switch_processing_ms {
            fabric.set_switch_processing_ms(switch, *ms)?;
        }
        let paths = fabric.register_endpoints(&scenario.src_host, &scenario.dst_host)?;
        let path_ids: Vec<PathId> = paths.iter().map(|p| p.path_id.clone()).collect();
        for path_id in &path_ids {
            fabric.install_rules(&probe_flow(path_id), path_id)?;
            fabric.install_rules_reverse(&probe_echo_flow(path_id), path_id)?;
        }

        let mut controller = Controller::new(scenario.controller, &path_ids)?;
        controller.set_interaction_enabled(scenario.interaction_enabled);
        let tx_profile = build_audio_profile(
            &scenario.transmitter.host,
            scenario.transmitter.d0_ms,
            scenario.transmitter.configs.clone(),
        )?
        .profile;
        let rx_profile = build_audio_profile(
            &scenario.receiver.host,
            scenario.receiver.d0_ms,
            scenario.receiver.configs.clone(),
        )?
        .profile;
        controller.register_profile(&scenario.src_host, tx_profile.clone())?;
        controller.register_profile(&scenario.dst_host, rx_profile.clone())?;

        let tx = EndpointState::new(
            scenario.src_host.clone(),
            EndpointRole::Transmitter,
            tx_profile,
            AUDIO_FLOW,
        )?;
        let rx = EndpointState::new(
            scenario.dst_host.clone(),
            EndpointRole::Receiver,
            rx_profile,
            AUDIO_FLOW,
        )?;

        let prober = Prober::new(&path_ids, scenario.probe_window, scenario.controller.rtt_divisor)?;

        let end = SimTime::from_secs_f64(scenario.duration_s);
        let mut queue = EventQueue::new();
        for (i, injection) in scenario.injections.iter().enumerate() {
            queue.schedule(injection.at, Event::Injection(i));
        }
        queue.schedule(SimTime::ZERO, Event::ProbeRound);
        let stream_start = SimTime::from_secs_f64(scenario.stream_start_s);
        if stream_start <= end {
            queue.schedule(stream_start, Event::FrameTick);
        }

        Ok(Simulation {
            scenario,
            end,
            fabric,
            prober,
            controller,
            tx,
            rx,
            queue,
            outstanding: BTreeMap::new(),
            pending_row_events: Vec::new(),
            rows: Vec::new(),
            frame_measurements: Vec::new(),
            stale_probes: 0,
            notices_seen: 0,
        })
    }

    fn run(mut self) -> Result<RunReport, SimError> {
        while let Some(event) = self.queue.pop() {
            let now = event.time;
            match event.payload {
                Event::Injection(index) => {
                    self.fabric.apply_injection(&self.scenario.injections[index])?;
                }
                Event::ProbeRound => self.probe_round(now)?,
                Event::ProbeArrival(probe) => {
                    let echoed = Prober::echo(&probe)?;
                    let delivery = self
                        .fabric
                        .send_packet(&probe_echo_flow(&echoed.path_id), now)?;
                    self.queue
                        .schedule(delivery.deliver_at, Event::EchoArrival(echoed));
                }
                Event::EchoArrival(probe) => self.echo_arrival(probe, now)?,
                Event::FrameTick => self.frame_tick(now)?,
                Event::FrameArrival(frame) => {
                    let measurement = self.rx.on_frame_received(&frame, now)?;
                    self.frame_measurements.push(measurement);
                }
                Event::ModificationRequest { endpoint, index } => {
                    let state = self.endpoint_mut(&endpoint);
                    let ack = state.apply_audio_modification(index, now);
                    self.queue.schedule(
                        now,
                        Event::ModificationAck {
                            endpoint,
                            index,
                            accepted: ack.accepted,
                        },
                    );
                }
                Event::ModificationAck {
                    endpoint,
                    index,
                    accepted,
                } => {
                    if let Some(retry) =
                        self.controller
                            .on_modification_ack(&endpoint, index, accepted, now)?
                    {
                        self.dispatch_modification(retry.requested_index, now);
                    }
                }
            }
        }
        Ok(self.into_report())
    }

    fn endpoint_mut(&mut self, endpoint: &str) -> &mut EndpointState {
        if endpoint == self.tx.endpoint_id {
            &mut self.tx
        } else {
            &mut self.rx
        }
    }

    fn probe_round(&mut self, now: SimTime) -> Result<(), SimError> {
        let fabric = &self.fabric;
        let round = self.prober.probe_round(now, &|path_id| {
            fabric.flow_routable(&probe_flow(path_id)) && fabric.flow_routable(&probe_echo_flow(path_id))
        });
        self.stale_probes += round.stale.len() as u64;
        if !round.probes.is_empty() {
            self.outstanding.insert(now, round.probes.len());
        }
        for probe in round.probes {
            let delivery = self.fabric.send_packet(&probe_flow(&probe.path_id), now)?;
            self.queue
                .schedule(delivery.deliver_at, Event::ProbeArrival(probe));
        }
        let next = now.after_ms(self.scenario.probe_period_s * 1_000.0);
        if next <= self.end {
            self.queue.schedule(next, Event::ProbeRound);
        }
        Ok(())
    }

    fn echo_arrival(&mut self, probe: ProbePacket, now: SimTime) -> Result<(), SimError> {
        let round_time = probe.sent_at;
        let path_id = probe.path_id.clone();
        self.prober.record_echo(&probe, now)?;
        let estimate = self.prober.estimate(&path_id)?;

        let outcome = self.controller.on_monitor_update(&path_id, estimate, now)?;
        for event in &outcome.events {
            match event.action {
                TransitionAction::PathAssignment | TransitionAction::Rerouting => {
                    self.fabric.install_rules(AUDIO_FLOW, &event.next_path)?;
                }
                TransitionAction::AudioModification => {}
            }
            self.pending_row_events.push(RowEvent::Transition(event.action));
        }
        if self.controller.notices().len() > self.notices_seen {
            self.notices_seen = self.controller.notices().len();
            self.pending_row_events.push(RowEvent::InfeasibilityNotice);
        }
        if let Some(request) = outcome.modification {
            self.dispatch_modification(request.requested_index, now);
        }

        if let Some(count) = self.outstanding.get_mut(&round_time) {
            *count -= 1;
            if *count == 0 {
                self.outstanding.remove(&round_time);
                self.emit_row(now)?;
            }
        }
        Ok(())
    }

    fn dispatch_modification(&mut self, index: usize, now: SimTime) {
        for endpoint in [self.tx.endpoint_id.clone(), self.rx.endpoint_id.clone()] {
            self.queue
                .schedule(now, Event::ModificationRequest { endpoint, index });
        }
    }

    fn frame_tick(&mut self, now: SimTime) -> Result<(), SimError> {
        if let Some(frame) = self.tx.stream_tick(now) {
            match self.fabric.send_packet(AUDIO_FLOW, now) {
                Ok(delivery) => {
                    self.queue
                        .schedule(delivery.deliver_at, Event::FrameArrival(frame));
                }
                Err(NetsimError::NoRoute(_)) => self.tx.record_drop(),
                Err(e) => return Err(e.into()),
            }
        }
        let next = now.after_ms(self.tx.frame_period_ms());
        if next <= self.end {
            self.queue.schedule(next, Event::FrameTick);
        }
        Ok(())
    }

    fn emit_row(&mut self, now: SimTime) -> Result<(), SimError> {
        let active_path = self.controller.current_path().cloned();
        let index = self
            .controller
            .effective_config_index()
            .expect("both endpoints registered");
        let registry = self.controller.registry();
        let blocking_tx_ms = registry.blocking_ms(&self.tx.endpoint_id, index)?;
        let blocking_rx_ms = registry.blocking_ms(&self.rx.endpoint_id, index)?;
        let (network_est_ms, network_truth_ms, mouth_to_ear_ms) = match &active_path {
            Some(path) => (
                self.controller.monitor().estimate(path),
                Some(self.fabric.base_transit_ms(path)?),
                Some(self.controller.predicted_mouth_to_ear(path, index)?),
            ),
            None => (None, None, None),
        };
        self.rows.push(TimeSeriesRow {
            time: now,
            active_path,
            network_est_ms,
            network_truth_ms,
            blocking_tx_ms,
            blocking_rx_ms,
            mouth_to_ear_ms,
            events: core::mem::take(&mut self.pending_row_events),
        });
        Ok(())
    }

    fn into_report(self) -> RunReport {
        let transitions = self.controller.transition_log().to_vec();
        let reroutes = transitions
            .iter()
            .filter(|t| t.action == TransitionAction::Rerouting)
            .count() as u64;
        let ept_violations = self
            .rows
            .iter()
            .filter(|r| {
                r.mouth_to_ear_ms
                    .is_some_and(|v| v > self.scenario.controller.ept_ms)
            })
            .count() as u64;
        RunReport {
            transitions,
            rows: self.rows,
            summary: RunSummary {
                avg_gain_pct: 0.0,
                max_gain_pct: 0.0,
                ept_violations,
                reroutes,
            },
            notices: self.controller.notices().to_vec(),
            frames: FrameStats {
                sent: self.tx.frames_sent,
                received: self.rx.frames_received,
                dropped: self.tx.frames_dropped,
            },
            frame_measurements: self.frame_measurements,
            stale_probes: self.stale_probes,
        }
    }
}

/// Replays one scenario to completion. Identical scenarios (including
/// the seed) produce identical reports.
pub fn run_scenario(scenario: &Scenario) -> Result<RunReport, SimError> {
    scenario.validate()?;
    Simulation::new(scenario)?.run()
}

/// Runs the scenario twice — interaction enabled and disabled, same
/// seed — and summarizes the mouth-to-ear gain of the enabled run over
/// the post-modification window.
pub fn compare_modes(scenario: &Scenario) -> Result<CompareReport, SimError> {
    let mut with_interaction = scenario.clone();
    with_interaction.interaction_enabled = true;
    let mut without_interaction = scenario.clone();
    without_interaction.interaction_enabled = false;

    let enabled = run_scenario(&with_interaction)?;
    let disabled = run_scenario(&without_interaction)?;
    let gain = gain_summary(&enabled, &disabled)?;
    Ok(CompareReport {
        enabled,
        disabled,
        gain,
    })
}

/// Gain over the post-modification window, rows aligned by index.
///
/// The average applies the gain formula to the two runs' mean
/// mouth-to-ear delays over the window; the maximum is the largest
/// per-row gain.
fn gain_summary(enabled: &RunReport, disabled: &RunReport) -> Result<GainSummary, SimError> {
    let Some(modification_time) = enabled
        .transitions
        .iter()
        .find(|t| t.action == TransitionAction::AudioModification)
        .map(|t| t.time)
    else {
        return Ok(GainSummary::default());
    };
    let start = enabled
        .rows
        .iter()
        .position(|r| r.time >= modification_time)
        .unwrap_or(enabled.rows.len());

    let mut d_without = Vec::new();
    let mut d_with = Vec::new();
    for i in start..enabled.rows.len().min(disabled.rows.len()) {
        if let (Some(with_value), Some(without_value)) = (
            enabled.rows[i].mouth_to_ear_ms,
            disabled.rows[i].mouth_to_ear_ms,
        ) {
            d_with.push(with_value);
            d_without.push(without_value);
        }
    }
    if d_with.is_empty() {
        return Ok(GainSummary {
            modification_occurred: true,
            window_start_row: start,
            ..GainSummary::default()
        });
    }

    let mean = |values: &[f64]| values.iter().sum::<f64>() / values.len() as f64;
    let avg_gain_pct = gain(mean(&d_without), mean(&d_with))?;
    let mut max_gain_pct = f64::NEG_INFINITY;
    for (d1, d2) in d_without.iter().zip(&d_with) {
        max_gain_pct = max_gain_pct.max(gain(*d1, *d2)?);
    }
    Ok(GainSummary {
        avg_gain_pct,
        max_gain_pct,
        modification_occurred: true,
        window_start_row: start,
        window_rows: d_with.len(),
    })
}
