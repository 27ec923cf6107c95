//! Scenario file format.
//!
//! Scenarios are TOML with explicit keys for every field the engine
//! needs; see `fixtures/paper.scenario` for a complete example. Parsing
//! and validation are separate steps so `validate` can list every
//! violation in a structurally well-formed file instead of stopping at
//! the first.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nmpsim_core::controller::ControllerConfig;
use nmpsim_core::delay::AudioConfig;
use nmpsim_core::netsim::{InjectionTarget, LatencyInjection, Link, PathId, Topology};
use nmpsim_core::probing::RttDivisor;
use nmpsim_core::sim::{EndpointSpec, Scenario};
use nmpsim_core::time::SimTime;
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioFileError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    /// The TOML parser reports the offending line and column.
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Mandatory; runs are reproducible only against an explicit seed.
    seed: Option<u64>,
    duration_s: f64,
    stream_start_s: f64,
    probe_period_s: f64,
    #[serde(default = "default_true")]
    interaction_enabled: bool,
    topology: TopologyFile,
    flow: FlowFile,
    #[serde(default)]
    controller: ControllerFile,
    #[serde(default)]
    probing: ProbingFile,
    endpoints: Vec<EndpointFile>,
    #[serde(default)]
    injections: Vec<InjectionFile>,
    #[serde(default)]
    switch_processing_ms: BTreeMap<String, f64>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyFile {
    switches: Vec<String>,
    hosts: Vec<String>,
    links: Vec<LinkFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkFile {
    a: String,
    b: String,
    latency_ms: f64,
    #[serde(default)]
    jitter_ms: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowFile {
    src: String,
    dst: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ControllerFile {
    ept_ms: f64,
    reroute_threshold_ms: f64,
    min_dwell_s: f64,
    guard_margin_ms: f64,
    /// 1 keeps raw round-trip readings, 2 halves them into one-way
    /// estimates.
    rtt_divisor: u32,
}

impl Default for ControllerFile {
    fn default() -> Self {
        ControllerFile {
            ept_ms: 25.0,
            reroute_threshold_ms: 2.0,
            min_dwell_s: 5.0,
            guard_margin_ms: 0.0,
            rtt_divisor: 2,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ProbingFile {
    window: usize,
}

impl Default for ProbingFile {
    fn default() -> Self {
        ProbingFile { window: 3 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EndpointFile {
    host: String,
    role: String,
    d0_ms: f64,
    configs: Vec<ConfigFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    label: String,
    frame_size: u32,
    sampling_rate: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InjectionFile {
    at_s: f64,
    /// Exactly one of `path` or `link` must be given.
    #[serde(default)]
    path: Option<String>,
    #[serde(default)]
    link: Option<[String; 2]>,
    add_ms: f64,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioFileError> {
        Ok(toml::from_str(text)?)
    }

    /// Converts into an engine scenario, collecting every violation.
    pub fn into_scenario(self) -> Result<Scenario, Vec<String>> {
        let mut violations = Vec::new();

        let switches: std::collections::BTreeSet<String> =
            self.topology.switches.iter().cloned().collect();
        if switches.len() != self.topology.switches.len() {
            violations.push(String::from("duplicate switch declarations"));
        }
        let hosts: std::collections::BTreeSet<String> = self.topology.hosts.iter().cloned().collect();
        if hosts.len() != self.topology.hosts.len() {
            violations.push(String::from("duplicate host declarations"));
        }
        let topology = Topology {
            switches,
            hosts,
            links: self
                .topology
                .links
                .into_iter()
                .map(|l| Link {
                    a: l.a,
                    b: l.b,
                    base_latency_ms: l.latency_ms,
                    jitter_ms: l.jitter_ms,
                })
                .collect(),
        };

        let seed = match self.seed {
            Some(seed) => seed,
            None => {
                violations.push(String::from("seed is required"));
                0
            }
        };

        let rtt_divisor = match RttDivisor::from_u32(self.controller.rtt_divisor) {
            Some(d) => d,
            None => {
                violations.push(format!(
                    "controller rtt_divisor must be 1 or 2, got {}",
                    self.controller.rtt_divisor
                ));
                RttDivisor::Halved
            }
        };
        let controller = ControllerConfig {
            ept_ms: self.controller.ept_ms,
            reroute_threshold_ms: self.controller.reroute_threshold_ms,
            min_dwell_s: self.controller.min_dwell_s,
            guard_margin_ms: self.controller.guard_margin_ms,
            rtt_divisor,
        };

        let mut transmitter = None;
        let mut receiver = None;
        for endpoint in self.endpoints {
            let spec = EndpointSpec {
                host: endpoint.host.clone(),
                d0_ms: endpoint.d0_ms,
                configs: endpoint
                    .configs
                    .into_iter()
                    .map(|c| AudioConfig {
                        label: c.label,
                        frame_size: c.frame_size,
                        sampling_rate: c.sampling_rate,
                    })
                    .collect(),
            };
            match endpoint.role.as_str() {
                "transmitter" => {
                    if transmitter.replace(spec).is_some() {
                        violations.push(String::from("more than one transmitter endpoint"));
                    }
                }
                "receiver" => {
                    if receiver.replace(spec).is_some() {
                        violations.push(String::from("more than one receiver endpoint"));
                    }
                }
                other => violations.push(format!(
                    "endpoint `{}` has unknown role `{other}` (use `transmitter` or `receiver`)",
                    endpoint.host
                )),
            }
        }

        let mut injections = Vec::with_capacity(self.injections.len());
        for (i, injection) in self.injections.into_iter().enumerate() {
            let target = match (injection.path, injection.link) {
                (Some(path), None) => Some(InjectionTarget::Path(PathId::new(path))),
                (None, Some([a, b])) => Some(InjectionTarget::Link { a, b }),
                _ => {
                    violations.push(format!(
                        "injection #{i} must name exactly one of `path` or `link`"
                    ));
                    None
                }
            };
            if !(injection.at_s >= 0.0) || !injection.at_s.is_finite() {
                violations.push(format!("injection #{i} time must be non-negative"));
                continue;
            }
            if let Some(target) = target {
                injections.push(LatencyInjection {
                    at: SimTime::from_secs_f64(injection.at_s),
                    target,
                    added_latency_ms: injection.add_ms,
                });
            }
        }

        let (Some(transmitter), Some(receiver)) = (transmitter, receiver) else {
            violations.push(String::from(
                "scenario needs exactly one transmitter and one receiver endpoint",
            ));
            return Err(violations);
        };

        let scenario = Scenario {
            topology,
            src_host: self.flow.src,
            dst_host: self.flow.dst,
            probe_period_s: self.probe_period_s,
            probe_window: self.probing.window,
            controller,
            transmitter,
            receiver,
            switch_processing_ms: self.switch_processing_ms,
            injections,
            stream_start_s: self.stream_start_s,
            duration_s: self.duration_s,
            seed,
            interaction_enabled: self.interaction_enabled,
        };
        violations.extend(scenario.violations());
        if violations.is_empty() {
            Ok(scenario)
        } else {
            Err(violations)
        }
    }
}

/// Parses and fully validates a scenario from TOML text.
pub fn scenario_from_str(text: &str) -> Result<Scenario, ScenarioFileError> {
    ScenarioFile::parse(text)?
        .into_scenario()
        .map_err(ScenarioFileError::Invalid)
}

/// Loads a scenario file from disk.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioFileError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    scenario_from_str(&text)
}

/// Structural and invariant checks for `validate`: parses the file and
/// returns every violation found (empty means valid).
pub fn validate_file(path: &Path) -> Result<Vec<String>, ScenarioFileError> {
    let text = fs::read_to_string(path).map_err(|source| ScenarioFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match ScenarioFile::parse(&text)?.into_scenario() {
        Ok(_) => Ok(Vec::new()),
        Err(violations) => Ok(violations),
    }
}
