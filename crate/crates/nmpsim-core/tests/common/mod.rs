//! Shared fixtures and generators for the integration tests.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nmpsim_core::controller::ControllerConfig;
use nmpsim_core::delay::AudioConfig;
use nmpsim_core::netsim::{InjectionTarget, LatencyInjection, Link, PathId, Topology};
use nmpsim_core::sim::{EndpointSpec, Scenario};
use nmpsim_core::time::SimTime;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gen_usize(rng: &mut ChaCha8Rng, bound: usize) -> usize {
    (rng.next_u64() % bound as u64) as usize
}

pub fn gen_f64(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    lo + (hi - lo) * unit
}

pub fn link(a: &str, b: &str, latency_ms: f64, jitter_ms: f64) -> Link {
    Link {
        a: a.into(),
        b: b.into(),
        base_latency_ms: latency_ms,
        jitter_ms,
    }
}

pub fn audio_configs() -> Vec<AudioConfig> {
    vec![
        AudioConfig {
            label: "128@22050".into(),
            frame_size: 128,
            sampling_rate: 22050,
        },
        AudioConfig {
            label: "64@44100".into(),
            frame_size: 64,
            sampling_rate: 44100,
        },
    ]
}

/// Five switches in three parallel two-hop branches between the hosts.
pub fn fan_topology() -> Topology {
    Topology {
        switches: ["1", "2", "3", "4", "5"].iter().map(|s| s.to_string()).collect(),
        hosts: ["tx", "rx"].iter().map(|s| s.to_string()).collect(),
        links: vec![
            link("tx", "1", 0.1, 0.0),
            link("1", "2", 3.0, 0.0),
            link("1", "3", 2.0, 0.0),
            link("1", "4", 2.5, 0.0),
            link("2", "5", 3.0, 0.0),
            link("3", "5", 2.0, 0.0),
            link("4", "5", 2.5, 0.0),
            link("5", "rx", 0.1, 0.0),
        ],
    }
}

fn inject(at_s: f64, path: &str, add_ms: f64) -> LatencyInjection {
    LatencyInjection {
        at: SimTime::from_secs_f64(at_s),
        target: InjectionTarget::Path(PathId::new(path)),
        added_latency_ms: add_ms,
    }
}

/// The bundled reference scenario: sequential latency increases drive
/// five reroutes around the fan, then a simultaneous increase on all
/// three branches pushes every path over the threshold and forces the
/// audio modification.
pub fn reference_scenario() -> Scenario {
    Scenario {
        topology: fan_topology(),
        src_host: "tx".into(),
        dst_host: "rx".into(),
        probe_period_s: 1.0,
        probe_window: 3,
        controller: ControllerConfig::default(),
        transmitter: EndpointSpec {
            host: "tx".into(),
            d0_ms: 0.5,
            configs: audio_configs(),
        },
        receiver: EndpointSpec {
            host: "rx".into(),
            d0_ms: 0.5,
            configs: audio_configs(),
        },
        switch_processing_ms: BTreeMap::new(),
        injections: vec![
            inject(279.0, "1-3-5", 4.8),
            inject(318.0, "1-4-5", 4.3),
            inject(376.0, "1-2-5", 5.4),
            inject(445.0, "1-3-5", 2.8),
            inject(492.0, "1-4-5", 4.4),
            inject(563.0, "1-2-5", 6.55),
            inject(563.0, "1-3-5", 5.2),
            inject(563.0, "1-4-5", 3.6),
        ],
        stream_start_s: 200.0,
        duration_s: 650.0,
        seed: 7,
        interaction_enabled: true,
    }
}

/// A random fan of 1–3 branches, each one or two switches long, with
/// random link latencies (and optionally jitter). At most six switches.
pub fn random_branch_topology(rng: &mut ChaCha8Rng, jitter_ms: f64) -> Topology {
    let branches = 1 + gen_usize(rng, 3);
    let mut switches = Vec::new();
    let mut links = vec![];
    for b in 0..branches {
        let chain_len = 1 + gen_usize(rng, 2);
        let mut previous = "tx".to_string();
        for i in 0..chain_len {
            let switch = format!("s{b}{i}");
            links.push(link(
                &previous,
                &switch,
                gen_f64(rng, 0.2, 5.0),
                jitter_ms,
            ));
            switches.push(switch.clone());
            previous = switch;
        }
        links.push(link(&previous, "rx", gen_f64(rng, 0.2, 5.0), jitter_ms));
    }
    Topology {
        switches: switches.into_iter().collect(),
        hosts: ["tx", "rx"].iter().map(|s| s.to_string()).collect(),
        links,
    }
}

/// A small random scenario over a random branch topology, with a sorted
/// random injection schedule. Deterministic in the generator seed.
pub fn random_scenario(rng: &mut ChaCha8Rng, jitter_ms: f64) -> Scenario {
    let topology = random_branch_topology(rng, jitter_ms);
    let paths = topology.enumerate_paths("tx", "rx").unwrap();
    let duration_s = 40.0 + gen_f64(rng, 0.0, 20.0);
    let mut at_s = 5.0;
    let mut injections = Vec::new();
    for _ in 0..gen_usize(rng, 5) {
        at_s += gen_f64(rng, 1.0, 8.0);
        if at_s > duration_s {
            break;
        }
        let path = &paths[gen_usize(rng, paths.len())];
        injections.push(LatencyInjection {
            at: SimTime::from_secs_f64(at_s),
            target: InjectionTarget::Path(path.path_id.clone()),
            added_latency_ms: gen_f64(rng, -2.0, 8.0),
        });
    }
    Scenario {
        topology,
        src_host: "tx".into(),
        dst_host: "rx".into(),
        probe_period_s: 0.5,
        probe_window: 3,
        controller: ControllerConfig {
            min_dwell_s: 2.0,
            ..ControllerConfig::default()
        },
        transmitter: EndpointSpec {
            host: "tx".into(),
            d0_ms: gen_f64(rng, 0.0, 1.0),
            configs: audio_configs(),
        },
        receiver: EndpointSpec {
            host: "rx".into(),
            d0_ms: gen_f64(rng, 0.0, 1.0),
            configs: audio_configs(),
        },
        switch_processing_ms: BTreeMap::new(),
        injections,
        stream_start_s: 2.0,
        duration_s,
        seed: rng.next_u64(),
        interaction_enabled: true,
    }
}
