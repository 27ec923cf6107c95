//! Probe-estimator oracle checks over randomized topologies: exact
//! agreement with ground truth under zero jitter, a hard error bound
//! under jitter, and probe/audio rule-table disjointness.

mod common;

use common::{random_branch_topology, rng};
use nmpsim_core::netsim::{Fabric, PathId, PathRoute, Topology};
use nmpsim_core::probing::{Prober, RttDivisor};
use nmpsim_core::time::{ms_to_nanos, SimTime};

fn probe_flow(path_id: &PathId) -> String {
    format!("probe:{path_id}")
}

fn echo_flow(path_id: &PathId) -> String {
    format!("probe-echo:{path_id}")
}

fn probed_fabric(topology: Topology, seed: u64) -> (Fabric, Vec<PathRoute>) {
    let mut fabric = Fabric::new(topology, seed).unwrap();
    let paths = fabric.register_endpoints("tx", "rx").unwrap();
    for path in &paths {
        fabric.install_rules(&probe_flow(&path.path_id), &path.path_id).unwrap();
        fabric
            .install_rules_reverse(&echo_flow(&path.path_id), &path.path_id)
            .unwrap();
    }
    (fabric, paths)
}

/// One probe round through the fabric: out on the pinned forward flow,
/// echoed back on the pinned reverse flow.
fn probe_cycle(fabric: &mut Fabric, prober: &mut Prober, now: SimTime) {
    let round = prober.probe_round(now, &|_| true);
    for probe in round.probes {
        let out = fabric.send_packet(&probe_flow(&probe.path_id), now).unwrap();
        let echoed = Prober::echo(&probe).unwrap();
        let back = fabric
            .send_packet(&echo_flow(&echoed.path_id), out.deliver_at)
            .unwrap();
        prober.record_echo(&echoed, back.deliver_at).unwrap();
    }
}

/// Independent ground truth: walk the path's links in the topology and
/// sum their latencies.
fn oracle_sum_ms(topology: &Topology, path: &PathRoute) -> f64 {
    let mut total = 0.0;
    for pair in path.route_nodes("tx", "rx").windows(2) {
        total += topology.link_between(&pair[0], &pair[1]).unwrap().base_latency_ms;
    }
    total
}

#[test]
fn zero_jitter_estimates_equal_ground_truth() {
    let mut generator = rng(0x0E57);
    for trial in 0..120u64 {
        let topology = random_branch_topology(&mut generator, 0.0);
        let oracle_topology = topology.clone();
        let (mut fabric, paths) = probed_fabric(topology, trial);
        let path_ids: Vec<PathId> = paths.iter().map(|p| p.path_id.clone()).collect();
        let mut prober = Prober::new(&path_ids, 3, RttDivisor::Halved).unwrap();

        for round in 0..4u64 {
            probe_cycle(&mut fabric, &mut prober, SimTime::from_secs_f64(round as f64));
        }

        for path in &paths {
            let truth = oracle_sum_ms(&oracle_topology, path);
            // The fabric's transit agrees with the independent walk.
            assert!((fabric.base_transit_ms(&path.path_id).unwrap() - truth).abs() < 1e-12);
            // The probe estimate agrees exactly on the nanosecond grid
            // the scheduler quantizes to.
            let estimate = prober.estimate(&path.path_id).unwrap();
            let quantized_truth = ms_to_nanos(truth) as f64 / 1e6;
            assert_eq!(estimate, quantized_truth, "trial {trial} path {}", path.path_id);
            assert!((estimate - truth).abs() < 5e-7);
        }
    }
}

#[test]
fn jittered_estimate_error_is_bounded_by_links_times_jitter() {
    let jitter_ms = 0.5;
    let mut generator = rng(0xBEEF);
    for trial in 0..120u64 {
        let topology = random_branch_topology(&mut generator, jitter_ms);
        let (mut fabric, paths) = probed_fabric(topology, trial);
        let path_ids: Vec<PathId> = paths.iter().map(|p| p.path_id.clone()).collect();
        let mut prober = Prober::new(&path_ids, 3, RttDivisor::Halved).unwrap();

        for round in 0..6u64 {
            probe_cycle(&mut fabric, &mut prober, SimTime::from_secs_f64(round as f64));
        }

        for path in &paths {
            let base = fabric.base_transit_ms(&path.path_id).unwrap();
            let links = path.hops.len() + 1;
            let estimate = prober.estimate(&path.path_id).unwrap();
            // Each of the links contributes a uniform draw in
            // [0, jitter) per traversal; halving the round trip bounds
            // the estimate error by links * jitter.
            assert!(estimate >= base - 1e-9, "trial {trial}");
            assert!(
                estimate <= base + links as f64 * jitter_ms + 1e-9,
                "trial {trial}: estimate {estimate}, base {base}, links {links}"
            );
        }
    }
}

#[test]
fn probe_rules_survive_audio_reroutes() {
    let (mut fabric, paths) = probed_fabric(common::fan_topology(), 1);
    let path_ids: Vec<PathId> = paths.iter().map(|p| p.path_id.clone()).collect();

    fabric.install_rules("audio", &path_ids[1]).unwrap();
    let before: Vec<_> = path_ids
        .iter()
        .flat_map(|p| {
            let mut rules = fabric.rules_for_flow(&probe_flow(p));
            rules.extend(fabric.rules_for_flow(&echo_flow(p)));
            rules
        })
        .collect();

    // Reroute the audio flow; probe forwarding state must not move.
    fabric.install_rules("audio", &path_ids[2]).unwrap();
    let after: Vec<_> = path_ids
        .iter()
        .flat_map(|p| {
            let mut rules = fabric.rules_for_flow(&probe_flow(p));
            rules.extend(fabric.rules_for_flow(&echo_flow(p)));
            rules
        })
        .collect();
    assert_eq!(before, after);
    assert!(!before.is_empty());

    // And the audio flow really moved.
    assert_eq!(fabric.active_path("audio"), Some(&path_ids[2]));
}
