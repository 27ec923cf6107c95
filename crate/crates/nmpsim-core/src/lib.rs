//! Deterministic discrete-event core for an SDN-assisted networked music
//! performance (NMP) system.
//!
//! The crate models the full control loop of such a system over virtual
//! time: end hosts stream fixed-cadence audio frames across a switched
//! fabric, probe every path with UDP-style echo packets, and report
//! round-trip measurements to a controller that reroutes the audio flow
//! when a faster path exists and renegotiates the endpoints' audio
//! configuration when no path can keep the mouth-to-ear delay under the
//! ensemble performance threshold.
//!
//! Everything here is pure computation over a seeded virtual clock; file
//! formats, CSV reporting and the CLI live in the companion `nmpsim-cli`
//! crate. The crate is `no_std` (with `alloc`) so the engine can be
//! embedded anywhere a deterministic replay is useful.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod controller;
pub mod delay;
pub mod endpoints;
pub mod netsim;
pub mod probing;
pub mod rng;
pub mod sim;
pub mod time;

pub use controller::{Controller, ControllerConfig, TransitionAction, TransitionEvent};
pub use delay::{AudioConfig, DelayBreakdown, SoundcardProfile};
pub use netsim::{Fabric, FlowRule, LatencyInjection, PathId, PathRoute, Topology};
pub use probing::{ProbePacket, RttDivisor, RttSample};
pub use sim::{compare_modes, run_scenario, CompareReport, RunReport, Scenario};
pub use time::SimTime;
