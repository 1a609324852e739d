#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Desk-scale SCADA security co-simulation.
//!
//! A DNP3 master/outstation data path runs over a deterministic
//! discrete-event IP network and controls a quasi-steady DC power-flow
//! grid. Adversaries (ARP-poisoning man-in-the-middle with false
//! command/data injection, ICMP flooding) act on that path while a
//! rule-based IDS watches router taps. Every run is seeded and
//! reproducible bit-for-bit.
//!
//! Module map:
//!
//! - [`dnp3`]: link frames, per-block CRCs and application fragments.
//! - [`grid`]: DC power flow, LODF screening, actuation and ramping.
//! - [`netsim`]: links, queues, ARP, ICMP and a miniature reliable transport.
//! - [`scada`]: master and outstation endpoints plus automation policies.
//! - [`attack`]: MiTM proxy, flood driver and attempt analytics.
//! - [`ids`]: signature and rate rules emitting alerts.
//! - [`harness`]: scenarios, runs, sweeps, telemetry and reports.

pub mod attack;
pub mod dnp3;
pub mod grid;
pub mod harness;
pub mod ids;
pub mod netsim;
pub mod scada;
