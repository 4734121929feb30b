//! Federated learning over a simulated vehicular network.
//!
//! The crate bundles a Mamdani fuzzy evaluator for scoring participants,
//! FedAvg training primitives, a ring-road mobility model, a cellular/DSRC
//! timing model, the three client-selection schemes, closed-form
//! communication-overhead analytics and a deterministic round simulator.

pub mod fl;
pub mod fuzzy;
pub mod mobility;
pub mod net;
pub mod numeric;
pub mod overhead;
pub mod selection;
pub mod sim;
