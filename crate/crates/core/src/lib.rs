//! Deterministic mini-ledger hosting a vaccine cold-chain registry contract,
//! with off-chain identity tooling, edge aggregation of sensor streams and a
//! scenario replay / throughput simulator.

pub mod edge;
pub mod error;
pub mod identity;
pub mod ledger;
pub mod primitives;
pub mod registry;
pub mod scenario;

pub use error::LedgerError;
pub use primitives::{keccak256, Address, Hash32};
