//! Deterministic single-chain ledger: keys, signed transactions, a FIFO
//! mempool, gas-limited block mining on a simulated clock, receipts,
//! read-only calls and tamper-evident persistence.

mod block;
mod chain;
mod gas;
mod keys;
pub mod store;
mod tx;

pub use block::{compute_block_hash, Block, Receipt, ReceiptStatus};
pub use chain::{Ledger, Rejection};
pub use gas::{
    default_op_gas, GasSchedule, GenesisConfig, DEFAULT_BLOCK_GAS_LIMIT, DEFAULT_BLOCK_INTERVAL, DEFAULT_GENESIS_TIME,
    DEFAULT_MONITOR_GAS,
};
pub use keys::{derive_address, verify_signature, Keypair};
pub use store::ChainStatus;
pub use tx::{sign_transaction, signing_payload, SignedTransaction, DEPLOY_SENTINEL};
