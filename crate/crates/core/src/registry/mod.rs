//! The vaccine registry contract: actor registration, safe-handling rules,
//! freezer and lot lifecycle, monitoring, two-signature administration and
//! side-effect reporting.

pub mod call;
mod state;

pub use call::{RegistryOp, RegistryQuery};
pub use state::{
    Event, ExecContext, MonitoredRecord, RegistryState, RevertReason, RoleModifier, SafeHandlingRule, SignerRole,
    BROKEN_RULE_EVENT, MAX_SIDE_EFFECT_LEN,
};

use crate::primitives::{keccak256, Address, CanonicalWriter};

/// Address of the contract created by `deployer`'s transaction with `nonce`.
pub fn contract_address(deployer: &Address, nonce: u64) -> Address {
    let mut w = CanonicalWriter::new();
    w.field(deployer.as_bytes()).u64(nonce);
    let digest = keccak256(w.as_bytes());
    Address::from_slice(&digest.as_bytes()[12..]).expect("20-byte suffix")
}

/// Decodes and applies a mined invocation.
pub fn execute(state: &mut RegistryState, ctx: ExecContext, op: &str, args: &[u8]) -> Result<Vec<Event>, RevertReason> {
    let decoded = match RegistryOp::decode(op, args) {
        Some(decoded) => decoded,
        None if call::MUTATING_OPS.contains(&op) => return Err(RevertReason::MalformedArgs),
        None => return Err(RevertReason::UnknownOp),
    };
    state.apply(ctx, &decoded)
}
