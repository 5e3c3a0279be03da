use serde::{Deserialize, Serialize};

use crate::primitives::{keccak256, Address, CanonicalWriter, Hash32};
use crate::registry::{Event, RevertReason};

use super::tx::SignedTransaction;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Block {
    pub number: u64,
    pub parent_hash: Hash32,
    pub timestamp: u64,
    pub gas_used: u64,
    pub block_hash: Hash32,
    pub transactions: Vec<SignedTransaction>,
}

pub fn compute_block_hash<'a>(
    number: u64,
    parent_hash: &Hash32,
    timestamp: u64,
    tx_hashes: impl IntoIterator<Item = &'a Hash32>,
) -> Hash32 {
    let mut w = CanonicalWriter::new();
    w.u64(number).field(parent_hash.as_bytes()).u64(timestamp);
    for h in tx_hashes {
        w.field(h.as_bytes());
    }
    keccak256(w.as_bytes())
}

impl Block {
    pub fn new(number: u64, parent_hash: Hash32, timestamp: u64, transactions: Vec<SignedTransaction>) -> Self {
        let gas_used = transactions.iter().map(|t| t.gas).sum();
        let block_hash = compute_block_hash(number, &parent_hash, timestamp, transactions.iter().map(|t| &t.tx_hash));
        Self {
            number,
            parent_hash,
            timestamp,
            gas_used,
            block_hash,
            transactions,
        }
    }

    pub fn compute_hash(&self) -> Hash32 {
        compute_block_hash(
            self.number,
            &self.parent_hash,
            self.timestamp,
            self.transactions.iter().map(|t| &t.tx_hash),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "reason", rename_all = "lowercase")]
pub enum ReceiptStatus {
    Success,
    Reverted(RevertReason),
}

impl ReceiptStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, ReceiptStatus::Success)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Receipt {
    pub tx_hash: Hash32,
    pub block_number: u64,
    pub gas_used: u64,
    pub status: ReceiptStatus,
    pub events: Vec<Event>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub contract_address: Option<Address>,
}
