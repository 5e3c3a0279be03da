//! Chain persistence: one canonical-JSON block per line.
//!
//! Verification is byte-exact. Each line must parse, re-serialize to exactly
//! the same bytes, and satisfy every hash, linkage, clock, gas and nonce rule.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::LedgerError;
use crate::primitives::{Address, Hash32};

use super::block::Block;
use super::gas::GenesisConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum ChainStatus {
    Ok,
    Corrupt { block: u64 },
}

pub fn encode_block(block: &Block) -> String {
    serde_json::to_string(block).expect("block serializes")
}

pub fn encode_chain(blocks: &[Block]) -> Vec<u8> {
    let mut out = Vec::new();
    for b in blocks {
        out.extend_from_slice(encode_block(b).as_bytes());
        out.push(b'\n');
    }
    out
}

pub fn write_chain(path: &Path, blocks: &[Block]) -> Result<(), LedgerError> {
    fs::write(path, encode_chain(blocks)).map_err(|e| LedgerError::io(path, e))
}

pub fn append_blocks(path: &Path, blocks: &[Block]) -> Result<(), LedgerError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| LedgerError::io(path, e))?;
    f.write_all(&encode_chain(blocks)).map_err(|e| LedgerError::io(path, e))
}

/// Verifies raw chain bytes and returns the parsed blocks when intact.
pub fn parse_verified(bytes: &[u8], config: &GenesisConfig) -> Result<Vec<Block>, u64> {
    let mut pieces: Vec<&[u8]> = bytes.split(|b| *b == b'\n').collect();
    // A well-formed file ends with a newline, so the final piece is empty.
    let tail = pieces.pop().unwrap_or_default();
    if !tail.is_empty() {
        return Err(pieces.len() as u64);
    }
    if pieces.is_empty() {
        return Err(0);
    }
    let schedule = config.schedule();
    let mut blocks = Vec::with_capacity(pieces.len());
    let mut parent = Hash32::ZERO;
    let mut nonces: HashMap<Address, u64> = HashMap::new();
    for (i, line) in pieces.iter().enumerate() {
        let number = i as u64;
        let block = check_line(line, number, &parent, config, &schedule, &mut nonces).ok_or(number)?;
        parent = block.block_hash;
        blocks.push(block);
    }
    Ok(blocks)
}

fn check_line(
    line: &[u8],
    number: u64,
    parent: &Hash32,
    config: &GenesisConfig,
    schedule: &super::gas::GasSchedule,
    nonces: &mut HashMap<Address, u64>,
) -> Option<Block> {
    let block: Block = serde_json::from_slice(line).ok()?;
    if encode_block(&block).as_bytes() != line {
        return None;
    }
    let timestamp = number
        .checked_mul(config.block_interval)?
        .checked_add(config.genesis_time)?;
    if block.number != number || block.parent_hash != *parent || block.timestamp != timestamp {
        return None;
    }
    if number == 0 && !block.transactions.is_empty() {
        return None;
    }
    let mut gas: u64 = 0;
    for tx in &block.transactions {
        if !tx.hash_valid() || !tx.signature_valid() || schedule.gas_for(&tx.op) != Some(tx.gas) {
            return None;
        }
        let expected = nonces.entry(tx.from).or_insert(0);
        if tx.nonce != *expected {
            return None;
        }
        *expected += 1;
        gas = gas.checked_add(tx.gas)?;
    }
    if gas != block.gas_used || gas > config.block_gas_limit {
        return None;
    }
    (block.compute_hash() == block.block_hash).then_some(block)
}

pub fn verify_bytes(bytes: &[u8], config: &GenesisConfig) -> ChainStatus {
    match parse_verified(bytes, config) {
        Ok(_) => ChainStatus::Ok,
        Err(block) => ChainStatus::Corrupt { block },
    }
}

pub fn verify_file(path: &Path, config: &GenesisConfig) -> Result<ChainStatus, LedgerError> {
    let bytes = fs::read(path).map_err(|e| LedgerError::io(path, e))?;
    Ok(verify_bytes(&bytes, config))
}

/// Loads and verifies a persisted chain.
pub fn load_chain(path: &Path, config: &GenesisConfig) -> Result<Vec<Block>, LedgerError> {
    let bytes = fs::read(path).map_err(|e| LedgerError::io(path, e))?;
    parse_verified(&bytes, config).map_err(LedgerError::Corrupt)
}
