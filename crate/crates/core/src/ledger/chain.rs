use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

use crate::error::LedgerError;
use crate::primitives::{keccak256, Address, Hash32};
use crate::registry::{self, call, ExecContext, MonitoredRecord, RegistryQuery, RegistryState, RevertReason};

use super::block::{Block, Receipt, ReceiptStatus};
use super::gas::{GasSchedule, GenesisConfig};
use super::store::{self, ChainStatus};
use super::tx::{SignedTransaction, DEPLOY_SENTINEL};

/// Why a transaction was refused at submission. Nothing is queued and no
/// state changes.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Rejection {
    #[error("bad-signature")]
    BadSignature,
    #[error("bad-hash")]
    BadHash,
    #[error("unknown-op: {op}")]
    UnknownOp { op: String },
    #[error("oversized: gas {gas} exceeds block limit {limit}")]
    Oversized { gas: u64, limit: u64 },
    #[error("gas-mismatch: expected {expected}, found {found}")]
    GasMismatch { expected: u64, found: u64 },
    #[error("stale-nonce: expected {expected}, found {found}")]
    StaleNonce { expected: u64, found: u64 },
    #[error("nonce-gap: expected {expected}, found {found}")]
    NonceGap { expected: u64, found: u64 },
}

#[derive(Debug, Default)]
struct Mempool {
    queue: VecDeque<SignedTransaction>,
    /// Next nonce per sender counting queued transactions.
    pending_nonce: HashMap<Address, u64>,
}

/// Single-chain, single-miner ledger hosting registry contracts.
///
/// Submission takes `&self` and serializes on the mempool lock; mining takes
/// `&mut self`, so reads can never interleave with block execution.
#[derive(Debug)]
pub struct Ledger {
    config: GenesisConfig,
    schedule: GasSchedule,
    blocks: Vec<Block>,
    pool: Mutex<Mempool>,
    mined_nonce: BTreeMap<Address, u64>,
    receipts: HashMap<Hash32, Receipt>,
    contracts: BTreeMap<Address, RegistryState>,
}

impl Ledger {
    pub fn new(config: GenesisConfig) -> Result<Self, LedgerError> {
        let schedule = config.schedule();
        schedule.validate()?;
        let genesis = Block::new(0, Hash32::ZERO, config.genesis_time, Vec::new());
        Ok(Self {
            config,
            schedule,
            blocks: vec![genesis],
            pool: Mutex::new(Mempool::default()),
            mined_nonce: BTreeMap::new(),
            receipts: HashMap::new(),
            contracts: BTreeMap::new(),
        })
    }

    /// Rebuilds a ledger by re-executing already-verified blocks.
    pub fn from_blocks(config: GenesisConfig, blocks: Vec<Block>) -> Result<Self, LedgerError> {
        let mut ledger = Self::new(config)?;
        let mut iter = blocks.into_iter();
        match iter.next() {
            Some(genesis) if genesis == ledger.blocks[0] => {}
            _ => return Err(LedgerError::Corrupt(0)),
        }
        for block in iter {
            for tx in &block.transactions {
                let receipt = ledger.execute(tx, block.number, block.timestamp);
                ledger.receipts.insert(tx.tx_hash, receipt);
            }
            ledger.blocks.push(block);
        }
        Ok(ledger)
    }

    /// Verifies a persisted chain file and rebuilds state from it.
    pub fn open(config: GenesisConfig, path: &std::path::Path) -> Result<Self, LedgerError> {
        let blocks = store::load_chain(path, &config)?;
        Self::from_blocks(config, blocks)
    }

    pub fn config(&self) -> &GenesisConfig {
        &self.config
    }

    pub fn schedule(&self) -> &GasSchedule {
        &self.schedule
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn head(&self) -> &Block {
        self.blocks.last().expect("genesis always present")
    }

    pub fn height(&self) -> u64 {
        self.head().number
    }

    pub fn next_block_timestamp(&self) -> u64 {
        self.config.genesis_time + (self.height() + 1) * self.config.block_interval
    }

    /// Nonce the sender's next submission must carry.
    pub fn next_nonce(&self, addr: &Address) -> u64 {
        let pool = self.pool.lock().expect("mempool lock");
        pool.pending_nonce
            .get(addr)
            .copied()
            .unwrap_or_else(|| self.mined_nonce.get(addr).copied().unwrap_or(0))
    }

    pub fn submit(&self, tx: SignedTransaction) -> Result<Hash32, Rejection> {
        if !tx.signature_valid() {
            return Err(Rejection::BadSignature);
        }
        if !tx.hash_valid() {
            return Err(Rejection::BadHash);
        }
        let expected_gas = self
            .schedule
            .gas_for(&tx.op)
            .ok_or_else(|| Rejection::UnknownOp { op: tx.op.clone() })?;
        if tx.gas > self.schedule.block_gas_limit {
            return Err(Rejection::Oversized {
                gas: tx.gas,
                limit: self.schedule.block_gas_limit,
            });
        }
        if tx.gas != expected_gas {
            return Err(Rejection::GasMismatch {
                expected: expected_gas,
                found: tx.gas,
            });
        }
        let mut pool = self.pool.lock().expect("mempool lock");
        let expected = pool
            .pending_nonce
            .get(&tx.from)
            .copied()
            .unwrap_or_else(|| self.mined_nonce.get(&tx.from).copied().unwrap_or(0));
        if tx.nonce < expected {
            return Err(Rejection::StaleNonce {
                expected,
                found: tx.nonce,
            });
        }
        if tx.nonce > expected {
            return Err(Rejection::NonceGap {
                expected,
                found: tx.nonce,
            });
        }
        pool.pending_nonce.insert(tx.from, expected + 1);
        let hash = tx.tx_hash;
        pool.queue.push_back(tx);
        Ok(hash)
    }

    pub fn mempool(&self) -> Vec<SignedTransaction> {
        self.pool.lock().expect("mempool lock").queue.iter().cloned().collect()
    }

    pub fn mempool_len(&self) -> usize {
        self.pool.lock().expect("mempool lock").queue.len()
    }

    /// Packs the mempool front-to-back while the running gas total fits the
    /// block limit, executes the packed transactions in order and appends the
    /// block. The first transaction that does not fit stays queued.
    pub fn mine_block(&mut self) -> &Block {
        let limit = self.schedule.block_gas_limit;
        let pool = self.pool.get_mut().expect("mempool lock");
        let mut packed = Vec::new();
        let mut gas = 0u64;
        while let Some(front) = pool.queue.front() {
            if gas + front.gas > limit {
                break;
            }
            gas += front.gas;
            packed.extend(pool.queue.pop_front());
        }

        let number = self.height() + 1;
        let timestamp = self.next_block_timestamp();
        for tx in &packed {
            let receipt = self.execute(tx, number, timestamp);
            self.receipts.insert(tx.tx_hash, receipt);
        }
        let block = Block::new(number, self.head().block_hash, timestamp, packed);
        self.blocks.push(block);
        self.head()
    }

    /// Mines until the mempool is empty; returns the number of blocks mined.
    pub fn mine_until_empty(&mut self) -> u64 {
        let mut mined = 0;
        while self.mempool_len() > 0 {
            self.mine_block();
            mined += 1;
        }
        mined
    }

    /// Mines (possibly empty) blocks until the next block's timestamp is at least `t`.
    pub fn advance_to(&mut self, t: u64) {
        while self.next_block_timestamp() < t {
            self.mine_block();
        }
    }

    fn execute(&mut self, tx: &SignedTransaction, block_number: u64, now: u64) -> Receipt {
        *self.mined_nonce.entry(tx.from).or_insert(0) += 1;
        let mut contract_address = None;
        let outcome = if tx.is_deploy() {
            if tx.contract != DEPLOY_SENTINEL || !tx.args.is_empty() {
                Err(RevertReason::MalformedArgs)
            } else {
                let addr = registry::contract_address(&tx.from, tx.nonce);
                self.contracts.insert(addr, RegistryState::new(tx.from));
                contract_address = Some(addr);
                Ok(Vec::new())
            }
        } else {
            match self.contracts.get_mut(&tx.contract) {
                None => Err(RevertReason::UnknownContract),
                Some(state) => registry::execute(state, ExecContext { sender: tx.from, now }, &tx.op, &tx.args),
            }
        };
        let (status, events) = match outcome {
            Ok(events) => (ReceiptStatus::Success, events),
            Err(reason) => (ReceiptStatus::Reverted(reason), Vec::new()),
        };
        Receipt {
            tx_hash: tx.tx_hash,
            block_number,
            gas_used: tx.gas,
            status,
            events,
            contract_address,
        }
    }

    pub fn receipt(&self, tx_hash: &Hash32) -> Option<&Receipt> {
        self.receipts.get(tx_hash)
    }

    /// Read-only evaluation against current state. `from` is accepted for
    /// interface parity with mined calls; queries do not depend on it.
    pub fn execute_call(
        &self,
        _from: &Address,
        contract: &Address,
        op: &str,
        args: &[u8],
    ) -> Result<Vec<u8>, LedgerError> {
        let state = self
            .contracts
            .get(contract)
            .ok_or(LedgerError::UnknownContract(*contract))?;
        let query = RegistryQuery::decode(op, args).ok_or_else(|| {
            LedgerError::CallFailed(if call::QUERY_OPS.contains(&op) {
                RevertReason::MalformedArgs
            } else {
                RevertReason::UnknownOp
            })
        })?;
        Ok(state.query(&query))
    }

    pub fn check_beneficiary_identity(
        &self,
        contract: &Address,
        hash_pi: Hash32,
        hash_secret: Hash32,
        beneficiary: Address,
    ) -> Result<bool, LedgerError> {
        let q = RegistryQuery::CheckBeneficiaryIdentity {
            hash_pi,
            hash_secret,
            beneficiary,
        };
        let out = self.execute_call(&beneficiary, contract, q.name(), &q.encode_args())?;
        Ok(call::decode_bool(&out).expect("well-formed bool result"))
    }

    pub fn lot_history(&self, contract: &Address, lot: Hash32) -> Result<Vec<MonitoredRecord>, LedgerError> {
        let q = RegistryQuery::CheckVaccineLotHistory { lot };
        let out = self.execute_call(&Address::ZERO, contract, q.name(), &q.encode_args())?;
        Ok(call::decode_history(&out).expect("well-formed history result"))
    }

    pub fn contract(&self, addr: &Address) -> Option<&RegistryState> {
        self.contracts.get(addr)
    }

    pub fn contracts(&self) -> impl Iterator<Item = (&Address, &RegistryState)> {
        self.contracts.iter()
    }

    /// Digest of all contract state and mined nonces.
    pub fn state_digest(&self) -> Hash32 {
        #[derive(Serialize)]
        struct View<'a> {
            contracts: &'a BTreeMap<Address, RegistryState>,
            nonces: &'a BTreeMap<Address, u64>,
        }
        let bytes = serde_json::to_vec(&View {
            contracts: &self.contracts,
            nonces: &self.mined_nonce,
        })
        .expect("state serializes");
        keccak256(&bytes)
    }

    pub fn encode_chain(&self) -> Vec<u8> {
        store::encode_chain(&self.blocks)
    }

    pub fn verify_chain(&self) -> ChainStatus {
        store::verify_bytes(&self.encode_chain(), &self.config)
    }
}
