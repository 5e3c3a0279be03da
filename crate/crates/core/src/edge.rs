//! Edge pre-processing: per reporting interval, reduce each sensor stream to
//! its minimum and maximum and submit only those as monitor transactions.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::LedgerError;
use crate::ledger::{sign_transaction, GasSchedule, Keypair, SignedTransaction};
use crate::primitives::{Address, Hash32};
use crate::registry::RegistryOp;

pub const DEFAULT_INTERVAL_SECS: u64 = 3600;

#[derive(Debug, Error)]
pub enum EdgeError {
    #[error("reading at {read_at} precedes interval start {interval_start}")]
    OutOfOrder { read_at: u64, interval_start: u64 },
    #[error("no keypair for freezer {0}")]
    MissingKey(Address),
    #[error("signing failed: {0}")]
    Signing(#[from] LedgerError),
    #[error("csv line {line}: {msg}")]
    Csv { line: u64, msg: String },
    #[error("interval length must be positive")]
    ZeroInterval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SensorReading {
    pub freezer: Address,
    pub lot_id: Hash32,
    pub rule: String,
    pub value: i32,
    pub read_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StreamKey {
    pub freezer: Address,
    pub lot_id: Hash32,
    pub rule: String,
}

impl From<&SensorReading> for StreamKey {
    fn from(r: &SensorReading) -> Self {
        Self {
            freezer: r.freezer,
            lot_id: r.lot_id,
            rule: r.rule.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalBuffer {
    pub interval_start: u64,
    pub interval_length: u64,
    pub observed_min: i32,
    pub observed_max: i32,
    pub count: u64,
}

impl IntervalBuffer {
    fn starting_at(read_at: u64, interval_length: u64) -> Self {
        Self {
            interval_start: read_at - read_at % interval_length,
            interval_length,
            observed_min: i32::MAX,
            observed_max: i32::MIN,
            count: 0,
        }
    }

    fn interval_end(&self) -> u64 {
        self.interval_start + self.interval_length
    }

    fn observe(&mut self, value: i32) {
        self.observed_min = self.observed_min.min(value);
        self.observed_max = self.observed_max.max(value);
        self.count += 1;
    }

    /// Values to submit: nothing, one value when min equals max, else min then max.
    pub fn extremes(&self) -> Vec<i32> {
        match self.count {
            0 => Vec::new(),
            _ if self.observed_min == self.observed_max => vec![self.observed_min],
            _ => vec![self.observed_min, self.observed_max],
        }
    }

    fn reset(&mut self, interval_start: u64) {
        self.interval_start = interval_start;
        self.observed_min = i32::MAX;
        self.observed_max = i32::MIN;
        self.count = 0;
    }
}

/// Signs monitor transactions on behalf of freezers.
pub trait MonitorSigner {
    fn sign_monitor(
        &mut self,
        freezer: &Address,
        lot: Hash32,
        rule: &str,
        value: i32,
    ) -> Result<SignedTransaction, EdgeError>;
}

/// Signer over a set of freezer keys with locally tracked nonces.
#[derive(Debug)]
pub struct KeyringSigner {
    keys: HashMap<Address, Keypair>,
    nonces: HashMap<Address, u64>,
    contract: Address,
    schedule: GasSchedule,
}

impl KeyringSigner {
    pub fn new(contract: Address, schedule: GasSchedule) -> Self {
        Self {
            keys: HashMap::new(),
            nonces: HashMap::new(),
            contract,
            schedule,
        }
    }

    pub fn add_key(&mut self, kp: Keypair, next_nonce: u64) {
        self.nonces.insert(kp.address(), next_nonce);
        self.keys.insert(kp.address(), kp);
    }
}

impl MonitorSigner for KeyringSigner {
    fn sign_monitor(
        &mut self,
        freezer: &Address,
        lot: Hash32,
        rule: &str,
        value: i32,
    ) -> Result<SignedTransaction, EdgeError> {
        let kp = self.keys.get(freezer).ok_or(EdgeError::MissingKey(*freezer))?;
        let nonce = self.nonces.entry(*freezer).or_insert(0);
        let op = RegistryOp::Monitor {
            lot,
            rule: rule.to_string(),
            value,
        };
        let tx = sign_transaction(kp, self.contract, op.name(), op.encode_args(), *nonce, &self.schedule)?;
        *nonce += 1;
        Ok(tx)
    }
}

/// One buffer per (freezer, lot, rule) stream.
#[derive(Debug)]
pub struct EdgeAggregator {
    interval_length: u64,
    buffers: BTreeMap<StreamKey, IntervalBuffer>,
}

impl Default for EdgeAggregator {
    fn default() -> Self {
        Self::new(DEFAULT_INTERVAL_SECS).expect("positive default")
    }
}

impl EdgeAggregator {
    pub fn new(interval_length: u64) -> Result<Self, EdgeError> {
        if interval_length == 0 {
            return Err(EdgeError::ZeroInterval);
        }
        Ok(Self {
            interval_length,
            buffers: BTreeMap::new(),
        })
    }

    pub fn buffer(&self, key: &StreamKey) -> Option<&IntervalBuffer> {
        self.buffers.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &StreamKey> {
        self.buffers.keys()
    }

    /// Adds a reading. A reading past the current interval first flushes it;
    /// the returned transactions come from that flush.
    pub fn ingest(
        &mut self,
        reading: &SensorReading,
        signer: &mut dyn MonitorSigner,
    ) -> Result<Vec<SignedTransaction>, EdgeError> {
        let key = StreamKey::from(reading);
        let mut flushed = Vec::new();
        if let Some(buf) = self.buffers.get(&key) {
            if reading.read_at < buf.interval_start {
                return Err(EdgeError::OutOfOrder {
                    read_at: reading.read_at,
                    interval_start: buf.interval_start,
                });
            }
            if reading.read_at >= buf.interval_end() {
                flushed = self.flush(&key, signer)?;
                let buf = self.buffers.get_mut(&key).expect("present");
                buf.reset(reading.read_at - reading.read_at % self.interval_length);
            }
        }
        self.buffers
            .entry(key)
            .or_insert_with(|| IntervalBuffer::starting_at(reading.read_at, self.interval_length))
            .observe(reading.value);
        Ok(flushed)
    }

    /// Emits the buffered extremes and opens the next interval. On a signing
    /// failure the buffer is left as it was.
    pub fn flush(
        &mut self,
        key: &StreamKey,
        signer: &mut dyn MonitorSigner,
    ) -> Result<Vec<SignedTransaction>, EdgeError> {
        let Some(buf) = self.buffers.get_mut(key) else {
            return Ok(Vec::new());
        };
        let txs = buf
            .extremes()
            .into_iter()
            .map(|v| signer.sign_monitor(&key.freezer, key.lot_id, &key.rule, v))
            .collect::<Result<Vec<_>, _>>()?;
        let next = buf.interval_end();
        buf.reset(next);
        Ok(txs)
    }

    pub fn flush_all(&mut self, signer: &mut dyn MonitorSigner) -> Result<Vec<SignedTransaction>, EdgeError> {
        let keys: Vec<StreamKey> = self.buffers.keys().cloned().collect();
        let mut out = Vec::new();
        for key in keys {
            out.extend(self.flush(&key, signer)?);
        }
        Ok(out)
    }
}

/// Parses `freezer,lotId,rule,value,readAt` lines. A first line whose first
/// column is literally `freezer` is treated as a header.
pub fn parse_readings_csv(input: impl Read) -> Result<Vec<SensorReading>, EdgeError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 1;
        let err = |msg: String| EdgeError::Csv { line, msg };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        if i == 0 && rec.get(0) == Some("freezer") {
            continue;
        }
        if rec.len() != 5 {
            return Err(err(format!("expected 5 columns, found {}", rec.len())));
        }
        out.push(SensorReading {
            freezer: rec[0].parse().map_err(|e| err(format!("freezer: {e}")))?,
            lot_id: rec[1].parse().map_err(|e| err(format!("lotId: {e}")))?,
            rule: rec[2].to_string(),
            value: rec[3].parse().map_err(|e| err(format!("value: {e}")))?,
            read_at: rec[4].parse().map_err(|e| err(format!("readAt: {e}")))?,
        });
    }
    Ok(out)
}
