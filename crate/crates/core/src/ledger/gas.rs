use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::LedgerError;
use crate::registry::call;

pub const DEFAULT_BLOCK_GAS_LIMIT: u64 = 12_000_000;
pub const DEFAULT_BLOCK_INTERVAL: u64 = 15;
pub const DEFAULT_GENESIS_TIME: u64 = 1_607_426_700;
pub const DEFAULT_MONITOR_GAS: u64 = 140_000;

/// One representative gas figure per operation, taken from the reference
/// testnet receipts. Where two receipts of the same operation differ, the
/// larger one is used; `monitor` uses the 140 000 figure the throughput
/// analysis is built on.
pub fn default_op_gas() -> BTreeMap<String, u64> {
    [
        (call::DEPLOY, 2_327_309),
        (call::REGISTER_DOCTOR, 43_798),
        // No published receipt; same shape as registerDoctor.
        (call::REGISTER_MEDICAL_UNIT_ADMIN, 43_798),
        (call::REGISTER_BENEFICIARY, 84_808),
        (call::REGISTER_TRACKING_RULE, 216_219),
        (call::REGISTER_FREEZER_AND_RULES, 46_701),
        (call::REGISTER_VACCINE_LOT, 64_255),
        (call::UPDATE_VACCINE_FREEZER, 68_106),
        (call::MONITOR, DEFAULT_MONITOR_GAS),
        (call::SIGN_ADMINISTERED_VACCINE, 74_528),
        (call::REGISTER_SIDE_EFFECT, 48_073),
    ]
    .into_iter()
    .map(|(op, gas)| (op.to_string(), gas))
    .collect()
}

/// Per-operation gas, block gas limit and mining interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GasSchedule {
    pub op_gas: BTreeMap<String, u64>,
    pub block_gas_limit: u64,
    pub block_interval: u64,
}

impl Default for GasSchedule {
    fn default() -> Self {
        Self {
            op_gas: default_op_gas(),
            block_gas_limit: DEFAULT_BLOCK_GAS_LIMIT,
            block_interval: DEFAULT_BLOCK_INTERVAL,
        }
    }
}

impl GasSchedule {
    pub fn gas_for(&self, op: &str) -> Option<u64> {
        self.op_gas.get(op).copied()
    }

    pub fn with_op_gas(mut self, op: &str, gas: u64) -> Self {
        self.op_gas.insert(op.to_string(), gas);
        self
    }

    pub fn validate(&self) -> Result<(), LedgerError> {
        for op in call::MUTATING_OPS {
            if !self.op_gas.contains_key(op) {
                return Err(LedgerError::Config(format!("no gas entry for `{op}`")));
            }
        }
        if let Some((op, gas)) = self.op_gas.iter().find(|(_, gas)| **gas == 0) {
            return Err(LedgerError::Config(format!("gas for `{op}` is {gas}")));
        }
        let max = self.op_gas.values().copied().max().unwrap_or(0);
        if self.block_gas_limit <= max {
            return Err(LedgerError::Config(format!(
                "block gas limit {} does not exceed the largest operation cost {max}",
                self.block_gas_limit
            )));
        }
        if self.block_interval == 0 {
            return Err(LedgerError::Config("block interval must be positive".into()));
        }
        Ok(())
    }
}

/// Genesis parameters. Every field may be omitted from the JSON file, in
/// which case the default applies; `gasSchedule` entries are merged over the
/// defaults one operation at a time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GenesisConfig {
    pub genesis_time: u64,
    pub block_gas_limit: u64,
    pub block_interval: u64,
    pub gas_schedule: BTreeMap<String, u64>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct GenesisFile {
    genesis_time: Option<u64>,
    block_gas_limit: Option<u64>,
    block_interval: Option<u64>,
    #[serde(default)]
    gas_schedule: BTreeMap<String, u64>,
}

impl Default for GenesisConfig {
    fn default() -> Self {
        let gas = GasSchedule::default();
        Self {
            genesis_time: DEFAULT_GENESIS_TIME,
            block_gas_limit: gas.block_gas_limit,
            block_interval: gas.block_interval,
            gas_schedule: gas.op_gas,
        }
    }
}

impl GenesisConfig {
    pub fn schedule(&self) -> GasSchedule {
        GasSchedule {
            op_gas: self.gas_schedule.clone(),
            block_gas_limit: self.block_gas_limit,
            block_interval: self.block_interval,
        }
    }

    pub fn with_schedule(mut self, schedule: &GasSchedule) -> Self {
        self.gas_schedule = schedule.op_gas.clone();
        self.block_gas_limit = schedule.block_gas_limit;
        self.block_interval = schedule.block_interval;
        self
    }

    pub fn from_json(raw: &str) -> Result<Self, LedgerError> {
        let file: GenesisFile = serde_json::from_str(raw).map_err(|e| LedgerError::Config(e.to_string()))?;
        let mut cfg = Self::default();
        if let Some(t) = file.genesis_time {
            cfg.genesis_time = t;
        }
        if let Some(l) = file.block_gas_limit {
            cfg.block_gas_limit = l;
        }
        if let Some(i) = file.block_interval {
            cfg.block_interval = i;
        }
        cfg.gas_schedule.extend(file.gas_schedule);
        cfg.schedule().validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LedgerError> {
        let raw = fs::read_to_string(path).map_err(|e| LedgerError::io(path, e))?;
        Self::from_json(&raw)
    }

    pub fn save(&self, path: &Path) -> Result<(), LedgerError> {
        let json = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(path, json + "\n").map_err(|e| LedgerError::io(path, e))
    }
}
