//! Mining-time estimates for freezers that each submit a minimum and a
//! maximum per reporting interval.

use serde::Serialize;
use thiserror::Error;

use crate::ledger::{sign_transaction, GasSchedule, GenesisConfig, Keypair, Ledger, DEPLOY_SENTINEL};
use crate::primitives::{keccak256, Address};
use crate::registry::{self, call, RegistryOp, SafeHandlingRule};
use crate::LedgerError;

/// Monitor transactions per freezer per reporting interval.
pub const TX_PER_FREEZER: u64 = 2;

#[derive(Debug, Error)]
pub enum ThroughputError {
    #[error("monitor gas must be positive")]
    ZeroGas,
    #[error("monitor gas {gas} exceeds the block gas limit {limit}")]
    Oversized { gas: u64, limit: u64 },
    #[error("step must be positive")]
    ZeroStep,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("simulation setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ThroughputPoint {
    pub freezer_count: u64,
    pub tx_count: u64,
    pub blocks: u64,
    pub seconds: u64,
}

/// Whole monitor transactions that fit in one block.
pub fn tx_per_block(block_gas_limit: u64, monitor_gas: u64) -> Result<u64, ThroughputError> {
    if monitor_gas == 0 {
        return Err(ThroughputError::ZeroGas);
    }
    if monitor_gas > block_gas_limit {
        return Err(ThroughputError::Oversized {
            gas: monitor_gas,
            limit: block_gas_limit,
        });
    }
    Ok(block_gas_limit / monitor_gas)
}

pub fn throughput_point(freezer_count: u64, per_block: u64, block_interval: u64) -> ThroughputPoint {
    let tx_count = TX_PER_FREEZER * freezer_count;
    let blocks = tx_count.div_ceil(per_block);
    ThroughputPoint {
        freezer_count,
        tx_count,
        blocks,
        seconds: blocks * block_interval,
    }
}

/// Points at `step, 2*step, ...` up to `max_freezers`, which is always included.
pub fn throughput_curve(
    max_freezers: u64,
    step: u64,
    monitor_gas: u64,
    schedule: &GasSchedule,
) -> Result<Vec<ThroughputPoint>, ThroughputError> {
    if step == 0 {
        return Err(ThroughputError::ZeroStep);
    }
    let per_block = tx_per_block(schedule.block_gas_limit, monitor_gas)?;
    let mut points: Vec<ThroughputPoint> = (1..=max_freezers / step)
        .map(|k| throughput_point(k * step, per_block, schedule.block_interval))
        .collect();
    if !max_freezers.is_multiple_of(step) {
        points.push(throughput_point(max_freezers, per_block, schedule.block_interval));
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulatedRun {
    pub freezer_count: u64,
    pub tx_count: u64,
    pub succeeded: u64,
    pub blocks: u64,
    pub seconds: u64,
}

/// Builds a ledger where `freezer_count` freezers each hold the same lot,
/// then submits one minimum and one maximum from each and mines them.
pub fn simulate_mining(
    freezer_count: u64,
    monitor_gas: u64,
    config: &GenesisConfig,
) -> Result<SimulatedRun, ThroughputError> {
    tx_per_block(config.block_gas_limit, monitor_gas)?;
    let schedule = config.schedule().with_op_gas(call::MONITOR, monitor_gas);
    let mut ledger = Ledger::new(config.clone().with_schedule(&schedule))?;

    let issuer = Keypair::from_label("throughput-issuer");
    let lot = keccak256(b"throughput-lot");
    let rule = SafeHandlingRule {
        name: "throughput-rule".into(),
        min_value: -100,
        max_value: 100,
        time_delta: u64::MAX,
    };
    let freezers: Vec<Keypair> = (0..freezer_count)
        .map(|i| Keypair::from_label(&format!("throughput-freezer-{i}")))
        .collect();

    let mut nonce = 0;
    let mut issue = |ledger: &Ledger, contract: Address, op: &str, args: Vec<u8>| -> Result<(), ThroughputError> {
        let tx = sign_transaction(&issuer, contract, op, args, nonce, &schedule)?;
        ledger.submit(tx).map_err(|r| ThroughputError::Setup(r.to_string()))?;
        nonce += 1;
        Ok(())
    };
    let contract = registry::contract_address(&issuer.address(), 0);
    issue(&ledger, DEPLOY_SENTINEL, call::DEPLOY, Vec::new())?;
    let setup = [
        RegistryOp::RegisterTrackingRule(rule.clone()),
        RegistryOp::RegisterVaccineLot { lot, samples: 1 },
    ];
    for op in setup {
        issue(&ledger, contract, op.name(), op.encode_args())?;
    }
    for fz in &freezers {
        let ops = [
            RegistryOp::RegisterFreezerAndRules {
                freezer: fz.address(),
                rule: rule.name.clone(),
            },
            RegistryOp::UpdateVaccineFreezer {
                lot,
                old_freezer: fz.address(),
                new_freezer: fz.address(),
            },
        ];
        for op in ops {
            issue(&ledger, contract, op.name(), op.encode_args())?;
        }
    }
    ledger.mine_until_empty();

    let mut hashes = Vec::with_capacity(freezers.len() * 2);
    for fz in &freezers {
        for (n, value) in [-10, 10].into_iter().enumerate() {
            let op = RegistryOp::Monitor {
                lot,
                rule: rule.name.clone(),
                value,
            };
            let tx = sign_transaction(fz, contract, op.name(), op.encode_args(), n as u64, &schedule)?;
            hashes.push(ledger.submit(tx).map_err(|r| ThroughputError::Setup(r.to_string()))?);
        }
    }
    let blocks = ledger.mine_until_empty();
    let succeeded = hashes
        .iter()
        .filter(|h| ledger.receipt(h).is_some_and(|r| r.status.is_success()))
        .count() as u64;
    Ok(SimulatedRun {
        freezer_count,
        tx_count: hashes.len() as u64,
        succeeded,
        blocks,
        seconds: blocks * config.block_interval,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_block_capacity() {
        assert_eq!(tx_per_block(12_000_000, 140_000).unwrap(), 85);
        assert!(matches!(tx_per_block(100, 0), Err(ThroughputError::ZeroGas)));
        assert!(matches!(tx_per_block(100, 101), Err(ThroughputError::Oversized { .. })));
        assert_eq!(tx_per_block(100, 100).unwrap(), 1);
    }

    #[test]
    fn curve_rows() {
        let schedule = GenesisConfig::from_json("{}").unwrap().schedule();
        let pts = throughput_curve(10_000, 1000, 140_000, &schedule).unwrap();
        assert_eq!(pts.len(), 10);
        assert_eq!(pts.last().unwrap().blocks, 236);
        assert_eq!(pts.last().unwrap().seconds, 3540);
        let pts = throughput_curve(25, 10, 140_000, &schedule).unwrap();
        let ns: Vec<u64> = pts.iter().map(|p| p.freezer_count).collect();
        assert_eq!(ns, vec![10, 20, 25]);
        assert!(throughput_curve(0, 10, 140_000, &schedule).unwrap().is_empty());
        assert!(matches!(
            throughput_curve(10, 0, 140_000, &schedule),
            Err(ThroughputError::ZeroStep)
        ));
    }

    #[test]
    fn simulation_matches_formula() {
        let config = GenesisConfig::from_json("{}").unwrap();
        for n in [0, 1, 42, 43, 100] {
            let run = simulate_mining(n, 140_000, &config).unwrap();
            let expect = throughput_point(n, 85, 15);
            assert_eq!(run.succeeded, 2 * n);
            assert_eq!((run.blocks, run.seconds), (expect.blocks, expect.seconds), "n={n}");
        }
    }
}
