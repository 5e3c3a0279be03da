//! Drives a loaded scenario through a fresh ledger and collects a report.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::edge::{EdgeAggregator, EdgeError, MonitorSigner, SensorReading};
use crate::ledger::{sign_transaction, Keypair, Ledger, ReceiptStatus, SignedTransaction, DEPLOY_SENTINEL};
use crate::primitives::{Address, Hash32};
use crate::registry::{self, call, Event, MonitoredRecord, RegistryOp, RegistryQuery};

use super::model::{Action, Expectation, Scenario, ScenarioError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TxOutcome {
    pub tx_hash: Hash32,
    pub block_number: u64,
    pub block_timestamp: u64,
    pub gas_used: u64,
    pub status: ReceiptStatus,
    pub events: Vec<Event>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contract_address: Option<Address>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum EntryOutcome {
    Transaction(TxOutcome),
    Rejected {
        reason: String,
    },
    #[serde(rename_all = "camelCase")]
    Call {
        result: serde_json::Value,
    },
    #[serde(rename_all = "camelCase")]
    Reading {
        emitted: Vec<Hash32>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportEntry {
    pub index: usize,
    pub t: u64,
    pub op: String,
    pub from: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    pub outcome: EntryOutcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LotSummary {
    pub id: Hash32,
    pub remaining_samples: Option<u64>,
    pub history: Vec<MonitoredRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase", tag = "result")]
pub enum ReplayStatus {
    Passed,
    #[serde(rename_all = "camelCase")]
    Failed {
        event: usize,
        op: String,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ReplayReport {
    pub scenario: String,
    pub status: ReplayStatus,
    pub contract: Option<Address>,
    pub entries: Vec<ReportEntry>,
    /// Monitor transactions emitted by the edge aggregator.
    pub edge_transactions: Vec<TxOutcome>,
    pub lots: BTreeMap<String, LotSummary>,
    pub total_gas: u64,
    pub blocks: u64,
    pub head_hash: Hash32,
    pub state_digest: Hash32,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.status == ReplayStatus::Passed
    }

    /// Outcomes of mined transactions for scenario events, in event order.
    pub fn transactions(&self) -> impl Iterator<Item = (&ReportEntry, &TxOutcome)> {
        self.entries.iter().filter_map(|e| match &e.outcome {
            EntryOutcome::Transaction(tx) => Some((e, tx)),
            _ => None,
        })
    }
}

pub struct Replay {
    pub report: ReplayReport,
    pub ledger: Ledger,
}

/// Signs edge monitor transactions with nonces continuing from the ledger's
/// view, counting transactions issued but not yet submitted.
struct LedgerSigner<'a> {
    ledger: &'a Ledger,
    keys: &'a HashMap<Address, &'a Keypair>,
    contract: Address,
    issued: HashMap<Address, u64>,
}

impl MonitorSigner for LedgerSigner<'_> {
    fn sign_monitor(
        &mut self,
        freezer: &Address,
        lot: Hash32,
        rule: &str,
        value: i32,
    ) -> Result<SignedTransaction, EdgeError> {
        let kp = self.keys.get(freezer).ok_or(EdgeError::MissingKey(*freezer))?;
        let issued = self.issued.entry(*freezer).or_insert(0);
        let op = RegistryOp::Monitor {
            lot,
            rule: rule.to_string(),
            value,
        };
        let nonce = self.ledger.next_nonce(freezer) + *issued;
        let tx = sign_transaction(
            kp,
            self.contract,
            op.name(),
            op.encode_args(),
            nonce,
            self.ledger.schedule(),
        )?;
        *issued += 1;
        Ok(tx)
    }
}

enum Pending {
    Tx(Hash32),
    Done(EntryOutcome),
}

pub fn run_scenario(scenario: &Scenario) -> Result<Replay, ScenarioError> {
    let mut ledger = Ledger::new(scenario.config.clone())?;
    let mut edge = EdgeAggregator::new(scenario.edge_interval).map_err(|e| ScenarioError::Invalid {
        at: "edgeInterval".into(),
        msg: e.to_string(),
    })?;
    let keys: HashMap<Address, &Keypair> = scenario
        .actors
        .values()
        .map(|a| (a.keypair.address(), &a.keypair))
        .collect();
    let mut contract: Option<Address> = None;
    let mut pending: Vec<Pending> = Vec::with_capacity(scenario.events.len());
    let mut failures: Vec<Option<String>> = vec![None; scenario.events.len()];
    let mut edge_hashes: Vec<Hash32> = Vec::new();

    for (i, ev) in scenario.events.iter().enumerate() {
        let kp = keys[&ev.sender];
        match &ev.action {
            Action::Deploy | Action::Op(_) => {
                ledger.advance_to(ev.t);
                let nonce = ledger.next_nonce(&ev.sender);
                let signed = match &ev.action {
                    Action::Op(op) => sign_transaction(
                        kp,
                        contract.expect("loader orders deploy first"),
                        op.name(),
                        op.encode_args(),
                        nonce,
                        ledger.schedule(),
                    ),
                    _ => sign_transaction(kp, DEPLOY_SENTINEL, call::DEPLOY, Vec::new(), nonce, ledger.schedule()),
                }?;
                if matches!(ev.action, Action::Deploy) {
                    contract = Some(registry::contract_address(&ev.sender, nonce));
                }
                match ledger.submit(signed) {
                    Ok(hash) => pending.push(Pending::Tx(hash)),
                    Err(rejection) => {
                        failures[i] = Some(format!("rejected at submission: {rejection}"));
                        pending.push(Pending::Done(EntryOutcome::Rejected {
                            reason: rejection.to_string(),
                        }));
                    }
                }
            }
            Action::Reading { lot, rule, value } => {
                ledger.advance_to(ev.t);
                let reading = SensorReading {
                    freezer: ev.sender,
                    lot_id: *lot,
                    rule: rule.clone(),
                    value: *value,
                    read_at: ev.t,
                };
                let mut signer = LedgerSigner {
                    ledger: &ledger,
                    keys: &keys,
                    contract: contract.expect("loader orders deploy first"),
                    issued: HashMap::new(),
                };
                let emitted = match edge.ingest(&reading, &mut signer) {
                    Ok(txs) => submit_all(&ledger, txs, &mut failures[i]),
                    Err(e) => {
                        failures[i] = Some(e.to_string());
                        Vec::new()
                    }
                };
                edge_hashes.extend(&emitted);
                pending.push(Pending::Done(EntryOutcome::Reading { emitted }));
            }
            Action::Query(q) => {
                ledger.advance_to(ev.t);
                ledger.mine_until_empty();
                let addr = contract.expect("loader orders deploy first");
                let outcome = match ledger.execute_call(&ev.sender, &addr, q.name(), &q.encode_args()) {
                    Ok(bytes) => {
                        let result = query_result(q, &bytes);
                        failures[i] = check_call(&ev.expect, &result);
                        EntryOutcome::Call { result }
                    }
                    Err(e) => {
                        failures[i] = Some(e.to_string());
                        EntryOutcome::Rejected { reason: e.to_string() }
                    }
                };
                pending.push(Pending::Done(outcome));
            }
        }
    }

    if let Some(addr) = contract {
        let mut signer = LedgerSigner {
            ledger: &ledger,
            keys: &keys,
            contract: addr,
            issued: HashMap::new(),
        };
        let mut sink = None;
        match edge.flush_all(&mut signer) {
            Ok(txs) => edge_hashes.extend(submit_all(&ledger, txs, &mut sink)),
            Err(e) => sink = Some(e.to_string()),
        }
        if let Some(msg) = sink {
            if let Some(last) = failures.last_mut() {
                last.get_or_insert(format!("final edge flush: {msg}"));
            }
        }
    }
    ledger.mine_until_empty();

    let mut entries = Vec::with_capacity(pending.len());
    for ((i, ev), p) in scenario.events.iter().enumerate().zip(pending) {
        let outcome = match p {
            Pending::Done(o) => o,
            Pending::Tx(hash) => {
                let tx = tx_outcome(&ledger, &hash);
                if failures[i].is_none() {
                    failures[i] = check_tx(&ev.expect, &tx.status);
                }
                EntryOutcome::Transaction(tx)
            }
        };
        entries.push(ReportEntry {
            index: i,
            t: ev.t,
            op: ev.op.clone(),
            from: ev.from.clone(),
            tag: ev.tag.clone(),
            outcome,
            failure: failures[i].take(),
        });
    }

    let status = entries
        .iter()
        .find_map(|e| {
            e.failure.as_ref().map(|reason| ReplayStatus::Failed {
                event: e.index,
                op: e.op.clone(),
                reason: reason.clone(),
            })
        })
        .unwrap_or(ReplayStatus::Passed);

    let lots = scenario
        .lots
        .iter()
        .map(|l| {
            let state = contract.and_then(|c| ledger.contract(&c));
            let summary = LotSummary {
                id: l.id,
                remaining_samples: state.and_then(|s| s.remaining_samples(&l.id)),
                history: state.map(|s| s.history(&l.id).to_vec()).unwrap_or_default(),
            };
            (l.name.clone(), summary)
        })
        .collect();

    let report = ReplayReport {
        scenario: scenario.name.clone(),
        status,
        contract,
        edge_transactions: edge_hashes.iter().map(|h| tx_outcome(&ledger, h)).collect(),
        entries,
        lots,
        total_gas: ledger.blocks().iter().map(|b| b.gas_used).sum(),
        blocks: ledger.height(),
        head_hash: ledger.head().block_hash,
        state_digest: ledger.state_digest(),
    };
    Ok(Replay { report, ledger })
}

fn submit_all(ledger: &Ledger, txs: Vec<SignedTransaction>, failure: &mut Option<String>) -> Vec<Hash32> {
    let mut out = Vec::with_capacity(txs.len());
    for tx in txs {
        match ledger.submit(tx) {
            Ok(h) => out.push(h),
            Err(r) => {
                failure.get_or_insert(format!("edge transaction rejected: {r}"));
            }
        }
    }
    out
}

fn tx_outcome(ledger: &Ledger, hash: &Hash32) -> TxOutcome {
    let receipt = ledger.receipt(hash).expect("mempool drained before reporting");
    TxOutcome {
        tx_hash: *hash,
        block_number: receipt.block_number,
        block_timestamp: ledger.blocks()[receipt.block_number as usize].timestamp,
        gas_used: receipt.gas_used,
        status: receipt.status.clone(),
        events: receipt.events.clone(),
        contract_address: receipt.contract_address,
    }
}

fn query_result(q: &RegistryQuery, bytes: &[u8]) -> serde_json::Value {
    match q {
        RegistryQuery::CheckBeneficiaryIdentity { .. } => {
            serde_json::Value::Bool(call::decode_bool(bytes).expect("well-formed bool result"))
        }
        RegistryQuery::CheckVaccineLotHistory { .. } => {
            serde_json::to_value(call::decode_history(bytes).expect("well-formed history result"))
                .expect("serializable")
        }
    }
}

fn check_tx(expect: &Expectation, status: &ReceiptStatus) -> Option<String> {
    match (expect, status) {
        (Expectation::Success, ReceiptStatus::Success) => None,
        (Expectation::Success, ReceiptStatus::Reverted(r)) => Some(format!("unexpected revert: {r}")),
        (Expectation::Reverted(_), ReceiptStatus::Success) => Some("expected a revert, got success".into()),
        (Expectation::Reverted(Some(want)), ReceiptStatus::Reverted(got)) if want != got => {
            Some(format!("expected revert {want}, got {got}"))
        }
        _ => None,
    }
}

fn check_call(expect: &Expectation, result: &serde_json::Value) -> Option<String> {
    match expect {
        Expectation::Bool(want) if result.as_bool() != Some(*want) => Some(format!("expected {want}, got {result}")),
        Expectation::ValidFlags(want) => {
            let got: Vec<bool> = result
                .as_array()
                .map(|a| a.iter().filter_map(|r| r["valid"].as_bool()).collect())
                .unwrap_or_default();
            (got != *want).then(|| format!("expected validity flags {want:?}, got {got:?}"))
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
        "actors": {"issuer": "issuer", "doctors": ["doc"], "others": ["mallory"],
                   "beneficiaries": [{"name": "ben", "pi": "1-2-3", "secret": "pw"}]},
        "rules": [{"name": "cold", "minValue": 0, "maxValue": 10, "timeDelta": 100000}],
        "freezers": [{"name": "fz", "rules": ["cold"]}],
        "lots": [{"name": "lot", "samples": 2}]
    "#;

    fn scenario(timeline: &str) -> Scenario {
        Scenario::from_json(&format!(
            r#"{{"name": "t", "edgeInterval": 100, {BASE}, "timeline": {timeline}}}"#
        ))
        .unwrap()
    }

    const SETUP: &str = r#"
        {"t": 1607426701, "op": "deploy", "from": "issuer"},
        {"t": 1607426702, "op": "registerDoctor", "from": "issuer", "args": {"doctor": "doc"}},
        {"t": 1607426703, "op": "registerTrackingRule", "from": "issuer", "args": {"rule": "cold"}},
        {"t": 1607426704, "op": "registerFreezerAndRules", "from": "issuer", "args": {"freezer": "fz", "rule": "cold"}},
        {"t": 1607426705, "op": "registerVaccineLot", "from": "issuer", "args": {"lot": "lot"}},
        {"t": 1607426706, "op": "updateVaccineFreezer", "from": "issuer", "args": {"lot": "lot", "oldFreezer": "fz", "newFreezer": "fz"}},
        {"t": 1607426707, "op": "registerBeneficiary", "from": "ben"}
    "#;

    #[test]
    fn full_lifecycle_passes() {
        let s = scenario(&format!(
            r#"[{SETUP},
                {{"t": 1607426800, "op": "monitor", "from": "fz", "args": {{"lot": "lot", "rule": "cold", "value": 4}}}},
                {{"t": 1607426900, "op": "monitor", "from": "fz", "args": {{"lot": "lot", "rule": "cold", "value": 12}}}},
                {{"t": 1607427000, "op": "checkVaccineLotHistory", "from": "doc", "args": {{"lot": "lot"}}, "expect": [true, false]}},
                {{"t": 1607427000, "op": "checkBeneficiaryIdentity", "from": "doc", "args": {{"beneficiary": "ben"}}, "expect": true}},
                {{"t": 1607427000, "op": "checkBeneficiaryIdentity", "from": "doc", "args": {{"beneficiary": "ben", "secret": "nope"}}, "expect": false}},
                {{"t": 1607427100, "op": "signAdministeredVaccine", "from": "doc", "args": {{"lot": "lot", "beneficiary": "ben"}}}},
                {{"t": 1607427100, "op": "signAdministeredVaccine", "from": "ben", "args": {{"lot": "lot", "beneficiary": "ben"}}}},
                {{"t": 1607427200, "op": "registerSideEffect", "from": "ben", "args": {{"lot": "lot", "description": "rash"}}}},
                {{"t": 1607427300, "op": "registerDoctor", "from": "mallory", "args": {{"doctor": "mallory"}}, "expect": "reverted:unauthorized"}}
            ]"#
        ));
        let replay = run_scenario(&s).unwrap();
        let r = &replay.report;
        assert!(r.passed(), "{:?}", r.status);
        assert_eq!(r.lots["lot"].remaining_samples, Some(1));
        assert_eq!(r.lots["lot"].history.len(), 2);
        let gas: u64 = r.transactions().map(|(_, tx)| tx.gas_used).sum();
        assert_eq!(gas, r.total_gas);
        assert_eq!(replay.ledger.verify_chain(), crate::ledger::ChainStatus::Ok);
    }

    #[test]
    fn failure_is_reported_and_replay_continues() {
        let s = scenario(&format!(
            r#"[{SETUP},
                {{"t": 1607426800, "op": "registerDoctor", "from": "mallory", "args": {{"doctor": "mallory"}}}},
                {{"t": 1607426900, "op": "checkBeneficiaryIdentity", "from": "doc", "args": {{"beneficiary": "ben"}}, "expect": false}}
            ]"#
        ));
        let r = run_scenario(&s).unwrap().report;
        match &r.status {
            ReplayStatus::Failed { event, reason, .. } => {
                assert_eq!(*event, 7);
                assert!(reason.contains("unauthorized"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
        assert!(r.entries[8].failure.is_some());
        assert_eq!(r.entries.len(), 9);
    }

    #[test]
    fn readings_are_reduced_at_the_edge() {
        let s = scenario(&format!(
            r#"[{SETUP},
                {{"t": 1607426800, "op": "reading", "from": "fz", "args": {{"lot": "lot", "rule": "cold", "value": 5}}}},
                {{"t": 1607426801, "op": "reading", "from": "fz", "args": {{"lot": "lot", "rule": "cold", "value": 3}}}},
                {{"t": 1607426802, "op": "reading", "from": "fz", "args": {{"lot": "lot", "rule": "cold", "value": 7}}}},
                {{"t": 1607426803, "op": "reading", "from": "fz", "args": {{"lot": "lot", "rule": "cold", "value": 4}}}},
                {{"t": 1607426950, "op": "reading", "from": "fz", "args": {{"lot": "lot", "rule": "cold", "value": 11}}}}
            ]"#
        ));
        let r = run_scenario(&s).unwrap().report;
        assert!(r.passed(), "{:?}", r.status);
        let values: Vec<i32> = r.lots["lot"].history.iter().map(|h| h.value).collect();
        assert_eq!(values, vec![3, 7, 11]);
        assert_eq!(r.edge_transactions.len(), 3);
        match &r.entries[11].outcome {
            EntryOutcome::Reading { emitted } => assert_eq!(emitted.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn replay_is_deterministic() {
        let s = scenario(&format!("[{SETUP}]"));
        let a = serde_json::to_string(&run_scenario(&s).unwrap().report).unwrap();
        let b = serde_json::to_string(&run_scenario(&s).unwrap().report).unwrap();
        assert_eq!(a, b);
    }
}
