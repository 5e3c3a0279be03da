use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::primitives::{keccak256, Address, Hash32};

use super::call::{RegistryOp, RegistryQuery};

/// Upper bound on a side-effect description, in bytes.
pub const MAX_SIDE_EFFECT_LEN: usize = 1024;

pub const BROKEN_RULE_EVENT: &str = "BrokenRule";

/// Named bounds a monitored quantity must respect for a lot held by a freezer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SafeHandlingRule {
    pub name: String,
    pub min_value: i32,
    pub max_value: i32,
    /// Longest time, in seconds, a lot may stay with one freezer.
    pub time_delta: u64,
}

impl SafeHandlingRule {
    pub fn is_well_formed(&self) -> bool {
        self.min_value < self.max_value && self.time_delta > 0
    }

    /// Strict bounds on the value; the elapsed time may equal `time_delta`.
    pub fn evaluate(&self, value: i32, elapsed: u64) -> bool {
        self.min_value < value && value < self.max_value && elapsed <= self.time_delta
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitoredRecord {
    pub freezer: Address,
    pub rule: String,
    pub value: i32,
    pub timestamp: u64,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SignerRole {
    Doctor,
    Beneficiary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoleModifier {
    OnlyIssuer,
    /// Registered medical-unit admins, and the issuer.
    OnlyMedicalManagers,
    OnlyFreezer,
    OnlyBeneficiary,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Error, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RevertReason {
    #[error("unauthorized")]
    Unauthorized,
    #[error("duplicate-commitment")]
    DuplicateCommitment,
    #[error("invalid-rule")]
    InvalidRule,
    #[error("unknown-rule")]
    UnknownRule,
    #[error("rule-not-bound")]
    RuleNotBound,
    #[error("duplicate-lot")]
    DuplicateLot,
    #[error("invalid-samples")]
    InvalidSamples,
    #[error("unknown-lot")]
    UnknownLot,
    #[error("freezer-not-bound")]
    FreezerNotBound,
    #[error("lot-exhausted")]
    LotExhausted,
    #[error("already-administered")]
    AlreadyAdministered,
    #[error("not-administered")]
    NotAdministered,
    #[error("description-too-long")]
    DescriptionTooLong,
    #[error("malformed-args")]
    MalformedArgs,
    #[error("unknown-op")]
    UnknownOp,
    #[error("unknown-contract")]
    UnknownContract,
}

/// A receipt-level log entry. Arguments are rendered as strings, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub name: String,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecContext {
    pub sender: Address,
    /// Timestamp of the block the transaction is mined in.
    pub now: u64,
}

/// The whole world of one deployed registry contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RegistryState {
    pub vaccine_issuer: Address,
    pub doctors: BTreeSet<Address>,
    pub medical_unit_admins: BTreeSet<Address>,
    pub beneficiaries: BTreeSet<Address>,
    pub registered_requests: BTreeMap<Hash32, Address>,
    pub rules: BTreeMap<String, SafeHandlingRule>,
    pub freezer_lots: BTreeMap<Address, BTreeMap<Hash32, bool>>,
    pub freezer_registration_time: BTreeMap<Address, BTreeMap<Hash32, u64>>,
    pub freezer_rules: BTreeMap<Address, BTreeSet<String>>,
    pub vaccine_lots: BTreeMap<Hash32, u64>,
    pub monitored_vaccines: BTreeMap<Hash32, Vec<MonitoredRecord>>,
    pub administration_signatures: BTreeMap<Hash32, BTreeMap<Hash32, BTreeMap<SignerRole, Address>>>,
    pub administrated_vaccines: BTreeMap<Hash32, Hash32>,
    pub side_effects: BTreeMap<Hash32, BTreeMap<Hash32, String>>,
}

impl RegistryState {
    pub fn new(vaccine_issuer: Address) -> Self {
        Self {
            vaccine_issuer,
            doctors: BTreeSet::new(),
            medical_unit_admins: BTreeSet::new(),
            beneficiaries: BTreeSet::new(),
            registered_requests: BTreeMap::new(),
            rules: BTreeMap::new(),
            freezer_lots: BTreeMap::new(),
            freezer_registration_time: BTreeMap::new(),
            freezer_rules: BTreeMap::new(),
            vaccine_lots: BTreeMap::new(),
            monitored_vaccines: BTreeMap::new(),
            administration_signatures: BTreeMap::new(),
            administrated_vaccines: BTreeMap::new(),
            side_effects: BTreeMap::new(),
        }
    }

    /// Keccak-256 of the canonical JSON rendering of the state.
    pub fn digest(&self) -> Hash32 {
        keccak256(&serde_json::to_vec(self).expect("state serializes"))
    }

    pub fn is_freezer(&self, addr: &Address) -> bool {
        self.freezer_rules.get(addr).is_some_and(|r| !r.is_empty())
    }

    pub fn satisfies(&self, modifier: RoleModifier, sender: &Address) -> bool {
        match modifier {
            RoleModifier::OnlyIssuer => *sender == self.vaccine_issuer,
            RoleModifier::OnlyMedicalManagers => {
                *sender == self.vaccine_issuer || self.medical_unit_admins.contains(sender)
            }
            RoleModifier::OnlyFreezer => self.is_freezer(sender),
            RoleModifier::OnlyBeneficiary => self.beneficiaries.contains(sender),
        }
    }

    fn require(&self, modifier: RoleModifier, sender: &Address) -> Result<(), RevertReason> {
        if self.satisfies(modifier, sender) {
            Ok(())
        } else {
            Err(RevertReason::Unauthorized)
        }
    }

    pub fn is_bound(&self, freezer: &Address, lot: &Hash32) -> bool {
        self.freezer_lots
            .get(freezer)
            .and_then(|lots| lots.get(lot))
            .copied()
            .unwrap_or(false)
    }

    pub fn registration_time(&self, freezer: &Address, lot: &Hash32) -> Option<u64> {
        self.freezer_registration_time.get(freezer)?.get(lot).copied()
    }

    pub fn history(&self, lot: &Hash32) -> &[MonitoredRecord] {
        self.monitored_vaccines.get(lot).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn remaining_samples(&self, lot: &Hash32) -> Option<u64> {
        self.vaccine_lots.get(lot).copied()
    }

    pub fn check_beneficiary_identity(&self, hash_pi: &Hash32, hash_secret: &Hash32, beneficiary: &Address) -> bool {
        let mut concat = [0u8; 64];
        concat[..32].copy_from_slice(hash_pi.as_bytes());
        concat[32..].copy_from_slice(hash_secret.as_bytes());
        self.registered_requests.get(&keccak256(&concat)) == Some(beneficiary)
    }

    pub fn query(&self, query: &RegistryQuery) -> Vec<u8> {
        match query {
            RegistryQuery::CheckBeneficiaryIdentity {
                hash_pi,
                hash_secret,
                beneficiary,
            } => super::call::encode_bool(self.check_beneficiary_identity(hash_pi, hash_secret, beneficiary)),
            RegistryQuery::CheckVaccineLotHistory { lot } => super::call::encode_history(self.history(lot)),
        }
    }

    /// Applies one operation. Every precondition is checked before the first
    /// write, so an `Err` leaves the state untouched.
    pub fn apply(&mut self, ctx: ExecContext, op: &RegistryOp) -> Result<Vec<Event>, RevertReason> {
        let sender = ctx.sender;
        match op {
            RegistryOp::RegisterDoctor { doctor } => {
                self.require(RoleModifier::OnlyIssuer, &sender)?;
                self.doctors.insert(*doctor);
            }
            RegistryOp::RegisterMedicalUnitAdmin { admin } => {
                self.require(RoleModifier::OnlyIssuer, &sender)?;
                self.medical_unit_admins.insert(*admin);
            }
            RegistryOp::RegisterBeneficiary { beneficiary_hash } => {
                if let Some(owner) = self.registered_requests.get(beneficiary_hash) {
                    if *owner != sender {
                        return Err(RevertReason::DuplicateCommitment);
                    }
                }
                self.beneficiaries.insert(sender);
                self.registered_requests.insert(*beneficiary_hash, sender);
            }
            RegistryOp::RegisterTrackingRule(rule) => {
                self.require(RoleModifier::OnlyIssuer, &sender)?;
                if !rule.is_well_formed() {
                    return Err(RevertReason::InvalidRule);
                }
                self.rules.insert(rule.name.clone(), rule.clone());
            }
            RegistryOp::RegisterFreezerAndRules { freezer, rule } => {
                self.require(RoleModifier::OnlyMedicalManagers, &sender)?;
                if !self.rules.contains_key(rule) {
                    return Err(RevertReason::UnknownRule);
                }
                self.freezer_rules.entry(*freezer).or_default().insert(rule.clone());
            }
            RegistryOp::RegisterVaccineLot { lot, samples } => {
                self.require(RoleModifier::OnlyIssuer, &sender)?;
                if self.vaccine_lots.contains_key(lot) {
                    return Err(RevertReason::DuplicateLot);
                }
                if *samples == 0 {
                    return Err(RevertReason::InvalidSamples);
                }
                self.vaccine_lots.insert(*lot, *samples);
            }
            RegistryOp::UpdateVaccineFreezer {
                lot,
                old_freezer,
                new_freezer,
            } => {
                self.require(RoleModifier::OnlyMedicalManagers, &sender)?;
                if !self.vaccine_lots.contains_key(lot) {
                    return Err(RevertReason::UnknownLot);
                }
                if let Some(lots) = self.freezer_lots.get_mut(old_freezer) {
                    if let Some(bound) = lots.get_mut(lot) {
                        *bound = false;
                    }
                }
                if let Some(times) = self.freezer_registration_time.get_mut(old_freezer) {
                    times.remove(lot);
                }
                self.freezer_lots.entry(*new_freezer).or_default().insert(*lot, true);
                self.freezer_registration_time
                    .entry(*new_freezer)
                    .or_default()
                    .insert(*lot, ctx.now);
            }
            RegistryOp::Monitor { lot, rule, value } => {
                self.require(RoleModifier::OnlyFreezer, &sender)?;
                if !self.vaccine_lots.contains_key(lot) {
                    return Err(RevertReason::UnknownLot);
                }
                if !self.is_bound(&sender, lot) {
                    return Err(RevertReason::FreezerNotBound);
                }
                let bounds = self.rules.get(rule).ok_or(RevertReason::UnknownRule)?;
                if !self.freezer_rules.get(&sender).is_some_and(|r| r.contains(rule)) {
                    return Err(RevertReason::RuleNotBound);
                }
                let since = self
                    .registration_time(&sender, lot)
                    .expect("bound freezer has a registration time");
                let valid = bounds.evaluate(*value, ctx.now.saturating_sub(since));
                self.monitored_vaccines.entry(*lot).or_default().push(MonitoredRecord {
                    freezer: sender,
                    rule: rule.clone(),
                    value: *value,
                    timestamp: ctx.now,
                    valid,
                });
                if !valid {
                    return Ok(vec![Event {
                        name: BROKEN_RULE_EVENT.to_string(),
                        args: vec![rule.clone(), lot.to_string(), value.to_string(), ctx.now.to_string()],
                    }]);
                }
            }
            RegistryOp::SignAdministeredVaccine { lot, hash_pi } => {
                let remaining = *self.vaccine_lots.get(lot).ok_or(RevertReason::UnknownLot)?;
                let role = if self.doctors.contains(&sender) {
                    SignerRole::Doctor
                } else if self.beneficiaries.contains(&sender) {
                    SignerRole::Beneficiary
                } else {
                    return Err(RevertReason::Unauthorized);
                };
                if self.administrated_vaccines.contains_key(hash_pi) {
                    return Err(RevertReason::AlreadyAdministered);
                }
                if remaining == 0 {
                    return Err(RevertReason::LotExhausted);
                }
                let signatures = self
                    .administration_signatures
                    .entry(*lot)
                    .or_default()
                    .entry(*hash_pi)
                    .or_default();
                signatures.insert(role, sender);
                if signatures.contains_key(&SignerRole::Doctor) && signatures.contains_key(&SignerRole::Beneficiary) {
                    self.administrated_vaccines.insert(*hash_pi, *lot);
                    self.vaccine_lots.insert(*lot, remaining - 1);
                }
            }
            RegistryOp::RegisterSideEffect {
                hash_pi,
                hash_secret,
                lot,
                description,
            } => {
                if !self.check_beneficiary_identity(hash_pi, hash_secret, &sender) {
                    return Err(RevertReason::Unauthorized);
                }
                if self.administrated_vaccines.get(hash_pi) != Some(lot) {
                    return Err(RevertReason::NotAdministered);
                }
                if description.len() > MAX_SIDE_EFFECT_LEN {
                    return Err(RevertReason::DescriptionTooLong);
                }
                self.side_effects
                    .entry(*lot)
                    .or_default()
                    .insert(*hash_pi, description.clone());
            }
        }
        Ok(Vec::new())
    }
}
