//! Operation names and their canonical argument encodings.
//!
//! Arguments are length-prefixed fields in declaration order. Addresses are
//! 20 raw bytes, hashes 32, strings UTF-8, monitored values 4-byte big-endian
//! two's complement and counters/durations 8-byte big-endian.

use crate::primitives::{Address, CanonicalReader, CanonicalWriter, Hash32};

use super::state::{MonitoredRecord, SafeHandlingRule};

pub const DEPLOY: &str = "deploy";
pub const REGISTER_DOCTOR: &str = "registerDoctor";
pub const REGISTER_MEDICAL_UNIT_ADMIN: &str = "registerMedicalUnitAdmin";
pub const REGISTER_BENEFICIARY: &str = "registerBeneficiary";
pub const REGISTER_TRACKING_RULE: &str = "registerTrackingRule";
pub const REGISTER_FREEZER_AND_RULES: &str = "registerFreezerAndRules";
pub const REGISTER_VACCINE_LOT: &str = "registerVaccineLot";
pub const UPDATE_VACCINE_FREEZER: &str = "updateVaccineFreezer";
pub const MONITOR: &str = "monitor";
pub const SIGN_ADMINISTERED_VACCINE: &str = "signAdministeredVaccine";
pub const REGISTER_SIDE_EFFECT: &str = "registerSideEffect";

pub const CHECK_BENEFICIARY_IDENTITY: &str = "checkBeneficiaryIdentity";
pub const CHECK_VACCINE_LOT_HISTORY: &str = "checkVaccineLotHistory";

/// Every mined operation, deployment included.
pub const MUTATING_OPS: [&str; 11] = [
    DEPLOY,
    REGISTER_DOCTOR,
    REGISTER_MEDICAL_UNIT_ADMIN,
    REGISTER_BENEFICIARY,
    REGISTER_TRACKING_RULE,
    REGISTER_FREEZER_AND_RULES,
    REGISTER_VACCINE_LOT,
    UPDATE_VACCINE_FREEZER,
    MONITOR,
    SIGN_ADMINISTERED_VACCINE,
    REGISTER_SIDE_EFFECT,
];

pub const QUERY_OPS: [&str; 2] = [CHECK_BENEFICIARY_IDENTITY, CHECK_VACCINE_LOT_HISTORY];

/// A state-mutating contract invocation (everything except `deploy`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegistryOp {
    RegisterDoctor {
        doctor: Address,
    },
    RegisterMedicalUnitAdmin {
        admin: Address,
    },
    RegisterBeneficiary {
        beneficiary_hash: Hash32,
    },
    RegisterTrackingRule(SafeHandlingRule),
    RegisterFreezerAndRules {
        freezer: Address,
        rule: String,
    },
    RegisterVaccineLot {
        lot: Hash32,
        samples: u64,
    },
    UpdateVaccineFreezer {
        lot: Hash32,
        old_freezer: Address,
        new_freezer: Address,
    },
    Monitor {
        lot: Hash32,
        rule: String,
        value: i32,
    },
    SignAdministeredVaccine {
        lot: Hash32,
        hash_pi: Hash32,
    },
    RegisterSideEffect {
        hash_pi: Hash32,
        hash_secret: Hash32,
        lot: Hash32,
        description: String,
    },
}

impl RegistryOp {
    pub fn name(&self) -> &'static str {
        match self {
            RegistryOp::RegisterDoctor { .. } => REGISTER_DOCTOR,
            RegistryOp::RegisterMedicalUnitAdmin { .. } => REGISTER_MEDICAL_UNIT_ADMIN,
            RegistryOp::RegisterBeneficiary { .. } => REGISTER_BENEFICIARY,
            RegistryOp::RegisterTrackingRule(_) => REGISTER_TRACKING_RULE,
            RegistryOp::RegisterFreezerAndRules { .. } => REGISTER_FREEZER_AND_RULES,
            RegistryOp::RegisterVaccineLot { .. } => REGISTER_VACCINE_LOT,
            RegistryOp::UpdateVaccineFreezer { .. } => UPDATE_VACCINE_FREEZER,
            RegistryOp::Monitor { .. } => MONITOR,
            RegistryOp::SignAdministeredVaccine { .. } => SIGN_ADMINISTERED_VACCINE,
            RegistryOp::RegisterSideEffect { .. } => REGISTER_SIDE_EFFECT,
        }
    }

    pub fn encode_args(&self) -> Vec<u8> {
        let mut w = CanonicalWriter::new();
        match self {
            RegistryOp::RegisterDoctor { doctor } => {
                w.field(doctor.as_bytes());
            }
            RegistryOp::RegisterMedicalUnitAdmin { admin } => {
                w.field(admin.as_bytes());
            }
            RegistryOp::RegisterBeneficiary { beneficiary_hash } => {
                w.field(beneficiary_hash.as_bytes());
            }
            RegistryOp::RegisterTrackingRule(rule) => {
                w.field(rule.name.as_bytes())
                    .field(&rule.min_value.to_be_bytes())
                    .field(&rule.max_value.to_be_bytes())
                    .u64(rule.time_delta);
            }
            RegistryOp::RegisterFreezerAndRules { freezer, rule } => {
                w.field(freezer.as_bytes()).field(rule.as_bytes());
            }
            RegistryOp::RegisterVaccineLot { lot, samples } => {
                w.field(lot.as_bytes()).u64(*samples);
            }
            RegistryOp::UpdateVaccineFreezer {
                lot,
                old_freezer,
                new_freezer,
            } => {
                w.field(lot.as_bytes())
                    .field(old_freezer.as_bytes())
                    .field(new_freezer.as_bytes());
            }
            RegistryOp::Monitor { lot, rule, value } => {
                w.field(lot.as_bytes())
                    .field(rule.as_bytes())
                    .field(&value.to_be_bytes());
            }
            RegistryOp::SignAdministeredVaccine { lot, hash_pi } => {
                w.field(lot.as_bytes()).field(hash_pi.as_bytes());
            }
            RegistryOp::RegisterSideEffect {
                hash_pi,
                hash_secret,
                lot,
                description,
            } => {
                w.field(hash_pi.as_bytes())
                    .field(hash_secret.as_bytes())
                    .field(lot.as_bytes())
                    .field(description.as_bytes());
            }
        }
        w.into_bytes()
    }

    /// Decodes `args` for the named operation. `None` when the name is not a
    /// registry operation or the bytes do not match its layout exactly.
    pub fn decode(op: &str, args: &[u8]) -> Option<RegistryOp> {
        let mut r = CanonicalReader::new(args);
        let decoded = match op {
            REGISTER_DOCTOR => RegistryOp::RegisterDoctor { doctor: r.address()? },
            REGISTER_MEDICAL_UNIT_ADMIN => RegistryOp::RegisterMedicalUnitAdmin { admin: r.address()? },
            REGISTER_BENEFICIARY => RegistryOp::RegisterBeneficiary {
                beneficiary_hash: r.hash()?,
            },
            REGISTER_TRACKING_RULE => RegistryOp::RegisterTrackingRule(SafeHandlingRule {
                name: r.string()?,
                min_value: r.i32()?,
                max_value: r.i32()?,
                time_delta: r.u64()?,
            }),
            REGISTER_FREEZER_AND_RULES => RegistryOp::RegisterFreezerAndRules {
                freezer: r.address()?,
                rule: r.string()?,
            },
            REGISTER_VACCINE_LOT => RegistryOp::RegisterVaccineLot {
                lot: r.hash()?,
                samples: r.u64()?,
            },
            UPDATE_VACCINE_FREEZER => RegistryOp::UpdateVaccineFreezer {
                lot: r.hash()?,
                old_freezer: r.address()?,
                new_freezer: r.address()?,
            },
            MONITOR => RegistryOp::Monitor {
                lot: r.hash()?,
                rule: r.string()?,
                value: r.i32()?,
            },
            SIGN_ADMINISTERED_VACCINE => RegistryOp::SignAdministeredVaccine {
                lot: r.hash()?,
                hash_pi: r.hash()?,
            },
            REGISTER_SIDE_EFFECT => RegistryOp::RegisterSideEffect {
                hash_pi: r.hash()?,
                hash_secret: r.hash()?,
                lot: r.hash()?,
                description: r.string()?,
            },
            _ => return None,
        };
        r.finish()?;
        Some(decoded)
    }
}

/// A read-only query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegistryQuery {
    CheckBeneficiaryIdentity {
        hash_pi: Hash32,
        hash_secret: Hash32,
        beneficiary: Address,
    },
    CheckVaccineLotHistory {
        lot: Hash32,
    },
}

impl RegistryQuery {
    pub fn name(&self) -> &'static str {
        match self {
            RegistryQuery::CheckBeneficiaryIdentity { .. } => CHECK_BENEFICIARY_IDENTITY,
            RegistryQuery::CheckVaccineLotHistory { .. } => CHECK_VACCINE_LOT_HISTORY,
        }
    }

    pub fn encode_args(&self) -> Vec<u8> {
        let mut w = CanonicalWriter::new();
        match self {
            RegistryQuery::CheckBeneficiaryIdentity {
                hash_pi,
                hash_secret,
                beneficiary,
            } => {
                w.field(hash_pi.as_bytes())
                    .field(hash_secret.as_bytes())
                    .field(beneficiary.as_bytes());
            }
            RegistryQuery::CheckVaccineLotHistory { lot } => {
                w.field(lot.as_bytes());
            }
        }
        w.into_bytes()
    }

    pub fn decode(op: &str, args: &[u8]) -> Option<RegistryQuery> {
        let mut r = CanonicalReader::new(args);
        let decoded = match op {
            CHECK_BENEFICIARY_IDENTITY => RegistryQuery::CheckBeneficiaryIdentity {
                hash_pi: r.hash()?,
                hash_secret: r.hash()?,
                beneficiary: r.address()?,
            },
            CHECK_VACCINE_LOT_HISTORY => RegistryQuery::CheckVaccineLotHistory { lot: r.hash()? },
            _ => return None,
        };
        r.finish()?;
        Some(decoded)
    }
}

pub fn encode_bool(v: bool) -> Vec<u8> {
    let mut w = CanonicalWriter::new();
    w.field(&[u8::from(v)]);
    w.into_bytes()
}

pub fn decode_bool(bytes: &[u8]) -> Option<bool> {
    let mut r = CanonicalReader::new(bytes);
    let v = r.bool()?;
    r.finish()?;
    Some(v)
}

/// Encodes a history as a record count followed by each record's five fields.
pub fn encode_history(records: &[MonitoredRecord]) -> Vec<u8> {
    let mut w = CanonicalWriter::new();
    w.u64(records.len() as u64);
    for rec in records {
        w.field(rec.freezer.as_bytes())
            .field(rec.rule.as_bytes())
            .field(&rec.value.to_be_bytes())
            .u64(rec.timestamp)
            .field(&[u8::from(rec.valid)]);
    }
    w.into_bytes()
}

pub fn decode_history(bytes: &[u8]) -> Option<Vec<MonitoredRecord>> {
    let mut r = CanonicalReader::new(bytes);
    let count = r.u64()?;
    let mut out = Vec::new();
    for _ in 0..count {
        out.push(MonitoredRecord {
            freezer: r.address()?,
            rule: r.string()?,
            value: r.i32()?,
            timestamp: r.u64()?,
            valid: r.bool()?,
        });
    }
    r.finish()?;
    Some(out)
}
