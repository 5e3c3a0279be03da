//! Scenario files: declared actors, rules, freezers and lots plus a timeline
//! of `{t, op, from, args}` events. Loading resolves every name to concrete
//! addresses, hashes and encoded operations, so a loaded scenario is
//! referentially valid by construction.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::identity::BeneficiaryCredentials;
use crate::ledger::{GenesisConfig, Keypair, DEFAULT_GENESIS_TIME};
use crate::primitives::{keccak256, Address, Hash32};
use crate::registry::{call, RegistryOp, RegistryQuery, RevertReason, SafeHandlingRule};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{at}: {msg}")]
    Invalid { at: String, msg: String },
    #[error("invalid genesis parameters: {0}")]
    Config(#[from] crate::LedgerError),
}

fn invalid(at: impl Into<String>, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        at: at.into(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: String,
    genesis_time: Option<u64>,
    #[serde(default)]
    gas_schedule: BTreeMap<String, u64>,
    edge_interval: Option<u64>,
    #[serde(default)]
    actors: RawActors,
    #[serde(default)]
    rules: Vec<SafeHandlingRule>,
    #[serde(default)]
    freezers: Vec<RawFreezer>,
    #[serde(default)]
    lots: Vec<RawLot>,
    #[serde(default)]
    timeline: Vec<RawEvent>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RawActors {
    issuer: Option<String>,
    #[serde(default)]
    admins: Vec<String>,
    #[serde(default)]
    doctors: Vec<String>,
    #[serde(default)]
    beneficiaries: Vec<RawBeneficiary>,
    /// Signers with no declared role, for negative cases.
    #[serde(default)]
    others: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBeneficiary {
    name: String,
    pi: String,
    secret: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFreezer {
    name: String,
    #[serde(default)]
    rules: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLot {
    name: String,
    id: Option<Hash32>,
    samples: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    t: u64,
    op: String,
    from: String,
    #[serde(default)]
    args: BTreeMap<String, Value>,
    expect: Option<Value>,
    tag: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ActorRole {
    Issuer,
    Admin,
    Doctor,
    Beneficiary,
    Freezer,
    Other,
}

#[derive(Debug, Clone)]
pub struct Actor {
    pub name: String,
    pub role: ActorRole,
    pub keypair: Keypair,
    pub credentials: Option<BeneficiaryCredentials>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lot {
    pub name: String,
    pub id: Hash32,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Deploy,
    Op(RegistryOp),
    Reading { lot: Hash32, rule: String, value: i32 },
    Query(RegistryQuery),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    Success,
    Reverted(Option<RevertReason>),
    Bool(bool),
    ValidFlags(Vec<bool>),
    Nothing,
}

#[derive(Debug, Clone)]
pub struct ScenarioEvent {
    pub t: u64,
    pub op: String,
    pub from: String,
    pub sender: Address,
    pub action: Action,
    pub expect: Expectation,
    pub tag: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub config: GenesisConfig,
    pub edge_interval: u64,
    pub actors: BTreeMap<String, Actor>,
    pub rules: Vec<SafeHandlingRule>,
    pub freezers: BTreeMap<String, Vec<String>>,
    pub lots: Vec<Lot>,
    pub events: Vec<ScenarioEvent>,
}

impl Scenario {
    pub fn from_json(raw: &str) -> Result<Self, ScenarioError> {
        let raw: RawScenario = serde_json::from_str(raw)?;
        Resolver::new(raw)?.resolve()
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let raw = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&raw)
    }

    pub fn actor(&self, name: &str) -> Option<&Actor> {
        self.actors.get(name)
    }

    pub fn lot(&self, name: &str) -> Option<&Lot> {
        self.lots.iter().find(|l| l.name == name)
    }

    /// Mutating events, deployment included.
    pub fn mutating_events(&self) -> impl Iterator<Item = &ScenarioEvent> {
        self.events
            .iter()
            .filter(|e| matches!(e.action, Action::Deploy | Action::Op(_)))
    }
}

struct Resolver {
    raw: RawScenario,
    actors: BTreeMap<String, Actor>,
    lots: Vec<Lot>,
}

impl Resolver {
    fn new(raw: RawScenario) -> Result<Self, ScenarioError> {
        let mut actors = BTreeMap::new();
        let mut add = |name: &str, role: ActorRole, creds: Option<BeneficiaryCredentials>, at: String| {
            if actors.contains_key(name) {
                return Err(invalid(at, format!("actor `{name}` declared twice")));
            }
            actors.insert(
                name.to_string(),
                Actor {
                    name: name.to_string(),
                    role,
                    keypair: Keypair::from_label(name),
                    credentials: creds,
                },
            );
            Ok(())
        };
        if let Some(issuer) = &raw.actors.issuer {
            add(issuer, ActorRole::Issuer, None, "actors.issuer".into())?;
        }
        for (i, n) in raw.actors.admins.iter().enumerate() {
            add(n, ActorRole::Admin, None, format!("actors.admins[{i}]"))?;
        }
        for (i, n) in raw.actors.doctors.iter().enumerate() {
            add(n, ActorRole::Doctor, None, format!("actors.doctors[{i}]"))?;
        }
        for (i, b) in raw.actors.beneficiaries.iter().enumerate() {
            let creds = BeneficiaryCredentials::from_passphrase(&b.pi, &b.secret);
            add(
                &b.name,
                ActorRole::Beneficiary,
                Some(creds),
                format!("actors.beneficiaries[{i}]"),
            )?;
        }
        for (i, n) in raw.actors.others.iter().enumerate() {
            add(n, ActorRole::Other, None, format!("actors.others[{i}]"))?;
        }
        let rule_names: HashSet<&str> = raw.rules.iter().map(|r| r.name.as_str()).collect();
        for (i, f) in raw.freezers.iter().enumerate() {
            let at = format!("freezers[{i}]");
            for r in &f.rules {
                if !rule_names.contains(r.as_str()) {
                    return Err(invalid(&at, format!("undeclared rule `{r}`")));
                }
            }
            add(&f.name, ActorRole::Freezer, None, at)?;
        }
        let mut lots: Vec<Lot> = Vec::new();
        for (i, l) in raw.lots.iter().enumerate() {
            if lots.iter().any(|x| x.name == l.name) {
                return Err(invalid(
                    format!("lots[{i}]"),
                    format!("lot `{}` declared twice", l.name),
                ));
            }
            lots.push(Lot {
                name: l.name.clone(),
                id: l.id.unwrap_or_else(|| keccak256(l.name.as_bytes())),
                samples: l.samples,
            });
        }
        Ok(Self { raw, actors, lots })
    }

    fn resolve(self) -> Result<Scenario, ScenarioError> {
        let mut config = GenesisConfig::from_json("{}")?;
        config.genesis_time = self.raw.genesis_time.unwrap_or(DEFAULT_GENESIS_TIME);
        config.gas_schedule.extend(self.raw.gas_schedule.clone());
        config.schedule().validate()?;

        let mut events = Vec::with_capacity(self.raw.timeline.len());
        let mut last_t = 0;
        let mut deployed = false;
        for (i, ev) in self.raw.timeline.iter().enumerate() {
            let at = format!("timeline[{i}]");
            if ev.t < last_t {
                return Err(invalid(
                    &at,
                    format!("time {} precedes previous event at {last_t}", ev.t),
                ));
            }
            last_t = ev.t;
            let sender = self
                .actors
                .get(&ev.from)
                .ok_or_else(|| invalid(format!("{at}.from"), format!("undeclared actor `{}`", ev.from)))?;
            let action = self.action(&at, ev, sender)?;
            match action {
                Action::Deploy if deployed => return Err(invalid(&at, "contract already deployed")),
                Action::Deploy => deployed = true,
                _ if !deployed => return Err(invalid(&at, "event before deploy")),
                _ => {}
            }
            let expect = expectation(&at, &action, ev.expect.as_ref())?;
            events.push(ScenarioEvent {
                t: ev.t,
                op: ev.op.clone(),
                from: ev.from.clone(),
                sender: sender.keypair.address(),
                action,
                expect,
                tag: ev.tag.clone(),
            });
        }

        Ok(Scenario {
            name: self.raw.name.clone(),
            config,
            edge_interval: self.raw.edge_interval.unwrap_or(crate::edge::DEFAULT_INTERVAL_SECS),
            freezers: self
                .raw
                .freezers
                .iter()
                .map(|f| (f.name.clone(), f.rules.clone()))
                .collect(),
            rules: self.raw.rules.clone(),
            actors: self.actors,
            lots: self.lots,
            events,
        })
    }

    fn arg<'a>(&self, at: &str, ev: &'a RawEvent, key: &str) -> Result<&'a Value, ScenarioError> {
        ev.args
            .get(key)
            .ok_or_else(|| invalid(format!("{at}.args"), format!("missing `{key}`")))
    }

    fn arg_str<'a>(&self, at: &str, ev: &'a RawEvent, key: &str) -> Result<&'a str, ScenarioError> {
        self.arg(at, ev, key)?
            .as_str()
            .ok_or_else(|| invalid(format!("{at}.args.{key}"), "expected a string"))
    }

    fn actor_arg(&self, at: &str, ev: &RawEvent, key: &str) -> Result<&Actor, ScenarioError> {
        let name = self.arg_str(at, ev, key)?;
        self.actors
            .get(name)
            .ok_or_else(|| invalid(format!("{at}.args.{key}"), format!("undeclared actor `{name}`")))
    }

    fn lot_arg(&self, at: &str, ev: &RawEvent) -> Result<Hash32, ScenarioError> {
        let name = self.arg_str(at, ev, "lot")?;
        self.lots
            .iter()
            .find(|l| l.name == name)
            .map(|l| l.id)
            .ok_or_else(|| invalid(format!("{at}.args.lot"), format!("undeclared lot `{name}`")))
    }

    fn rule_arg(&self, at: &str, ev: &RawEvent) -> Result<String, ScenarioError> {
        let name = self.arg_str(at, ev, "rule")?;
        if !self.raw.rules.iter().any(|r| r.name == name) {
            return Err(invalid(format!("{at}.args.rule"), format!("undeclared rule `{name}`")));
        }
        Ok(name.to_string())
    }

    fn value_arg(&self, at: &str, ev: &RawEvent) -> Result<i32, ScenarioError> {
        self.arg(at, ev, "value")?
            .as_i64()
            .and_then(|v| i32::try_from(v).ok())
            .ok_or_else(|| invalid(format!("{at}.args.value"), "expected a 32-bit integer"))
    }

    fn credentials<'a>(&self, at: &str, actor: &'a Actor) -> Result<&'a BeneficiaryCredentials, ScenarioError> {
        actor
            .credentials
            .as_ref()
            .ok_or_else(|| invalid(at, format!("`{}` is not a declared beneficiary", actor.name)))
    }

    /// Secret hash for identity-bearing events; an explicit `secret` arg overrides the declared one.
    fn hash_secret(&self, at: &str, ev: &RawEvent, creds: &BeneficiaryCredentials) -> Result<Hash32, ScenarioError> {
        match ev.args.get("secret") {
            None => Ok(creds.hash_sk),
            Some(v) => v
                .as_str()
                .map(|s| keccak256(s.as_bytes()))
                .ok_or_else(|| invalid(format!("{at}.args.secret"), "expected a string")),
        }
    }

    fn action(&self, at: &str, ev: &RawEvent, sender: &Actor) -> Result<Action, ScenarioError> {
        let op = match ev.op.as_str() {
            call::DEPLOY => return Ok(Action::Deploy),
            call::REGISTER_DOCTOR => RegistryOp::RegisterDoctor {
                doctor: self.actor_arg(at, ev, "doctor")?.keypair.address(),
            },
            call::REGISTER_MEDICAL_UNIT_ADMIN => RegistryOp::RegisterMedicalUnitAdmin {
                admin: self.actor_arg(at, ev, "admin")?.keypair.address(),
            },
            call::REGISTER_BENEFICIARY => RegistryOp::RegisterBeneficiary {
                beneficiary_hash: self.credentials(&format!("{at}.from"), sender)?.root,
            },
            call::REGISTER_TRACKING_RULE => {
                let name = self.rule_arg(at, ev)?;
                let rule = self.raw.rules.iter().find(|r| r.name == name).expect("checked");
                RegistryOp::RegisterTrackingRule(rule.clone())
            }
            call::REGISTER_FREEZER_AND_RULES => {
                let freezer = self.actor_arg(at, ev, "freezer")?;
                let rule = self.rule_arg(at, ev)?;
                let declared = self
                    .raw
                    .freezers
                    .iter()
                    .find(|f| f.name == freezer.name)
                    .ok_or_else(|| {
                        invalid(
                            format!("{at}.args.freezer"),
                            format!("`{}` is not a declared freezer", freezer.name),
                        )
                    })?;
                if !declared.rules.contains(&rule) {
                    return Err(invalid(
                        format!("{at}.args.rule"),
                        format!("rule `{rule}` is not declared for freezer `{}`", freezer.name),
                    ));
                }
                RegistryOp::RegisterFreezerAndRules {
                    freezer: freezer.keypair.address(),
                    rule,
                }
            }
            call::REGISTER_VACCINE_LOT => {
                let lot = self.lot_arg(at, ev)?;
                let samples = self.lots.iter().find(|l| l.id == lot).expect("resolved").samples;
                RegistryOp::RegisterVaccineLot { lot, samples }
            }
            call::UPDATE_VACCINE_FREEZER => RegistryOp::UpdateVaccineFreezer {
                lot: self.lot_arg(at, ev)?,
                old_freezer: self.actor_arg(at, ev, "oldFreezer")?.keypair.address(),
                new_freezer: self.actor_arg(at, ev, "newFreezer")?.keypair.address(),
            },
            call::MONITOR => RegistryOp::Monitor {
                lot: self.lot_arg(at, ev)?,
                rule: self.rule_arg(at, ev)?,
                value: self.value_arg(at, ev)?,
            },
            call::SIGN_ADMINISTERED_VACCINE => {
                let beneficiary = self.actor_arg(at, ev, "beneficiary")?;
                RegistryOp::SignAdministeredVaccine {
                    lot: self.lot_arg(at, ev)?,
                    hash_pi: self
                        .credentials(&format!("{at}.args.beneficiary"), beneficiary)?
                        .hash_pi,
                }
            }
            call::REGISTER_SIDE_EFFECT => {
                let creds = self.credentials(&format!("{at}.from"), sender)?;
                RegistryOp::RegisterSideEffect {
                    hash_pi: creds.hash_pi,
                    hash_secret: self.hash_secret(at, ev, creds)?,
                    lot: self.lot_arg(at, ev)?,
                    description: self.arg_str(at, ev, "description")?.to_string(),
                }
            }
            "reading" => {
                if sender.role != ActorRole::Freezer {
                    return Err(invalid(
                        format!("{at}.from"),
                        format!("`{}` is not a declared freezer", sender.name),
                    ));
                }
                return Ok(Action::Reading {
                    lot: self.lot_arg(at, ev)?,
                    rule: self.rule_arg(at, ev)?,
                    value: self.value_arg(at, ev)?,
                });
            }
            call::CHECK_BENEFICIARY_IDENTITY => {
                let beneficiary = self.actor_arg(at, ev, "beneficiary")?;
                let creds = self.credentials(&format!("{at}.args.beneficiary"), beneficiary)?;
                let address = match ev.args.get("address") {
                    None => beneficiary.keypair.address(),
                    Some(_) => self.actor_arg(at, ev, "address")?.keypair.address(),
                };
                return Ok(Action::Query(RegistryQuery::CheckBeneficiaryIdentity {
                    hash_pi: creds.hash_pi,
                    hash_secret: self.hash_secret(at, ev, creds)?,
                    beneficiary: address,
                }));
            }
            call::CHECK_VACCINE_LOT_HISTORY => {
                return Ok(Action::Query(RegistryQuery::CheckVaccineLotHistory {
                    lot: self.lot_arg(at, ev)?,
                }))
            }
            other => return Err(invalid(format!("{at}.op"), format!("unknown operation `{other}`"))),
        };
        Ok(Action::Op(op))
    }
}

fn expectation(at: &str, action: &Action, raw: Option<&Value>) -> Result<Expectation, ScenarioError> {
    let at = format!("{at}.expect");
    match (action, raw) {
        (Action::Deploy | Action::Op(_), None) => Ok(Expectation::Success),
        (Action::Deploy | Action::Op(_), Some(Value::String(s))) => match s.as_str() {
            "success" => Ok(Expectation::Success),
            "reverted" => Ok(Expectation::Reverted(None)),
            other => {
                let reason = other
                    .strip_prefix("reverted:")
                    .and_then(|r| serde_json::from_value::<RevertReason>(Value::String(r.to_string())).ok())
                    .ok_or_else(|| invalid(&at, format!("unrecognized expectation `{other}`")))?;
                Ok(Expectation::Reverted(Some(reason)))
            }
        },
        (Action::Query(RegistryQuery::CheckBeneficiaryIdentity { .. }), Some(Value::Bool(b))) => {
            Ok(Expectation::Bool(*b))
        }
        (Action::Query(RegistryQuery::CheckVaccineLotHistory { .. }), Some(Value::Array(items))) => items
            .iter()
            .map(|v| v.as_bool())
            .collect::<Option<Vec<bool>>>()
            .map(Expectation::ValidFlags)
            .ok_or_else(|| invalid(&at, "expected an array of booleans")),
        (Action::Query(_) | Action::Reading { .. }, None) => Ok(Expectation::Nothing),
        (_, Some(_)) => Err(invalid(at, "expectation does not fit this operation")),
    }
}
