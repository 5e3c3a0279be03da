//! Randomized suites and brute-force oracles shared by the property tests and
//! the acceptance harness. Oracles recompute expectations from first
//! principles (sha3 directly, role sets rebuilt from the op history) rather
//! than calling back into the code under test.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use coldchain_core::ledger::{self, sign_transaction, ChainStatus, Keypair, Ledger, DEPLOY_SENTINEL};
use coldchain_core::registry::{self, call, ExecContext, RegistryOp, RegistryState, SafeHandlingRule, SignerRole};
use coldchain_core::scenario::{run_scenario, Replay, Scenario};
use coldchain_core::{Address, Hash32};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha3::{Digest, Keccak256};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn oracle_keccak(parts: &[&[u8]]) -> Hash32 {
    let mut h = Keccak256::new();
    for p in parts {
        h.update(p);
    }
    Hash32(h.finalize().into())
}

pub fn oracle_root(pi: &str, secret: &str) -> Hash32 {
    let hp = oracle_keccak(&[pi.as_bytes()]);
    let hs = oracle_keccak(&[secret.as_bytes()]);
    oracle_keccak(&[&hp.0, &hs.0])
}

pub fn reference_scenario_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/reference-run.json")
}

pub fn reference_replay() -> Replay {
    let scenario = Scenario::load(&reference_scenario_path()).expect("bundled scenario loads");
    run_scenario(&scenario).expect("bundled scenario runs")
}

fn random_address(rng: &mut ChaCha8Rng) -> Address {
    Address(rng.gen())
}

// ---------------------------------------------------------------------------
// Access control and revert atomicity

#[derive(Debug, Default, Clone, Copy)]
pub struct FuzzStats {
    pub pairs: usize,
    pub succeeded: usize,
    pub reverted: usize,
    pub unauthorized_attempts: usize,
}

/// Role sets rebuilt from successful operations only.
#[derive(Default)]
struct RoleOracle {
    issuer: Address,
    admins: BTreeSet<Address>,
    doctors: BTreeSet<Address>,
    freezers: BTreeSet<Address>,
    beneficiaries: BTreeSet<Address>,
    commitments: HashMap<Hash32, Address>,
}

impl RoleOracle {
    fn allowed(&self, sender: &Address, op: &RegistryOp) -> bool {
        let issuer = *sender == self.issuer;
        match op {
            RegistryOp::RegisterDoctor { .. }
            | RegistryOp::RegisterMedicalUnitAdmin { .. }
            | RegistryOp::RegisterTrackingRule(_)
            | RegistryOp::RegisterVaccineLot { .. } => issuer,
            RegistryOp::RegisterFreezerAndRules { .. } | RegistryOp::UpdateVaccineFreezer { .. } => {
                issuer || self.admins.contains(sender)
            }
            RegistryOp::Monitor { .. } => self.freezers.contains(sender),
            RegistryOp::SignAdministeredVaccine { .. } => {
                self.doctors.contains(sender) || self.beneficiaries.contains(sender)
            }
            RegistryOp::RegisterSideEffect {
                hash_pi, hash_secret, ..
            } => self.commitments.get(&oracle_keccak(&[&hash_pi.0, &hash_secret.0])) == Some(sender),
            RegistryOp::RegisterBeneficiary { .. } => true,
        }
    }

    fn record_success(&mut self, sender: Address, op: &RegistryOp) {
        match op {
            RegistryOp::RegisterDoctor { doctor } => {
                self.doctors.insert(*doctor);
            }
            RegistryOp::RegisterMedicalUnitAdmin { admin } => {
                self.admins.insert(*admin);
            }
            RegistryOp::RegisterFreezerAndRules { freezer, .. } => {
                self.freezers.insert(*freezer);
            }
            RegistryOp::RegisterBeneficiary { beneficiary_hash } => {
                self.beneficiaries.insert(sender);
                self.commitments.insert(*beneficiary_hash, sender);
            }
            _ => {}
        }
    }
}

struct FuzzWorld {
    issuer: Address,
    admin: Address,
    doctor: Address,
    freezer: Address,
    beneficiary: Address,
    stranger: Address,
    lot: Hash32,
    hash_pi: Hash32,
    hash_secret: Hash32,
    rule: String,
}

impl FuzzWorld {
    fn new() -> Self {
        Self {
            issuer: Address([1; 20]),
            admin: Address([2; 20]),
            doctor: Address([3; 20]),
            freezer: Address([4; 20]),
            beneficiary: Address([5; 20]),
            stranger: Address([6; 20]),
            lot: Hash32([7; 32]),
            hash_pi: oracle_keccak(&[b"fuzz-pi"]),
            hash_secret: oracle_keccak(&[b"fuzz-secret"]),
            rule: "fuzz-rule".into(),
        }
    }

    fn setup_ops(&self) -> Vec<(Address, RegistryOp)> {
        vec![
            (self.issuer, RegistryOp::RegisterDoctor { doctor: self.doctor }),
            (self.issuer, RegistryOp::RegisterMedicalUnitAdmin { admin: self.admin }),
            (
                self.issuer,
                RegistryOp::RegisterTrackingRule(SafeHandlingRule {
                    name: self.rule.clone(),
                    min_value: -10,
                    max_value: 10,
                    time_delta: 1000,
                }),
            ),
            (
                self.issuer,
                RegistryOp::RegisterFreezerAndRules {
                    freezer: self.freezer,
                    rule: self.rule.clone(),
                },
            ),
            (
                self.issuer,
                RegistryOp::RegisterVaccineLot {
                    lot: self.lot,
                    samples: 5,
                },
            ),
            (
                self.issuer,
                RegistryOp::UpdateVaccineFreezer {
                    lot: self.lot,
                    old_freezer: self.freezer,
                    new_freezer: self.freezer,
                },
            ),
            (
                self.beneficiary,
                RegistryOp::RegisterBeneficiary {
                    beneficiary_hash: oracle_keccak(&[&self.hash_pi.0, &self.hash_secret.0]),
                },
            ),
        ]
    }

    fn sender(&self, rng: &mut ChaCha8Rng) -> Address {
        match rng.gen_range(0..7) {
            0 => self.issuer,
            1 => self.admin,
            2 => self.doctor,
            3 => self.freezer,
            4 => self.beneficiary,
            5 => self.stranger,
            _ => random_address(rng),
        }
    }

    fn op(&self, rng: &mut ChaCha8Rng) -> RegistryOp {
        let lot = if rng.gen_bool(0.8) { self.lot } else { Hash32(rng.gen()) };
        let rule = if rng.gen_bool(0.8) {
            self.rule.clone()
        } else {
            format!("rule-{}", rng.gen::<u8>())
        };
        let hash_pi = if rng.gen_bool(0.7) {
            self.hash_pi
        } else {
            Hash32(rng.gen())
        };
        let hash_secret = if rng.gen_bool(0.7) {
            self.hash_secret
        } else {
            Hash32(rng.gen())
        };
        let who = self.sender(rng);
        match rng.gen_range(0..10) {
            0 => RegistryOp::RegisterDoctor { doctor: who },
            1 => RegistryOp::RegisterMedicalUnitAdmin { admin: who },
            2 => RegistryOp::RegisterBeneficiary {
                beneficiary_hash: Hash32(rng.gen()),
            },
            3 => {
                let min_value = rng.gen_range(-20..20);
                RegistryOp::RegisterTrackingRule(SafeHandlingRule {
                    name: rule,
                    min_value,
                    max_value: min_value + rng.gen_range(-2..20),
                    time_delta: rng.gen_range(0..2000),
                })
            }
            4 => RegistryOp::RegisterFreezerAndRules { freezer: who, rule },
            5 => RegistryOp::RegisterVaccineLot {
                lot: Hash32(rng.gen()),
                samples: rng.gen_range(0..4),
            },
            6 => RegistryOp::UpdateVaccineFreezer {
                lot,
                old_freezer: self.freezer,
                new_freezer: who,
            },
            7 => RegistryOp::Monitor {
                lot,
                rule,
                value: rng.gen_range(-30..30),
            },
            8 => RegistryOp::SignAdministeredVaccine { lot, hash_pi },
            _ => RegistryOp::RegisterSideEffect {
                hash_pi,
                hash_secret,
                lot,
                description: "x".repeat(rng.gen_range(0..1100)),
            },
        }
    }
}

/// Pairs per fresh contract; keeps per-step digests cheap.
const FUZZ_EPOCH: usize = 250;

/// Random (sender, op) pairs against evolving contract states, restarted from
/// a fresh world every `FUZZ_EPOCH` pairs. Fails on any state change by a
/// sender outside the op's role set, and on any revert that changes the
/// state digest.
pub fn access_control_fuzz(pairs: usize, seed: u64) -> Result<FuzzStats, String> {
    let mut rng = rng(seed);
    let world = FuzzWorld::new();
    let mut stats = FuzzStats::default();
    while stats.pairs < pairs {
        let mut state = RegistryState::new(world.issuer);
        let mut oracle = RoleOracle {
            issuer: world.issuer,
            ..RoleOracle::default()
        };
        let mut now = 1_000;
        for (sender, op) in world.setup_ops() {
            state
                .apply(ExecContext { sender, now }, &op)
                .map_err(|e| format!("setup {} failed: {e}", op.name()))?;
            oracle.record_success(sender, &op);
        }
        for _ in 0..FUZZ_EPOCH.min(pairs - stats.pairs) {
            let i = stats.pairs;
            now += rng.gen_range(0..30);
            let sender = world.sender(&mut rng);
            let op = world.op(&mut rng);
            let allowed = oracle.allowed(&sender, &op);
            let before = state.digest();
            let result = state.apply(ExecContext { sender, now }, &op);
            stats.pairs += 1;
            if !allowed {
                stats.unauthorized_attempts += 1;
            }
            match result {
                Ok(_) if !allowed => {
                    return Err(format!("pair {i}: {} by unauthorized {sender} succeeded", op.name()));
                }
                Ok(_) => {
                    stats.succeeded += 1;
                    oracle.record_success(sender, &op);
                }
                Err(reason) => {
                    stats.reverted += 1;
                    if state.digest() != before {
                        return Err(format!("pair {i}: {} reverted ({reason}) but changed state", op.name()));
                    }
                }
            }
        }
    }
    Ok(stats)
}

// ---------------------------------------------------------------------------
// Two-signature administration

fn check_administration_invariants(state: &RegistryState, initial: &BTreeMap<Hash32, u64>) -> Result<(), String> {
    for (lot, &start) in initial {
        let remaining = state.vaccine_lots[lot];
        if remaining > start {
            return Err(format!("lot {lot} grew from {start} to {remaining}"));
        }
        let complete = state
            .administration_signatures
            .get(lot)
            .map(|sigs| {
                sigs.values()
                    .filter(|roles| {
                        roles.contains_key(&SignerRole::Doctor) && roles.contains_key(&SignerRole::Beneficiary)
                    })
                    .count() as u64
            })
            .unwrap_or(0);
        if start - remaining != complete {
            return Err(format!(
                "lot {lot}: {start} - {remaining} != {complete} completed pairs"
            ));
        }
    }
    for (hash_pi, lot) in &state.administrated_vaccines {
        let roles = state
            .administration_signatures
            .get(lot)
            .and_then(|s| s.get(hash_pi))
            .ok_or_else(|| format!("administration of {hash_pi} without signatures"))?;
        if !(roles.contains_key(&SignerRole::Doctor) && roles.contains_key(&SignerRole::Beneficiary)) {
            return Err(format!("administration of {hash_pi} with roles {roles:?}"));
        }
    }
    Ok(())
}

/// Random interleavings of administration signatures over a few lots and
/// beneficiaries; checks conservation and the two-signature gate after every step.
pub fn administration_orderings(trials: usize, seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    let issuer = Address([1; 20]);
    let doctors = [Address([2; 20]), Address([3; 20])];
    let beneficiaries: Vec<(Address, Hash32)> = (0..3u8)
        .map(|i| (Address([10 + i; 20]), oracle_keccak(&[format!("pi-{i}").as_bytes()])))
        .collect();
    let stranger = Address([9; 20]);
    let mut completions = 0;

    for trial in 0..trials {
        let mut state = RegistryState::new(issuer);
        let ctx = |sender| ExecContext { sender, now: 0 };
        for d in doctors {
            state
                .apply(ctx(issuer), &RegistryOp::RegisterDoctor { doctor: d })
                .map_err(|e| e.to_string())?;
        }
        for (addr, hash_pi) in &beneficiaries {
            let root = oracle_keccak(&[&hash_pi.0, &oracle_keccak(&[b"sk"]).0]);
            state
                .apply(ctx(*addr), &RegistryOp::RegisterBeneficiary { beneficiary_hash: root })
                .map_err(|e| e.to_string())?;
        }
        let mut initial = BTreeMap::new();
        for l in 0..2u8 {
            let lot = Hash32([100 + l; 32]);
            let samples = rng.gen_range(1..3);
            state
                .apply(ctx(issuer), &RegistryOp::RegisterVaccineLot { lot, samples })
                .map_err(|e| e.to_string())?;
            initial.insert(lot, samples);
        }
        let lots: Vec<Hash32> = initial.keys().copied().collect();

        for _ in 0..rng.gen_range(1..12) {
            let sender = match rng.gen_range(0..6) {
                0 | 1 => doctors[rng.gen_range(0..2)],
                2..=4 => beneficiaries[rng.gen_range(0..3)].0,
                _ => stranger,
            };
            let op = RegistryOp::SignAdministeredVaccine {
                lot: lots[rng.gen_range(0..lots.len())],
                hash_pi: beneficiaries[rng.gen_range(0..3)].1,
            };
            let before = state.digest();
            let administered_before = state.administrated_vaccines.len();
            match state.apply(ctx(sender), &op) {
                Ok(_) => completions += state.administrated_vaccines.len() - administered_before,
                Err(_) if state.digest() != before => return Err(format!("trial {trial}: revert changed state")),
                Err(_) => {}
            }
            check_administration_invariants(&state, &initial).map_err(|e| format!("trial {trial}: {e}"))?;
        }
    }
    Ok(completions)
}

/// Doctor-then-beneficiary and beneficiary-then-doctor both administer exactly once.
pub fn both_orders_administer_once() -> Result<(), String> {
    for doctor_first in [true, false] {
        let issuer = Address([1; 20]);
        let doctor = Address([2; 20]);
        let ben = Address([3; 20]);
        let lot = Hash32([4; 32]);
        let hash_pi = oracle_keccak(&[b"pi"]);
        let mut state = RegistryState::new(issuer);
        let ctx = |sender| ExecContext { sender, now: 0 };
        let setup = [
            (issuer, RegistryOp::RegisterDoctor { doctor }),
            (issuer, RegistryOp::RegisterVaccineLot { lot, samples: 3 }),
            (
                ben,
                RegistryOp::RegisterBeneficiary {
                    beneficiary_hash: Hash32([5; 32]),
                },
            ),
        ];
        for (s, op) in setup {
            state.apply(ctx(s), &op).map_err(|e| e.to_string())?;
        }
        let sign = RegistryOp::SignAdministeredVaccine { lot, hash_pi };
        let order = if doctor_first { [doctor, ben] } else { [ben, doctor] };
        state.apply(ctx(order[0]), &sign).map_err(|e| e.to_string())?;
        if state.vaccine_lots[&lot] != 3 || !state.administrated_vaccines.is_empty() {
            return Err("single signature administered".into());
        }
        state.apply(ctx(order[1]), &sign).map_err(|e| e.to_string())?;
        if state.vaccine_lots[&lot] != 2 || state.administrated_vaccines.get(&hash_pi) != Some(&lot) {
            return Err(format!("order doctor_first={doctor_first} did not administer once"));
        }
        for s in order {
            if state.apply(ctx(s), &sign).is_ok() {
                return Err("second administration accepted".into());
            }
        }
        if state.vaccine_lots[&lot] != 2 {
            return Err("repeat signing decremented again".into());
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Identity soundness

fn random_text(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| rng.gen_range(' '..='~')).collect()
}

/// Registers `samples` random beneficiaries; for each, the correct secret must
/// pass and a random different secret must fail.
pub fn identity_soundness(samples: usize, seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let mut state = RegistryState::new(Address([1; 20]));
    let mut registered = Vec::with_capacity(samples);
    for i in 0..samples {
        let pi = format!("{}-{}", rng.gen_range(10..99), rng.gen_range(1_000_000..99_999_999u64));
        let secret = random_text(&mut rng, 40);
        let addr = random_address(&mut rng);
        match state.apply(
            ExecContext { sender: addr, now: 0 },
            &RegistryOp::RegisterBeneficiary {
                beneficiary_hash: oracle_root(&pi, &secret),
            },
        ) {
            Ok(_) => registered.push((pi, secret, addr)),
            Err(e) => return Err(format!("registration {i}: {e}")),
        }
    }
    for (i, (pi, secret, addr)) in registered.iter().enumerate() {
        let hash_pi = oracle_keccak(&[pi.as_bytes()]);
        if !state.check_beneficiary_identity(&hash_pi, &oracle_keccak(&[secret.as_bytes()]), addr) {
            return Err(format!("sample {i}: correct secret rejected"));
        }
        let mut wrong = random_text(&mut rng, 40);
        while &wrong == secret {
            wrong = random_text(&mut rng, 40);
        }
        if state.check_beneficiary_identity(&hash_pi, &oracle_keccak(&[wrong.as_bytes()]), addr) {
            return Err(format!("sample {i}: wrong secret {wrong:?} accepted"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tamper evidence

/// Flips one random bit of the encoded chain per trial; every flip must be detected.
pub fn tamper_evidence(ledger: &Ledger, flips: usize, seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let clean = ledger.encode_chain();
    if ledger::store::verify_bytes(&clean, ledger.config()) != ChainStatus::Ok {
        return Err("untampered chain fails verification".into());
    }
    for i in 0..flips {
        let mut bytes = clean.clone();
        let pos = rng.gen_range(0..bytes.len());
        let bit = rng.gen_range(0..8);
        bytes[pos] ^= 1 << bit;
        if ledger::store::verify_bytes(&bytes, ledger.config()) == ChainStatus::Ok {
            return Err(format!("flip {i} at byte {pos} bit {bit} went undetected"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Monitoring purity

/// Replays mined transactions in order, tracking rules and binding times from
/// successful receipts, and recomputes every stored valid flag.
pub fn monitoring_purity(ledger: &Ledger, contract: &Address) -> Result<usize, String> {
    let mut rules: HashMap<String, SafeHandlingRule> = HashMap::new();
    let mut bound_at: HashMap<(Address, Hash32), u64> = HashMap::new();
    let mut expected: BTreeMap<Hash32, Vec<(i32, u64, bool)>> = BTreeMap::new();
    for block in ledger.blocks() {
        for tx in &block.transactions {
            if tx.contract != *contract || !ledger.receipt(&tx.tx_hash).is_some_and(|r| r.status.is_success()) {
                continue;
            }
            match RegistryOp::decode(&tx.op, &tx.args) {
                Some(RegistryOp::RegisterTrackingRule(rule)) => {
                    rules.insert(rule.name.clone(), rule);
                }
                Some(RegistryOp::UpdateVaccineFreezer {
                    lot,
                    old_freezer,
                    new_freezer,
                }) => {
                    bound_at.remove(&(old_freezer, lot));
                    bound_at.insert((new_freezer, lot), block.timestamp);
                }
                Some(RegistryOp::Monitor { lot, rule, value }) => {
                    let r = &rules[&rule];
                    let since = bound_at[&(tx.from, lot)];
                    let valid = r.min_value < value && value < r.max_value && block.timestamp - since <= r.time_delta;
                    expected.entry(lot).or_default().push((value, block.timestamp, valid));
                }
                _ => {}
            }
        }
    }
    let state = ledger.contract(contract).ok_or("contract missing")?;
    let mut checked = 0;
    for (lot, want) in &expected {
        let got: Vec<(i32, u64, bool)> = state
            .history(lot)
            .iter()
            .map(|r| (r.value, r.timestamp, r.valid))
            .collect();
        if &got != want {
            return Err(format!("lot {lot}: stored {got:?}, recomputed {want:?}"));
        }
        checked += got.len();
    }
    Ok(checked)
}

/// A ledger with randomized monitoring: a short time window, handovers
/// between two freezers and values around the rule bounds.
pub fn random_monitoring_ledger(monitors: usize, seed: u64) -> (Ledger, Address) {
    let mut rng = rng(seed);
    let config = ledger::GenesisConfig::from_json("{}").expect("defaults");
    let mut ledger = Ledger::new(config).expect("genesis");
    let issuer = Keypair::from_label("purity-issuer");
    let freezers = [
        Keypair::from_label("purity-freezer-a"),
        Keypair::from_label("purity-freezer-b"),
    ];
    let lot = Hash32([42; 32]);
    let rule = SafeHandlingRule {
        name: "purity".into(),
        min_value: -5,
        max_value: 5,
        time_delta: 120,
    };
    let contract = registry::contract_address(&issuer.address(), 0);
    let submit = |ledger: &Ledger, kp: &Keypair, to: Address, op: &str, args: Vec<u8>| {
        let tx = sign_transaction(kp, to, op, args, ledger.next_nonce(&kp.address()), ledger.schedule()).expect("sign");
        ledger.submit(tx).expect("accepted");
    };
    submit(&ledger, &issuer, DEPLOY_SENTINEL, call::DEPLOY, Vec::new());
    let mut setup = vec![
        RegistryOp::RegisterTrackingRule(rule.clone()),
        RegistryOp::RegisterVaccineLot { lot, samples: 1 },
    ];
    for f in &freezers {
        setup.push(RegistryOp::RegisterFreezerAndRules {
            freezer: f.address(),
            rule: rule.name.clone(),
        });
    }
    setup.push(RegistryOp::UpdateVaccineFreezer {
        lot,
        old_freezer: freezers[0].address(),
        new_freezer: freezers[0].address(),
    });
    for op in setup {
        submit(&ledger, &issuer, contract, op.name(), op.encode_args());
    }
    ledger.mine_until_empty();

    let mut holder = 0;
    for _ in 0..monitors {
        if rng.gen_bool(0.1) {
            let next = 1 - holder;
            let op = RegistryOp::UpdateVaccineFreezer {
                lot,
                old_freezer: freezers[holder].address(),
                new_freezer: freezers[next].address(),
            };
            submit(&ledger, &issuer, contract, op.name(), op.encode_args());
            holder = next;
        }
        // Occasionally the previous holder reports too; that must revert.
        let who = if rng.gen_bool(0.9) { holder } else { 1 - holder };
        let op = RegistryOp::Monitor {
            lot,
            rule: rule.name.clone(),
            value: rng.gen_range(-7..=7),
        };
        submit(&ledger, &freezers[who], contract, op.name(), op.encode_args());
        for _ in 0..rng.gen_range(0..4) {
            ledger.mine_block();
        }
    }
    ledger.mine_until_empty();
    (ledger, contract)
}
