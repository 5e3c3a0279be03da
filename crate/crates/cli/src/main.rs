//! `coldchain`: command-line front end for the cold-chain ledger.

mod chain_dir;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use coldchain_core::edge::{parse_readings_csv, EdgeAggregator, KeyringSigner, DEFAULT_INTERVAL_SECS};
use coldchain_core::identity::{self, BeneficiaryCredentials, VaccineQrPayload};
use coldchain_core::ledger::{
    sign_transaction, store, ChainStatus, GenesisConfig, Keypair, Receipt, ReceiptStatus, DEFAULT_MONITOR_GAS,
    DEPLOY_SENTINEL,
};
use coldchain_core::registry::{self, call, RegistryOp, SafeHandlingRule};
use coldchain_core::scenario::{self, Scenario};
use coldchain_core::{keccak256, Address, Hash32};
use serde_json::{json, Value};

use chain_dir::{ChainDir, CHAIN_FILE, GENESIS_FILE};

#[derive(Parser)]
#[command(
    name = "coldchain",
    version,
    about = "Vaccine cold-chain registry on a deterministic local ledger"
)]
struct Cli {
    /// Chain directory.
    #[arg(long, global = true, env = "COLDCHAIN_DIR", default_value = "coldchain-data")]
    chain: PathBuf,
    /// Key file of the signing actor.
    #[arg(long, global = true, env = "COLDCHAIN_KEY")]
    key: Option<PathBuf>,
    /// Contract address; defaults to the last one deployed from this directory.
    #[arg(long, global = true)]
    contract: Option<Address>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    /// Mine until the mempool is empty after submitting.
    #[arg(long, global = true)]
    auto_mine: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct LotArg {
    #[arg(long)]
    lot: Hash32,
}

/// Beneficiary identity, from the clear PI or its hash.
#[derive(Args)]
struct PiArgs {
    #[arg(long, conflicts_with = "hash_pi")]
    pi: Option<String>,
    #[arg(long)]
    hash_pi: Option<Hash32>,
}

impl PiArgs {
    fn resolve(&self) -> Result<Hash32> {
        match (&self.pi, self.hash_pi) {
            (Some(pi), _) => Ok(identity::hash_pi(pi)),
            (None, Some(h)) => Ok(h),
            (None, None) => Err(usage("one of --pi or --hash-pi is required")),
        }
    }
}

#[derive(Args)]
struct SecretArgs {
    /// Passphrase secret, hashed as UTF-8.
    #[arg(long, conflicts_with_all = ["hash_secret", "secret_file"])]
    secret: Option<String>,
    #[arg(long, conflicts_with = "secret_file")]
    hash_secret: Option<Hash32>,
    /// File holding a hex-encoded raw secret.
    #[arg(long)]
    secret_file: Option<PathBuf>,
}

impl SecretArgs {
    fn resolve(&self) -> Result<Hash32> {
        if let Some(s) = &self.secret {
            return Ok(keccak256(s.as_bytes()));
        }
        if let Some(h) = self.hash_secret {
            return Ok(h);
        }
        if let Some(path) = &self.secret_file {
            let raw = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let bytes = hex::decode(raw.trim().trim_start_matches("0x")).context("secret file is not hex")?;
            return Ok(keccak256(&bytes));
        }
        Err(usage("one of --secret, --hash-secret or --secret-file is required"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Create a keypair file.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        /// Derive deterministically from a label instead of the OS RNG.
        #[arg(long)]
        label: Option<String>,
    },
    /// Deploy a registry contract; the signer becomes its issuer.
    Deploy,
    RegisterDoctor {
        #[arg(long)]
        doctor: Address,
    },
    RegisterAdmin {
        #[arg(long)]
        admin: Address,
    },
    /// Generate beneficiary credentials, register the commitment and print the QR payload.
    Subscribe {
        #[arg(long)]
        pi: String,
        /// Use a passphrase instead of a random secret.
        #[arg(long)]
        secret: Option<String>,
        /// Where to store a generated secret (hex).
        #[arg(long)]
        secret_out: Option<PathBuf>,
    },
    RegisterRule {
        #[arg(long)]
        name: String,
        #[arg(long, allow_hyphen_values = true)]
        min: i32,
        #[arg(long, allow_hyphen_values = true)]
        max: i32,
        /// Seconds a freezer may hold a lot under this rule.
        #[arg(long)]
        time_delta: u64,
    },
    RegisterFreezer {
        #[arg(long)]
        freezer: Address,
        #[arg(long)]
        rule: String,
    },
    RegisterLot {
        #[command(flatten)]
        lot: LotArg,
        #[arg(long)]
        samples: u64,
    },
    /// Move a lot between freezers (old = new for the first assignment).
    AssignFreezer {
        #[command(flatten)]
        lot: LotArg,
        #[arg(long)]
        old: Address,
        #[arg(long)]
        new: Address,
    },
    Monitor {
        #[command(flatten)]
        lot: LotArg,
        #[arg(long)]
        rule: String,
        #[arg(long, allow_hyphen_values = true)]
        value: i32,
    },
    /// Reduce a CSV of raw readings to per-interval extremes and submit them.
    IngestReadings {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value_t = DEFAULT_INTERVAL_SECS)]
        interval: u64,
    },
    /// Read-only identity check.
    VerifyPatient {
        /// Beneficiary QR payload file; replaces --pi and --hash-secret.
        #[arg(long)]
        qr: Option<PathBuf>,
        #[command(flatten)]
        pi: PiArgs,
        #[command(flatten)]
        secret: SecretArgs,
        #[arg(long)]
        beneficiary: Address,
    },
    /// Read-only lot monitoring history.
    History {
        #[command(flatten)]
        lot: LotArg,
    },
    /// Sign an administration as doctor or beneficiary
    AdministerSign {
        #[command(flatten)]
        lot: LotArg,
        #[command(flatten)]
        pi: PiArgs,
    },
    /// Report a side effect for an administered lot
    ReportSideEffect {
        #[command(flatten)]
        lot: LotArg,
        #[command(flatten)]
        pi: PiArgs,
        #[command(flatten)]
        secret: SecretArgs,
        #[arg(long)]
        description: String,
    },
    /// Mine blocks: a fixed number, or until the mempool is empty.
    Mine {
        #[arg(long)]
        blocks: Option<u64>,
    },
    Receipt {
        #[arg(long)]
        tx: Hash32,
    },
    VerifyChain,
    /// Replay a scenario file on a fresh in-memory ledger.
    RunScenario {
        file: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write the resulting chain.
        #[arg(long)]
        chain_out: Option<PathBuf>,
    },
    /// Mining time against freezer count.
    Throughput {
        #[arg(long, default_value_t = 10_000)]
        max: u64,
        #[arg(long, default_value_t = 500)]
        step: u64,
        #[arg(long, default_value_t = DEFAULT_MONITOR_GAS)]
        monitor_gas: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also mine a synthetic mempool at `max` freezers.
        #[arg(long)]
        simulate: bool,
    },
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Printed result plus whether it represents a domain failure (exit 1).
struct Output {
    human: String,
    json: Value,
    failed: bool,
}

impl Output {
    fn ok(human: impl Into<String>, json: Value) -> Self {
        Self {
            human: human.into(),
            json,
            failed: false,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            if cli.json {
                println!("{}", out.json);
            } else if !out.human.is_empty() {
                println!("{}", out.human);
            }
            if out.failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            let code = if e.downcast_ref::<UsageError>().is_some() { 2 } else { 1 };
            if cli.json {
                println!("{}", json!({"error": format!("{e:#}")}));
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(code)
        }
    }
}

fn load_key(cli: &Cli) -> Result<Keypair> {
    let path = cli
        .key
        .as_ref()
        .ok_or_else(|| usage("--key (or COLDCHAIN_KEY) is required"))?;
    Ok(Keypair::load(path)?)
}

fn contract(cli: &Cli, dir: &ChainDir) -> Result<Address> {
    match cli.contract {
        Some(c) => Ok(c),
        None => dir
            .default_contract()?
            .ok_or_else(|| usage("no contract deployed here; pass --contract")),
    }
}

fn receipt_json(r: &Receipt) -> Value {
    serde_json::to_value(r).expect("receipt serializes")
}

fn receipt_human(r: &Receipt) -> String {
    let status = match &r.status {
        ReceiptStatus::Success => "success".to_string(),
        ReceiptStatus::Reverted(reason) => format!("reverted ({reason})"),
    };
    let mut s = format!("block {}  gas {}  {status}", r.block_number, r.gas_used);
    if let Some(c) = r.contract_address {
        s.push_str(&format!("\ncontract {c}"));
    }
    for e in &r.events {
        s.push_str(&format!("\nevent {}({})", e.name, e.args.join(", ")));
    }
    s
}

/// Signs and queues one transaction, optionally mines, and persists.
fn submit(
    cli: &Cli,
    dir: &mut ChainDir,
    kp: &Keypair,
    to: Address,
    op: &str,
    args: Vec<u8>,
) -> Result<(Hash32, Output)> {
    let nonce = dir.ledger.next_nonce(&kp.address());
    let tx = sign_transaction(kp, to, op, args, nonce, dir.ledger.schedule())?;
    let hash = dir.ledger.submit(tx).map_err(|r| anyhow!("rejected: {r}"))?;
    let out = if cli.auto_mine {
        dir.ledger.mine_until_empty();
        let r = dir.ledger.receipt(&hash).expect("mined").clone();
        Output {
            human: format!("tx {hash}\n{}", receipt_human(&r)),
            json: json!({"txHash": hash, "receipt": receipt_json(&r)}),
            failed: !r.status.is_success(),
        }
    } else {
        Output::ok(format!("tx {hash} queued"), json!({"txHash": hash, "receipt": null}))
    };
    dir.save()?;
    Ok((hash, out))
}

fn submit_op(cli: &Cli, op: RegistryOp) -> Result<Output> {
    let kp = load_key(cli)?;
    let mut dir = ChainDir::open(&cli.chain)?;
    let to = contract(cli, &dir)?;
    Ok(submit(cli, &mut dir, &kp, to, op.name(), op.encode_args())?.1)
}

fn run(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Keygen { out, label } => {
            if out.exists() {
                bail!("{} already exists", out.display());
            }
            let kp = match label {
                Some(l) => Keypair::from_label(l),
                None => Keypair::generate(),
            };
            kp.save(out)?;
            Ok(Output::ok(
                format!("address {}", kp.address()),
                json!({"address": kp.address(), "keyFile": out}),
            ))
        }
        Command::Deploy => {
            let kp = load_key(cli)?;
            let mut dir = ChainDir::open(&cli.chain)?;
            let nonce = dir.ledger.next_nonce(&kp.address());
            let addr = registry::contract_address(&kp.address(), nonce);
            let (_, mut out) = submit(cli, &mut dir, &kp, DEPLOY_SENTINEL, call::DEPLOY, Vec::new())?;
            dir.set_default_contract(&addr)?;
            out.human = format!("contract {addr}\n{}", out.human);
            out.json["contract"] = json!(addr);
            Ok(out)
        }
        Command::RegisterDoctor { doctor } => submit_op(cli, RegistryOp::RegisterDoctor { doctor: *doctor }),
        Command::RegisterAdmin { admin } => submit_op(cli, RegistryOp::RegisterMedicalUnitAdmin { admin: *admin }),
        Command::Subscribe { pi, secret, secret_out } => {
            let creds = match secret {
                Some(s) => BeneficiaryCredentials::from_passphrase(pi, s),
                None => BeneficiaryCredentials::generate(pi)?,
            };
            if secret.is_none() && secret_out.is_none() {
                return Err(usage("a generated secret needs --secret-out"));
            }
            let kp = load_key(cli)?;
            let mut dir = ChainDir::open(&cli.chain)?;
            let to = contract(cli, &dir)?;
            if let Some(path) = secret_out {
                fs::write(path, hex::encode(creds.secret()) + "\n")
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            let op = RegistryOp::RegisterBeneficiary {
                beneficiary_hash: creds.root,
            };
            let (hash, out) = submit(cli, &mut dir, &kp, to, op.name(), op.encode_args())?;
            let qr = identity::encode_beneficiary_qr(&creds.qr_payload(to, hash))?;
            Ok(Output {
                human: format!("{qr}\n\n{}", out.human),
                json: json!({"qr": qr, "root": creds.root, "hashPI": creds.hash_pi, "submission": out.json}),
                failed: out.failed,
            })
        }
        Command::RegisterRule {
            name,
            min,
            max,
            time_delta,
        } => submit_op(
            cli,
            RegistryOp::RegisterTrackingRule(SafeHandlingRule {
                name: name.clone(),
                min_value: *min,
                max_value: *max,
                time_delta: *time_delta,
            }),
        ),
        Command::RegisterFreezer { freezer, rule } => submit_op(
            cli,
            RegistryOp::RegisterFreezerAndRules {
                freezer: *freezer,
                rule: rule.clone(),
            },
        ),
        Command::RegisterLot { lot, samples } => {
            let kp = load_key(cli)?;
            let mut dir = ChainDir::open(&cli.chain)?;
            let to = contract(cli, &dir)?;
            let op = RegistryOp::RegisterVaccineLot {
                lot: lot.lot,
                samples: *samples,
            };
            let (_, out) = submit(cli, &mut dir, &kp, to, op.name(), op.encode_args())?;
            let qr = identity::encode_vaccine_qr(&VaccineQrPayload {
                lot_id: lot.lot,
                contract: to,
            });
            Ok(Output {
                human: format!("{qr}\n\n{}", out.human),
                json: json!({"qr": qr, "submission": out.json}),
                failed: out.failed,
            })
        }
        Command::AssignFreezer { lot, old, new } => submit_op(
            cli,
            RegistryOp::UpdateVaccineFreezer {
                lot: lot.lot,
                old_freezer: *old,
                new_freezer: *new,
            },
        ),
        Command::Monitor { lot, rule, value } => submit_op(
            cli,
            RegistryOp::Monitor {
                lot: lot.lot,
                rule: rule.clone(),
                value: *value,
            },
        ),
        Command::IngestReadings { csv, interval } => ingest(cli, csv, *interval),
        Command::VerifyPatient {
            qr,
            pi,
            secret,
            beneficiary,
        } => {
            let (hash_pi, hash_secret, qr_contract) = match qr {
                Some(path) => {
                    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
                    let p = identity::decode_beneficiary_qr(text.trim_end())?;
                    (identity::hash_pi(&p.pi), p.hash_secret, Some(p.contract))
                }
                None => (pi.resolve()?, secret.resolve()?, None),
            };
            let dir = ChainDir::open(&cli.chain)?;
            let to = match (cli.contract, qr_contract) {
                (Some(c), _) | (None, Some(c)) => c,
                (None, None) => contract(cli, &dir)?,
            };
            let ok = dir
                .ledger
                .check_beneficiary_identity(&to, hash_pi, hash_secret, *beneficiary)?;
            Ok(Output::ok(ok.to_string(), json!({"registered": ok})))
        }
        Command::History { lot } => {
            let dir = ChainDir::open(&cli.chain)?;
            let to = contract(cli, &dir)?;
            let records = dir.ledger.lot_history(&to, lot.lot)?;
            let human = records
                .iter()
                .map(|r| format!("{}  {}  {}  {}  {}", r.timestamp, r.freezer, r.rule, r.value, r.valid))
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Output::ok(human, json!({"lot": lot.lot, "records": records})))
        }
        Command::AdministerSign { lot, pi } => submit_op(
            cli,
            RegistryOp::SignAdministeredVaccine {
                lot: lot.lot,
                hash_pi: pi.resolve()?,
            },
        ),
        Command::ReportSideEffect {
            lot,
            pi,
            secret,
            description,
        } => submit_op(
            cli,
            RegistryOp::RegisterSideEffect {
                hash_pi: pi.resolve()?,
                hash_secret: secret.resolve()?,
                lot: lot.lot,
                description: description.clone(),
            },
        ),
        Command::Mine { blocks } => {
            let mut dir = ChainDir::open(&cli.chain)?;
            let mined = match blocks {
                Some(n) => {
                    for _ in 0..*n {
                        dir.ledger.mine_block();
                    }
                    *n
                }
                None => dir.ledger.mine_until_empty(),
            };
            dir.save()?;
            let head = dir.ledger.head();
            Ok(Output::ok(
                format!("mined {mined} block(s); head {} at {}", head.number, head.timestamp),
                json!({"mined": mined, "height": head.number, "headHash": head.block_hash, "timestamp": head.timestamp}),
            ))
        }
        Command::Receipt { tx } => {
            let dir = ChainDir::open(&cli.chain)?;
            match dir.ledger.receipt(tx) {
                Some(r) => Ok(Output {
                    human: receipt_human(r),
                    json: receipt_json(r),
                    failed: !r.status.is_success(),
                }),
                None => {
                    let queued = dir.ledger.mempool().iter().any(|q| q.tx_hash == *tx);
                    let state = if queued { "pending" } else { "unknown" };
                    Ok(Output {
                        human: format!("{tx}: {state}"),
                        json: json!({"txHash": tx, "receipt": null, "state": state}),
                        failed: true,
                    })
                }
            }
        }
        Command::VerifyChain => verify_chain(&cli.chain),
        Command::RunScenario {
            file,
            report,
            chain_out,
        } => {
            let s = Scenario::load(file).map_err(|e| usage(e.to_string()))?;
            let replay = scenario::run_scenario(&s)?;
            if let Some(path) = report {
                scenario::write_report_json(path, &replay.report)?;
            }
            if let Some(path) = chain_out {
                store::write_chain(path, replay.ledger.blocks())?;
            }
            let r = &replay.report;
            let status = match &r.status {
                scenario::ReplayStatus::Passed => "passed".to_string(),
                scenario::ReplayStatus::Failed { event, op, reason } => {
                    format!("failed at event {event} ({op}): {reason}")
                }
            };
            Ok(Output {
                human: format!(
                    "{}: {status}\n{} events, {} blocks, total gas {}",
                    r.scenario,
                    r.entries.len(),
                    r.blocks,
                    r.total_gas
                ),
                json: serde_json::to_value(r)?,
                failed: !r.passed(),
            })
        }
        Command::Throughput {
            max,
            step,
            monitor_gas,
            out,
            simulate,
        } => {
            let config = GenesisConfig::default();
            let curve = scenario::throughput_curve(*max, *step, *monitor_gas, &config.schedule())
                .map_err(|e| usage(e.to_string()))?;
            if let Some(path) = out {
                scenario::write_curve_csv(path, &curve)?;
            }
            let sim = if *simulate {
                Some(scenario::simulate_mining(*max, *monitor_gas, &config)?)
            } else {
                None
            };
            let mut human = if out.is_some() {
                String::new()
            } else {
                scenario::curve_csv(&curve)
            };
            if let Some(run) = &sim {
                human.push_str(&format!(
                    "simulated {} freezers: {} transactions in {} blocks ({} s)",
                    run.freezer_count, run.tx_count, run.blocks, run.seconds
                ));
            }
            Ok(Output::ok(
                human.trim_end().to_string(),
                json!({"points": curve, "simulation": sim}),
            ))
        }
    }
}

fn ingest(cli: &Cli, csv: &Path, interval: u64) -> Result<Output> {
    let kp = load_key(cli)?;
    let file = fs::File::open(csv).with_context(|| format!("cannot read {}", csv.display()))?;
    let readings = parse_readings_csv(file)?;
    let mut dir = ChainDir::open(&cli.chain)?;
    let to = contract(cli, &dir)?;
    let mut signer = KeyringSigner::new(to, dir.ledger.schedule().clone());
    signer.add_key(kp.clone(), dir.ledger.next_nonce(&kp.address()));
    let mut edge = EdgeAggregator::new(interval).map_err(|e| usage(e.to_string()))?;
    let mut txs = Vec::new();
    for r in &readings {
        txs.extend(edge.ingest(r, &mut signer)?);
    }
    txs.extend(edge.flush_all(&mut signer)?);
    let mut hashes = Vec::with_capacity(txs.len());
    for tx in txs {
        hashes.push(dir.ledger.submit(tx).map_err(|r| anyhow!("rejected: {r}"))?);
    }
    let mut failed = false;
    if cli.auto_mine {
        dir.ledger.mine_until_empty();
        failed = hashes
            .iter()
            .any(|h| !dir.ledger.receipt(h).is_some_and(|r| r.status.is_success()));
    }
    dir.save()?;
    Ok(Output {
        human: format!(
            "{} readings reduced to {} monitor transaction(s)",
            readings.len(),
            hashes.len()
        ),
        json: json!({"readings": readings.len(), "transactions": hashes}),
        failed,
    })
}

fn verify_chain(root: &Path) -> Result<Output> {
    let genesis = root.join(GENESIS_FILE);
    let chain = root.join(CHAIN_FILE);
    if !chain.exists() {
        return Err(usage(format!("no chain at {}", chain.display())));
    }
    let config = GenesisConfig::load(&genesis)?;
    let status = store::verify_file(&chain, &config)?;
    Ok(match status {
        ChainStatus::Ok => Output::ok("chain ok", json!({"status": "ok"})),
        ChainStatus::Corrupt { block } => Output {
            human: format!("chain corrupt at block {block}"),
            json: json!({"status": "corrupt", "block": block}),
            failed: true,
        },
    })
}
