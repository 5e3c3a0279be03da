//! On-disk chain directory: genesis parameters, the verified block log, the
//! pending mempool and the default contract, guarded by an exclusive lock.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use coldchain_core::ledger::{store, GenesisConfig, Ledger, SignedTransaction};
use coldchain_core::Address;

pub const GENESIS_FILE: &str = "genesis.json";
pub const CHAIN_FILE: &str = "chain.jsonl";
pub const MEMPOOL_FILE: &str = "mempool.jsonl";
pub const CONTRACT_FILE: &str = "default-contract";
const LOCK_FILE: &str = ".lock";

pub struct ChainDir {
    root: PathBuf,
    _lock: File,
    pub ledger: Ledger,
    persisted_height: u64,
}

impl ChainDir {
    /// Opens (creating on first use) and locks the directory, verifies the
    /// chain file, rebuilds state and requeues pending transactions.
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(root.join(LOCK_FILE))
            .context("cannot open lock file")?;
        lock.lock().context("cannot lock chain directory")?;

        let genesis_path = root.join(GENESIS_FILE);
        let config = if genesis_path.exists() {
            GenesisConfig::load(&genesis_path)?
        } else {
            let cfg = GenesisConfig::default();
            cfg.save(&genesis_path)?;
            cfg
        };

        let chain_path = root.join(CHAIN_FILE);
        let ledger = if chain_path.exists() {
            Ledger::open(config, &chain_path)?
        } else {
            let ledger = Ledger::new(config)?;
            store::write_chain(&chain_path, ledger.blocks())?;
            ledger
        };

        let mempool_path = root.join(MEMPOOL_FILE);
        if mempool_path.exists() {
            let raw = fs::read_to_string(&mempool_path)?;
            for (i, line) in raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let tx: SignedTransaction =
                    serde_json::from_str(line).with_context(|| format!("{MEMPOOL_FILE} line {}", i + 1))?;
                ledger
                    .submit(tx)
                    .map_err(|r| anyhow::anyhow!("{MEMPOOL_FILE} line {}: {r}", i + 1))?;
            }
        }

        Ok(Self {
            root: root.to_path_buf(),
            _lock: lock,
            persisted_height: ledger.height(),
            ledger,
        })
    }

    pub fn chain_path(&self) -> PathBuf {
        self.root.join(CHAIN_FILE)
    }

    pub fn default_contract(&self) -> Result<Option<Address>> {
        let path = self.root.join(CONTRACT_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let raw = fs::read_to_string(&path)?;
        Ok(Some(
            raw.trim().parse().with_context(|| format!("bad {CONTRACT_FILE}"))?,
        ))
    }

    pub fn set_default_contract(&self, addr: &Address) -> Result<()> {
        fs::write(self.root.join(CONTRACT_FILE), format!("{addr}\n"))?;
        Ok(())
    }

    /// Appends newly mined blocks and rewrites the pending mempool.
    pub fn save(&mut self) -> Result<()> {
        let start = self.persisted_height as usize + 1;
        if start < self.ledger.blocks().len() {
            store::append_blocks(&self.chain_path(), &self.ledger.blocks()[start..])?;
            self.persisted_height = self.ledger.height();
        }
        let mut out = Vec::new();
        for tx in self.ledger.mempool() {
            serde_json::to_writer(&mut out, &tx)?;
            out.push(b'\n');
        }
        let tmp = self.root.join(format!("{MEMPOOL_FILE}.tmp"));
        File::create(&tmp)?.write_all(&out)?;
        fs::rename(&tmp, self.root.join(MEMPOOL_FILE))?;
        Ok(())
    }
}
