//! Off-chain beneficiary identity: secret generation, the two-leaf commitment
//! `keccak256(keccak256(pi) ++ keccak256(sk))`, and the QR text payloads
//! handed between beneficiary, doctor and vaccine vial.

use rand::rngs::OsRng;
use rand::RngCore;
use thiserror::Error;
use tracing::warn;

use crate::primitives::{keccak256, Address, Hash32, HexError};

pub const SECRET_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("entropy source unavailable: {0}")]
    Entropy(#[from] rand::Error),
    #[error("{field} must be 32 bytes, got {len}")]
    WrongLength { field: &'static str, len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QrError {
    #[error("missing field {0}")]
    MissingField(&'static str),
    #[error("field {field} is malformed: {source}")]
    Malformed {
        field: &'static str,
        #[source]
        source: HexError,
    },
    #[error("field {0} appears more than once")]
    DuplicateField(String),
    #[error("line {0} is not KEY:VALUE")]
    BadLine(usize),
    #[error("PI must be a single non-empty line")]
    BadPi,
}

/// Fresh secret key material from the operating system's CSPRNG.
pub fn generate_secret() -> Result<Vec<u8>, IdentityError> {
    let mut secret = vec![0u8; SECRET_LEN];
    OsRng.try_fill_bytes(&mut secret)?;
    Ok(secret)
}

pub fn hash_pi(pi: &str) -> Hash32 {
    keccak256(pi.as_bytes())
}

/// Commitment root over the two leaf hashes, in `(pi, sk)` order.
pub fn beneficiary_root(hash_pi: &[u8], hash_sk: &[u8]) -> Result<Hash32, IdentityError> {
    if hash_pi.len() != Hash32::LEN {
        return Err(IdentityError::WrongLength {
            field: "hashPI",
            len: hash_pi.len(),
        });
    }
    if hash_sk.len() != Hash32::LEN {
        return Err(IdentityError::WrongLength {
            field: "hashSK",
            len: hash_sk.len(),
        });
    }
    let mut concat = [0u8; 64];
    concat[..32].copy_from_slice(hash_pi);
    concat[32..].copy_from_slice(hash_sk);
    Ok(keccak256(&concat))
}

/// Everything a beneficiary holds. Only `root` (at registration) and
/// `hash_pi` / `hash_sk` (at administration) ever go on chain.
#[derive(Clone, PartialEq, Eq)]
pub struct BeneficiaryCredentials {
    pub pi: String,
    sk: Vec<u8>,
    pub hash_pi: Hash32,
    pub hash_sk: Hash32,
    pub root: Hash32,
}

impl std::fmt::Debug for BeneficiaryCredentials {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BeneficiaryCredentials")
            .field("hash_pi", &self.hash_pi)
            .field("root", &self.root)
            .finish_non_exhaustive()
    }
}

impl BeneficiaryCredentials {
    /// Credentials from raw secret bytes.
    pub fn new(pi: &str, sk: Vec<u8>) -> Self {
        let hash_pi = hash_pi(pi);
        let hash_sk = keccak256(&sk);
        let root = beneficiary_root(hash_pi.as_bytes(), hash_sk.as_bytes()).expect("32-byte leaves");
        Self {
            pi: pi.to_string(),
            sk,
            hash_pi,
            hash_sk,
            root,
        }
    }

    /// Credentials from a passphrase-style secret, hashed as UTF-8.
    pub fn from_passphrase(pi: &str, secret: &str) -> Self {
        Self::new(pi, secret.as_bytes().to_vec())
    }

    pub fn generate(pi: &str) -> Result<Self, IdentityError> {
        Ok(Self::new(pi, generate_secret()?))
    }

    pub fn secret(&self) -> &[u8] {
        &self.sk
    }

    pub fn qr_payload(&self, contract: Address, tx_hash: Hash32) -> BeneficiaryQrPayload {
        BeneficiaryQrPayload {
            pi: self.pi.clone(),
            hash_secret: self.hash_sk,
            contract,
            tx_hash,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeneficiaryQrPayload {
    pub pi: String,
    pub hash_secret: Hash32,
    pub contract: Address,
    pub tx_hash: Hash32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaccineQrPayload {
    pub lot_id: Hash32,
    pub contract: Address,
}

const PI: &str = "PI";
const HASH_SECRET: &str = "HASH_SECRET";
const CONTRACT: &str = "CONTRACT";
const TX_HASH: &str = "TX_HASH";
const V_ID: &str = "V_ID";

pub fn encode_beneficiary_qr(p: &BeneficiaryQrPayload) -> Result<String, QrError> {
    if p.pi.is_empty() || p.pi.contains(['\n', '\r']) {
        return Err(QrError::BadPi);
    }
    Ok(format!(
        "{PI}:{}\n{HASH_SECRET}:{}\n{CONTRACT}:{}\n{TX_HASH}:{}",
        p.pi, p.hash_secret, p.contract, p.tx_hash
    ))
}

pub fn decode_beneficiary_qr(text: &str) -> Result<BeneficiaryQrPayload, QrError> {
    let fields = parse_fields(text, &[PI, HASH_SECRET, CONTRACT, TX_HASH])?;
    let pi = fields.get(PI)?.to_string();
    if pi.is_empty() {
        return Err(QrError::BadPi);
    }
    Ok(BeneficiaryQrPayload {
        pi,
        hash_secret: fields.parse(HASH_SECRET)?,
        contract: fields.parse(CONTRACT)?,
        tx_hash: fields.parse(TX_HASH)?,
    })
}

pub fn encode_vaccine_qr(p: &VaccineQrPayload) -> String {
    format!("{V_ID}:{}\n{CONTRACT}:{}", p.lot_id, p.contract)
}

pub fn decode_vaccine_qr(text: &str) -> Result<VaccineQrPayload, QrError> {
    let fields = parse_fields(text, &[V_ID, CONTRACT])?;
    Ok(VaccineQrPayload {
        lot_id: fields.parse(V_ID)?,
        contract: fields.parse(CONTRACT)?,
    })
}

struct Fields<'a> {
    keys: &'static [&'static str],
    values: Vec<Option<&'a str>>,
}

impl<'a> Fields<'a> {
    fn get(&self, key: &'static str) -> Result<&'a str, QrError> {
        let idx = self.keys.iter().position(|k| *k == key).expect("known key");
        self.values[idx].ok_or(QrError::MissingField(key))
    }

    fn parse<T: std::str::FromStr<Err = HexError>>(&self, key: &'static str) -> Result<T, QrError> {
        self.get(key)?
            .parse()
            .map_err(|source| QrError::Malformed { field: key, source })
    }
}

fn parse_fields<'a>(text: &'a str, keys: &'static [&'static str]) -> Result<Fields<'a>, QrError> {
    let mut values = vec![None; keys.len()];
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once(':').ok_or(QrError::BadLine(n + 1))?;
        match keys.iter().position(|k| *k == key) {
            Some(idx) => {
                if values[idx].replace(value).is_some() {
                    return Err(QrError::DuplicateField(key.to_string()));
                }
            }
            None => warn!(key, "ignoring unknown QR field"),
        }
    }
    Ok(Fields { keys, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const KNOWN_PI: &str = "20-10563145-8";
    const KNOWN_SECRET: &str = "my-super-secret";
    const KNOWN_HASH_PI: &str = "0xa3f6550e5420ddda304a6b22772eb70b48ada3c7eb14648e321bb65387c8cfab";
    const KNOWN_HASH_SECRET: &str = "0x820371900007448f4a8d909327870ece84168bf90f1de8dddc0b6c7473c44b40";
    const KNOWN_ROOT: &str = "0xfe08609620228b43d9eb80125dfab7a1686e9c3cd7ea5326aa1c5abf7e689b87";
    const KNOWN_CONTRACT: &str = "0x536798D9D1f0507C1a8600d9A475d410a90D5A0A";
    const KNOWN_TX: &str = "0x76e5a604b3ca803e7738947dbc8616435d5fa410208e382a6d51b58d86b0374c";
    const KNOWN_LOT: &str = "0xd7adb300b4c0d0f79bbb9195e3f9513b49caf8d14383062b2032d5656b13c5b5";

    #[test]
    fn utf8_hashes_reproduce_published_values() {
        assert_eq!(hash_pi(KNOWN_PI).to_string(), KNOWN_HASH_PI);
        assert_eq!(keccak256(KNOWN_SECRET.as_bytes()).to_string(), KNOWN_HASH_SECRET);
        let creds = BeneficiaryCredentials::from_passphrase(KNOWN_PI, KNOWN_SECRET);
        assert_eq!(creds.root.to_string(), KNOWN_ROOT);
    }

    #[test]
    fn root_is_order_sensitive_and_stable() {
        let a: Hash32 = KNOWN_HASH_PI.parse().unwrap();
        let b: Hash32 = KNOWN_HASH_SECRET.parse().unwrap();
        let fwd = beneficiary_root(a.as_bytes(), b.as_bytes()).unwrap();
        let rev = beneficiary_root(b.as_bytes(), a.as_bytes()).unwrap();
        assert_ne!(fwd, rev);
        // Oracle: hash the concatenation directly.
        let mut swapped = b.0.to_vec();
        swapped.extend_from_slice(&a.0);
        assert_eq!(rev, keccak256(&swapped));
        assert_eq!(fwd, beneficiary_root(a.as_bytes(), b.as_bytes()).unwrap());
    }

    #[test]
    fn root_rejects_wrong_lengths() {
        assert!(matches!(
            beneficiary_root(&[0; 31], &[0; 32]),
            Err(IdentityError::WrongLength {
                field: "hashPI",
                len: 31
            })
        ));
        assert!(matches!(
            beneficiary_root(&[0; 32], &[0; 33]),
            Err(IdentityError::WrongLength {
                field: "hashSK",
                len: 33
            })
        ));
    }

    #[test]
    fn secrets_are_fresh() {
        let a = generate_secret().unwrap();
        let b = generate_secret().unwrap();
        assert!(a.len() >= 32);
        assert_ne!(a, b);
    }

    #[test]
    fn distinct_secrets_give_distinct_roots() {
        let roots: std::collections::HashSet<Hash32> = (0..1000)
            .map(|_| BeneficiaryCredentials::generate(KNOWN_PI).unwrap().root)
            .collect();
        assert_eq!(roots.len(), 1000);
    }

    fn known_payload() -> BeneficiaryQrPayload {
        BeneficiaryQrPayload {
            pi: KNOWN_PI.into(),
            hash_secret: KNOWN_HASH_SECRET.parse().unwrap(),
            contract: KNOWN_CONTRACT.parse().unwrap(),
            tx_hash: KNOWN_TX.parse().unwrap(),
        }
    }

    #[test]
    fn beneficiary_qr_layout() {
        let text = encode_beneficiary_qr(&known_payload()).unwrap();
        assert_eq!(
            text,
            format!(
                "PI:20-10563145-8\nHASH_SECRET:{KNOWN_HASH_SECRET}\nCONTRACT:{}\nTX_HASH:{KNOWN_TX}",
                KNOWN_CONTRACT.to_lowercase()
            )
        );
        assert_eq!(decode_beneficiary_qr(&text).unwrap(), known_payload());
    }

    #[test]
    fn beneficiary_qr_errors_name_the_field() {
        let text = encode_beneficiary_qr(&known_payload()).unwrap();
        let without_tx: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert_eq!(
            decode_beneficiary_qr(&without_tx),
            Err(QrError::MissingField("TX_HASH"))
        );
        let bad = text.replace("CONTRACT:0x", "CONTRACT:0xzz");
        assert!(matches!(
            decode_beneficiary_qr(&bad),
            Err(QrError::Malformed { field: "CONTRACT", .. })
        ));
        let doubled = format!("{text}\nPI:other");
        assert_eq!(
            decode_beneficiary_qr(&doubled),
            Err(QrError::DuplicateField("PI".into()))
        );
        let mut multiline = known_payload();
        multiline.pi = "a\nTX_HASH:0x".into();
        assert_eq!(encode_beneficiary_qr(&multiline), Err(QrError::BadPi));
    }

    #[test]
    fn vaccine_qr_round_trip_and_forward_compat() {
        let p = VaccineQrPayload {
            lot_id: KNOWN_LOT.parse().unwrap(),
            contract: KNOWN_CONTRACT.parse().unwrap(),
        };
        let text = encode_vaccine_qr(&p);
        assert!(text.starts_with(&format!("V_ID:{KNOWN_LOT}\n")));
        assert_eq!(decode_vaccine_qr(&text).unwrap(), p);
        let extended = format!("{text}\nEXPIRY:2021-06-01\n");
        assert_eq!(decode_vaccine_qr(&extended).unwrap(), p);
        let corrupt = text.replace(&KNOWN_LOT[2..6], "zzzz");
        assert!(matches!(
            decode_vaccine_qr(&corrupt),
            Err(QrError::Malformed { field: "V_ID", .. })
        ));
    }

    fn arb_hash() -> impl Strategy<Value = Hash32> {
        proptest::array::uniform32(any::<u8>()).prop_map(Hash32)
    }

    proptest! {
        #[test]
        fn beneficiary_qr_is_invertible(
            pi in "[^\r\n]{1,24}",
            hash_secret in arb_hash(),
            contract in proptest::array::uniform20(any::<u8>()).prop_map(Address),
            tx_hash in arb_hash(),
        ) {
            let p = BeneficiaryQrPayload { pi, hash_secret, contract, tx_hash };
            let text = encode_beneficiary_qr(&p).unwrap();
            prop_assert_eq!(decode_beneficiary_qr(&text).unwrap(), p);
        }
    }
}
