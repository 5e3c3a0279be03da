use std::fmt;
use std::fs;
use std::path::Path;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::rngs::OsRng;
use serde::{Deserialize, Serialize};

use crate::error::LedgerError;
use crate::primitives::{from_hex, keccak256, to_hex, Address};

pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;

/// An actor's signing identity. The address is the last 20 bytes of the
/// Keccak-256 of the public key.
#[derive(Clone)]
pub struct Keypair {
    signing: SigningKey,
    address: Address,
}

impl Keypair {
    pub fn generate() -> Self {
        Self::from_signing(SigningKey::generate(&mut OsRng))
    }

    pub fn from_secret(secret: [u8; 32]) -> Self {
        Self::from_signing(SigningKey::from_bytes(&secret))
    }

    /// Deterministic keypair for a named actor; used by scenario replays.
    pub fn from_label(label: &str) -> Self {
        Self::from_secret(keccak256(format!("coldchain-actor:{label}").as_bytes()).0)
    }

    fn from_signing(signing: SigningKey) -> Self {
        let address = address_of(&signing.verifying_key());
        Self { signing, address }
    }

    pub fn address(&self) -> Address {
        self.address
    }

    pub fn public_key(&self) -> [u8; PUBLIC_KEY_LEN] {
        self.signing.verifying_key().to_bytes()
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> [u8; SIGNATURE_LEN] {
        self.signing.sign(message).to_bytes()
    }

    pub fn save(&self, path: &Path) -> Result<(), LedgerError> {
        let file = KeyFile {
            address: self.address,
            public_key: to_hex(&self.public_key()),
            secret_key: to_hex(&self.secret_bytes()),
        };
        let json = serde_json::to_string_pretty(&file).expect("key file serializes");
        fs::write(path, json + "\n").map_err(|e| LedgerError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, LedgerError> {
        let raw = fs::read_to_string(path).map_err(|e| LedgerError::io(path, e))?;
        let file: KeyFile =
            serde_json::from_str(&raw).map_err(|e| LedgerError::Format(format!("{}: {e}", path.display())))?;
        let secret = from_hex(&file.secret_key)
            .ok()
            .and_then(|b| <[u8; 32]>::try_from(b).ok())
            .ok_or_else(|| LedgerError::Format(format!("{}: bad secretKey", path.display())))?;
        let kp = Self::from_secret(secret);
        if kp.address != file.address {
            return Err(LedgerError::Format(format!(
                "{}: address does not match secret key",
                path.display()
            )));
        }
        Ok(kp)
    }
}

impl fmt::Debug for Keypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keypair")
            .field("address", &self.address)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct KeyFile {
    address: Address,
    public_key: String,
    secret_key: String,
}

fn address_of(key: &VerifyingKey) -> Address {
    let digest = keccak256(key.as_bytes());
    Address::from_slice(&digest.as_bytes()[12..]).expect("20-byte suffix")
}

/// Derives the address for raw public-key bytes, rejecting anything that is
/// not a valid 32-byte Ed25519 point encoding.
pub fn derive_address(public: &[u8]) -> Result<Address, LedgerError> {
    let bytes: [u8; PUBLIC_KEY_LEN] = public.try_into().map_err(|_| LedgerError::MalformedKey)?;
    let key = VerifyingKey::from_bytes(&bytes).map_err(|_| LedgerError::MalformedKey)?;
    Ok(address_of(&key))
}

pub fn verify_signature(public: &[u8; PUBLIC_KEY_LEN], message: &[u8], signature: &[u8]) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(public) else {
        return false;
    };
    let Ok(sig) = <[u8; SIGNATURE_LEN]>::try_from(signature) else {
        return false;
    };
    key.verify(message, &Signature::from_bytes(&sig)).is_ok()
}
