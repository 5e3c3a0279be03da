use serde::{Deserialize, Serialize};

use crate::error::LedgerError;
use crate::primitives::{keccak256, Address, CanonicalWriter, Hash32};

use super::gas::GasSchedule;
use super::keys::{derive_address, verify_signature, Keypair, PUBLIC_KEY_LEN};

/// Contract field of a deployment transaction.
pub const DEPLOY_SENTINEL: Address = Address::ZERO;

/// An actor-signed, gas-priced invocation of one contract operation.
///
/// The signature covers `(from, contract, op, args, nonce)`. The hash covers
/// every other field as well, so any change to a persisted transaction is
/// visible through `tx_hash`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SignedTransaction {
    pub from: Address,
    pub contract: Address,
    pub op: String,
    #[serde(with = "hex_bytes")]
    pub args: Vec<u8>,
    pub nonce: u64,
    pub gas: u64,
    #[serde(with = "hex_array")]
    pub public_key: [u8; PUBLIC_KEY_LEN],
    #[serde(with = "hex_bytes")]
    pub signature: Vec<u8>,
    pub tx_hash: Hash32,
}

pub fn signing_payload(from: &Address, contract: &Address, op: &str, args: &[u8], nonce: u64) -> Vec<u8> {
    let mut w = CanonicalWriter::new();
    w.field(from.as_bytes())
        .field(contract.as_bytes())
        .field(op.as_bytes())
        .field(args)
        .u64(nonce);
    w.into_bytes()
}

/// Signs an invocation, pricing it from `schedule`.
pub fn sign_transaction(
    kp: &Keypair,
    contract: Address,
    op: &str,
    args: Vec<u8>,
    nonce: u64,
    schedule: &GasSchedule,
) -> Result<SignedTransaction, LedgerError> {
    let gas = schedule
        .gas_for(op)
        .ok_or_else(|| LedgerError::UnknownOp(op.to_string()))?;
    let from = kp.address();
    let signature = kp.sign(&signing_payload(&from, &contract, op, &args, nonce)).to_vec();
    let mut tx = SignedTransaction {
        from,
        contract,
        op: op.to_string(),
        args,
        nonce,
        gas,
        public_key: kp.public_key(),
        signature,
        tx_hash: Hash32::ZERO,
    };
    tx.tx_hash = tx.compute_hash();
    Ok(tx)
}

impl SignedTransaction {
    pub fn signing_payload(&self) -> Vec<u8> {
        signing_payload(&self.from, &self.contract, &self.op, &self.args, self.nonce)
    }

    pub fn compute_hash(&self) -> Hash32 {
        let mut w = CanonicalWriter::new();
        w.field(&self.signing_payload())
            .u64(self.gas)
            .field(&self.public_key)
            .field(&self.signature);
        keccak256(w.as_bytes())
    }

    /// The public key belongs to `from` and the signature verifies over the payload.
    pub fn signature_valid(&self) -> bool {
        derive_address(&self.public_key).is_ok_and(|a| a == self.from)
            && verify_signature(&self.public_key, &self.signing_payload(), &self.signature)
    }

    pub fn hash_valid(&self) -> bool {
        self.compute_hash() == self.tx_hash
    }

    pub fn is_deploy(&self) -> bool {
        self.op == crate::registry::call::DEPLOY
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::primitives::{from_hex, to_hex};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&to_hex(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        from_hex(&s).map_err(serde::de::Error::custom)
    }
}

mod hex_array {
    use serde::{Deserializer, Serializer};

    use super::PUBLIC_KEY_LEN;

    pub fn serialize<S: Serializer>(bytes: &[u8; PUBLIC_KEY_LEN], s: S) -> Result<S::Ok, S::Error> {
        super::hex_bytes::serialize(bytes, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; PUBLIC_KEY_LEN], D::Error> {
        let v = super::hex_bytes::deserialize(d)?;
        v.try_into()
            .map_err(|_| serde::de::Error::custom("public key must be 32 bytes"))
    }
}
