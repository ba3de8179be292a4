use std::fmt;

use serde::{Deserialize, Serialize};

use crate::exec::{ContractId, Value};
use crate::hash::{sha256, DecodeError, Decoder, Encoder, Hash256};

/// Client account identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(pub u64);

impl AccountId {
    /// Simulated private key. Every party can derive it; the signing scheme
    /// stands in for real cryptography.
    pub fn secret(&self) -> Hash256 {
        let mut enc = Encoder::new();
        enc.str("account-secret").u64(self.0);
        enc.digest()
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Simulated signing scheme: `hash(secret || content)`, optionally iterated
/// `cost_rounds` more times to emulate a signing-bound server.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signer {
    pub cost_rounds: u32,
}

impl Signer {
    pub fn sign(&self, sender: AccountId, content: &[u8]) -> Hash256 {
        let mut buf = Vec::with_capacity(32 + content.len());
        buf.extend_from_slice(&sender.secret().0);
        buf.extend_from_slice(content);
        let mut sig = sha256(&buf);
        for _ in 0..self.cost_rounds {
            sig = sha256(&sig.0);
        }
        sig
    }

    pub fn verify(&self, tx: &Transaction) -> bool {
        self.sign(tx.sender, &tx.content_bytes()) == tx.signature
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: Hash256,
    pub sender: AccountId,
    pub contract: ContractId,
    pub function: String,
    pub args: Vec<Value>,
    pub value: u64,
    pub nonce: u64,
    pub gas_limit: u64,
    pub signature: Hash256,
}

impl Transaction {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        sender: AccountId,
        contract: ContractId,
        function: impl Into<String>,
        args: Vec<Value>,
        value: u64,
        nonce: u64,
        gas_limit: u64,
    ) -> Self {
        Self::new_signed(
            &Signer::default(),
            sender,
            contract,
            function,
            args,
            value,
            nonce,
            gas_limit,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new_signed(
        signer: &Signer,
        sender: AccountId,
        contract: ContractId,
        function: impl Into<String>,
        args: Vec<Value>,
        value: u64,
        nonce: u64,
        gas_limit: u64,
    ) -> Self {
        let mut tx = Transaction {
            id: Hash256::ZERO,
            sender,
            contract,
            function: function.into(),
            args,
            value,
            nonce,
            gas_limit,
            signature: Hash256::ZERO,
        };
        let content = tx.content_bytes();
        tx.id = sha256(&content);
        tx.signature = signer.sign(sender, &content);
        tx
    }

    /// Canonical encoding of every field except `id` and `signature`.
    pub fn content_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_capacity(128);
        enc.u64(self.sender.0);
        self.contract.encode(&mut enc);
        enc.str(&self.function);
        enc.u64(self.args.len() as u64);
        for a in &self.args {
            a.encode(&mut enc);
        }
        enc.u64(self.value).u64(self.nonce).u64(self.gas_limit);
        enc.finish()
    }

    pub fn id_is_valid(&self) -> bool {
        sha256(&self.content_bytes()) == self.id
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.field(&self.content_bytes()).hash(&self.signature);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let content = dec.field()?;
        let signature = dec.hash()?;
        let mut c = Decoder::new(content);
        let sender = AccountId(c.u64()?);
        let contract = ContractId::decode(&mut c)?;
        let function = c.string()?;
        let n = c.u64()? as usize;
        let mut args = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            args.push(Value::decode(&mut c)?);
        }
        let value = c.u64()?;
        let nonce = c.u64()?;
        let gas_limit = c.u64()?;
        c.finish()?;
        Ok(Transaction {
            id: sha256(content),
            sender,
            contract,
            function,
            args,
            value,
            nonce,
            gas_limit,
            signature,
        })
    }

    /// Integer argument at `idx`, if present.
    pub fn arg_int(&self, idx: usize) -> Option<i64> {
        self.args.get(idx).and_then(Value::as_int)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::ContractKind;

    fn sample() -> Transaction {
        let c = ContractId::derive(AccountId(1), 0, ContractKind::KvStore);
        Transaction::new(
            AccountId(7),
            c,
            "write",
            vec![Value::Str("k".into()), Value::Bytes(vec![1, 2])],
            0,
            3,
            100_000,
        )
    }

    #[test]
    fn id_recomputes_and_signature_verifies() {
        let tx = sample();
        assert!(tx.id_is_valid());
        assert!(Signer::default().verify(&tx));
        let mut forged = tx.clone();
        forged.sender = AccountId(8);
        assert!(!Signer::default().verify(&forged));
    }

    #[test]
    fn signing_cost_changes_tag_but_still_verifies() {
        let costly = Signer { cost_rounds: 3 };
        let tx = sample();
        let sig = costly.sign(tx.sender, &tx.content_bytes());
        assert_ne!(sig, tx.signature);
        let mut tx2 = tx.clone();
        tx2.signature = sig;
        assert!(costly.verify(&tx2));
    }

    #[test]
    fn wire_round_trip() {
        let tx = sample();
        let mut enc = Encoder::new();
        tx.encode(&mut enc);
        let bytes = enc.finish();
        let mut dec = Decoder::new(&bytes);
        assert_eq!(Transaction::decode(&mut dec).unwrap(), tx);
    }
}
