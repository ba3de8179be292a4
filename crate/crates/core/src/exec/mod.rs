//! Deterministic, gas-metered contract runtime.
//!
//! Contracts are native state machines from a fixed catalog. Each call runs
//! against a write overlay; the overlay reaches the store only when the call
//! finishes without running out of gas or failing a contract check.

pub mod contracts;
mod gas;
mod value;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gas::GasSchedule;
pub use value::Value;

use crate::chain::{AccountId, Transaction};
use crate::hash::{DecodeError, Decoder, Encoder, Hash256};
use crate::state::{StateKey, StateStore};

/// Built-in contract catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContractKind {
    KvStore,
    Smallbank,
    EtherId,
    Doubler,
    WavesPresale,
    VersionKv,
    IoHeavy,
    CpuHeavy,
    DoNothing,
}

impl ContractKind {
    pub const ALL: [ContractKind; 9] = [
        ContractKind::KvStore,
        ContractKind::Smallbank,
        ContractKind::EtherId,
        ContractKind::Doubler,
        ContractKind::WavesPresale,
        ContractKind::VersionKv,
        ContractKind::IoHeavy,
        ContractKind::CpuHeavy,
        ContractKind::DoNothing,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ContractKind::KvStore => "kvstore",
            ContractKind::Smallbank => "smallbank",
            ContractKind::EtherId => "etherid",
            ContractKind::Doubler => "doubler",
            ContractKind::WavesPresale => "wavespresale",
            ContractKind::VersionKv => "versionkv",
            ContractKind::IoHeavy => "ioheavy",
            ContractKind::CpuHeavy => "cpuheavy",
            ContractKind::DoNothing => "donothing",
        }
    }
}

impl fmt::Display for ContractKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ContractKind {
    type Err = ExecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ContractKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ExecError::UnknownContract(s.to_string()))
    }
}

/// Address of a deployed contract plus the catalog entry it runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContractId {
    pub address: Hash256,
    pub code: ContractKind,
}

impl ContractId {
    pub fn derive(deployer: AccountId, nonce: u64, code: ContractKind) -> Self {
        let mut enc = Encoder::new();
        enc.str("contract").u64(deployer.0).u64(nonce);
        ContractId {
            address: enc.digest(),
            code,
        }
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.hash(&self.address).str(self.code.name());
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let address = dec.hash()?;
        let name = dec.string()?;
        let code = name.parse().map_err(|_| DecodeError::UnknownTag(0))?;
        Ok(ContractId { address, code })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    RevertedOutOfGas,
    RevertedLogic,
}

impl ExecStatus {
    fn tag(&self) -> u8 {
        match self {
            ExecStatus::Ok => 0,
            ExecStatus::RevertedOutOfGas => 1,
            ExecStatus::RevertedLogic => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_id: Hash256,
    pub status: ExecStatus,
    pub gas_used: u64,
    pub return_value: Value,
}

impl Receipt {
    pub fn is_ok(&self) -> bool {
        self.status == ExecStatus::Ok
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.hash(&self.tx_id)
            .u8(self.status.tag())
            .u64(self.gas_used);
        self.return_value.encode(enc);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let tx_id = dec.hash()?;
        let status = match dec.u8()? {
            0 => ExecStatus::Ok,
            1 => ExecStatus::RevertedOutOfGas,
            2 => ExecStatus::RevertedLogic,
            t => return Err(DecodeError::UnknownTag(t)),
        };
        Ok(Receipt {
            tx_id,
            status,
            gas_used: dec.u64()?,
            return_value: Value::decode(dec)?,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecError {
    #[error("out of gas")]
    OutOfGas,
    #[error("{0}")]
    Logic(String),
    #[error("unknown contract {0}")]
    UnknownContract(String),
}

pub(crate) fn logic<T>(msg: impl Into<String>) -> Result<T, ExecError> {
    Err(ExecError::Logic(msg.into()))
}

/// Per-call execution state: caller, budget, and the write overlay.
pub struct ExecutionContext<'a> {
    pub sender: AccountId,
    pub value: u64,
    pub block_height: u64,
    namespace: Hash256,
    schedule: GasSchedule,
    gas_limit: u64,
    gas_remaining: u64,
    store: &'a StateStore,
    writes: BTreeMap<StateKey, Option<Vec<u8>>>,
}

impl<'a> ExecutionContext<'a> {
    pub fn new(
        store: &'a StateStore,
        namespace: Hash256,
        sender: AccountId,
        value: u64,
        block_height: u64,
        gas_limit: u64,
        schedule: GasSchedule,
    ) -> Self {
        ExecutionContext {
            sender,
            value,
            block_height,
            namespace,
            schedule,
            gas_limit,
            gas_remaining: gas_limit,
            store,
            writes: BTreeMap::new(),
        }
    }

    pub fn gas_remaining(&self) -> u64 {
        self.gas_remaining
    }

    pub fn gas_used(&self) -> u64 {
        self.gas_limit - self.gas_remaining
    }

    pub fn schedule(&self) -> &GasSchedule {
        &self.schedule
    }

    /// Deduct `amount`; fails without deducting if the budget is short.
    pub fn charge(&mut self, amount: u64) -> Result<(), ExecError> {
        if amount > self.gas_remaining {
            return Err(ExecError::OutOfGas);
        }
        self.gas_remaining -= amount;
        Ok(())
    }

    pub fn compute(&mut self, steps: u64) -> Result<(), ExecError> {
        self.charge(steps.saturating_mul(self.schedule.per_compute_step))
    }

    fn key(&self, key: &[u8]) -> StateKey {
        StateKey::new(self.namespace, key.to_vec())
    }

    pub fn get(&mut self, key: &[u8]) -> Result<Option<Vec<u8>>, ExecError> {
        self.charge(self.schedule.per_state_read)?;
        let k = self.key(key);
        if let Some(w) = self.writes.get(&k) {
            return Ok(w.clone());
        }
        Ok(self.store.get(&k).map(<[u8]>::to_vec))
    }

    pub fn put(&mut self, key: &[u8], value: Vec<u8>) -> Result<(), ExecError> {
        let cost = self.schedule.per_state_write.saturating_add(
            self.schedule
                .per_byte_written
                .saturating_mul(value.len() as u64),
        );
        self.charge(cost)?;
        let k = self.key(key);
        if !k.is_valid() {
            return logic("invalid state key length");
        }
        self.writes.insert(k, Some(value));
        Ok(())
    }

    pub fn delete(&mut self, key: &[u8]) -> Result<(), ExecError> {
        self.charge(self.schedule.per_state_write)?;
        let k = self.key(key);
        self.writes.insert(k, None);
        Ok(())
    }

    pub fn get_u64(&mut self, key: &[u8]) -> Result<Option<u64>, ExecError> {
        Ok(self.get(key)?.map(|v| decode_u64(&v)))
    }

    pub fn put_u64(&mut self, key: &[u8], v: u64) -> Result<(), ExecError> {
        self.put(key, v.to_be_bytes().to_vec())
    }

    /// Live entries with key ≥ `start` in this contract's namespace, seen
    /// through the overlay.
    pub fn scan(&self, start: &[u8], count: usize) -> Vec<(Vec<u8>, Vec<u8>)> {
        let mut merged: BTreeMap<Vec<u8>, Vec<u8>> = self
            .store
            .scan(self.namespace, start, count + self.writes.len())
            .into_iter()
            .collect();
        for (k, v) in self
            .writes
            .range(StateKey::new(self.namespace, start.to_vec())..)
        {
            if k.namespace != self.namespace {
                break;
            }
            match v {
                Some(v) => {
                    merged.insert(k.key.clone(), v.clone());
                }
                None => {
                    merged.remove(&k.key);
                }
            }
        }
        merged.into_iter().take(count).collect()
    }

    pub(crate) fn into_writes(self) -> BTreeMap<StateKey, Option<Vec<u8>>> {
        self.writes
    }

    /// Writes to a different namespace (the runtime's own registry).
    fn put_raw(&mut self, key: StateKey, value: Vec<u8>) {
        self.writes.insert(key, Some(value));
    }
}

pub(crate) fn decode_u64(v: &[u8]) -> u64 {
    let mut arr = [0u8; 8];
    let n = v.len().min(8);
    arr[8 - n..].copy_from_slice(&v[v.len() - n..]);
    u64::from_be_bytes(arr)
}

const REGISTRY_PREFIX: &[u8] = b"contract:";

fn registry_key(address: &Hash256) -> StateKey {
    let mut k = REGISTRY_PREFIX.to_vec();
    k.extend_from_slice(&address.0);
    StateKey::new(Hash256::ZERO, k)
}

/// The catalog kind registered at `address`, if any.
pub fn lookup_contract(store: &StateStore, address: &Hash256) -> Option<ContractKind> {
    let raw = store.get(&registry_key(address))?;
    std::str::from_utf8(raw).ok()?.parse().ok()
}

/// Name of the deploy pseudo-function.
pub const DEPLOY_FN: &str = "deploy";

/// Build the transaction that deploys `code` from `deployer`.
pub fn deploy_transaction(
    deployer: AccountId,
    nonce: u64,
    code: ContractKind,
    init_args: Vec<Value>,
    gas_limit: u64,
) -> Transaction {
    Transaction::new(
        deployer,
        ContractId::derive(deployer, nonce, code),
        DEPLOY_FN,
        init_args,
        0,
        nonce,
        gas_limit,
    )
}

/// Deploy directly into `store` at `height`, bypassing transaction framing.
pub fn deploy_contract(
    store: &mut StateStore,
    deployer: AccountId,
    nonce: u64,
    code_name: &str,
    init_args: &[Value],
    height: u64,
) -> Result<ContractId, ExecError> {
    let code: ContractKind = code_name.parse()?;
    let tx = deploy_transaction(deployer, nonce, code, init_args.to_vec(), u64::MAX / 4);
    let receipt = execute_tx(store, &tx, &GasSchedule::default(), height);
    match receipt.status {
        ExecStatus::Ok => Ok(tx.contract),
        ExecStatus::RevertedOutOfGas => Err(ExecError::OutOfGas),
        ExecStatus::RevertedLogic => Err(ExecError::Logic(format!(
            "deploy failed: {:?}",
            receipt.return_value
        ))),
    }
}

fn run_tx(
    ctx: &mut ExecutionContext<'_>,
    store: &StateStore,
    tx: &Transaction,
) -> Result<Value, ExecError> {
    ctx.charge(ctx.schedule.base_tx)?;
    let registered = lookup_contract(store, &tx.contract.address);
    match registered {
        None if tx.function == DEPLOY_FN => {
            let expected = ContractId::derive(tx.sender, tx.nonce, tx.contract.code);
            if expected != tx.contract {
                return logic("contract address does not match deployer and nonce");
            }
            ctx.put_raw(
                registry_key(&tx.contract.address),
                tx.contract.code.name().as_bytes().to_vec(),
            );
            contracts::init(tx.contract.code, ctx, &tx.args)?;
            Ok(Value::Str(tx.contract.address.to_hex()))
        }
        None => Err(ExecError::UnknownContract(tx.contract.address.to_hex())),
        Some(kind) if kind != tx.contract.code => logic("contract kind mismatch"),
        Some(_) if tx.function == DEPLOY_FN => logic("contract already deployed"),
        Some(kind) => contracts::call(kind, ctx, &tx.function, &tx.args),
    }
}

/// Execute `tx` at `height`. State is mutated only when the receipt is `Ok`.
pub fn execute_tx(
    store: &mut StateStore,
    tx: &Transaction,
    schedule: &GasSchedule,
    height: u64,
) -> Receipt {
    let (result, gas_used, writes) = {
        let mut ctx = ExecutionContext::new(
            store,
            tx.contract.address,
            tx.sender,
            tx.value,
            height,
            tx.gas_limit,
            *schedule,
        );
        let result = run_tx(&mut ctx, store, tx);
        let used = ctx.gas_used();
        (result, used, ctx.into_writes())
    };
    let (status, gas_used, return_value) = match result {
        Ok(v) => (ExecStatus::Ok, gas_used, v),
        Err(ExecError::OutOfGas) => (ExecStatus::RevertedOutOfGas, tx.gas_limit, Value::Unit),
        Err(e) => (
            ExecStatus::RevertedLogic,
            gas_used,
            Value::Str(e.to_string()),
        ),
    };
    if status == ExecStatus::Ok {
        let blocked = writes.keys().find_map(|k| {
            store
                .versions(k)
                .last()
                .filter(|e| e.commit_block > height)
                .map(|e| e.commit_block)
        });
        if let Some(last) = blocked {
            return Receipt {
                tx_id: tx.id,
                status: ExecStatus::RevertedLogic,
                gas_used,
                return_value: Value::Str(format!(
                    "state already committed at height {last} > {height}"
                )),
            };
        }
        for (k, v) in writes {
            // Keys were validated by the context and heights checked above.
            let _ = match v {
                Some(v) => store.put(k, v, height).map(|_| ()),
                None => store.delete(&k, height).map(|_| ()),
            };
        }
    }
    Receipt {
        tx_id: tx.id,
        status,
        gas_used,
        return_value,
    }
}

/// Read-only call against local state: unmetered, writes discarded.
pub fn query(
    store: &StateStore,
    contract: &ContractId,
    function: &str,
    args: &[Value],
    height: u64,
) -> Result<Value, ExecError> {
    let kind = lookup_contract(store, &contract.address)
        .ok_or_else(|| ExecError::UnknownContract(contract.address.to_hex()))?;
    let mut ctx = ExecutionContext::new(
        store,
        contract.address,
        AccountId(0),
        0,
        height,
        u64::MAX,
        GasSchedule::free(),
    );
    contracts::call(kind, &mut ctx, function, args)
}

/// Balance of `account` in `contract` as of `height`, for contracts that keep
/// per-account balances.
pub fn balance_at(
    store: &StateStore,
    contract: &ContractId,
    account: u64,
    height: u64,
) -> Option<u64> {
    let read = |key: Vec<u8>| {
        store
            .get_at(&StateKey::new(contract.address, key), height)
            .map(decode_u64)
    };
    match contract.code {
        ContractKind::VersionKv => {
            let latest = read(contracts::versionkv::latest_key(account))?;
            let raw = store.get_at(
                &StateKey::new(
                    contract.address,
                    contracts::versionkv::version_key(account, latest),
                ),
                height,
            )?;
            Some(contracts::versionkv::AccountVersion::decode(raw).balance)
        }
        ContractKind::Smallbank => {
            let s = read(contracts::smallbank::savings_key(account))?;
            let c = read(contracts::smallbank::checking_key(account))?;
            Some(s + c)
        }
        ContractKind::EtherId => read(contracts::etherid::balance_key(account)),
        _ => None,
    }
}
