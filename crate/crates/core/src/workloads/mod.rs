//! Client-side transaction generators for each benchmark contract.

pub mod analytics;

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Zipf;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{TxRequest, Workload, WorkloadConnector};
use crate::exec::{ContractKind, Value};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("unknown workload {0:?}")]
    Unknown(String),
    #[error("bad params for {workload}: {msg}")]
    Params { workload: String, msg: String },
}

/// Workload name plus its parameters as a JSON object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub name: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            name: "donothing".into(),
            params: serde_json::Value::Null,
        }
    }
}

pub const WORKLOADS: [&str; 9] = [
    "ycsb",
    "smallbank",
    "etherid",
    "doubler",
    "wavespresale",
    "versionkv",
    "ioheavy",
    "cpuheavy",
    "donothing",
];

fn parse<P: DeserializeOwned + Default>(spec: &WorkloadSpec) -> Result<P, WorkloadError> {
    if spec.params.is_null() {
        return Ok(P::default());
    }
    serde_json::from_value(spec.params.clone()).map_err(|e| WorkloadError::Params {
        workload: spec.name.clone(),
        msg: e.to_string(),
    })
}

fn bad(workload: &str, msg: &str) -> WorkloadError {
    WorkloadError::Params {
        workload: workload.into(),
        msg: msg.into(),
    }
}

pub fn build(spec: &WorkloadSpec) -> Result<Box<dyn Workload>, WorkloadError> {
    let w: Box<dyn Workload> = match spec.name.as_str() {
        "ycsb" => {
            let p: YcsbParams = parse(spec)?;
            if p.record_count == 0 {
                return Err(bad("ycsb", "record_count must be at least 1"));
            }
            if !(0.0..=1.0).contains(&p.read_ratio) {
                return Err(bad("ycsb", "read_ratio must be within [0, 1]"));
            }
            if p.zipf && !(p.theta > 0.0) {
                return Err(bad("ycsb", "theta must be positive"));
            }
            Box::new(Ycsb(p))
        }
        "smallbank" => {
            let p: AccountsParams = parse(spec)?;
            if p.account_count < 2 {
                return Err(bad("smallbank", "account_count must be at least 2"));
            }
            Box::new(Smallbank(p))
        }
        "etherid" => {
            let p: AccountsParams = parse(spec)?;
            if p.account_count < 2 {
                return Err(bad("etherid", "account_count must be at least 2"));
            }
            Box::new(EtherId(p))
        }
        "doubler" => Box::new(Doubler(parse(spec)?)),
        "wavespresale" => Box::new(WavesPresale(parse(spec)?)),
        "versionkv" => {
            let p: AccountsParams = parse(spec)?;
            if p.account_count < 2 {
                return Err(bad("versionkv", "account_count must be at least 2"));
            }
            Box::new(VersionKvTransfers(p))
        }
        "ioheavy" => Box::new(IoHeavy(parse(spec)?)),
        "cpuheavy" => {
            let p: CpuHeavyParams = parse(spec)?;
            if p.n == 0 {
                return Err(bad("cpuheavy", "n must be at least 1"));
            }
            Box::new(CpuHeavy(p))
        }
        "donothing" => Box::new(DoNothing),
        other => return Err(WorkloadError::Unknown(other.into())),
    };
    Ok(w)
}

/// Generator built from a closure over a seeded RNG.
struct Gen<F> {
    rng: ChaCha8Rng,
    step: u64,
    f: F,
}

impl<F: FnMut(&mut ChaCha8Rng, u64) -> TxRequest> WorkloadConnector for Gen<F> {
    fn next_transaction(&mut self) -> Option<TxRequest> {
        let r = (self.f)(&mut self.rng, self.step);
        self.step += 1;
        Some(r)
    }
}

fn gen<F>(seed: u64, f: F) -> Box<dyn WorkloadConnector>
where
    F: FnMut(&mut ChaCha8Rng, u64) -> TxRequest + 'static,
{
    Box::new(Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        step: 0,
        f,
    })
}

/// Two distinct accounts in `0..n`.
fn pair(rng: &mut ChaCha8Rng, n: u64) -> (u64, u64) {
    let a = rng.gen_range(0..n);
    let b = (a + rng.gen_range(1..n)) % n;
    (a, b)
}

// ---- YCSB ---------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct YcsbParams {
    pub record_count: u64,
    pub read_ratio: f64,
    pub value_size: usize,
    pub zipf: bool,
    pub theta: f64,
}

impl Default for YcsbParams {
    fn default() -> Self {
        YcsbParams {
            record_count: 1000,
            read_ratio: 0.5,
            value_size: 100,
            zipf: false,
            theta: 0.99,
        }
    }
}

pub fn ycsb_key(i: u64) -> String {
    format!("user{i:010}")
}

struct Ycsb(YcsbParams);

fn random_value(rng: &mut ChaCha8Rng, len: usize) -> Value {
    let mut v = vec![0u8; len];
    rng.fill(&mut v[..]);
    Value::Bytes(v)
}

impl Workload for Ycsb {
    fn name(&self) -> &str {
        "ycsb"
    }

    fn contract_code(&self) -> ContractKind {
        ContractKind::KvStore
    }

    fn init_args(&self) -> Vec<Value> {
        Vec::new()
    }

    fn preload(&self) -> Vec<TxRequest> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0.record_count);
        (0..self.0.record_count)
            .map(|i| {
                TxRequest::new(
                    0,
                    "write",
                    vec![
                        Value::Str(ycsb_key(i)),
                        random_value(&mut rng, self.0.value_size),
                    ],
                )
            })
            .collect()
    }

    fn client(&self, index: usize, seed: u64) -> Box<dyn WorkloadConnector> {
        let p = self.0.clone();
        let zipf = p
            .zipf
            .then(|| Zipf::new(p.record_count, p.theta).expect("validated params"));
        gen(seed, move |rng, _| {
            let k = match &zipf {
                Some(z) => (z.sample(rng) as u64).clamp(1, p.record_count) - 1,
                None => rng.gen_range(0..p.record_count),
            };
            let key = Value::Str(ycsb_key(k));
            if rng.gen_bool(p.read_ratio) {
                TxRequest::new(index as u64, "read", vec![key])
            } else {
                TxRequest::new(
                    index as u64,
                    "write",
                    vec![key, random_value(rng, p.value_size)],
                )
            }
        })
    }
}

// ---- account-based contracts --------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccountsParams {
    pub account_count: u64,
    pub initial_balance: u64,
    /// Amounts are drawn uniformly from `1..=max_amount`.
    pub max_amount: u64,
}

impl Default for AccountsParams {
    fn default() -> Self {
        AccountsParams {
            account_count: 1000,
            initial_balance: 1_000_000,
            max_amount: 10,
        }
    }
}

impl AccountsParams {
    fn init_args(&self) -> Vec<Value> {
        vec![self.account_count.into(), self.initial_balance.into()]
    }

    fn amount(&self, rng: &mut ChaCha8Rng) -> u64 {
        rng.gen_range(1..=self.max_amount.max(1))
    }
}

struct Smallbank(AccountsParams);

/// One uniformly chosen smallbank procedure with random distinct accounts.
pub fn smallbank_request(p: &AccountsParams, rng: &mut ChaCha8Rng) -> TxRequest {
    use crate::exec::contracts::smallbank::PROCEDURES;
    let proc = PROCEDURES[rng.gen_range(0..PROCEDURES.len())];
    let amount = p.amount(rng);
    let (a, b) = pair(rng, p.account_count);
    let args = match proc {
        "transact_savings" | "deposit_checking" => vec![a.into(), amount.into()],
        _ => vec![a.into(), b.into(), amount.into()],
    };
    TxRequest::new(a, proc, args)
}

impl Workload for Smallbank {
    fn name(&self) -> &str {
        "smallbank"
    }

    fn contract_code(&self) -> ContractKind {
        ContractKind::Smallbank
    }

    fn init_args(&self) -> Vec<Value> {
        self.0.init_args()
    }

    fn client(&self, _index: usize, seed: u64) -> Box<dyn WorkloadConnector> {
        let p = self.0.clone();
        gen(seed, move |rng, _| smallbank_request(&p, rng))
    }
}

struct EtherId(AccountsParams);

/// Create and buy domains in equal proportion. Buys target domains this
/// client created earlier; before any exist, a create is emitted.
struct EtherIdClient {
    p: AccountsParams,
    index: usize,
    rng: ChaCha8Rng,
    created: u64,
}

impl WorkloadConnector for EtherIdClient {
    fn next_transaction(&mut self) -> Option<TxRequest> {
        let buyer = self.rng.gen_range(0..self.p.account_count);
        if self.created > 0 && self.rng.gen_bool(0.5) {
            let d = self.rng.gen_range(0..self.created);
            let domain = format!("c{}-d{d}", self.index);
            return Some(TxRequest::new(buyer, "buy", vec![Value::Str(domain)]));
        }
        let domain = format!("c{}-d{}", self.index, self.created);
        self.created += 1;
        let price = self.p.amount(&mut self.rng);
        Some(TxRequest::new(
            buyer,
            "create",
            vec![
                Value::Str(domain),
                Value::Str(format!("v{price}")),
                price.into(),
            ],
        ))
    }
}

impl Workload for EtherId {
    fn name(&self) -> &str {
        "etherid"
    }

    fn contract_code(&self) -> ContractKind {
        ContractKind::EtherId
    }

    fn init_args(&self) -> Vec<Value> {
        self.0.init_args()
    }

    fn client(&self, index: usize, seed: u64) -> Box<dyn WorkloadConnector> {
        Box::new(EtherIdClient {
            p: self.0.clone(),
            index,
            rng: ChaCha8Rng::seed_from_u64(seed),
            created: 0,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DoublerParams {
    pub participants: u64,
    pub max_value: u64,
}

impl Default for DoublerParams {
    fn default() -> Self {
        DoublerParams {
            participants: 1000,
            max_value: 10,
        }
    }
}

struct Doubler(DoublerParams);

impl Workload for Doubler {
    fn name(&self) -> &str {
        "doubler"
    }

    fn contract_code(&self) -> ContractKind {
        ContractKind::Doubler
    }

    fn init_args(&self) -> Vec<Value> {
        Vec::new()
    }

    fn client(&self, _index: usize, seed: u64) -> Box<dyn WorkloadConnector> {
        let p = self.0.clone();
        gen(seed, move |rng, _| {
            let who = rng.gen_range(0..p.participants.max(1));
            TxRequest::new(who, "enter", Vec::new())
                .with_value(rng.gen_range(1..=p.max_value.max(1)))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PresaleParams {
    pub accounts: u64,
    pub max_tokens: u64,
}

impl Default for PresaleParams {
    fn default() -> Self {
        PresaleParams {
            accounts: 1000,
            max_tokens: 1000,
        }
    }
}

struct WavesPresale(PresaleParams);

impl Workload for WavesPresale {
    fn name(&self) -> &str {
        "wavespresale"
    }

    fn contract_code(&self) -> ContractKind {
        ContractKind::WavesPresale
    }

    fn init_args(&self) -> Vec<Value> {
        Vec::new()
    }

    fn client(&self, _index: usize, seed: u64) -> Box<dyn WorkloadConnector> {
        let p = self.0.clone();
        let mut created = 0u64;
        gen(seed, move |rng, _| {
            let who = rng.gen_range(0..p.accounts.max(1));
            let roll = rng.gen_range(0..10);
            // Ids are global and sequential, so at least `created` exist.
            let known = created;
            if roll < 4 || known == 0 {
                created += 1;
                return TxRequest::new(
                    who,
                    "new_sale",
                    vec![rng.gen_range(1..=p.max_tokens.max(1)).into()],
                );
            }
            let id = rng.gen_range(0..known);
            if roll < 7 {
                let to = rng.gen_range(0..p.accounts.max(1));
                TxRequest::new(who, "transfer_sale", vec![id.into(), to.into()])
            } else {
                TxRequest::new(who, "query_sale", vec![id.into()])
            }
        })
    }
}

struct VersionKvTransfers(AccountsParams);

/// A versioned-balance transfer between random distinct accounts.
pub fn transfer_request(p: &AccountsParams, rng: &mut ChaCha8Rng) -> TxRequest {
    let (from, to) = pair(rng, p.account_count);
    let v = p.amount(rng);
    TxRequest::new(from, "send_value", vec![from.into(), to.into(), v.into()]).with_value(v)
}

impl Workload for VersionKvTransfers {
    fn name(&self) -> &str {
        "versionkv"
    }

    fn contract_code(&self) -> ContractKind {
        ContractKind::VersionKv
    }

    fn init_args(&self) -> Vec<Value> {
        self.0.init_args()
    }

    fn client(&self, _index: usize, seed: u64) -> Box<dyn WorkloadConnector> {
        let p = self.0.clone();
        gen(seed, move |rng, _| transfer_request(&p, rng))
    }
}

// ---- micro benchmarks ----------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IoMode {
    Write,
    Read,
    /// Alternate a write batch with a read replaying the same seed.
    #[default]
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoHeavyParams {
    pub n: u64,
    pub seed: u64,
    pub mode: IoMode,
}

impl Default for IoHeavyParams {
    fn default() -> Self {
        IoHeavyParams {
            n: 100,
            seed: 0,
            mode: IoMode::Mixed,
        }
    }
}

struct IoHeavy(IoHeavyParams);

impl Workload for IoHeavy {
    fn name(&self) -> &str {
        "ioheavy"
    }

    fn contract_code(&self) -> ContractKind {
        ContractKind::IoHeavy
    }

    fn init_args(&self) -> Vec<Value> {
        Vec::new()
    }

    fn client(&self, index: usize, _seed: u64) -> Box<dyn WorkloadConnector> {
        let p = self.0.clone();
        Box::new(Gen {
            rng: ChaCha8Rng::seed_from_u64(0),
            step: 0,
            f: move |_: &mut ChaCha8Rng, step: u64| {
                let (f, batch) = match p.mode {
                    IoMode::Write => ("write_n", step),
                    IoMode::Read => ("read_n", step),
                    IoMode::Mixed => (
                        if step.is_multiple_of(2) {
                            "write_n"
                        } else {
                            "read_n"
                        },
                        step / 2,
                    ),
                };
                let seed = p.seed ^ ((index as u64) << 32) ^ batch;
                TxRequest::new(index as u64, f, vec![p.n.into(), seed.into()])
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CpuHeavyParams {
    pub n: u64,
}

impl Default for CpuHeavyParams {
    fn default() -> Self {
        CpuHeavyParams { n: 1000 }
    }
}

struct CpuHeavy(CpuHeavyParams);

impl Workload for CpuHeavy {
    fn name(&self) -> &str {
        "cpuheavy"
    }

    fn contract_code(&self) -> ContractKind {
        ContractKind::CpuHeavy
    }

    fn init_args(&self) -> Vec<Value> {
        vec![self.0.n.into()]
    }

    fn client(&self, index: usize, seed: u64) -> Box<dyn WorkloadConnector> {
        gen(seed, move |_, _| {
            TxRequest::new(index as u64, "sort", Vec::new())
        })
    }
}

struct DoNothing;

impl Workload for DoNothing {
    fn name(&self) -> &str {
        "donothing"
    }

    fn contract_code(&self) -> ContractKind {
        ContractKind::DoNothing
    }

    fn init_args(&self) -> Vec<Value> {
        Vec::new()
    }

    fn client(&self, index: usize, seed: u64) -> Box<dyn WorkloadConnector> {
        gen(seed, move |_, _| {
            TxRequest::new(index as u64, "nothing", Vec::new())
        })
    }
}
