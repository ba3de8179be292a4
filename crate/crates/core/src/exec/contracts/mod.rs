//! The contract catalog.

pub mod cpuheavy;
pub mod doubler;
pub mod etherid;
pub mod ioheavy;
pub mod kvstore;
pub mod smallbank;
pub mod versionkv;
pub mod wavespresale;

use serde::Serialize;

use super::{logic, ContractKind, ExecError, ExecutionContext, Value};

pub(crate) fn init(
    kind: ContractKind,
    ctx: &mut ExecutionContext<'_>,
    args: &[Value],
) -> Result<(), ExecError> {
    match kind {
        ContractKind::Smallbank => smallbank::init(ctx, args),
        ContractKind::EtherId => etherid::init(ctx, args),
        ContractKind::VersionKv => versionkv::init(ctx, args),
        ContractKind::CpuHeavy => cpuheavy::init(ctx, args),
        ContractKind::KvStore
        | ContractKind::Doubler
        | ContractKind::WavesPresale
        | ContractKind::IoHeavy
        | ContractKind::DoNothing => Ok(()),
    }
}

pub(crate) fn call(
    kind: ContractKind,
    ctx: &mut ExecutionContext<'_>,
    function: &str,
    args: &[Value],
) -> Result<Value, ExecError> {
    match kind {
        ContractKind::KvStore => kvstore::call(ctx, function, args),
        ContractKind::Smallbank => smallbank::call(ctx, function, args),
        ContractKind::EtherId => etherid::call(ctx, function, args),
        ContractKind::Doubler => doubler::call(ctx, function, args),
        ContractKind::WavesPresale => wavespresale::call(ctx, function, args),
        ContractKind::VersionKv => versionkv::call(ctx, function, args),
        ContractKind::IoHeavy => ioheavy::call(ctx, function, args),
        ContractKind::CpuHeavy => cpuheavy::call(ctx, function, args),
        ContractKind::DoNothing => Ok(Value::Unit),
    }
}

pub(crate) fn arg_u64(args: &[Value], idx: usize, name: &str) -> Result<u64, ExecError> {
    match args.get(idx).and_then(Value::as_u64) {
        Some(v) => Ok(v),
        None => logic(format!(
            "argument {idx} ({name}) must be a non-negative integer"
        )),
    }
}

pub(crate) fn arg_key(args: &[Value], idx: usize, name: &str) -> Result<Vec<u8>, ExecError> {
    match args.get(idx).and_then(Value::key_bytes) {
        Some(k) if !k.is_empty() => Ok(k),
        _ => logic(format!("argument {idx} ({name}) must be a non-empty key")),
    }
}

pub(crate) fn unknown_function<T>(kind: ContractKind, f: &str) -> Result<T, ExecError> {
    logic(format!("{kind} has no function {f}"))
}

pub(crate) fn key_with_u64(prefix: &[u8], v: u64) -> Vec<u8> {
    let mut k = prefix.to_vec();
    k.extend_from_slice(&v.to_be_bytes());
    k
}

#[derive(Debug, Clone, Serialize)]
pub struct ArgSpec {
    pub name: &'static str,
    #[serde(rename = "type")]
    pub ty: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct FunctionSpec {
    pub name: &'static str,
    pub args: Vec<ArgSpec>,
    pub read_only: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractInfo {
    pub name: &'static str,
    pub description: &'static str,
    pub init: Vec<ArgSpec>,
    pub functions: Vec<FunctionSpec>,
}

fn a(name: &'static str, ty: &'static str) -> ArgSpec {
    ArgSpec { name, ty }
}

fn f(name: &'static str, args: Vec<ArgSpec>, read_only: bool) -> FunctionSpec {
    FunctionSpec {
        name,
        args,
        read_only,
    }
}

/// Catalog entries with argument schemas, in a fixed order.
pub fn catalog() -> Vec<ContractInfo> {
    ContractKind::ALL.iter().map(|k| info(*k)).collect()
}

pub fn info(kind: ContractKind) -> ContractInfo {
    let (description, init, functions) = match kind {
        ContractKind::KvStore => (
            "key-value store backing the YCSB workload",
            vec![],
            vec![
                f("read", vec![a("key", "key")], true),
                f(
                    "write",
                    vec![a("key", "key"), a("value", "bytes|string")],
                    false,
                ),
                f("scan", vec![a("start", "key"), a("count", "int")], true),
            ],
        ),
        ContractKind::Smallbank => (
            "bank accounts with savings and checking balances",
            vec![a("account_count", "int"), a("initial_balance", "int")],
            vec![
                f(
                    "transact_savings",
                    vec![a("account", "int"), a("amount", "int")],
                    false,
                ),
                f(
                    "deposit_checking",
                    vec![a("account", "int"), a("amount", "int")],
                    false,
                ),
                f(
                    "send_payment",
                    vec![a("from", "int"), a("to", "int"), a("amount", "int")],
                    false,
                ),
                f(
                    "write_check",
                    vec![a("from", "int"), a("to", "int"), a("amount", "int")],
                    false,
                ),
                f("balance", vec![a("account", "int")], true),
                f("total", vec![], true),
            ],
        ),
        ContractKind::EtherId => (
            "domain name registrar with paid transfers",
            vec![a("account_count", "int"), a("initial_balance", "int")],
            vec![
                f(
                    "create",
                    vec![
                        a("domain", "string"),
                        a("value", "string"),
                        a("price", "int"),
                    ],
                    false,
                ),
                f(
                    "modify",
                    vec![
                        a("domain", "string"),
                        a("value", "string"),
                        a("price", "int"),
                    ],
                    false,
                ),
                f("buy", vec![a("domain", "string")], false),
                f("owner", vec![a("domain", "string")], true),
                f("balance", vec![a("account", "int")], true),
            ],
        ),
        ContractKind::Doubler => (
            "pyramid scheme paying earlier participants double their deposit",
            vec![],
            vec![
                f("enter", vec![], false),
                f("state", vec![], true),
                f("paid", vec![a("account", "int")], true),
            ],
        ),
        ContractKind::WavesPresale => (
            "token presale ledger",
            vec![],
            vec![
                f("new_sale", vec![a("tokens", "int")], false),
                f(
                    "transfer_sale",
                    vec![a("sale_id", "int"), a("new_owner", "int")],
                    false,
                ),
                f("query_sale", vec![a("sale_id", "int")], true),
                f("total", vec![], true),
            ],
        ),
        ContractKind::VersionKv => (
            "versioned account balances for historical analytics",
            vec![a("account_count", "int"), a("initial_balance", "int")],
            vec![
                f(
                    "send_value",
                    vec![a("from", "int"), a("to", "int"), a("value", "int")],
                    false,
                ),
                f("block_tx_list", vec![a("height", "int")], true),
                f(
                    "account_block_range",
                    vec![
                        a("account", "int"),
                        a("start_block", "int"),
                        a("end_block", "int"),
                    ],
                    true,
                ),
                f("balance", vec![a("account", "int")], true),
            ],
        ),
        ContractKind::IoHeavy => (
            "bulk random reads and writes of 20-byte keys and 100-byte values",
            vec![],
            vec![
                f("write_n", vec![a("n", "int"), a("seed", "int")], false),
                f("read_n", vec![a("n", "int"), a("seed", "int")], true),
            ],
        ),
        ContractKind::CpuHeavy => (
            "quicksort over a contract-held array",
            vec![a("n", "int")],
            vec![f("sort", vec![], false), f("get", vec![], true)],
        ),
        ContractKind::DoNothing => ("accepts a transaction and returns", vec![], vec![]),
    };
    ContractInfo {
        name: kind.name(),
        description,
        init,
        functions,
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_lists_nine() {
        let names: Vec<_> = catalog().iter().map(|c| c.name).collect();
        assert_eq!(names.len(), 9);
        assert!(names.contains(&"versionkv"));
    }
}
