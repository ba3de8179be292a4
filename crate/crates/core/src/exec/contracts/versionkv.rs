//! Account balances with an explicit version chain per account.
//!
//! Every balance change appends a new version record tagged with the block
//! height that committed it, so historical range queries can be answered
//! inside one call by walking the chain backwards.

use super::{arg_u64, key_with_u64, unknown_function};
use crate::exec::{decode_u64, logic, ContractKind, ExecError, ExecutionContext, Value};

pub fn latest_key(a: u64) -> Vec<u8> {
    key_with_u64(b"latest:", a)
}

pub fn version_key(a: u64, version: u64) -> Vec<u8> {
    let mut k = key_with_u64(b"ver:", a);
    k.extend_from_slice(&version.to_be_bytes());
    k
}

fn block_key(height: u64) -> Vec<u8> {
    key_with_u64(b"blk:", height)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccountVersion {
    pub balance: u64,
    pub commit_block: u64,
    /// Value of the transfer that produced this version; `None` for the
    /// initial allocation.
    pub tx_value: Option<u64>,
}

impl AccountVersion {
    pub fn encode(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(25);
        v.extend_from_slice(&self.balance.to_be_bytes());
        v.extend_from_slice(&self.commit_block.to_be_bytes());
        match self.tx_value {
            Some(x) => {
                v.push(1);
                v.extend_from_slice(&x.to_be_bytes());
            }
            None => v.push(0),
        }
        v
    }

    pub fn decode(raw: &[u8]) -> Self {
        AccountVersion {
            balance: decode_u64(&raw[..8]),
            commit_block: decode_u64(&raw[8..16]),
            tx_value: (raw.get(16) == Some(&1)).then(|| decode_u64(&raw[17..25])),
        }
    }

    fn to_value(self) -> Value {
        Value::List(vec![
            self.commit_block.into(),
            self.balance.into(),
            self.tx_value.map_or(Value::Unit, Value::from),
        ])
    }
}

pub(crate) fn init(ctx: &mut ExecutionContext<'_>, args: &[Value]) -> Result<(), ExecError> {
    let count = arg_u64(args, 0, "account_count")?;
    let initial = arg_u64(args, 1, "initial_balance")?;
    for a in 0..count {
        let v = AccountVersion {
            balance: initial,
            commit_block: ctx.block_height,
            tx_value: None,
        };
        ctx.put(&version_key(a, 0), v.encode())?;
        ctx.put_u64(&latest_key(a), 0)?;
    }
    Ok(())
}

fn current(ctx: &mut ExecutionContext<'_>, a: u64) -> Result<(u64, AccountVersion), ExecError> {
    let Some(latest) = ctx.get_u64(&latest_key(a))? else {
        return logic(format!("unknown account {a}"));
    };
    let raw = ctx
        .get(&version_key(a, latest))?
        .ok_or_else(|| ExecError::Logic(format!("missing version {latest} of {a}")))?;
    Ok((latest, AccountVersion::decode(&raw)))
}

fn append(
    ctx: &mut ExecutionContext<'_>,
    a: u64,
    latest: u64,
    balance: u64,
    tx_value: u64,
) -> Result<(), ExecError> {
    let v = AccountVersion {
        balance,
        commit_block: ctx.block_height,
        tx_value: Some(tx_value),
    };
    ctx.put(&version_key(a, latest + 1), v.encode())?;
    ctx.put_u64(&latest_key(a), latest + 1)
}

pub(crate) fn call(
    ctx: &mut ExecutionContext<'_>,
    function: &str,
    args: &[Value],
) -> Result<Value, ExecError> {
    match function {
        "send_value" => {
            let from = arg_u64(args, 0, "from")?;
            let to = arg_u64(args, 1, "to")?;
            let v = arg_u64(args, 2, "value")?;
            if v != ctx.value {
                return logic("value argument must equal the attached value");
            }
            if from == to {
                return logic("sender and recipient must differ");
            }
            let (fl, fv) = current(ctx, from)?;
            let (tl, tv) = current(ctx, to)?;
            if fv.balance < v {
                return logic("insufficient balance");
            }
            append(ctx, from, fl, fv.balance - v, v)?;
            append(ctx, to, tl, tv.balance + v, v)?;
            let key = block_key(ctx.block_height);
            let mut list = ctx.get(&key)?.unwrap_or_default();
            list.extend_from_slice(&v.to_be_bytes());
            ctx.put(&key, list)?;
            Ok(Value::Unit)
        }
        "block_tx_list" => {
            let h = arg_u64(args, 0, "height")?;
            let raw = ctx.get(&block_key(h))?.unwrap_or_default();
            Ok(Value::List(
                raw.chunks_exact(8)
                    .map(|c| Value::from(decode_u64(c)))
                    .collect(),
            ))
        }
        "account_block_range" => {
            let a = arg_u64(args, 0, "account")?;
            let start = arg_u64(args, 1, "start_block")?;
            let end = arg_u64(args, 2, "end_block")?;
            let (latest, _) = current(ctx, a)?;
            let mut out = Vec::new();
            let mut ver = latest;
            loop {
                let raw = ctx
                    .get(&version_key(a, ver))?
                    .ok_or_else(|| ExecError::Logic(format!("missing version {ver} of {a}")))?;
                let v = AccountVersion::decode(&raw);
                if v.commit_block < start {
                    break;
                }
                if v.commit_block < end {
                    out.push(v.to_value());
                }
                if ver == 0 {
                    break;
                }
                ver -= 1;
            }
            out.reverse();
            Ok(Value::List(out))
        }
        "balance" => {
            let a = arg_u64(args, 0, "account")?;
            Ok(Value::from(current(ctx, a)?.1.balance))
        }
        other => unknown_function(ContractKind::VersionKv, other),
    }
}

#[cfg(test)]
mod tests {
    use super::AccountVersion;
    use crate::exec::contracts::testutil::Harness;
    use crate::exec::{balance_at, ExecStatus, Value};

    fn send(h: &mut Harness, from: u64, to: u64, v: u64) -> ExecStatus {
        h.call_as(
            from,
            v,
            "send_value",
            vec![from.into(), to.into(), v.into()],
        )
        .status
    }

    #[test]
    fn version_record_round_trip() {
        for tx_value in [None, Some(7)] {
            let v = AccountVersion {
                balance: 5,
                commit_block: 9,
                tx_value,
            };
            assert_eq!(AccountVersion::decode(&v.encode()), v);
        }
    }

    #[test]
    fn range_query_filters_by_commit_block() {
        let mut h = Harness::new("versionkv", &[4.into(), 100.into()]);
        for (height, v) in [(1, 3), (2, 8), (3, 5), (4, 1)] {
            h.height = height;
            assert_eq!(send(&mut h, 0, 1, v), ExecStatus::Ok);
        }
        let r = h.query("account_block_range", &[1.into(), 2.into(), 4.into()]);
        let vals: Vec<i64> = r
            .as_list()
            .unwrap()
            .iter()
            .map(|e| e.as_list().unwrap()[2].as_int().unwrap())
            .collect();
        assert_eq!(vals, vec![8, 5]);
        assert_eq!(h.query("balance", &[1.into()]), Value::Int(117));
        assert_eq!(
            h.query("block_tx_list", &[3.into()]),
            Value::List(vec![Value::Int(5)])
        );
    }

    #[test]
    fn historical_balance() {
        let mut h = Harness::new("versionkv", &[2.into(), 50.into()]);
        h.height = 3;
        send(&mut h, 0, 1, 20);
        assert_eq!(balance_at(&h.store, &h.contract, 0, 2), Some(50));
        assert_eq!(balance_at(&h.store, &h.contract, 0, 3), Some(30));
    }

    #[test]
    fn mismatched_value_and_overdraft_revert() {
        let mut h = Harness::new("versionkv", &[2.into(), 10.into()]);
        let r = h.call_as(0, 1, "send_value", vec![0.into(), 1.into(), 5.into()]);
        assert_eq!(r.status, ExecStatus::RevertedLogic);
        assert_eq!(send(&mut h, 0, 1, 11), ExecStatus::RevertedLogic);
    }
}
