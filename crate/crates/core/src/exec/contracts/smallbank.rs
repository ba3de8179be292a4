//! Bank accounts split into savings and checking tables, plus an account
//! table recording which ids exist.
//!
//! Every procedure moves money between balances, so the sum over all
//! balances is invariant.

use super::{arg_u64, key_with_u64, unknown_function};
use crate::exec::{logic, ContractKind, ExecError, ExecutionContext, Value};

pub fn account_key(a: u64) -> Vec<u8> {
    key_with_u64(b"acct:", a)
}

pub fn savings_key(a: u64) -> Vec<u8> {
    key_with_u64(b"sav:", a)
}

pub fn checking_key(a: u64) -> Vec<u8> {
    key_with_u64(b"chk:", a)
}

const COUNT_KEY: &[u8] = b"count";

pub const PROCEDURES: [&str; 4] = [
    "transact_savings",
    "deposit_checking",
    "send_payment",
    "write_check",
];

pub(crate) fn init(ctx: &mut ExecutionContext<'_>, args: &[Value]) -> Result<(), ExecError> {
    let count = arg_u64(args, 0, "account_count")?;
    let initial = arg_u64(args, 1, "initial_balance")?;
    for a in 0..count {
        ctx.put(&account_key(a), vec![1])?;
        ctx.put_u64(&savings_key(a), initial)?;
        ctx.put_u64(&checking_key(a), initial)?;
    }
    ctx.put_u64(COUNT_KEY, count)
}

fn require_account(ctx: &mut ExecutionContext<'_>, a: u64) -> Result<(), ExecError> {
    match ctx.get(&account_key(a))? {
        Some(_) => Ok(()),
        None => logic(format!("unknown account {a}")),
    }
}

fn balance(ctx: &mut ExecutionContext<'_>, key: &[u8]) -> Result<u64, ExecError> {
    Ok(ctx.get_u64(key)?.unwrap_or(0))
}

fn debit(ctx: &mut ExecutionContext<'_>, key: &[u8], amount: u64) -> Result<(), ExecError> {
    let b = balance(ctx, key)?;
    if b < amount {
        return logic("insufficient funds");
    }
    ctx.put_u64(key, b - amount)
}

fn credit(ctx: &mut ExecutionContext<'_>, key: &[u8], amount: u64) -> Result<(), ExecError> {
    let b = balance(ctx, key)?;
    ctx.put_u64(
        key,
        b.checked_add(amount)
            .ok_or_else(|| ExecError::Logic("overflow".into()))?,
    )
}

pub(crate) fn call(
    ctx: &mut ExecutionContext<'_>,
    function: &str,
    args: &[Value],
) -> Result<Value, ExecError> {
    match function {
        // checking -> savings of the same account
        "transact_savings" => {
            let a = arg_u64(args, 0, "account")?;
            let amount = arg_u64(args, 1, "amount")?;
            require_account(ctx, a)?;
            debit(ctx, &checking_key(a), amount)?;
            credit(ctx, &savings_key(a), amount)?;
            Ok(Value::Unit)
        }
        // savings -> checking of the same account
        "deposit_checking" => {
            let a = arg_u64(args, 0, "account")?;
            let amount = arg_u64(args, 1, "amount")?;
            require_account(ctx, a)?;
            debit(ctx, &savings_key(a), amount)?;
            credit(ctx, &checking_key(a), amount)?;
            Ok(Value::Unit)
        }
        "send_payment" => {
            let from = arg_u64(args, 0, "from")?;
            let to = arg_u64(args, 1, "to")?;
            let amount = arg_u64(args, 2, "amount")?;
            require_account(ctx, from)?;
            require_account(ctx, to)?;
            debit(ctx, &checking_key(from), amount)?;
            credit(ctx, &checking_key(to), amount)?;
            Ok(Value::Unit)
        }
        // A check drawn on `from` (checking first, then savings) deposited
        // into `to`'s checking.
        "write_check" => {
            let from = arg_u64(args, 0, "from")?;
            let to = arg_u64(args, 1, "to")?;
            let amount = arg_u64(args, 2, "amount")?;
            require_account(ctx, from)?;
            require_account(ctx, to)?;
            let chk = balance(ctx, &checking_key(from))?;
            let sav = balance(ctx, &savings_key(from))?;
            if chk.saturating_add(sav) < amount {
                return logic("insufficient funds");
            }
            let from_chk = amount.min(chk);
            debit(ctx, &checking_key(from), from_chk)?;
            debit(ctx, &savings_key(from), amount - from_chk)?;
            credit(ctx, &checking_key(to), amount)?;
            Ok(Value::Unit)
        }
        "balance" => {
            let a = arg_u64(args, 0, "account")?;
            require_account(ctx, a)?;
            let s = balance(ctx, &savings_key(a))?;
            let c = balance(ctx, &checking_key(a))?;
            Ok(Value::List(vec![Value::from(s), Value::from(c)]))
        }
        "total" => {
            let n = ctx.get_u64(COUNT_KEY)?.unwrap_or(0);
            let mut sum: u64 = 0;
            for a in 0..n {
                sum += balance(ctx, &savings_key(a))? + balance(ctx, &checking_key(a))?;
            }
            Ok(Value::from(sum))
        }
        other => unknown_function(ContractKind::Smallbank, other),
    }
}
