//! Pyramid-scheme contract. Each entry appends a participant; while the pot
//! strictly exceeds twice the amount of the next participant in line, that
//! participant is paid double their deposit.

use super::{arg_u64, key_with_u64, unknown_function};
use crate::exec::{decode_u64, logic, ContractKind, ExecError, ExecutionContext, Value};

const COUNT: &[u8] = b"participants";
const BALANCE: &[u8] = b"balance";
const PAYOUT_IDX: &[u8] = b"payout_idx";

fn participant_key(i: u64) -> Vec<u8> {
    key_with_u64(b"p:", i)
}

fn paid_key(a: u64) -> Vec<u8> {
    key_with_u64(b"paid:", a)
}

fn read_participant(ctx: &mut ExecutionContext<'_>, i: u64) -> Result<(u64, u64), ExecError> {
    let raw = ctx
        .get(&participant_key(i))?
        .ok_or_else(|| ExecError::Logic(format!("missing participant {i}")))?;
    Ok((decode_u64(&raw[..8]), decode_u64(&raw[8..16])))
}

pub(crate) fn call(
    ctx: &mut ExecutionContext<'_>,
    function: &str,
    args: &[Value],
) -> Result<Value, ExecError> {
    match function {
        "enter" => {
            if ctx.value == 0 {
                return logic("entry requires a positive value");
            }
            let n = ctx.get_u64(COUNT)?.unwrap_or(0);
            let mut rec = ctx.sender.0.to_be_bytes().to_vec();
            rec.extend_from_slice(&ctx.value.to_be_bytes());
            ctx.put(&participant_key(n), rec)?;
            let n = n + 1;
            ctx.put_u64(COUNT, n)?;

            let mut balance = ctx.get_u64(BALANCE)?.unwrap_or(0) + ctx.value;
            let mut idx = ctx.get_u64(PAYOUT_IDX)?.unwrap_or(0);
            let mut payouts = 0u64;
            while idx < n {
                ctx.compute(1)?;
                let (who, amount) = read_participant(ctx, idx)?;
                let payout = 2 * amount;
                if balance <= payout {
                    break;
                }
                balance -= payout;
                let prev = ctx.get_u64(&paid_key(who))?.unwrap_or(0);
                ctx.put_u64(&paid_key(who), prev + payout)?;
                idx += 1;
                payouts += 1;
            }
            ctx.put_u64(BALANCE, balance)?;
            ctx.put_u64(PAYOUT_IDX, idx)?;
            Ok(Value::from(payouts))
        }
        "state" => {
            let n = ctx.get_u64(COUNT)?.unwrap_or(0);
            let balance = ctx.get_u64(BALANCE)?.unwrap_or(0);
            let idx = ctx.get_u64(PAYOUT_IDX)?.unwrap_or(0);
            Ok(Value::List(vec![n.into(), balance.into(), idx.into()]))
        }
        "paid" => {
            let a = arg_u64(args, 0, "account")?;
            Ok(Value::from(ctx.get_u64(&paid_key(a))?.unwrap_or(0)))
        }
        other => unknown_function(ContractKind::Doubler, other),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use crate::exec::contracts::testutil::Harness;
    use crate::exec::{ExecStatus, Value};

    fn state(h: &Harness) -> (i64, i64, i64) {
        let v = h.query("state", &[]);
        let l = v.as_list().unwrap();
        (
            l[0].as_int().unwrap(),
            l[1].as_int().unwrap(),
            l[2].as_int().unwrap(),
        )
    }

    #[test]
    fn empty_state() {
        let h = Harness::new("doubler", &[]);
        assert_eq!(state(&h), (0, 0, 0));
    }

    #[test]
    fn two_equal_deposits_do_not_pay() {
        let mut h = Harness::new("doubler", &[]);
        h.call_as(1, 10, "enter", vec![]);
        h.call_as(2, 10, "enter", vec![]);
        assert_eq!(state(&h), (2, 20, 0));
        assert_eq!(h.query("paid", &[1.into()]), Value::Int(0));
    }

    #[test]
    fn third_deposit_pays_first_participant() {
        let mut h = Harness::new("doubler", &[]);
        for who in 1..=3 {
            assert!(h.call_as(who, 10, "enter", vec![]).is_ok());
        }
        assert_eq!(state(&h), (3, 10, 1));
        assert_eq!(h.query("paid", &[1.into()]), Value::Int(20));
    }

    #[test]
    fn zero_value_reverts() {
        let mut h = Harness::new("doubler", &[]);
        assert_eq!(
            h.call_as(1, 0, "enter", vec![]).status,
            ExecStatus::RevertedLogic
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn balance_and_index_stay_bounded(deposits in prop::collection::vec(1u64..50, 1..30)) {
            let mut h = Harness::new("doubler", &[]);
            for (i, d) in deposits.iter().enumerate() {
                prop_assert!(h.call_as(i as u64, *d, "enter", vec![]).is_ok());
                let (n, balance, idx) = state(&h);
                prop_assert!(balance >= 0);
                prop_assert!(idx <= n);
            }
        }
    }
}
