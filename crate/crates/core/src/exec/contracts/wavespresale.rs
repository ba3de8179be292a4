//! Presale ledger: each sale records an owner and a token amount.

use super::{arg_u64, key_with_u64, unknown_function};
use crate::exec::{decode_u64, logic, ContractKind, ExecError, ExecutionContext, Value};

const NEXT_ID: &[u8] = b"next_id";
const TOTAL: &[u8] = b"total";

fn sale_key(id: u64) -> Vec<u8> {
    key_with_u64(b"sale:", id)
}

fn encode_sale(owner: u64, tokens: u64) -> Vec<u8> {
    let mut v = owner.to_be_bytes().to_vec();
    v.extend_from_slice(&tokens.to_be_bytes());
    v
}

fn load(ctx: &mut ExecutionContext<'_>, id: u64) -> Result<(u64, u64), ExecError> {
    match ctx.get(&sale_key(id))? {
        Some(raw) => Ok((decode_u64(&raw[..8]), decode_u64(&raw[8..16]))),
        None => logic(format!("unknown sale {id}")),
    }
}

pub(crate) fn call(
    ctx: &mut ExecutionContext<'_>,
    function: &str,
    args: &[Value],
) -> Result<Value, ExecError> {
    match function {
        "new_sale" => {
            let tokens = arg_u64(args, 0, "tokens")?;
            let id = ctx.get_u64(NEXT_ID)?.unwrap_or(0);
            ctx.put(&sale_key(id), encode_sale(ctx.sender.0, tokens))?;
            ctx.put_u64(NEXT_ID, id + 1)?;
            let total = ctx.get_u64(TOTAL)?.unwrap_or(0);
            ctx.put_u64(TOTAL, total.saturating_add(tokens))?;
            Ok(Value::from(id))
        }
        "transfer_sale" => {
            let id = arg_u64(args, 0, "sale_id")?;
            let to = arg_u64(args, 1, "new_owner")?;
            let (_, tokens) = load(ctx, id)?;
            ctx.put(&sale_key(id), encode_sale(to, tokens))?;
            Ok(Value::Unit)
        }
        "query_sale" => {
            let id = arg_u64(args, 0, "sale_id")?;
            let (owner, tokens) = load(ctx, id)?;
            Ok(Value::List(vec![owner.into(), tokens.into()]))
        }
        "total" => Ok(Value::from(ctx.get_u64(TOTAL)?.unwrap_or(0))),
        other => unknown_function(ContractKind::WavesPresale, other),
    }
}
