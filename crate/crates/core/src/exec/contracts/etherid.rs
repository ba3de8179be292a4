//! Domain registrar. Domain records and buyer balances live in separate
//! key namespaces (`dom:` and `bal:`).

use super::{arg_key, arg_u64, key_with_u64, unknown_function};
use crate::exec::{decode_u64, logic, ContractKind, ExecError, ExecutionContext, Value};

pub fn balance_key(a: u64) -> Vec<u8> {
    key_with_u64(b"bal:", a)
}

fn domain_key(d: &[u8]) -> Vec<u8> {
    [b"dom:".as_slice(), d].concat()
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Record {
    owner: u64,
    price: u64,
    value: Vec<u8>,
}

impl Record {
    fn encode(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(16 + self.value.len());
        v.extend_from_slice(&self.owner.to_be_bytes());
        v.extend_from_slice(&self.price.to_be_bytes());
        v.extend_from_slice(&self.value);
        v
    }

    fn decode(raw: &[u8]) -> Self {
        Record {
            owner: decode_u64(&raw[..8]),
            price: decode_u64(&raw[8..16]),
            value: raw[16..].to_vec(),
        }
    }
}

pub(crate) fn init(ctx: &mut ExecutionContext<'_>, args: &[Value]) -> Result<(), ExecError> {
    let count = args.first().and_then(Value::as_u64).unwrap_or(0);
    let initial = args.get(1).and_then(Value::as_u64).unwrap_or(0);
    for a in 0..count {
        ctx.put_u64(&balance_key(a), initial)?;
    }
    Ok(())
}

fn value_arg(args: &[Value], idx: usize) -> Vec<u8> {
    match args.get(idx) {
        Some(Value::Str(s)) => s.as_bytes().to_vec(),
        Some(Value::Bytes(b)) => b.clone(),
        _ => Vec::new(),
    }
}

pub(crate) fn call(
    ctx: &mut ExecutionContext<'_>,
    function: &str,
    args: &[Value],
) -> Result<Value, ExecError> {
    match function {
        "create" => {
            let domain = arg_key(args, 0, "domain")?;
            let key = domain_key(&domain);
            if ctx.get(&key)?.is_some() {
                return logic("domain already registered");
            }
            let rec = Record {
                owner: ctx.sender.0,
                price: args.get(2).and_then(Value::as_u64).unwrap_or(0),
                value: value_arg(args, 1),
            };
            ctx.put(&key, rec.encode())?;
            Ok(Value::Unit)
        }
        "modify" => {
            let domain = arg_key(args, 0, "domain")?;
            let key = domain_key(&domain);
            let Some(raw) = ctx.get(&key)? else {
                return logic("unknown domain");
            };
            let mut rec = Record::decode(&raw);
            if rec.owner != ctx.sender.0 {
                return logic("only the owner may modify a domain");
            }
            rec.value = value_arg(args, 1);
            if let Some(p) = args.get(2).and_then(Value::as_u64) {
                rec.price = p;
            }
            ctx.put(&key, rec.encode())?;
            Ok(Value::Unit)
        }
        "buy" => {
            let domain = arg_key(args, 0, "domain")?;
            let key = domain_key(&domain);
            let Some(raw) = ctx.get(&key)? else {
                return logic("unknown domain");
            };
            let mut rec = Record::decode(&raw);
            let buyer = ctx.sender.0;
            let funds = ctx.get_u64(&balance_key(buyer))?.unwrap_or(0);
            if funds < rec.price {
                return logic("insufficient funds");
            }
            if rec.owner != buyer {
                ctx.put_u64(&balance_key(buyer), funds - rec.price)?;
                let seller = ctx.get_u64(&balance_key(rec.owner))?.unwrap_or(0);
                ctx.put_u64(&balance_key(rec.owner), seller + rec.price)?;
            }
            rec.owner = buyer;
            ctx.put(&key, rec.encode())?;
            Ok(Value::Unit)
        }
        "owner" => {
            let domain = arg_key(args, 0, "domain")?;
            Ok(ctx
                .get(&domain_key(&domain))?
                .map_or(Value::Unit, |r| Value::from(Record::decode(&r).owner)))
        }
        "balance" => {
            let a = arg_u64(args, 0, "account")?;
            Ok(ctx
                .get_u64(&balance_key(a))?
                .map_or(Value::Unit, Value::from))
        }
        other => unknown_function(ContractKind::EtherId, other),
    }
}

#[cfg(test)]
mod tests {
    use crate::exec::contracts::testutil::Harness;
    use crate::exec::{ExecStatus, Value};

    fn setup() -> Harness {
        Harness::new("etherid", &[Value::Int(4), Value::Int(100)])
    }

    #[test]
    fn create_then_buy_transfers_price() {
        let mut h = setup();
        assert!(h
            .call_as(1, 0, "create", vec!["abc".into(), "ip".into(), 10.into()])
            .is_ok());
        assert!(h.call_as(2, 0, "buy", vec!["abc".into()]).is_ok());
        assert_eq!(h.query("owner", &["abc".into()]), Value::Int(2));
        assert_eq!(h.query("balance", &[1.into()]), Value::Int(110));
        assert_eq!(h.query("balance", &[2.into()]), Value::Int(90));
    }

    #[test]
    fn duplicate_create_reverts() {
        let mut h = setup();
        h.call_as(1, 0, "create", vec!["abc".into(), "".into(), 1.into()]);
        let r = h.call_as(2, 0, "create", vec!["abc".into(), "".into(), 1.into()]);
        assert_eq!(r.status, ExecStatus::RevertedLogic);
    }

    #[test]
    fn modify_owner_only() {
        let mut h = setup();
        h.call_as(1, 0, "create", vec!["abc".into(), "a".into(), 1.into()]);
        assert!(h
            .call_as(1, 0, "modify", vec!["abc".into(), "b".into()])
            .is_ok());
        let r = h.call_as(3, 0, "modify", vec!["abc".into(), "c".into()]);
        assert_eq!(r.status, ExecStatus::RevertedLogic);
    }

    #[test]
    fn buy_without_funds_reverts() {
        let mut h = setup();
        h.call_as(1, 0, "create", vec!["abc".into(), "".into(), 500.into()]);
        let root = h.store.root();
        let r = h.call_as(2, 0, "buy", vec!["abc".into()]);
        assert_eq!(r.status, ExecStatus::RevertedLogic);
        assert_eq!(h.store.root(), root);
        assert_eq!(h.query("owner", &["abc".into()]), Value::Int(1));
    }
}
