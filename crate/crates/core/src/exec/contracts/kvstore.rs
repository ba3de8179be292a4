use super::{arg_key, arg_u64, unknown_function};
use crate::exec::{logic, ContractKind, ExecError, ExecutionContext, Value};

pub(crate) fn call(
    ctx: &mut ExecutionContext<'_>,
    function: &str,
    args: &[Value],
) -> Result<Value, ExecError> {
    match function {
        "read" => {
            let key = arg_key(args, 0, "key")?;
            Ok(ctx.get(&key)?.map_or(Value::Unit, Value::Bytes))
        }
        "write" => {
            let key = arg_key(args, 0, "key")?;
            let value = match args.get(1) {
                Some(Value::Bytes(b)) => b.clone(),
                Some(Value::Str(s)) => s.as_bytes().to_vec(),
                _ => return logic("argument 1 (value) must be bytes or a string"),
            };
            ctx.put(&key, value)?;
            Ok(Value::Unit)
        }
        "scan" => {
            let start = arg_key(args, 0, "start")?;
            let count = arg_u64(args, 1, "count")?.min(10_000) as usize;
            ctx.charge(ctx.schedule().per_state_read.saturating_mul(count as u64))?;
            let rows = ctx.scan(&start, count);
            Ok(Value::List(
                rows.into_iter()
                    .map(|(k, v)| Value::List(vec![Value::Bytes(k), Value::Bytes(v)]))
                    .collect(),
            ))
        }
        other => unknown_function(ContractKind::KvStore, other),
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::exec::contracts::testutil::Harness;
    use crate::exec::{ExecStatus, Value};

    #[test]
    fn write_then_read() {
        let mut h = Harness::new("kvstore", &[]);
        assert!(h
            .call_as(1, 0, "write", vec!["k".into(), "v".into()])
            .is_ok());
        assert_eq!(h.query("read", &["k".into()]), Value::Bytes(b"v".to_vec()));
        assert_eq!(h.query("read", &["missing".into()]), Value::Unit);
    }

    #[test]
    fn random_ops_match_shadow_map() {
        let mut h = Harness::new("kvstore", &[]);
        let mut shadow: BTreeMap<String, Vec<u8>> = BTreeMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..1000 {
            let key = format!("k{}", rng.gen_range(0..50));
            if rng.gen_bool(0.5) {
                let val = format!("v{i}").into_bytes();
                let r = h.call_as(
                    1,
                    0,
                    "write",
                    vec![key.as_str().into(), Value::Bytes(val.clone())],
                );
                assert_eq!(r.status, ExecStatus::Ok);
                shadow.insert(key, val);
            } else {
                let got = h.query("read", &[key.as_str().into()]);
                let want = shadow.get(&key).cloned().map_or(Value::Unit, Value::Bytes);
                assert_eq!(got, want);
            }
            h.height += 1;
        }
        let scanned = h.query("scan", &["k".into(), Value::Int(100)]);
        assert_eq!(scanned.as_list().unwrap().len(), shadow.len());
    }
}
