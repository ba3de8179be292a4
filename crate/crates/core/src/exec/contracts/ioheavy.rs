//! Bulk random I/O. Key and value bytes come from a ChaCha8 stream seeded by
//! the caller, so `read_n` with the same seed revisits the keys `write_n`
//! produced.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{arg_u64, unknown_function};
use crate::exec::{ContractKind, ExecError, ExecutionContext, Value};

pub const KEY_LEN: usize = 20;
pub const VALUE_LEN: usize = 100;

pub(crate) fn call(
    ctx: &mut ExecutionContext<'_>,
    function: &str,
    args: &[Value],
) -> Result<Value, ExecError> {
    match function {
        "write_n" => {
            let n = arg_u64(args, 0, "n")?;
            let mut rng = ChaCha8Rng::seed_from_u64(arg_u64(args, 1, "seed")?);
            for _ in 0..n {
                let mut key = [0u8; KEY_LEN];
                let mut value = vec![0u8; VALUE_LEN];
                rng.fill_bytes(&mut key);
                rng.fill_bytes(&mut value);
                ctx.put(&key, value)?;
            }
            Ok(Value::from(n))
        }
        "read_n" => {
            let n = arg_u64(args, 0, "n")?;
            let mut rng = ChaCha8Rng::seed_from_u64(arg_u64(args, 1, "seed")?);
            let mut hits = 0u64;
            let mut skip = vec![0u8; VALUE_LEN];
            for _ in 0..n {
                let mut key = [0u8; KEY_LEN];
                rng.fill_bytes(&mut key);
                rng.fill_bytes(&mut skip);
                if ctx.get(&key)?.is_some() {
                    hits += 1;
                }
            }
            Ok(Value::from(hits))
        }
        other => unknown_function(ContractKind::IoHeavy, other),
    }
}
