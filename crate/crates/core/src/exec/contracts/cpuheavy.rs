//! Quicksort over a contract-held array of u32, initialised in descending
//! order. Gas is charged per comparison.

use super::{arg_u64, unknown_function};
use crate::exec::{ContractKind, ExecError, ExecutionContext, Value};

const ARRAY: &[u8] = b"arr";

fn encode(a: &[u32]) -> Vec<u8> {
    a.iter().flat_map(|x| x.to_be_bytes()).collect()
}

fn decode(raw: &[u8]) -> Vec<u32> {
    raw.chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub(crate) fn init(ctx: &mut ExecutionContext<'_>, args: &[Value]) -> Result<(), ExecError> {
    let n = arg_u64(args, 0, "n")?.min(u32::MAX as u64) as u32;
    let arr: Vec<u32> = (1..=n).rev().collect();
    ctx.put(ARRAY, encode(&arr))
}

/// Iterative Hoare-partition quicksort with a middle pivot. Returns the
/// number of element comparisons.
pub fn quicksort(a: &mut [u32]) -> u64 {
    let mut comparisons = 0u64;
    if a.len() < 2 {
        return 0;
    }
    let mut stack = vec![(0isize, a.len() as isize - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if lo >= hi {
            continue;
        }
        let pivot = a[(lo + (hi - lo) / 2) as usize];
        let mut i = lo - 1;
        let mut j = hi + 1;
        let split = loop {
            loop {
                i += 1;
                comparisons += 1;
                if a[i as usize] >= pivot {
                    break;
                }
            }
            loop {
                j -= 1;
                comparisons += 1;
                if a[j as usize] <= pivot {
                    break;
                }
            }
            if i >= j {
                break j;
            }
            a.swap(i as usize, j as usize);
        };
        stack.push((lo, split));
        stack.push((split + 1, hi));
    }
    comparisons
}

pub(crate) fn call(
    ctx: &mut ExecutionContext<'_>,
    function: &str,
    _args: &[Value],
) -> Result<Value, ExecError> {
    match function {
        "sort" => {
            let mut arr = decode(&ctx.get(ARRAY)?.unwrap_or_default());
            let comparisons = quicksort(&mut arr);
            ctx.compute(comparisons)?;
            ctx.put(ARRAY, encode(&arr))?;
            Ok(Value::from(comparisons))
        }
        "get" => {
            let arr = decode(&ctx.get(ARRAY)?.unwrap_or_default());
            Ok(Value::List(
                arr.into_iter().map(|x| Value::Int(x as i64)).collect(),
            ))
        }
        other => unknown_function(ContractKind::CpuHeavy, other),
    }
}
