//! Historical queries over a preloaded transfer ledger, answered either by
//! scanning blocks or by one query against versioned account state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{transfer_request, AccountsParams, VersionKvTransfers};
use crate::chain::{Block, Transaction};
use crate::driver::{self, BlockchainConnector, DriverError, PendingQueue, Poller, RunConfig};
use crate::exec::{ContractId, Value};
use crate::node::BlockRef;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Scan,
    Versioned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Answer<T> {
    pub value: T,
    /// Data-fetching RPCs issued.
    pub roundtrips: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreloadParams {
    pub accounts: u64,
    pub blocks: u64,
    /// Mean transfers per block; counts are uniform in `1..=2*mean-1`.
    pub txs_per_block: u64,
    pub initial_balance: u64,
    pub max_value: u64,
    pub seed: u64,
}

impl Default for PreloadParams {
    fn default() -> Self {
        PreloadParams {
            accounts: 1024,
            blocks: 1000,
            txs_per_block: 3,
            initial_balance: 1_000_000,
            max_value: 100,
            seed: 7,
        }
    }
}

/// One generated transfer and the confirmed height it landed at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transfer {
    pub from: u64,
    pub to: u64,
    pub value: u64,
    pub height: u64,
}

#[derive(Clone, Debug)]
pub struct Preloaded {
    pub contract: ContractId,
    pub transfers: Vec<Transfer>,
    /// Confirmed tip after loading.
    pub tip: u64,
}

/// Deploy the versioned-balance contract and commit `blocks` rounds of
/// random transfers, waiting for each round to confirm before the next.
pub fn analytics_preload(
    connector: &mut dyn BlockchainConnector,
    p: &PreloadParams,
    cfg: &RunConfig,
) -> Result<Preloaded, DriverError> {
    let acc = AccountsParams {
        account_count: p.accounts,
        initial_balance: p.initial_balance,
        max_amount: p.max_value,
    };
    let w = VersionKvTransfers(acc.clone());
    let contract = driver::prepare(connector, &w, cfg)?;
    let signer = connector.signer();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut poller = Poller::new();
    let mut queue = PendingQueue::default();
    poller.poll(connector, &mut queue)?;
    let mut transfers = Vec::new();
    let mut nonce = 0u64;
    let spread = 2 * p.txs_per_block.max(1) - 1;
    for _ in 0..p.blocks {
        let k = rng.gen_range(1..=spread);
        for _ in 0..k {
            let r = transfer_request(&acc, &mut rng);
            transfers.push(Transfer {
                from: r.args[0].as_u64().expect("from"),
                to: r.args[1].as_u64().expect("to"),
                value: r.value,
                height: 0,
            });
            nonce += 1;
            let tx = Transaction::new_signed(
                &signer,
                r.sender,
                contract,
                r.function,
                r.args,
                r.value,
                nonce,
                cfg.gas_limit,
            );
            let id = connector.invoke(0, tx)?;
            queue.insert(id, transfers.len() - 1);
        }
        let deadline = connector.now() + cfg.setup_timeout;
        loop {
            let r = poller.poll(connector, &mut queue)?;
            for m in &r.matched {
                if !m.ok {
                    return Err(DriverError::SetupFailed(m.id));
                }
                transfers[m.record].height = m.height;
            }
            for (id, rec) in r.reverted {
                queue.insert(id, rec);
            }
            if queue.is_empty() {
                break;
            }
            let now = connector.now();
            if now >= deadline {
                return Err(DriverError::SetupTimeout(cfg.setup_timeout));
            }
            connector.advance_to(now + cfg.poll_interval);
        }
    }
    Ok(Preloaded {
        contract,
        transfers,
        tip: poller.height(),
    })
}

fn check_range(connector: &mut dyn BlockchainConnector, i: u64, j: u64) -> Result<(), DriverError> {
    if i > j {
        return Err(DriverError::Config("range start above end"));
    }
    let confirmed = connector.get_latest_blocks(j.saturating_sub(1))?;
    if j > 0 && confirmed.first().is_none_or(|v| v.height != j) {
        return Err(DriverError::Config("range end above confirmed tip"));
    }
    Ok(())
}

fn committed(block: &Block) -> impl Iterator<Item = &Transaction> {
    block
        .transactions
        .iter()
        .zip(&block.receipts)
        .filter(|(_, r)| r.is_ok())
        .map(|(t, _)| t)
}

/// Total value of committed transactions in blocks `i..=j`.
pub fn analytics_q1(
    connector: &mut dyn BlockchainConnector,
    i: u64,
    j: u64,
) -> Result<Answer<u64>, DriverError> {
    check_range(connector, i, j)?;
    let mut total = 0u64;
    for h in i..=j {
        let b = connector.get_block(BlockRef::Height(h))?;
        total += committed(&b).map(|t| t.value).sum::<u64>();
    }
    Ok(Answer {
        value: total,
        roundtrips: j - i + 1,
    })
}

fn touches(tx: &Transaction, contract: &ContractId, account: u64) -> bool {
    tx.contract == *contract
        && tx.function == "send_value"
        && (tx.arg_int(0) == Some(account as i64) || tx.arg_int(1) == Some(account as i64))
}

/// Largest transfer value involving `account` in blocks `i..=j`.
pub fn analytics_q2(
    connector: &mut dyn BlockchainConnector,
    contract: &ContractId,
    account: u64,
    i: u64,
    j: u64,
    strategy: Strategy,
) -> Result<Answer<Option<u64>>, DriverError> {
    check_range(connector, i, j)?;
    match strategy {
        Strategy::Scan => {
            let mut best = None;
            for h in i..=j {
                let b = connector.get_block(BlockRef::Height(h))?;
                for t in committed(&b).filter(|t| touches(t, contract, account)) {
                    best = best.max(Some(t.value));
                }
            }
            Ok(Answer {
                value: best,
                roundtrips: j - i + 1,
            })
        }
        Strategy::Versioned => {
            let args = [account.into(), i.into(), (j + 1).into()];
            let value = match connector.query(contract, "account_block_range", &args) {
                Ok(Value::List(rows)) => rows
                    .iter()
                    .filter_map(|r| r.as_list().and_then(|r| r.get(2)).and_then(Value::as_u64))
                    .max(),
                Ok(_) | Err(_) => None,
            };
            Ok(Answer {
                value,
                roundtrips: 1,
            })
        }
    }
}
