//! Line-delimited JSON front end for a simulated cluster.
//!
//! Each request is one JSON object with a `method` field; each response is
//! one line, either `{"ok": ...}` or `{"error": "..."}`. Time only moves on
//! `advance`, unless the server was built with wall-clock pacing, in which
//! case it catches up to elapsed real time before every request.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::time::Instant;

use serde::Deserialize;
use serde_json::{json, Value as Json};

use super::BlockRef;
use crate::chain::{AccountId, Transaction};
use crate::cluster::Cluster;
use crate::driver::BlockchainConnector;
use crate::exec::{ContractId, Value};
use crate::hash::Hash256;

const DEFAULT_GAS: u64 = 10_000_000;

fn default_gas() -> u64 {
    DEFAULT_GAS
}

#[derive(Debug, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Status,
    Advance {
        ticks: u64,
    },
    Deploy {
        code: String,
        #[serde(default)]
        args: Vec<Value>,
    },
    Invoke {
        #[serde(default)]
        client: usize,
        sender: u64,
        contract: ContractId,
        function: String,
        #[serde(default)]
        args: Vec<Value>,
        #[serde(default)]
        value: u64,
        #[serde(default = "default_gas")]
        gas_limit: u64,
    },
    Query {
        contract: ContractId,
        function: String,
        #[serde(default)]
        args: Vec<Value>,
    },
    LatestBlocks {
        #[serde(default)]
        above: u64,
    },
    GetBlock {
        #[serde(default)]
        height: Option<u64>,
        #[serde(default)]
        id: Option<Hash256>,
    },
    BalanceAt {
        #[serde(default)]
        node: usize,
        contract: ContractId,
        account: u64,
        height: u64,
    },
}

pub struct Server {
    cluster: Cluster,
    nonce: u64,
    paced_from: Option<(Instant, u64)>,
}

impl Server {
    pub fn new(cluster: Cluster, wall_clock: bool) -> Self {
        let now = cluster.now();
        Server {
            cluster,
            nonce: 0,
            paced_from: wall_clock.then(|| (Instant::now(), now)),
        }
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    /// Handle one request line and return the response line.
    pub fn handle_line(&mut self, line: &str) -> String {
        let resp = match serde_json::from_str::<Request>(line) {
            Ok(req) => match self.handle(req) {
                Ok(v) => json!({ "ok": v }),
                Err(e) => json!({ "error": e }),
            },
            Err(e) => json!({ "error": format!("bad request: {e}") }),
        };
        resp.to_string()
    }

    pub fn handle(&mut self, req: Request) -> Result<Json, String> {
        if let Some((start, base)) = self.paced_from {
            let target = base + start.elapsed().as_millis() as u64;
            if target > self.cluster.now() {
                self.cluster.run_until(target);
            }
        }
        let c = &mut self.cluster;
        let s = |e: &dyn std::fmt::Display| e.to_string();
        Ok(match req {
            Request::Status => {
                let obs = c.observer().map(|i| c.node(i).confirmed_height());
                json!({
                    "now": c.now(),
                    "nodes": c.nodes().len(),
                    "consensus": c.kind().name(),
                    "confirmed_height": obs,
                    "fork_gap": c.fork_gap(),
                })
            }
            Request::Advance { ticks } => {
                let to = c.now() + ticks;
                c.run_until(to);
                json!({ "now": c.now() })
            }
            Request::Deploy { code, args } => {
                let (contract, tx) =
                    BlockchainConnector::deploy(c, &code, args).map_err(|e| s(&e))?;
                json!({ "contract": contract, "tx": tx })
            }
            Request::Invoke {
                client,
                sender,
                contract,
                function,
                args,
                value,
                gas_limit,
            } => {
                self.nonce += 1;
                let tx = Transaction::new_signed(
                    &c.signer(),
                    AccountId(sender),
                    contract,
                    function,
                    args,
                    value,
                    self.nonce,
                    gas_limit,
                );
                let id = c.invoke(client, tx).map_err(|e| s(&e))?;
                json!({ "tx": id })
            }
            Request::Query {
                contract,
                function,
                args,
            } => {
                let v = c.query(&contract, &function, &args).map_err(|e| s(&e))?;
                serde_json::to_value(v).map_err(|e| s(&e))?
            }
            Request::LatestBlocks { above } => {
                let v = c.get_latest_blocks(above).map_err(|e| s(&e))?;
                serde_json::to_value(v).map_err(|e| s(&e))?
            }
            Request::GetBlock { height, id } => {
                let r = match (height, id) {
                    (Some(h), None) => BlockRef::Height(h),
                    (None, Some(id)) => BlockRef::Id(id),
                    _ => return Err("get_block needs exactly one of height or id".into()),
                };
                let b = c.get_block(r).map_err(|e| s(&e))?;
                serde_json::to_value(&*b).map_err(|e| s(&e))?
            }
            Request::BalanceAt {
                node,
                contract,
                account,
                height,
            } => {
                if node >= c.nodes().len() {
                    return Err(format!("no node {node}"));
                }
                let v = c
                    .node(node)
                    .rpc_get_balance_at(&contract, account, height)
                    .map_err(|e| s(&e))?;
                json!(v)
            }
        })
    }

    pub fn serve_stream(&mut self, stream: TcpStream) -> io::Result<()> {
        let mut w = stream.try_clone()?;
        for line in BufReader::new(stream).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            writeln!(w, "{}", self.handle_line(&line))?;
        }
        Ok(())
    }

    /// Serve connections one after another until the listener fails.
    pub fn serve(&mut self, listener: TcpListener) -> io::Result<()> {
        for stream in listener.incoming() {
            let stream = stream?;
            if let Err(e) = self.serve_stream(stream) {
                log::warn!("connection closed: {e}");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::ClusterConfig;
    use crate::consensus::ConsensusConfig;

    fn server() -> Server {
        let c = Cluster::new(ClusterConfig {
            nodes: 4,
            consensus: ConsensusConfig {
                batch_timeout: 100,
                ..Default::default()
            },
            node: Default::default(),
            network: Default::default(),
            faults: Default::default(),
            seed: 1,
        })
        .unwrap();
        Server::new(c, false)
    }

    fn ok(s: &mut Server, line: &str) -> Json {
        let r: Json = serde_json::from_str(&s.handle_line(line)).unwrap();
        r.get("ok")
            .cloned()
            .unwrap_or_else(|| panic!("{line}: {r}"))
    }

    #[test]
    fn deploy_invoke_query_roundtrip() {
        let mut s = server();
        let d = ok(&mut s, r#"{"method":"deploy","code":"kvstore"}"#);
        ok(&mut s, r#"{"method":"advance","ticks":3000}"#);
        let contract = d["contract"].to_string();
        let inv = format!(
            r#"{{"method":"invoke","sender":1,"contract":{contract},"function":"write","args":["k","v"]}}"#
        );
        ok(&mut s, &inv);
        ok(&mut s, r#"{"method":"advance","ticks":3000}"#);
        let q =
            format!(r#"{{"method":"query","contract":{contract},"function":"read","args":["k"]}}"#);
        assert_eq!(ok(&mut s, &q), json!({"hex": "76"}));
        let st = ok(&mut s, r#"{"method":"status"}"#);
        assert!(st["confirmed_height"].as_u64().unwrap() >= 2, "{st}");
        let b = ok(&mut s, r#"{"method":"get_block","height":1}"#);
        assert!(b.get("header").is_some(), "{b}");
    }

    #[test]
    fn malformed_requests_report_errors() {
        let mut s = server();
        for line in [
            "not json",
            r#"{"method":"fly"}"#,
            r#"{"method":"advance","ticks":1,"extra":2}"#,
            r#"{"method":"get_block"}"#,
        ] {
            let r: Json = serde_json::from_str(&s.handle_line(line)).unwrap();
            assert!(r.get("error").is_some(), "{line}: {r}");
        }
    }
}
