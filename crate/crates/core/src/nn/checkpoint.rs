//! Plain-text checkpoint format.
//!
//! ```text
//! strider-checkpoint 1
//! meta <key> <value>                      (any number, sorted by key)
//! net <name> <n_sizes> <sizes...> <activations...> <n_params>
//! <one parameter per line, shortest round-trip exponent form>
//! end
//! ```
//!
//! Every `f64` is written with `{:e}`, which round-trips exactly, so
//! save → load → save reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::mlp::{Activation, Mlp};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "strider-checkpoint";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub nets: Vec<(String, Mlp)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn net(&self, name: &str) -> Result<&Mlp> {
        self.nets
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| bad(format!("no network named `{name}`")))
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta.get(key).map(String::as_str).ok_or_else(|| bad(format!("missing meta key `{key}`")))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {CHECKPOINT_VERSION}\n");
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        for (name, net) in &self.nets {
            let _ = write!(out, "net {name} {}", net.sizes().len());
            for s in net.sizes() {
                let _ = write!(out, " {s}");
            }
            for a in net.activations() {
                let _ = write!(out, " {}", a.name());
            }
            let _ = writeln!(out, " {}", net.num_params());
            for p in net.params() {
                let _ = writeln!(out, "{p:e}");
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty checkpoint"))?;
        let version = header
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| bad("not a checkpoint file"))?;
        if version != CHECKPOINT_VERSION.to_string() {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let mut ck = Checkpoint::default();
        loop {
            let line = lines.next().ok_or_else(|| bad("truncated checkpoint: missing `end`"))?;
            let mut tok = line.split_whitespace();
            match tok.next() {
                Some("end") => return Ok(ck),
                Some("meta") => {
                    let key = tok.next().ok_or_else(|| bad("meta line without key"))?;
                    let value = line.splitn(3, ' ').nth(2).unwrap_or("");
                    ck.meta.insert(key.to_string(), value.to_string());
                }
                Some("net") => {
                    let name = tok.next().ok_or_else(|| bad("net line without name"))?.to_string();
                    let mut next_usize = |what: &str| -> Result<usize> {
                        tok.next()
                            .and_then(|t| t.parse().ok())
                            .ok_or_else(|| bad(format!("net `{name}`: bad {what}")))
                    };
                    let n_sizes = next_usize("size count")?;
                    let sizes = (0..n_sizes).map(|_| next_usize("layer size")).collect::<Result<Vec<_>>>()?;
                    let acts = (0..n_sizes.saturating_sub(1))
                        .map(|_| {
                            tok.next()
                                .and_then(Activation::from_name)
                                .ok_or_else(|| bad(format!("net `{name}`: bad activation")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let n_params: usize = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| bad(format!("net `{name}`: bad parameter count")))?;
                    let mut net = Mlp::zeros(&sizes, &acts)?;
                    if net.num_params() != n_params {
                        return Err(bad(format!("net `{name}`: {n_params} parameters declared, layout needs {}", net.num_params())));
                    }
                    let values = (0..n_params)
                        .map(|_| {
                            lines
                                .next()
                                .and_then(|l| l.trim().parse::<f64>().ok())
                                .ok_or_else(|| bad(format!("net `{name}`: truncated or malformed parameters")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    net.set_params(&values)?;
                    ck.nets.push((name, net));
                }
                _ => return Err(bad(format!("unexpected line `{line}`"))),
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}
