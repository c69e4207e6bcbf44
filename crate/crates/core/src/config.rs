//! Text config files.
//!
//! One `key = value` per line, `#` starts a comment. Keys:
//!
//! | key      | value                                                    |
//! |----------|----------------------------------------------------------|
//! | `ell`    | period (optional, inferred from the weight lists)        |
//! | `alphas` | comma/space separated weights, decimal or `p/q`          |
//! | `betas`  | same, same length as `alphas`                            |
//! | `a`      | shorthand for the two-periodic model (replaces the lists)|
//! | `N`      | size parameter, diamond side is `2 * ell * N`            |
//! | `seed`   | unsigned 64-bit seed (optional)                          |
//! | `size`   | explicit diamond side for brute-force checks (optional)  |

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::WeightConfig;

#[derive(Debug, Clone, Serialize)]
pub struct ConfigFile {
    pub weights: WeightConfig,
    pub seed: Option<u64>,
    pub size: Option<usize>,
}

/// Parses a decimal or a rational `p/q`.
pub fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Config(format!("cannot parse number {s:?}"));
    match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            let q: f64 = q.trim().parse().map_err(|_| bad())?;
            if q == 0.0 {
                return Err(bad());
            }
            Ok(p / q)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).map(parse_number).collect()
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let key = k.trim().to_string();
            if kv.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", lineno + 1)));
            }
        }
        for key in kv.keys() {
            if !["ell", "alphas", "betas", "a", "N", "seed", "size"].contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown key {key}")));
            }
        }
        let n_param = match kv.get("N") {
            Some(v) => v.parse::<usize>().map_err(|_| Error::Config(format!("N = {v:?} is not an integer")))?,
            None => 1,
        };
        let weights = if let Some(a) = kv.get("a") {
            if kv.contains_key("alphas") || kv.contains_key("betas") {
                return Err(Error::Config("`a` cannot be combined with explicit weights".into()));
            }
            if let Some(ell) = kv.get("ell") {
                if ell.trim() != "2" {
                    return Err(Error::Config("`a` shorthand requires ell = 2".into()));
                }
            }
            WeightConfig::two_periodic(parse_number(a)?, n_param)?
        } else {
            let alphas = parse_list(kv.get("alphas").ok_or_else(|| Error::Config("missing alphas".into()))?)?;
            let betas = parse_list(kv.get("betas").ok_or_else(|| Error::Config("missing betas".into()))?)?;
            if let Some(ell) = kv.get("ell") {
                let ell: usize = ell.parse().map_err(|_| Error::Config(format!("ell = {ell:?}")))?;
                if ell != alphas.len() {
                    return Err(Error::Config(format!("ell = {ell} but {} alphas given", alphas.len())));
                }
            }
            WeightConfig::new(alphas, betas, n_param)?
        };
        let seed = match kv.get("seed") {
            Some(v) => Some(v.parse().map_err(|_| Error::Config(format!("seed = {v:?}")))?),
            None => None,
        };
        let size = match kv.get("size") {
            Some(v) => {
                let s: usize = v.parse().map_err(|_| Error::Config(format!("size = {v:?}")))?;
                if s == 0 {
                    return Err(Error::ZeroSize);
                }
                Some(s)
            }
            None => None,
        };
        Ok(ConfigFile { weights, seed, size })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rationals_and_shorthand() {
        let c = ConfigFile::parse("# two-periodic\na = 1/2\nN = 4\nseed = 7\n").unwrap();
        assert_eq!(c.weights.alphas, vec![2.0, 0.5]);
        assert_eq!(c.weights.n_param, 4);
        assert_eq!(c.seed, Some(7));
        let c = ConfigFile::parse("ell = 2\nalphas = 2, 3/2\nbetas = 1 3\nN=1").unwrap();
        assert_eq!(c.weights.betas, vec![1.0, 3.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ConfigFile::parse("alphas = 1\n").is_err());
        assert!(ConfigFile::parse("alphas = 1, 2\nbetas = 1, 1\n").is_err());
        assert!(ConfigFile::parse("a = 0.5\nfoo = 1\n").is_err());
        assert!(ConfigFile::parse("a = 1/0\n").is_err());
        assert!(ConfigFile::parse("a = 0.5\nN = 0\n").is_err());
    }
}
