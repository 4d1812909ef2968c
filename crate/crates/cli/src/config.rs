//! Flat `key = value` run configuration. Values are JSON literals; anything
//! that does not parse as JSON is taken as a bare string.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Flow,
    Jset,
    Goodset,
    Badset,
    Lemmas,
    Series,
    Factorization,
    Chaos,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::Jset => "jset",
            Command::Goodset => "goodset",
            Command::Badset => "badset",
            Command::Lemmas => "lemmas",
            Command::Series => "series",
            Command::Factorization => "factorization",
            Command::Chaos => "chaos",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        <Command as clap::ValueEnum>::from_str(s, false).map_err(|_| CliError::Config(format!("unknown command {s:?}")))
    }
}

pub const DEFAULT_SEED: u64 = 0;
const RESERVED: [&str; 3] = ["command", "seed", "out"];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub params: BTreeMap<String, Value>,
    pub seed: u64,
    pub output_path: PathBuf,
}

fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Parses `key = value` lines (blank lines and `#` comments ignored).
pub fn parse_pairs(text: &str) -> CliResult<Vec<(String, Value)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_assignment(line).map_err(|e| CliError::Config(format!("line {}: {e}", lineno + 1)))?);
    }
    Ok(out)
}

/// One `key=value` assignment, as given to `--set`.
pub fn parse_assignment(s: &str) -> Result<(String, Value), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key = value, got {s:?}"))?;
    let k = k.trim();
    if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(format!("invalid key {k:?}"));
    }
    Ok((k.to_string(), parse_value(v)))
}

impl RunConfig {
    /// Applies assignments in order; later ones win.
    pub fn from_pairs(command: Option<Command>, pairs: Vec<(String, Value)>) -> CliResult<Self> {
        let mut cfg_command = command;
        let mut seed = DEFAULT_SEED;
        let mut out = None;
        let mut params = BTreeMap::new();
        for (k, v) in pairs {
            match k.as_str() {
                "command" => {
                    let s = v.as_str().ok_or_else(|| CliError::Config("command must be a string".into()))?;
                    let c: Command = s.parse()?;
                    if let Some(prev) = command {
                        if prev != c {
                            return Err(CliError::Config(format!("config is for {c}, invoked as {prev}")));
                        }
                    }
                    cfg_command = Some(c);
                }
                "seed" => {
                    seed = v.as_u64().ok_or_else(|| CliError::Config(format!("seed must be a u64, got {v}")))?;
                }
                "out" => {
                    out = Some(PathBuf::from(
                        v.as_str().ok_or_else(|| CliError::Config("out must be a path string".into()))?,
                    ));
                }
                _ => {
                    params.insert(k, v);
                }
            }
        }
        let command = cfg_command.ok_or_else(|| CliError::Config("no command given".into()))?;
        let output_path = out.unwrap_or_else(|| PathBuf::from(format!("hslab-{command}")));
        Ok(RunConfig { command, params, seed, output_path })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("command = \"{}\"\nseed = {}\n", self.command, self.seed);
        s.push_str(&format!("out = {}\n", Value::String(self.output_path.display().to_string())));
        for (k, v) in &self.params {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    #[cfg(test)]
    pub fn from_text(text: &str) -> CliResult<Self> {
        Self::from_pairs(None, parse_pairs(text)?)
    }
}

/// Typed, schema-checked access to a command's parameters. Every value read
/// (including defaults) is recorded for the manifest.
pub struct Params {
    raw: BTreeMap<String, Value>,
    resolved: RefCell<BTreeMap<String, Value>>,
}

impl Params {
    pub fn new(raw: &BTreeMap<String, Value>, allowed: &[&str]) -> CliResult<Self> {
        for k in raw.keys() {
            if !allowed.contains(&k.as_str()) && !RESERVED.contains(&k.as_str()) {
                return Err(CliError::Config(format!("unknown parameter {k:?}; allowed: {}", allowed.join(", "))));
            }
        }
        Ok(Params { raw: raw.clone(), resolved: RefCell::new(BTreeMap::new()) })
    }

    pub fn resolved(&self) -> BTreeMap<String, Value> {
        self.resolved.borrow().clone()
    }

    fn get<T: DeserializeOwned + Serialize>(&self, key: &str, default: Option<T>) -> CliResult<T> {
        let value = match self.raw.get(key) {
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| CliError::Config(format!("parameter {key}: {e} (got {v})")))?,
            None => default.ok_or_else(|| CliError::Config(format!("missing required parameter {key}")))?,
        };
        self.resolved
            .borrow_mut()
            .insert(key.to_string(), serde_json::to_value(&value).expect("serializable parameter"));
        Ok(value)
    }

    pub fn value<T: DeserializeOwned + Serialize>(&self, key: &str, default: T) -> CliResult<T> {
        self.get(key, Some(default))
    }

    pub fn optional<T: DeserializeOwned + Serialize>(&self, key: &str) -> CliResult<Option<T>> {
        if self.raw.contains_key(key) {
            self.get(key, None).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn positive(&self, key: &str, default: f64) -> CliResult<f64> {
        let v: f64 = self.value(key, default)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Config(format!("{key} must be positive, got {v}")));
        }
        Ok(v)
    }

    pub fn dim(&self) -> CliResult<usize> {
        let d: usize = self.value("d", 2)?;
        if !(2..=3).contains(&d) {
            return Err(CliError::Config(format!("d must be 2 or 3, got {d}")));
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let text = "# sweep\ncommand = flow\nseed = 7\nt = 2.5\nrho = [0.5, 0.25]\nfixture = head_on\nname = \"a b\"\n";
        let cfg = RunConfig::from_text(text).unwrap();
        assert_eq!(cfg.command, Command::Flow);
        assert_eq!(cfg.params["fixture"], Value::String("head_on".into()));
        let back = RunConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn later_assignments_win_and_keys_are_checked() {
        let pairs = vec![("t".to_string(), Value::from(1.0)), ("t".to_string(), Value::from(3.0))];
        let cfg = RunConfig::from_pairs(Some(Command::Flow), pairs).unwrap();
        assert_eq!(cfg.params["t"], Value::from(3.0));
        assert!(Params::new(&cfg.params, &["n"]).is_err());
        let p = Params::new(&cfg.params, &["t"]).unwrap();
        assert_eq!(p.value::<f64>("t", 0.0).unwrap(), 3.0);
        assert_eq!(p.optional::<f64>("missing").unwrap(), None);
        assert!(parse_assignment("no equals").is_err());
    }
}
