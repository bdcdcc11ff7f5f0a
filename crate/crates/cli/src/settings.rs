//! Subcommand settings: built-in defaults, overridden by a `key = value`
//! config file, overridden by flags.

use crate::CliError;
use clap::{Arg, ArgMatches};
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Path,
    Int,
    Float,
    Bool,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Default {
    Value(&'static str),
    /// Must come from a flag or the config file.
    Required,
    /// Absent unless given.
    Unset,
    /// `HIMOL_SEED`, else 0.
    Seed,
}

#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub kind: Kind,
    pub default: Default,
    pub help: &'static str,
}

pub const fn key(name: &'static str, kind: Kind, default: Default, help: &'static str) -> Key {
    Key {
        name,
        kind,
        default,
        help,
    }
}

pub const SEED: Key = key("seed", Kind::Int, Default::Seed, "Seed for every random choice");

impl Key {
    pub fn arg(&self) -> Arg {
        let default = match self.default {
            Default::Value(v) => format!(" [default: {v}]"),
            Default::Required => " [required]".into(),
            Default::Unset => String::new(),
            Default::Seed => " [default: $HIMOL_SEED, else 0]".into(),
        };
        let value_name = match self.kind {
            Kind::Path => "FILE",
            Kind::Int => "N",
            Kind::Float => "X",
            Kind::Bool => "BOOL",
            Kind::Text => "TEXT",
        };
        let arg = Arg::new(self.name)
            .long(self.name)
            .value_name(value_name)
            .help(format!("{}{default}", self.help));
        if self.kind == Kind::Bool {
            arg.num_args(0..=1).default_missing_value("true")
        } else {
            arg
        }
    }
}

/// `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`", i + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn check(key: &Key, value: &str) -> Result<(), CliError> {
    let ok = match key.kind {
        Kind::Int => value.parse::<u64>().is_ok(),
        Kind::Float => value.parse::<f64>().map(f64::is_finite).unwrap_or(false),
        Kind::Bool => matches!(value, "true" | "false"),
        Kind::Path => !value.is_empty(),
        Kind::Text => true,
    };
    if ok {
        Ok(())
    } else {
        Err(CliError::User(format!("--{}: invalid value {value:?}", key.name)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<&'static str, String>,
}

impl Settings {
    pub fn resolve(keys: &[Key], config: Option<&str>, matches: &ArgMatches) -> Result<Settings, CliError> {
        let mut values = BTreeMap::new();
        for k in keys {
            let v = match k.default {
                Default::Value(v) => Some(v.to_string()),
                Default::Seed => Some(std::env::var("HIMOL_SEED").unwrap_or_else(|_| "0".into())),
                Default::Required | Default::Unset => None,
            };
            if let Some(v) = v {
                values.insert(k.name, v);
            }
        }
        if let Some(text) = config {
            for (name, v) in parse_config(text).map_err(CliError::User)? {
                let k = keys
                    .iter()
                    .find(|k| k.name == name)
                    .ok_or_else(|| CliError::User(format!("unknown config key {name:?}")))?;
                values.insert(k.name, v);
            }
        }
        for k in keys {
            if let Some(v) = matches.get_one::<String>(k.name) {
                values.insert(k.name, v.clone());
            }
        }
        for k in keys {
            match values.get(k.name) {
                Some(v) => check(k, v)?,
                None if k.default == Default::Required => {
                    return Err(CliError::User(format!("missing required setting --{}", k.name)))
                }
                None => {}
            }
        }
        Ok(Settings { values })
    }

    fn raw(&self, name: &str) -> &str {
        self.values.get(name).map(String::as_str).unwrap_or_else(|| panic!("setting {name} was not declared"))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        PathBuf::from(self.raw(name))
    }

    pub fn opt_path(&self, name: &str) -> Option<PathBuf> {
        self.values.get(name).map(PathBuf::from)
    }

    pub fn usize(&self, name: &str) -> usize {
        self.raw(name).parse().expect("checked on resolve")
    }

    pub fn u64(&self, name: &str) -> u64 {
        self.raw(name).parse().expect("checked on resolve")
    }

    pub fn f64(&self, name: &str) -> f64 {
        self.raw(name).parse().expect("checked on resolve")
    }

    pub fn bool(&self, name: &str) -> bool {
        self.raw(name) == "true"
    }

    pub fn text(&self, name: &str) -> &str {
        self.raw(name)
    }

    /// The effective settings in config-file form.
    pub fn echo(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
