//! `--config` support: a flat JSON object whose keys are long flag names.
//! Values are appended to the command line only for flags that were not
//! given explicitly (or through their environment variable), so explicit
//! flags always win.

use std::fs;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Command, CommandFactory};
use neuron_cartographer::{Error, Result};
use serde_json::Value;

use crate::args::Cli;

fn deepest<'a>(cmd: &'a Command, matches: &'a ArgMatches) -> (&'a Command, &'a ArgMatches) {
    match matches.subcommand() {
        Some((name, sub)) => match cmd.find_subcommand(name) {
            Some(c) => deepest(c, sub),
            None => (cmd, matches),
        },
        None => (cmd, matches),
    }
}

fn render(key: &str, value: &Value) -> Result<Option<String>> {
    let scalar = |v: &Value| -> Result<String> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            Value::Bool(b) => Ok(b.to_string()),
            _ => Err(Error::InvalidArgument(format!("config key `{key}` has an unsupported value"))),
        }
    };
    Ok(match value {
        Value::Null => None,
        Value::Array(items) => Some(items.iter().map(scalar).collect::<Result<Vec<_>>>()?.join(",")),
        v => Some(scalar(v)?),
    })
}

/// Value of `--config` in `argv`, found without a full parse so that the
/// config can supply required flags.
pub fn find_path(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

pub fn merge(argv: &[String], path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let json: Value = serde_json::from_str(&text)?;
    let Value::Object(entries) = json else {
        return Err(Error::InvalidArgument(format!("{} is not a JSON object", path.display())));
    };

    let mut root = Cli::command().ignore_errors(true);
    root.build();
    let matches = root
        .clone()
        .try_get_matches_from(argv)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let (cmd, m) = deepest(&root, &matches);

    let mut out = argv.to_vec();
    for (key, value) in &entries {
        if key == "config" {
            continue;
        }
        let Some(arg) = cmd.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            eprintln!("warning: config key `{key}` does not apply to `{}`", cmd.get_name());
            continue;
        };
        let id = arg.get_id().as_str();
        if matches!(m.value_source(id), Some(ValueSource::CommandLine | ValueSource::EnvVariable)) {
            continue;
        }
        let Some(rendered) = render(key, value)? else {
            continue;
        };
        if matches!(arg.get_action(), ArgAction::SetTrue | ArgAction::Count) {
            match value {
                Value::Bool(true) => out.push(format!("--{key}")),
                Value::Bool(false) => {}
                _ => return Err(Error::InvalidArgument(format!("config key `{key}` must be true or false"))),
            }
        } else {
            out.push(format!("--{key}={rendered}"));
        }
    }
    Ok(out)
}
