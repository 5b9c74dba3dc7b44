//! Flat `key = value` run files and flag/file/default resolution.

use std::collections::HashMap;
use std::fmt::{self, Display};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::CliError;

/// Keys accepted in a run file; each mirrors a long flag.
pub const KEYS: &[&str] = &[
    "model",
    "decoder",
    "topics",
    "init-topics",
    "gamma",
    "lambda",
    "lr",
    "batch",
    "epochs",
    "seed",
    "alternating",
    "dropout-keep",
    "hidden",
    "latent",
    "clip",
    "top",
    "coherence",
    "ref",
    "sample",
    "train",
    "test",
    "vocab",
    "checkpoint",
    "out",
];

#[derive(Clone, Debug, Default)]
pub struct RunFile {
    path: PathBuf,
    values: HashMap<String, (usize, String)>,
}

impl RunFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let mut values = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |m: String| CliError::Usage(format!("{}:{}: {m}", path.display(), i + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(bad(format!("unknown key {key:?}")));
            }
            if values.insert(key.to_string(), (i + 1, value.to_string())).is_some() {
                return Err(bad(format!("key {key:?} set twice")));
            }
        }
        Ok(RunFile {
            path: path.to_path_buf(),
            values,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, raw)) => raw.parse().map(Some).map_err(|e| {
                CliError::Usage(format!("{}:{line}: bad value {raw:?} for {key}: {e}", self.path.display()))
            }),
        }
    }

    /// Relative paths in a run file resolve against the file's directory.
    pub fn get_path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(|(_, raw)| {
            let p = PathBuf::from(raw);
            match self.path.parent() {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p,
            }
        })
    }
}

/// Flag if given, else run-file value, else `default`.
pub fn pick<T: FromStr>(flag: Option<T>, file: Option<&RunFile>, key: &str, default: T) -> Result<T, CliError>
where
    T::Err: Display,
{
    Ok(pick_opt(flag, file, key)?.unwrap_or(default))
}

pub fn pick_opt<T: FromStr>(flag: Option<T>, file: Option<&RunFile>, key: &str) -> Result<Option<T>, CliError>
where
    T::Err: Display,
{
    match (flag, file) {
        (Some(v), _) => Ok(Some(v)),
        (None, Some(f)) => f.get(key),
        (None, None) => Ok(None),
    }
}

pub fn pick_path(flag: Option<PathBuf>, file: Option<&RunFile>, key: &str) -> Option<PathBuf> {
    flag.or_else(|| file.and_then(|f| f.get_path(key)))
}

/// Boolean switches: present on the command line wins, then the file.
pub fn pick_switch(flag: bool, file: Option<&RunFile>, key: &str) -> Result<bool, CliError> {
    if flag {
        return Ok(true);
    }
    Ok(file.map(|f| f.get::<bool>(key)).transpose()?.flatten().unwrap_or(false))
}

/// Writes resolved settings back out in run-file form.
pub struct RunFileWriter(Vec<(String, String)>);

impl RunFileWriter {
    pub fn new() -> Self {
        RunFileWriter(Vec::new())
    }

    pub fn set(&mut self, key: &str, value: impl Display) -> &mut Self {
        debug_assert!(KEYS.contains(&key), "{key}");
        self.0.push((key.to_string(), value.to_string()));
        self
    }
}

impl Display for RunFileWriter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.0 {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
