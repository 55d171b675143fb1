//! Run configuration: command-line flags form the base layer, the config
//! file (TOML, or JSON by extension) is laid over them.

use std::path::Path;

use lbbp_core::LbbpConfig;
use toml::{Table, Value};

use crate::error::{require_file, CliError, CliResult};

/// Settings that may be given as flags.
#[derive(Debug, Default, Clone)]
pub struct FlagOverrides {
    pub k: Option<usize>,
    pub max_iterations: Option<usize>,
    pub no_warm_start: bool,
}

impl FlagOverrides {
    fn to_table(&self) -> Table {
        let mut t = Table::new();
        if let Some(k) = self.k {
            t.insert("k".into(), Value::Integer(k as i64));
        }
        if let Some(m) = self.max_iterations {
            t.insert("max_outer_iterations".into(), Value::Integer(m as i64));
        }
        if self.no_warm_start {
            let mut ws = Table::new();
            ws.insert("enabled".into(), Value::Boolean(false));
            t.insert("warm_start".into(), Value::Table(ws));
        }
        t
    }
}

fn read_table(path: &Path) -> CliResult<Table> {
    require_file(path, "config")?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        serde_json::from_str::<Table>(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str::<Table>(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Usage(format!("cannot parse config {}: {e}", path.display())))
}

/// Recursive merge; values in `top` win.
fn merge(base: &mut Table, top: Table) {
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// The resolved configuration. The file must set `seed`.
pub fn load(path: &Path, flags: &FlagOverrides) -> CliResult<LbbpConfig> {
    let file = read_table(path)?;
    if !file.contains_key("seed") {
        return Err(CliError::Usage(format!(
            "config {} must set `seed` so runs are reproducible",
            path.display()
        )));
    }
    let mut table = flags.to_table();
    merge(&mut table, file);
    let config: LbbpConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Usage(format!("invalid config {}: {}", path.display(), e.message())))?;
    config.validate()?;
    Ok(config)
}

/// Canonical TOML echo of a resolved configuration.
pub fn echo(config: &LbbpConfig) -> String {
    toml::to_string(config).expect("configuration serializes to TOML")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(ext: &str, body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn file_overrides_flags() {
        let f = file(".toml", "seed = 3\nk = 12\n[warm_start]\nsamples = 40\n");
        let flags = FlagOverrides {
            k: Some(30),
            max_iterations: Some(7),
            no_warm_start: true,
        };
        let c = load(f.path(), &flags).unwrap();
        assert_eq!((c.seed, c.k, c.max_outer_iterations), (3, 12, 7));
        assert!(!c.warm_start.enabled);
        assert_eq!(c.warm_start.samples, 40);
    }

    #[test]
    fn json_config() {
        let f = file(".json", r#"{"seed": 1, "k": 8, "warm_start": {"enabled": true}}"#);
        let flags = FlagOverrides {
            no_warm_start: true,
            ..Default::default()
        };
        let c = load(f.path(), &flags).unwrap();
        assert_eq!(c.k, 8);
        assert!(c.warm_start.enabled);
    }

    #[test]
    fn seed_is_required() {
        let f = file(".toml", "k = 12\n");
        assert!(matches!(load(f.path(), &Default::default()), Err(CliError::Usage(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let f = file(".toml", "seed = 1\nkay = 12\n");
        assert!(matches!(load(f.path(), &Default::default()), Err(CliError::Usage(_))));
    }

    #[test]
    fn echo_round_trips() {
        let c = LbbpConfig {
            seed: 9,
            eta: Some(f64::INFINITY),
            ..Default::default()
        };
        let text = echo(&c);
        let back: LbbpConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(echo(&back), text);
    }
}
