//! Optional config file (TOML or JSON) mirroring the command-line flags.
//! Flags given on the command line win.

use std::path::Path;

use clap::ValueEnum;
use serde::Deserialize;

use spage_core::engine::Parallelism;
use spage_core::sql::Dialect;
use spage_llm::LlmConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Mock,
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecutorKind {
    /// The in-process relational engine.
    Native,
    /// SQLite running the deterministic emitter's SQL.
    Sql,
    /// SQLite running SQL requested from the backend per step.
    LlmSql,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Seq,
    Graph,
}

impl From<Mode> for Parallelism {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Seq => Parallelism::Sequential,
            Mode::Graph => Parallelism::Wavefront,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DialectArg {
    Sqlite,
    Ansi,
}

impl From<DialectArg> for Dialect {
    fn from(d: DialectArg) -> Self {
        match d {
            DialectArg::Sqlite => Dialect::SqliteCompatible,
            DialectArg::Ansi => Dialect::Ansi,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub jobs: Option<usize>,
    pub step_timeout_ms: Option<u64>,
    pub backend: Option<BackendKind>,
    pub executor: Option<ExecutorKind>,
    pub mode: Option<Mode>,
    pub dialect: Option<DialectArg>,
    pub llm: LlmConfig,
}

impl Settings {
    /// `.toml` files are read as TOML, anything else as JSON.
    pub fn load(path: &Path) -> Result<Settings, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| e.to_string())
        } else {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let t = dir.path().join("c.toml");
        std::fs::write(
            &t,
            "jobs = 2\nmode = \"seq\"\nexecutor = \"llm-sql\"\n[llm]\ntemperature = 0.5\n",
        )
        .unwrap();
        let j = dir.path().join("c.json");
        std::fs::write(
            &j,
            r#"{"jobs": 2, "mode": "seq", "executor": "llm-sql", "llm": {"temperature": 0.5}}"#,
        )
        .unwrap();
        for path in [t, j] {
            let s = Settings::load(&path).unwrap();
            assert_eq!(s.jobs, Some(2));
            assert_eq!(s.mode, Some(Mode::Seq));
            assert_eq!(s.executor, Some(ExecutorKind::LlmSql));
            assert_eq!(s.llm.temperature, 0.5);
            assert_eq!(s.llm.top_p, LlmConfig::default().top_p);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"jbos": 2}"#).unwrap();
        assert!(Settings::load(&path).unwrap_err().contains("jbos"));
    }
}
