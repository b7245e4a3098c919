//! Server configuration: a TOML file with environment overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const ENV_LISTEN: &str = "PROM_LISTEN";
pub const ENV_DATA_DIR: &str = "PROM_DATA_DIR";
pub const ENV_STUDY_FILE: &str = "PROM_STUDY_FILE";
pub const ENV_SESSION_MINUTES: &str = "PROM_SESSION_MINUTES";

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_SESSION_MINUTES: i64 = 30;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserConfig {
    pub username: String,
    pub subject: String,
    #[serde(default)]
    pub salt: String,
    /// Hex SHA-256 of `salt` followed by the password.
    pub password_sha256: String,
}

impl UserConfig {
    pub fn check_password(&self, password: &str) -> bool {
        let got = hash_password(&self.salt, password);
        // compare in full to avoid leaking a prefix length
        let want = self.password_sha256.to_ascii_lowercase();
        got.len() == want.len()
            && got
                .bytes()
                .zip(want.bytes())
                .fold(0u8, |acc, (a, b)| acc | (a ^ b))
                == 0
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentConfig {
    pub id: String,
    pub subject: String,
    pub form: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub data_dir: PathBuf,
    pub study_file: PathBuf,
    #[serde(default = "default_minutes")]
    pub session_minutes: i64,
    #[serde(default)]
    pub users: Vec<UserConfig>,
    #[serde(default)]
    pub assignments: Vec<AssignmentConfig>,
}

fn default_listen() -> String {
    DEFAULT_LISTEN.to_owned()
}

fn default_minutes() -> i64 {
    DEFAULT_SESSION_MINUTES
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

pub fn hash_password(salt: &str, password: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update(password.as_bytes());
    hex::encode(h.finalize())
}

impl ServerConfig {
    /// Parse TOML text. Relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: ServerConfig = toml::from_str(text).map_err(|source| ConfigError::Toml {
            path: base.to_owned(),
            source,
        })?;
        cfg.data_dir = base.join(&cfg.data_dir);
        cfg.study_file = base.join(&cfg.study_file);
        Ok(cfg)
    }

    /// Read the config file and apply environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml(&text, base).map_err(|e| match e {
            ConfigError::Toml { source, .. } => ConfigError::Toml {
                path: path.to_owned(),
                source,
            },
            other => other,
        })?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get(ENV_LISTEN) {
            self.listen = v;
        }
        if let Some(v) = get(ENV_DATA_DIR) {
            self.data_dir = v.into();
        }
        if let Some(v) = get(ENV_STUDY_FILE) {
            self.study_file = v.into();
        }
        if let Some(v) = get(ENV_SESSION_MINUTES) {
            self.session_minutes = v.trim().parse().map_err(|_| {
                ConfigError::Invalid(format!("{ENV_SESSION_MINUTES}={v:?} is not a whole number"))
            })?;
        }
        Ok(())
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.session_minutes <= 0 {
            return Err(ConfigError::Invalid(
                "session_minutes must be positive".into(),
            ));
        }
        let mut names = std::collections::HashSet::new();
        for u in &self.users {
            if !names.insert(&u.username) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate user {}",
                    u.username
                )));
            }
        }
        let mut ids = std::collections::HashSet::new();
        for a in &self.assignments {
            if !ids.insert(&a.id) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate assignment {}",
                    a.id
                )));
            }
        }
        Ok(())
    }
}
