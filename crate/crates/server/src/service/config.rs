use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config file {path}: {source}")]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("invalid bind address {0:?}")]
    Bind(String),
    #[error("{0} must be strictly positive")]
    NotPositive(&'static str),
    #[error("fetch size must be at most {max}")]
    FetchSizeTooLarge { max: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub bind_address: SocketAddr,
    pub max_concurrent_exports: usize,
    /// Longest a single socket write may stall.
    pub write_timeout_seconds: u64,
    pub max_export_duration_seconds: u64,
    pub default_fetch_size: u32,
    pub store_path: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind_address: "127.0.0.1:8080".parse().unwrap(),
            max_concurrent_exports: 4,
            write_timeout_seconds: 30,
            max_export_duration_seconds: 3600,
            default_fetch_size: ledgerstream_core::domain::DEFAULT_FETCH_SIZE,
            store_path: None,
        }
    }
}

/// Flat file layout; every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub bind_address: Option<String>,
    pub max_concurrent_exports: Option<usize>,
    pub write_timeout_seconds: Option<u64>,
    pub max_export_duration_seconds: Option<u64>,
    pub default_fetch_size: Option<u32>,
    pub store_path: Option<PathBuf>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        Self::parse(&text).map_err(|source| ConfigError::Parse { path: path.to_owned(), source: Box::new(source) })
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Overlays `other` on top of `self`; keys set in `other` win.
    pub fn merge(self, other: ConfigFile) -> ConfigFile {
        ConfigFile {
            bind_address: other.bind_address.or(self.bind_address),
            max_concurrent_exports: other.max_concurrent_exports.or(self.max_concurrent_exports),
            write_timeout_seconds: other.write_timeout_seconds.or(self.write_timeout_seconds),
            max_export_duration_seconds: other.max_export_duration_seconds.or(self.max_export_duration_seconds),
            default_fetch_size: other.default_fetch_size.or(self.default_fetch_size),
            store_path: other.store_path.or(self.store_path),
        }
    }

    /// Fills unset keys from the defaults and validates.
    pub fn resolve(self) -> Result<ServiceConfig, ConfigError> {
        let d = ServiceConfig::default();
        let bind_address = match self.bind_address {
            Some(s) => s.parse().map_err(|_| ConfigError::Bind(s))?,
            None => d.bind_address,
        };
        let config = ServiceConfig {
            bind_address,
            max_concurrent_exports: self.max_concurrent_exports.unwrap_or(d.max_concurrent_exports),
            write_timeout_seconds: self.write_timeout_seconds.unwrap_or(d.write_timeout_seconds),
            max_export_duration_seconds: self.max_export_duration_seconds.unwrap_or(d.max_export_duration_seconds),
            default_fetch_size: self.default_fetch_size.unwrap_or(d.default_fetch_size),
            store_path: self.store_path,
        };
        config.validate()?;
        Ok(config)
    }
}

impl ServiceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_concurrent_exports == 0 {
            return Err(ConfigError::NotPositive("max_concurrent_exports"));
        }
        if self.write_timeout_seconds == 0 {
            return Err(ConfigError::NotPositive("write_timeout_seconds"));
        }
        if self.max_export_duration_seconds == 0 {
            return Err(ConfigError::NotPositive("max_export_duration_seconds"));
        }
        if self.default_fetch_size == 0 {
            return Err(ConfigError::NotPositive("default_fetch_size"));
        }
        let max = ledgerstream_core::domain::MAX_FETCH_SIZE;
        if self.default_fetch_size > max {
            return Err(ConfigError::FetchSizeTooLarge { max });
        }
        Ok(())
    }

    pub fn write_timeout(&self) -> Duration {
        Duration::from_secs(self.write_timeout_seconds)
    }

    pub fn max_export_duration(&self) -> Duration {
        Duration::from_secs(self.max_export_duration_seconds)
    }
}
