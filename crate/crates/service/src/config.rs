use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use robbins_core::namur::{DistributionBasket, DEFAULT_BETA};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

/// Service settings, read from a flat TOML file. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub data_dir: PathBuf,
    pub default_m: u32,
    /// JSON basket definition; the built-in four-entry basket when absent.
    pub basket_path: Option<PathBuf>,
    pub master_seed: u64,
    /// Open sessions idle for longer than this are dropped.
    pub session_ttl_secs: u64,
    /// Factor applied to a hypothesis for each piece of incompatible evidence.
    pub beta: f64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: PathBuf::from("robbins-data"),
            default_m: 100,
            basket_path: None,
            master_seed: 0x5eed,
            session_ttl_secs: 3600,
            beta: DEFAULT_BETA,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks the invariants and that the data directory is writable,
    /// creating it if needed.
    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.session_ttl_secs == 0 {
            return Err(ServiceError::Config("session_ttl_secs must be positive".into()));
        }
        if self.default_m == 0 || self.default_m > crate::app::MAX_M {
            return Err(ServiceError::Config(format!("default_m must lie in 1..={}", crate::app::MAX_M)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(ServiceError::Config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        std::fs::create_dir_all(&self.data_dir)?;
        let probe = self.data_dir.join(".write-probe");
        std::fs::write(&probe, b"")
            .map_err(|e| ServiceError::Config(format!("data_dir {} is not writable: {e}", self.data_dir.display())))?;
        std::fs::remove_file(probe)?;
        self.basket()?;
        Ok(())
    }

    pub fn basket(&self) -> Result<DistributionBasket, ServiceError> {
        match &self.basket_path {
            None => Ok(DistributionBasket::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
                Ok(DistributionBasket::from_json(&text)?)
            }
        }
    }
}
