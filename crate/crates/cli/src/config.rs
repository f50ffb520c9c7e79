//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ionxy::chain::TrapConfig;
use ionxy::constants::AMU;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Trap keys accepted by every subcommand.
pub const TRAP_KEYS: &[&str] = &[
    "n_ions",
    "mass_amu",
    "omega_x_mhz",
    "omega_y_mhz",
    "omega_z_mhz",
    "delta_k",
    "rabi_total_mhz",
    "mu_mhz",
    "angular",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`, got `{}`", k + 1, raw.trim())))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", k + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", k + 1)));
            }
        }
        Ok(Self { entries })
    }

    /// Preset values that explicit entries override.
    pub fn with_defaults(mut self, defaults: &[(&str, &str)]) -> Self {
        for (k, v) in defaults {
            self.entries.entry(k.to_string()).or_insert_with(|| v.to_string());
        }
        self
    }

    /// Reject keys outside `TRAP_KEYS` and `extra`.
    pub fn check_keys(&self, extra: &[&str]) -> Result<(), CliError> {
        let valid: Vec<&str> = TRAP_KEYS.iter().chain(extra).copied().collect();
        let unknown: Vec<&str> = self.entries.keys().map(String::as_str).filter(|k| !valid.contains(k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "unknown key(s): {}; valid keys: {}",
                unknown.join(", "),
                valid.join(", ")
            )))
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.get(key)
            .map(|v| v.parse::<f64>().map_err(|_| invalid(key, v, "expected a number")))
            .transpose()
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        match self.get(key) {
            Some(v) => v.parse().map_err(|_| invalid(key, v, "expected a non-negative integer")),
            None => Ok(default),
        }
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.get(key) {
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(invalid(key, v, "expected true or false")),
            None => Ok(default),
        }
    }

    /// Comma-separated integers; `a..b:step` ranges are inclusive.
    pub fn usize_list_or(&self, key: &str, default: &[usize]) -> Result<Vec<usize>, CliError> {
        let Some(v) = self.get(key) else {
            return Ok(default.to_vec());
        };
        let mut out = Vec::new();
        for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if let Some((range, step)) = part.split_once(':') {
                let (a, b) = range.split_once("..").ok_or_else(|| invalid(key, v, "ranges look like 8..52:4"))?;
                let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| invalid(key, v, "bad range bound"));
                let (a, b, step) = (parse(a)?, parse(b)?, parse(step)?);
                if step == 0 {
                    return Err(invalid(key, v, "range step must be positive"));
                }
                out.extend((a..=b).step_by(step));
            } else {
                out.push(part.parse().map_err(|_| invalid(key, v, "expected integers"))?);
            }
        }
        if out.is_empty() {
            return Err(invalid(key, v, "list is empty"));
        }
        Ok(out)
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        let Some(v) = self.get(key) else {
            return Ok(default.to_vec());
        };
        let out: Vec<f64> = v
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse().map_err(|_| invalid(key, v, "expected numbers")))
            .collect::<Result<_, _>>()?;
        if out.is_empty() {
            return Err(invalid(key, v, "list is empty"));
        }
        Ok(out)
    }

    /// Frequency given in MHz, converted to rad/s (or taken as angular
    /// 10^6 rad/s when `angular = true`).
    pub fn frequency_opt(&self, key: &str) -> Result<Option<f64>, CliError> {
        let scale = if self.bool_or("angular", false)? { 1e6 } else { 2.0 * PI * 1e6 };
        Ok(self.f64_opt(key)?.map(|v| v * scale))
    }

    pub fn trap(&self, default_ions: usize) -> Result<TrapConfig, CliError> {
        let mut trap = TrapConfig::reference(self.usize_or("n_ions", default_ions)?);
        if let Some(m) = self.f64_opt("mass_amu")? {
            trap.ion_mass = m * AMU;
        }
        if let Some(w) = self.frequency_opt("omega_x_mhz")? {
            trap.omega_x = w;
        }
        if let Some(w) = self.frequency_opt("omega_y_mhz")? {
            trap.omega_y = w;
        }
        if let Some(w) = self.frequency_opt("omega_z_mhz")? {
            trap.omega_z = w;
        }
        if let Some(k) = self.f64_opt("delta_k")? {
            trap.delta_k = k;
        }
        if let Some(w) = self.frequency_opt("rabi_total_mhz")? {
            trap.rabi_total = w;
        }
        if let Some(w) = self.frequency_opt("mu_mhz")? {
            trap.detuning_mu = w;
        }
        trap.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(trap)
    }

    /// SHA-256 over the sorted entries and the command label.
    pub fn hash(&self, command: &str) -> String {
        let mut h = Sha256::new();
        h.update(format!("command={command}\n"));
        for (k, v) in &self.entries {
            h.update(format!("{k}={v}\n"));
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn invalid(key: &str, value: &str, reason: &str) -> CliError {
    CliError::Config(format!("invalid value `{value}` for `{key}`: {reason}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let c = ConfigFile::parse("# header\n n_ions = 12  # trailing\n\nangular=true\n").unwrap();
        assert_eq!(c.get("n_ions"), Some("12"));
        assert_eq!(c.get("angular"), Some("true"));
        assert!(c.check_keys(&[]).is_ok());
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let c = ConfigFile::parse("n_ion = 3\n").unwrap();
        let err = c.check_keys(&["alpha_target"]).unwrap_err().to_string();
        assert!(err.contains("n_ion") && err.contains("valid keys") && err.contains("alpha_target"));
        assert!(ConfigFile::parse("a = 1\na = 2\n").is_err());
        assert!(ConfigFile::parse("no equals sign\n").is_err());
    }

    #[test]
    fn lists_and_ranges() {
        let c = ConfigFile::parse("n_list = 8..20:4, 30\nempty = \n").unwrap();
        assert_eq!(c.usize_list_or("n_list", &[]).unwrap(), vec![8, 12, 16, 20, 30]);
        assert!(c.usize_list_or("empty", &[1]).is_err());
        assert_eq!(c.usize_list_or("missing", &[4]).unwrap(), vec![4]);
    }

    #[test]
    fn frequencies_respect_angular_flag() {
        let c = ConfigFile::parse("omega_x_mhz = 2\n").unwrap();
        assert!((c.frequency_opt("omega_x_mhz").unwrap().unwrap() - 4e6 * PI).abs() < 1e-6);
        let c = ConfigFile::parse("omega_x_mhz = 2\nangular = true\n").unwrap();
        assert_eq!(c.frequency_opt("omega_x_mhz").unwrap(), Some(2e6));
    }

    #[test]
    fn hash_is_order_independent() {
        let a = ConfigFile::parse("n_ions = 4\nmass_amu = 171\n").unwrap();
        let b = ConfigFile::parse("mass_amu = 171\nn_ions = 4\n").unwrap();
        assert_eq!(a.hash("chain"), b.hash("chain"));
        assert_ne!(a.hash("chain"), a.hash("couplings"));
    }
}
