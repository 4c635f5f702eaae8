//! Flat key=value experiment configuration: one assignment per line, `#`
//! comments, no sections. Unknown keys are hard errors, and every run
//! writes a fully resolved echo (defaults filled in) next to its outputs,
//! so a run can be reproduced from the echo alone.

use std::collections::BTreeMap;
use std::fmt::Write as FmtWrite;
use std::path::Path;

use anyhow::{bail, Context, Result};

#[derive(Debug, Clone, Default)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{}:{}: expected key=value, got {raw:?}", path.display(), lineno + 1);
            };
            let key = k.trim().to_string();
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                bail!("{}:{}: duplicate key {key}", path.display(), lineno + 1);
            }
        }
        Ok(Self { values })
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.values.insert(key.to_string(), value);
    }

    /// Reject keys outside the subcommand's recognized set.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        let unknown: Vec<&String> =
            self.values.keys().filter(|k| !allowed.contains(&k.as_str())).collect();
        if !unknown.is_empty() {
            bail!(
                "unknown config keys: {}; recognized keys: {}",
                unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", "),
                allowed.join(", ")
            );
        }
        Ok(())
    }

    /// Fetch with default; the default is recorded so the echo is resolved.
    pub fn get_or(&mut self, key: &str, default: &str) -> String {
        self.values.entry(key.to_string()).or_insert_with(|| default.to_string()).clone()
    }

    pub fn f64_or(&mut self, key: &str, default: f64) -> Result<f64> {
        let s = self.get_or(key, &format!("{default}"));
        parse_f64(&s).with_context(|| format!("config key {key}"))
    }

    pub fn usize_or(&mut self, key: &str, default: usize) -> Result<usize> {
        let s = self.get_or(key, &format!("{default}"));
        s.parse::<usize>().with_context(|| format!("config key {key}"))
    }

    pub fn u64_or(&mut self, key: &str, default: u64) -> Result<u64> {
        let s = self.get_or(key, &format!("{default}"));
        s.parse::<u64>().with_context(|| format!("config key {key}"))
    }

    pub fn u32_or(&mut self, key: &str, default: u32) -> Result<u32> {
        let s = self.get_or(key, &format!("{default}"));
        s.parse::<u32>().with_context(|| format!("config key {key}"))
    }

    pub fn f64_list_or(&mut self, key: &str, default: &str) -> Result<Vec<f64>> {
        let s = self.get_or(key, default);
        s.split(',')
            .map(|p| parse_f64(p.trim()).with_context(|| format!("config key {key}")))
            .collect()
    }

    pub fn u32_list_or(&mut self, key: &str, default: &str) -> Result<Vec<u32>> {
        let s = self.get_or(key, default);
        s.split(',')
            .map(|p| p.trim().parse::<u32>().with_context(|| format!("config key {key}")))
            .collect()
    }

    /// Resolved echo, reproducible modulo the timestamp line.
    pub fn write_echo(&self, path: &Path) -> Result<()> {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut out = format!("# generated: {now}\n");
        for (k, v) in &self.values {
            writeln!(out, "{k}={v}").unwrap();
        }
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// `inf` is a legal value for Lebesgue exponents.
pub fn parse_f64(s: &str) -> Result<f64> {
    match s {
        "inf" | "Inf" | "INF" => Ok(f64::INFINITY),
        _ => {
            // fraction shorthand "a/b" for window grids
            if let Some((a, b)) = s.split_once('/') {
                let a: f64 = a.trim().parse()?;
                let b: f64 = b.trim().parse()?;
                return Ok(a / b);
            }
            Ok(s.parse::<f64>()?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.cfg");
        std::fs::write(&p, "a.x = 3 # comment\n# full comment\nb.y=inf\nc.w=1/8\n").unwrap();
        let mut cfg = ExperimentConfig::load(&p).unwrap();
        assert!(cfg.check_keys(&["a.x", "b.y", "c.w"]).is_ok());
        assert!(cfg.check_keys(&["a.x"]).is_err());
        assert_eq!(cfg.f64_or("a.x", 0.0).unwrap(), 3.0);
        assert!(cfg.f64_or("b.y", 0.0).unwrap().is_infinite());
        assert_eq!(cfg.f64_or("c.w", 0.0).unwrap(), 0.125);
        // defaults recorded for echo
        assert_eq!(cfg.f64_or("d.z", 7.5).unwrap(), 7.5);
        let echo = dir.path().join("echo.cfg");
        cfg.write_echo(&echo).unwrap();
        let text = std::fs::read_to_string(&echo).unwrap();
        assert!(text.contains("d.z=7.5"));
        // a rerun from the echo resolves identically
        let cfg2 = ExperimentConfig::load(&echo).unwrap();
        assert_eq!(cfg2.values, cfg.values);
    }
}
