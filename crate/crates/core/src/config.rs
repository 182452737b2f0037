//! Line-based `key = value` configuration for the mesh and the cost model.
//!
//! ```text
//! # comments and blank lines are ignored
//! cores = 16
//! clock_hz = 600000000
//! bw_host_write_hc = 77549107.5
//! remote_store_overlapped = true
//! ```
//!
//! Keys that are absent keep their value from the base setup.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::cost::CostParams;
use crate::error::{Error, Result};
use crate::mesh::MeshConfig;

/// Calibrated setup shipped with the crate.
pub const PARALLELLA_CONF: &str = include_str!("../configs/parallella.conf");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSetup {
    pub mesh: MeshConfig,
    pub cost: CostParams,
}

impl MeshSetup {
    /// 16-core, 32 KB/core mesh at 600 MHz with the calibrated cost model.
    pub fn parallella() -> Self {
        let base = MeshSetup { mesh: MeshConfig::default(), cost: CostParams::uncalibrated() };
        Self::parse_with_base(PARALLELLA_CONF, base).expect("shipped config parses")
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_base(text, Self::parallella())
    }

    pub fn parse_with_base(text: &str, base: MeshSetup) -> Result<Self> {
        let mut s = base;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected key = value, got {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "cores" => s.mesh.cores = num(line, key, value)?,
                "local_mem_bytes" => s.mesh.local_mem_bytes = num(line, key, value)?,
                "bank_bytes" => s.mesh.bank_bytes = num(line, key, value)?,
                "clock_hz" => s.mesh.clock_hz = num(line, key, value)?,
                "fma_per_cycle_per_core" => s.cost.fma_per_cycle_per_core = num(line, key, value)?,
                "barrier_cycles" => s.cost.barrier_cycles = num(line, key, value)?,
                "remote_store_overlapped" => s.cost.remote_store_overlapped = num(line, key, value)?,
                "bw_host_write_hc" => s.cost.bw_host_write_hc = num(line, key, value)?,
                "bw_host_read_hc" => s.cost.bw_host_read_hc = num(line, key, value)?,
                "bw_core_hc" => s.cost.bw_core_hc = num(line, key, value)?,
                "bw_hh" => s.cost.bw_hh = num(line, key, value)?,
                "task_handoff_s" => s.cost.task_handoff_s = num(line, key, value)?,
                _ => return Err(Error::Config { line, msg: format!("unknown key {key:?}") }),
            }
        }
        s.mesh.validate()?;
        s.cost.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_config_string())?;
        Ok(())
    }

    pub fn to_config_string(&self) -> String {
        let m = &self.mesh;
        let c = &self.cost;
        let mut out = String::new();
        let _ = writeln!(out, "# mesh geometry");
        let _ = writeln!(out, "cores = {}", m.cores);
        let _ = writeln!(out, "local_mem_bytes = {}", m.local_mem_bytes);
        let _ = writeln!(out, "bank_bytes = {}", m.bank_bytes);
        let _ = writeln!(out, "clock_hz = {}", m.clock_hz);
        let _ = writeln!(out, "# cost model");
        let _ = writeln!(out, "fma_per_cycle_per_core = {}", c.fma_per_cycle_per_core);
        let _ = writeln!(out, "barrier_cycles = {}", c.barrier_cycles);
        let _ = writeln!(out, "remote_store_overlapped = {}", c.remote_store_overlapped);
        let _ = writeln!(out, "bw_host_write_hc = {}", c.bw_host_write_hc);
        let _ = writeln!(out, "bw_host_read_hc = {}", c.bw_host_read_hc);
        let _ = writeln!(out, "bw_core_hc = {}", c.bw_core_hc);
        let _ = writeln!(out, "bw_hh = {}", c.bw_hh);
        let _ = writeln!(out, "task_handoff_s = {}", c.task_handoff_s);
        out
    }
}

fn num<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config { line, msg: format!("bad value {value:?} for {key}") })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let s = MeshSetup::parallella();
        let again = MeshSetup::parse(&s.to_config_string()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn partial_override() {
        let s = MeshSetup::parse("# tweak\n barrier_cycles = 7 \n\nclock_hz=1e9\n").unwrap();
        assert_eq!(s.cost.barrier_cycles, 7);
        assert_eq!(s.mesh.clock_hz, 1e9);
        assert_eq!(s.mesh.cores, 16);
    }

    #[test]
    fn errors_name_the_line() {
        match MeshSetup::parse("cores = 4\nwarp = 9\n") {
            Err(Error::Config { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(MeshSetup::parse("cores = four").is_err());
        assert!(MeshSetup::parse("bw_core_hc = -5").is_err());
        assert!(MeshSetup::parse("just words").is_err());
    }
}
