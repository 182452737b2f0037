//! Analytic time model over the simulator's ledger.
//!
//! The simulator counts bytes and cycles; this module turns them into model
//! seconds. Host staging of the next task overlaps the coprocessor's work on
//! the current one, so in steady state a task costs
//! `max(staging, device) + signaling`, and a whole inner-kernel call costs
//! the first staging, every task, then retrieval and postprocessing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Free parameters of the time model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Multiply-adds each core retires per cycle.
    pub fma_per_cycle_per_core: u32,
    /// A store into another core issued alongside a multiply-add is free.
    pub remote_store_overlapped: bool,
    pub barrier_cycles: u64,
    /// Host writes into shared RAM, bytes/s.
    pub bw_host_write_hc: f64,
    /// Host reads from shared RAM (retrieval plus postprocessing), bytes/s.
    pub bw_host_read_hc: f64,
    /// Coprocessor cores to/from shared RAM, bytes/s.
    pub bw_core_hc: f64,
    /// Host-to-host shared memory copies (offload service payloads), bytes/s.
    pub bw_hh: f64,
    /// Per-task command/selector handoff between host and coprocessor, s.
    pub task_handoff_s: f64,
}

impl CostParams {
    /// Placeholder bandwidths, useful only as a calibration starting point.
    pub fn uncalibrated() -> Self {
        Self {
            fma_per_cycle_per_core: 1,
            remote_store_overlapped: true,
            barrier_cycles: 100,
            bw_host_write_hc: 100e6,
            bw_host_read_hc: 100e6,
            bw_core_hc: 100e6,
            bw_hh: 100e6,
            task_handoff_s: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bw_host_write_hc", self.bw_host_write_hc),
            ("bw_host_read_hc", self.bw_host_read_hc),
            ("bw_core_hc", self.bw_core_hc),
            ("bw_hh", self.bw_hh),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.fma_per_cycle_per_core == 0 {
            return Err(Error::InvalidArgument("fma_per_cycle_per_core must be positive".into()));
        }
        if !(self.task_handoff_s >= 0.0 && self.task_handoff_s.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "task_handoff_s must be non-negative, got {}",
                self.task_handoff_s
            )));
        }
        Ok(())
    }
}

impl Default for CostParams {
    /// The calibrated parameters shipped in `configs/parallella.conf`.
    fn default() -> Self {
        crate::config::MeshSetup::parallella().cost
    }
}

/// Ledger-derived cost of one coprocessor task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaskCost {
    /// Bytes the host wrote into shared RAM to stage this task's inputs.
    pub staged_bytes: u64,
    /// Busiest core's cycles, barrier waits included.
    pub device_cycles: u64,
    /// Bytes between cores and shared RAM (input loads and writeback).
    pub core_bytes: u64,
}

/// Everything one inner-kernel call charged, independent of bandwidths.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KernelProfile {
    pub tasks: Vec<TaskCost>,
    /// Bytes the host read back from shared RAM.
    pub retrieved_bytes: u64,
    /// Host-to-host payload bytes (both directions); zero in-process.
    pub hh_bytes: u64,
    /// Whether staging of task `t + 1` overlaps device task `t`.
    pub overlap: bool,
}

/// Model-time decomposition of one inner-kernel call.
///
/// Input staging and device work overlap, so their shares can add up to
/// more than 100%.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingBreakdown {
    pub input_stage_time: f64,
    pub device_time: f64,
    pub post_time: f64,
    /// Host-to-host payload copies (offload service only).
    pub hh_copy_time: f64,
    /// Sum of per-task handoff latencies.
    pub signal_time: f64,
    pub total_time: f64,
    pub ir: f64,
    pub or: f64,
}

impl TimingBreakdown {
    /// Combine consecutive calls (e.g. the tiles of one gemm).
    pub fn accumulate(&mut self, other: &TimingBreakdown) {
        self.input_stage_time += other.input_stage_time;
        self.device_time += other.device_time;
        self.post_time += other.post_time;
        self.hh_copy_time += other.hh_copy_time;
        self.signal_time += other.signal_time;
        self.total_time += other.total_time;
        self.refresh_ratios();
    }

    fn refresh_ratios(&mut self) {
        if self.total_time > 0.0 {
            self.ir = self.input_stage_time / self.total_time;
            self.or = self.post_time / self.total_time;
        } else {
            self.ir = 0.0;
            self.or = 0.0;
        }
    }
}

pub fn staging_time(p: &CostParams, task: &TaskCost) -> f64 {
    task.staged_bytes as f64 / p.bw_host_write_hc
}

pub fn device_task_time(p: &CostParams, clock_hz: f64, task: &TaskCost) -> f64 {
    task.device_cycles as f64 / clock_hz + task.core_bytes as f64 / p.bw_core_hc
}

/// Evaluate the time model for one inner-kernel call.
pub fn evaluate(profile: &KernelProfile, p: &CostParams, clock_hz: f64) -> TimingBreakdown {
    let stage: Vec<f64> = profile.tasks.iter().map(|t| staging_time(p, t)).collect();
    let device: Vec<f64> = profile.tasks.iter().map(|t| device_task_time(p, clock_hz, t)).collect();
    let post_time = profile.retrieved_bytes as f64 / p.bw_host_read_hc;
    let hh_copy_time = profile.hh_bytes as f64 / p.bw_hh;
    let signal_time = p.task_handoff_s * profile.tasks.len() as f64;

    let mut kernel = 0.0;
    if profile.overlap {
        if let Some(first) = stage.first() {
            kernel += first;
        }
        for (t, &dev) in device.iter().enumerate() {
            let next = stage.get(t + 1).copied().unwrap_or(0.0);
            kernel += next.max(dev) + p.task_handoff_s;
        }
    } else {
        for (s, d) in stage.iter().zip(&device) {
            kernel += s + d + p.task_handoff_s;
        }
    }
    let mut out = TimingBreakdown {
        input_stage_time: stage.iter().sum(),
        device_time: device.iter().sum(),
        post_time,
        hh_copy_time,
        signal_time,
        total_time: kernel + post_time + hh_copy_time,
        ir: 0.0,
        or: 0.0,
    };
    out.refresh_ratios();
    out
}

/// Model throughput for `flops` floating point operations.
pub fn gflops(flops: f64, seconds: f64) -> f64 {
    if seconds > 0.0 {
        flops / seconds / 1e9
    } else {
        0.0
    }
}
