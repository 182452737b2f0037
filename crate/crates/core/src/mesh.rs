//! Deterministic simulator of a scratchpad-mesh coprocessor.
//!
//! The model has a grid of cores, each with a small banked local memory.
//! Cores can store into any other core's memory, synchronize on a barrier
//! and move data to and from a shared external RAM that the host also sees.
//! Everything that costs time is recorded in a [`CycleLedger`].
//!
//! Execution is lockstep. A device program is a sequence of phases. In each
//! phase every core runs to its next synchronization point (round-robin, in
//! core order) and returns [`Step::Barrier`] or [`Step::Halt`]. Every store a
//! core issues during a phase, local or remote, becomes visible at the end of
//! the phase. A store is therefore never observable before the barrier that
//! follows it and always observable after.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::CostParams;
use crate::error::{Error, Result};

const WORD: usize = 4;

/// Name of the region that covers the first bank (kernel code).
pub const CODE_REGION: &str = "CODE";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("core {core}: region {name} needs {requested} bytes, only {available} free")]
    CapacityExceeded { core: usize, name: String, requested: usize, available: usize },

    #[error("core {core}: region {name} already allocated")]
    NameCollision { core: usize, name: String },

    #[error("core {core}: no CODE region installed")]
    MissingCode { core: usize },

    #[error("core {core}: region {name} has invalid length {length} (must be a positive multiple of 4)")]
    BadLength { core: usize, name: String, length: usize },

    #[error("core {core}: access to {region}[{offset}..{end}] out of bounds (region holds {len} words)")]
    OutOfBounds { core: usize, region: String, offset: usize, end: usize, len: usize },

    #[error("core {core}: unknown region #{region}")]
    UnknownRegion { core: usize, region: usize },

    #[error("no such core {core} (mesh has {cores})")]
    NoSuchCore { core: usize, cores: usize },

    #[error("deadlock in phase {phase}: core {core} halted while others wait at the barrier")]
    Deadlock { core: usize, phase: u64 },

    #[error("shared RAM: {0}")]
    SharedRam(String),
}

/// Geometry of the simulated chip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshConfig {
    pub cores: usize,
    pub local_mem_bytes: usize,
    pub bank_bytes: usize,
    pub clock_hz: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { cores: 16, local_mem_bytes: 32768, bank_bytes: 8192, clock_hz: 600e6 }
    }
}

impl MeshConfig {
    pub fn banks(&self) -> usize {
        self.local_mem_bytes / self.bank_bytes
    }

    /// Rows and columns of the core grid; square when the count allows.
    pub fn grid(&self) -> (usize, usize) {
        let mut r = (self.cores as f64).sqrt() as usize;
        while r > 1 && !self.cores.is_multiple_of(r) {
            r -= 1;
        }
        let r = r.max(1);
        (r, self.cores / r)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.cores == 0 {
            return bad("mesh needs at least one core".into());
        }
        if self.bank_bytes == 0 || !self.local_mem_bytes.is_multiple_of(self.bank_bytes) {
            return bad(format!(
                "local memory {} is not a whole number of {}-byte banks",
                self.local_mem_bytes, self.bank_bytes
            ));
        }
        if !self.bank_bytes.is_multiple_of(WORD) {
            return bad(format!("bank size {} is not word aligned", self.bank_bytes));
        }
        if !self.clock_hz.is_finite() || self.clock_hz <= 0.0 {
            return bad(format!("clock {} Hz", self.clock_hz));
        }
        Ok(())
    }
}

/// Index of a region in a core's region table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegionId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub name: String,
    /// Byte offset in local memory.
    pub offset: usize,
    /// Length in bytes.
    pub length: usize,
}

impl Region {
    fn words(&self) -> (usize, usize) {
        (self.offset / WORD, self.length / WORD)
    }
}

/// One core's local memory and its region map.
#[derive(Clone)]
pub struct CoreLocalMemory {
    core: usize,
    capacity: usize,
    words: Vec<f32>,
    regions: Vec<Region>,
}

impl fmt::Debug for CoreLocalMemory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoreLocalMemory")
            .field("core", &self.core)
            .field("capacity", &self.capacity)
            .field("regions", &self.regions)
            .finish()
    }
}

impl CoreLocalMemory {
    /// Empty memory with no regions; [`install_code`](Self::install_code)
    /// must run before anything else can be allocated.
    pub fn new(core: usize, capacity: usize) -> Self {
        Self { core, capacity, words: vec![0.0; capacity / WORD], regions: Vec::new() }
    }

    /// Reserve the first bank for code.
    pub fn install_code(&mut self, bank_bytes: usize) -> Result<RegionId, SimError> {
        if self.find(CODE_REGION).is_some() {
            return Err(SimError::NameCollision { core: self.core, name: CODE_REGION.into() });
        }
        if !self.regions.is_empty() {
            return Err(SimError::NameCollision { core: self.core, name: self.regions[0].name.clone() });
        }
        if bank_bytes > self.capacity {
            return Err(SimError::CapacityExceeded {
                core: self.core,
                name: CODE_REGION.into(),
                requested: bank_bytes,
                available: self.capacity,
            });
        }
        self.regions.push(Region { name: CODE_REGION.into(), offset: 0, length: bank_bytes });
        Ok(RegionId(0))
    }

    /// Place a region at the lowest free offset past everything allocated so far.
    pub fn allocate(&mut self, name: &str, length: usize) -> Result<RegionId, SimError> {
        if self.find(CODE_REGION).is_none() {
            return Err(SimError::MissingCode { core: self.core });
        }
        if length == 0 || !length.is_multiple_of(WORD) {
            return Err(SimError::BadLength { core: self.core, name: name.into(), length });
        }
        if self.find(name).is_some() {
            return Err(SimError::NameCollision { core: self.core, name: name.into() });
        }
        let offset = self.used_bytes();
        let available = self.capacity - offset;
        if length > available {
            return Err(SimError::CapacityExceeded {
                core: self.core,
                name: name.into(),
                requested: length,
                available,
            });
        }
        self.regions.push(Region { name: name.into(), offset, length });
        Ok(RegionId(self.regions.len() - 1))
    }

    pub fn used_bytes(&self) -> usize {
        self.regions.iter().map(|r| r.offset + r.length).max().unwrap_or(0)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn find(&self, name: &str) -> Option<RegionId> {
        self.regions.iter().position(|r| r.name == name).map(RegionId)
    }

    pub fn region(&self, id: RegionId) -> Result<&Region, SimError> {
        self.regions.get(id.0).ok_or(SimError::UnknownRegion { core: self.core, region: id.0 })
    }

    fn span(&self, id: RegionId, offset: usize, len: usize) -> Result<(usize, usize), SimError> {
        let region = self.region(id)?;
        let (base, words) = region.words();
        if offset + len > words {
            return Err(SimError::OutOfBounds {
                core: self.core,
                region: region.name.clone(),
                offset,
                end: offset + len,
                len: words,
            });
        }
        Ok((base + offset, base + offset + len))
    }

    /// Committed contents of `len` words of a region, starting at word `offset`.
    pub fn read(&self, id: RegionId, offset: usize, len: usize) -> Result<&[f32], SimError> {
        let (s, e) = self.span(id, offset, len)?;
        Ok(&self.words[s..e])
    }

    fn write(&mut self, id: RegionId, offset: usize, values: &[f32]) -> Result<(), SimError> {
        let (s, e) = self.span(id, offset, values.len())?;
        self.words[s..e].copy_from_slice(values);
        Ok(())
    }
}

/// Handle to a named buffer in shared external RAM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HcBuffer(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HcBufferInfo {
    pub name: String,
    pub offset: usize,
    pub length: usize,
}

/// The shared `command` / `selector` / `done_flag` variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlBlock {
    pub command: u32,
    pub selector: u32,
    pub done_flag: bool,
}

impl Default for ControlBlock {
    fn default() -> Self {
        Self { command: 0, selector: 0, done_flag: true }
    }
}

/// Bytes reserved in shared RAM for the control block.
pub const CONTROL_BYTES: usize = 16;

/// Host/coprocessor shared RAM with named, disjoint sub-buffers.
///
/// Backing storage grows as buffers are carved out, up to `capacity` bytes.
#[derive(Debug, Clone)]
pub struct SharedRam {
    capacity: usize,
    words: Vec<f32>,
    buffers: Vec<HcBufferInfo>,
    control: Option<ControlBlock>,
}

/// Default size of the shared window.
pub const SHARED_RAM_BYTES: usize = 32 << 20;

impl SharedRam {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, words: Vec::new(), buffers: Vec::new(), control: None }
    }

    fn used(&self) -> usize {
        self.buffers.iter().map(|b| b.offset + b.length).max().unwrap_or(0)
    }

    pub fn allocate(&mut self, name: &str, length: usize) -> Result<HcBuffer, SimError> {
        if length == 0 || !length.is_multiple_of(WORD) {
            return Err(SimError::SharedRam(format!("buffer {name}: bad length {length}")));
        }
        if self.buffers.iter().any(|b| b.name == name) {
            return Err(SimError::SharedRam(format!("buffer {name} already allocated")));
        }
        let offset = self.used();
        if offset + length > self.capacity {
            return Err(SimError::SharedRam(format!(
                "buffer {name} ({length} bytes) does not fit: {} of {} used",
                offset, self.capacity
            )));
        }
        self.buffers.push(HcBufferInfo { name: name.into(), offset, length });
        self.words.resize((offset + length) / WORD, 0.0);
        Ok(HcBuffer(self.buffers.len() - 1))
    }

    /// Carve out the control block.
    pub fn allocate_control(&mut self) -> Result<(), SimError> {
        self.allocate("control", CONTROL_BYTES)?;
        self.control = Some(ControlBlock::default());
        Ok(())
    }

    pub fn buffers(&self) -> &[HcBufferInfo] {
        &self.buffers
    }

    pub fn find(&self, name: &str) -> Option<HcBuffer> {
        self.buffers.iter().position(|b| b.name == name).map(HcBuffer)
    }

    fn span(&self, buf: HcBuffer, offset: usize, len: usize) -> Result<(usize, usize), SimError> {
        let info = self
            .buffers
            .get(buf.0)
            .ok_or_else(|| SimError::SharedRam(format!("unknown buffer #{}", buf.0)))?;
        let words = info.length / WORD;
        if offset + len > words {
            return Err(SimError::SharedRam(format!(
                "access {}[{}..{}] past end ({} words)",
                info.name,
                offset,
                offset + len,
                words
            )));
        }
        let base = info.offset / WORD;
        Ok((base + offset, base + offset + len))
    }

    pub fn read(&self, buf: HcBuffer, offset: usize, len: usize) -> Result<&[f32], SimError> {
        let (s, e) = self.span(buf, offset, len)?;
        Ok(&self.words[s..e])
    }

    fn write(&mut self, buf: HcBuffer, offset: usize, values: &[f32]) -> Result<(), SimError> {
        let (s, e) = self.span(buf, offset, values.len())?;
        self.words[s..e].copy_from_slice(values);
        Ok(())
    }
}

/// Everything the cost model needs, counted as the simulation runs.
///
/// Counters only ever grow; take a [`snapshot`](Mesh::ledger) before and
/// after an operation and use [`CycleLedger::since`] for the delta.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CycleLedger {
    compute_cycles: Vec<u64>,
    remote_store_bytes: Vec<u64>,
    host_to_hc_bytes: u64,
    hc_to_host_bytes: u64,
    hc_to_core_bytes: u64,
    core_to_hc_bytes: u64,
    barrier_count: u64,
    flop_count: u64,
}

impl CycleLedger {
    fn new(cores: usize) -> Self {
        Self { compute_cycles: vec![0; cores], remote_store_bytes: vec![0; cores], ..Default::default() }
    }

    /// Busy cycles per core, barrier waits included.
    pub fn compute_cycles(&self) -> &[u64] {
        &self.compute_cycles
    }

    pub fn max_core_cycles(&self) -> u64 {
        self.compute_cycles.iter().copied().max().unwrap_or(0)
    }

    /// Bytes each core stored into other cores' memories.
    pub fn remote_store_bytes(&self) -> &[u64] {
        &self.remote_store_bytes
    }

    pub fn host_to_hc_bytes(&self) -> u64 {
        self.host_to_hc_bytes
    }

    pub fn hc_to_host_bytes(&self) -> u64 {
        self.hc_to_host_bytes
    }

    pub fn hc_to_core_bytes(&self) -> u64 {
        self.hc_to_core_bytes
    }

    pub fn core_to_hc_bytes(&self) -> u64 {
        self.core_to_hc_bytes
    }

    pub fn barrier_count(&self) -> u64 {
        self.barrier_count
    }

    pub fn flop_count(&self) -> u64 {
        self.flop_count
    }

    /// Counter growth between `earlier` and `self`.
    pub fn since(&self, earlier: &CycleLedger) -> CycleLedger {
        let sub = |a: &[u64], b: &[u64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        CycleLedger {
            compute_cycles: sub(&self.compute_cycles, &earlier.compute_cycles),
            remote_store_bytes: sub(&self.remote_store_bytes, &earlier.remote_store_bytes),
            host_to_hc_bytes: self.host_to_hc_bytes - earlier.host_to_hc_bytes,
            hc_to_host_bytes: self.hc_to_host_bytes - earlier.hc_to_host_bytes,
            hc_to_core_bytes: self.hc_to_core_bytes - earlier.hc_to_core_bytes,
            core_to_hc_bytes: self.core_to_hc_bytes - earlier.core_to_hc_bytes,
            barrier_count: self.barrier_count - earlier.barrier_count,
            flop_count: self.flop_count - earlier.flop_count,
        }
    }
}

/// Direction of a transfer through shared RAM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    HostToHc,
    HcToHost,
    HcToCore,
    CoreToHc,
}

/// What a core does at the end of a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Barrier,
    Halt,
}

#[derive(Debug)]
struct PendingWrite {
    core: usize,
    region: RegionId,
    offset: usize,
    values: Vec<f32>,
}

#[derive(Debug)]
struct PendingHcWrite {
    buf: HcBuffer,
    offset: usize,
    values: Vec<f32>,
}

/// A core's view of the machine during one phase.
pub struct CoreCtx<'m> {
    id: usize,
    cores: &'m [CoreLocalMemory],
    hc: &'m SharedRam,
    params: &'m CostParams,
    ledger: &'m mut CycleLedger,
    pending: &'m mut Vec<PendingWrite>,
    pending_hc: &'m mut Vec<PendingHcWrite>,
}

impl<'m> CoreCtx<'m> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn num_cores(&self) -> usize {
        self.cores.len()
    }

    /// Committed contents of this core's own memory.
    pub fn read(&self, region: RegionId, offset: usize, len: usize) -> Result<&'m [f32], SimError> {
        self.cores[self.id].read(region, offset, len)
    }

    pub fn control(&self) -> ControlBlock {
        self.hc.control.unwrap_or_default()
    }

    /// Charge `fmas` fused multiply-adds of compute.
    pub fn compute(&mut self, fmas: u64) {
        let per = u64::from(self.params.fma_per_cycle_per_core.max(1));
        self.ledger.compute_cycles[self.id] += fmas.div_ceil(per);
        self.ledger.flop_count += 2 * fmas;
    }

    /// Store `values` into `region` of core `dst` (possibly this core).
    ///
    /// With `overlapped` set and the cost model allowing it, the store rides
    /// along with the compute that produced it and costs no cycles;
    /// otherwise each word costs one store cycle.
    pub fn remote_write(
        &mut self,
        dst: usize,
        region: RegionId,
        offset: usize,
        values: Vec<f32>,
        overlapped: bool,
    ) -> Result<(), SimError> {
        let target =
            self.cores.get(dst).ok_or(SimError::NoSuchCore { core: dst, cores: self.cores.len() })?;
        target.span(region, offset, values.len())?;
        if !(overlapped && self.params.remote_store_overlapped) {
            self.ledger.compute_cycles[self.id] += values.len() as u64;
        }
        if dst != self.id {
            self.ledger.remote_store_bytes[self.id] += (values.len() * WORD) as u64;
        }
        self.pending.push(PendingWrite { core: dst, region, offset, values });
        Ok(())
    }

    /// Local store; visible after the phase like every other store.
    pub fn write_local(&mut self, region: RegionId, offset: usize, values: Vec<f32>) -> Result<(), SimError> {
        self.remote_write(self.id, region, offset, values, false)
    }

    /// Bring `len` words from shared RAM into local memory.
    pub fn load_from_hc(
        &mut self,
        buf: HcBuffer,
        hc_offset: usize,
        region: RegionId,
        offset: usize,
        len: usize,
    ) -> Result<(), SimError> {
        let values = self.hc.read(buf, hc_offset, len)?.to_vec();
        self.cores[self.id].span(region, offset, len)?;
        self.ledger.hc_to_core_bytes += (len * WORD) as u64;
        self.pending.push(PendingWrite { core: self.id, region, offset, values });
        Ok(())
    }

    /// Send `len` words of local memory out to shared RAM.
    pub fn store_to_hc(
        &mut self,
        region: RegionId,
        offset: usize,
        len: usize,
        buf: HcBuffer,
        hc_offset: usize,
    ) -> Result<(), SimError> {
        let values = self.read(region, offset, len)?.to_vec();
        self.hc.span(buf, hc_offset, len)?;
        self.ledger.core_to_hc_bytes += (len * WORD) as u64;
        self.pending_hc.push(PendingHcWrite { buf, offset: hc_offset, values });
        Ok(())
    }
}

/// The simulated coprocessor plus its shared RAM and ledger.
#[derive(Debug, Clone)]
pub struct Mesh {
    config: MeshConfig,
    params: CostParams,
    cores: Vec<CoreLocalMemory>,
    hc: SharedRam,
    ledger: CycleLedger,
    phase: u64,
}

impl Mesh {
    /// Fresh mesh with the CODE region installed on every core and the
    /// control block carved out of shared RAM.
    pub fn new(config: MeshConfig, params: CostParams) -> Result<Self> {
        Self::with_shared_ram(config, params, SHARED_RAM_BYTES)
    }

    pub fn with_shared_ram(config: MeshConfig, params: CostParams, hc_bytes: usize) -> Result<Self> {
        config.validate()?;
        params.validate()?;
        let mut cores = Vec::with_capacity(config.cores);
        for id in 0..config.cores {
            let mut mem = CoreLocalMemory::new(id, config.local_mem_bytes);
            mem.install_code(config.bank_bytes)?;
            cores.push(mem);
        }
        let mut hc = SharedRam::new(hc_bytes);
        hc.allocate_control()?;
        Ok(Self { config, params, cores, hc, ledger: CycleLedger::new(config.cores), phase: 0 })
    }

    pub fn config(&self) -> &MeshConfig {
        &self.config
    }

    pub fn params(&self) -> &CostParams {
        &self.params
    }

    pub fn set_params(&mut self, params: CostParams) -> Result<()> {
        params.validate()?;
        self.params = params;
        Ok(())
    }

    pub fn num_cores(&self) -> usize {
        self.cores.len()
    }

    pub fn core(&self, id: usize) -> Result<&CoreLocalMemory, SimError> {
        self.cores.get(id).ok_or(SimError::NoSuchCore { core: id, cores: self.cores.len() })
    }

    pub fn ledger(&self) -> &CycleLedger {
        &self.ledger
    }

    /// Number of barriers completed so far.
    pub fn phase(&self) -> u64 {
        self.phase
    }

    pub fn allocate_region(&mut self, core: usize, name: &str, length: usize) -> Result<RegionId, SimError> {
        let n = self.cores.len();
        self.cores.get_mut(core).ok_or(SimError::NoSuchCore { core, cores: n })?.allocate(name, length)
    }

    pub fn shared_ram(&self) -> &SharedRam {
        &self.hc
    }

    pub fn allocate_hc(&mut self, name: &str, length: usize) -> Result<HcBuffer, SimError> {
        self.hc.allocate(name, length)
    }

    pub fn control(&self) -> ControlBlock {
        self.hc.control.unwrap_or_default()
    }

    /// Host or device update of the control variables. Flag traffic is not
    /// charged to the transfer counters; per-task signaling is a separate
    /// term of the cost model.
    pub fn set_control(&mut self, control: ControlBlock) {
        self.hc.control = Some(control);
    }

    /// Account for a transfer through shared RAM and return its modeled time.
    pub fn hc_transfer(&mut self, direction: Direction, bytes: u64) -> Result<f64> {
        if bytes == 0 {
            return Err(Error::InvalidArgument("transfer of zero bytes".into()));
        }
        let bw = match direction {
            Direction::HostToHc => {
                self.ledger.host_to_hc_bytes += bytes;
                self.params.bw_host_write_hc
            }
            Direction::HcToHost => {
                self.ledger.hc_to_host_bytes += bytes;
                self.params.bw_host_read_hc
            }
            Direction::HcToCore => {
                self.ledger.hc_to_core_bytes += bytes;
                self.params.bw_core_hc
            }
            Direction::CoreToHc => {
                self.ledger.core_to_hc_bytes += bytes;
                self.params.bw_core_hc
            }
        };
        Ok(bytes as f64 / bw)
    }

    /// Host write into shared RAM; returns the modeled time.
    pub fn host_write_hc(&mut self, buf: HcBuffer, offset: usize, values: &[f32]) -> Result<f64> {
        self.hc.write(buf, offset, values)?;
        if values.is_empty() {
            return Ok(0.0);
        }
        self.hc_transfer(Direction::HostToHc, (values.len() * WORD) as u64)
    }

    /// Host read from shared RAM; returns the data and the modeled time.
    pub fn host_read_hc(&mut self, buf: HcBuffer, offset: usize, len: usize) -> Result<(Vec<f32>, f64)> {
        let data = self.hc.read(buf, offset, len)?.to_vec();
        if len == 0 {
            return Ok((data, 0.0));
        }
        let t = self.hc_transfer(Direction::HcToHost, (len * WORD) as u64)?;
        Ok((data, t))
    }

    /// Direct host access to a core's local memory (debug port, uncharged).
    pub fn host_write_local(
        &mut self,
        core: usize,
        region: RegionId,
        offset: usize,
        values: &[f32],
    ) -> Result<(), SimError> {
        let n = self.cores.len();
        self.cores.get_mut(core).ok_or(SimError::NoSuchCore { core, cores: n })?.write(region, offset, values)
    }

    pub fn host_read_local(
        &self,
        core: usize,
        region: RegionId,
        offset: usize,
        len: usize,
    ) -> Result<&[f32], SimError> {
        self.core(core)?.read(region, offset, len)
    }

    /// Run one phase: every core executes `program` in core order, then the
    /// phase ends on a barrier (all cores returned [`Step::Barrier`]) or on
    /// completion (all returned [`Step::Halt`]). Stores issued during the
    /// phase land at its end. A mix of the two is a deadlock.
    pub fn step<F>(&mut self, mut program: F) -> Result<Step>
    where
        F: FnMut(&mut CoreCtx<'_>) -> Result<Step>,
    {
        let mut pending = Vec::new();
        let mut pending_hc = Vec::new();
        let mut outcomes = Vec::with_capacity(self.cores.len());
        for id in 0..self.cores.len() {
            let mut ctx = CoreCtx {
                id,
                cores: &self.cores,
                hc: &self.hc,
                params: &self.params,
                ledger: &mut self.ledger,
                pending: &mut pending,
                pending_hc: &mut pending_hc,
            };
            outcomes.push(program(&mut ctx)?);
        }
        let halted = outcomes.iter().position(|s| *s == Step::Halt);
        let waiting = outcomes.contains(&Step::Barrier);
        if let (Some(core), true) = (halted, waiting) {
            return Err(SimError::Deadlock { core, phase: self.phase }.into());
        }
        for w in pending {
            self.cores[w.core].write(w.region, w.offset, &w.values)?;
        }
        for w in pending_hc {
            self.hc.write(w.buf, w.offset, &w.values)?;
        }
        if waiting {
            for c in &mut self.ledger.compute_cycles {
                *c += self.params.barrier_cycles;
            }
            self.ledger.barrier_count += 1;
            self.phase += 1;
            Ok(Step::Barrier)
        } else {
            Ok(Step::Halt)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh() -> Mesh {
        Mesh::new(MeshConfig::default(), CostParams::default()).unwrap()
    }

    #[test]
    fn default_geometry() {
        let cfg = MeshConfig::default();
        assert_eq!(cfg.banks(), 4);
        assert_eq!(cfg.banks() * cfg.bank_bytes, cfg.local_mem_bytes);
        assert_eq!(cfg.grid(), (4, 4));
        assert_eq!(MeshConfig { cores: 6, ..cfg }.grid(), (2, 3));
    }

    #[test]
    fn allocation_follows_code_bank() {
        let mut m = mesh();
        let a = m.allocate_region(0, "A", 3072).unwrap();
        let b = m.allocate_region(0, "B", 4096).unwrap();
        let res2 = m.allocate_region(0, "RES2", 12288).unwrap();
        let core = m.core(0).unwrap();
        assert_eq!(core.region(a).unwrap().offset, 8192);
        assert_eq!(core.region(b).unwrap().offset, 8192 + 3072);
        assert_eq!(core.region(res2).unwrap().offset, 8192 + 3072 + 4096);
        assert!(core.used_bytes() <= 32768);
    }

    #[test]
    fn allocation_errors() {
        let mut m = mesh();
        assert!(matches!(m.allocate_region(0, "BIG", 40000), Err(SimError::CapacityExceeded { .. })));
        m.allocate_region(0, "X", 16).unwrap();
        assert!(matches!(m.allocate_region(0, "X", 16), Err(SimError::NameCollision { .. })));
        assert!(matches!(m.allocate_region(0, "Y", 0), Err(SimError::BadLength { .. })));

        let mut bare = CoreLocalMemory::new(0, 32768);
        assert!(matches!(bare.allocate("A", 16), Err(SimError::MissingCode { .. })));
    }

    #[test]
    fn regions_are_disjoint() {
        let mut m = mesh();
        for (i, len) in [3072, 4096, 3072, 12288].into_iter().enumerate() {
            m.allocate_region(3, &format!("R{i}"), len).unwrap();
        }
        let regions = m.core(3).unwrap().regions().to_vec();
        for (i, r) in regions.iter().enumerate() {
            assert!(r.offset + r.length <= 32768);
            for s in &regions[i + 1..] {
                assert!(r.offset + r.length <= s.offset || s.offset + s.length <= r.offset);
            }
        }
    }

    #[test]
    fn remote_write_visible_after_barrier() {
        let mut m = mesh();
        let mut res1 = RegionId(0);
        for c in 0..16 {
            res1 = m.allocate_region(c, "RES1", 3072).unwrap();
        }
        let payload: Vec<f32> = (0..768).map(|i| i as f32).collect();
        let mut before = Vec::new();
        m.step(|ctx| {
            if ctx.id() == 0 {
                ctx.remote_write(1, res1, 0, payload.clone(), true)?;
            }
            if ctx.id() == 1 {
                before = ctx.read(res1, 0, 768)?.to_vec();
            }
            Ok(Step::Barrier)
        })
        .unwrap();
        assert!(before.iter().all(|&v| v == 0.0));
        let mut after = Vec::new();
        m.step(|ctx| {
            if ctx.id() == 1 {
                after = ctx.read(res1, 0, 768)?.to_vec();
            }
            Ok(Step::Halt)
        })
        .unwrap();
        assert_eq!(after, payload);
        assert_eq!(m.ledger().remote_store_bytes()[0], 3072);
    }

    #[test]
    fn overlapped_store_is_free() {
        let mut m = mesh();
        let r = (0..16).map(|c| m.allocate_region(c, "R", 64).unwrap()).last().unwrap();
        m.step(|ctx| {
            if ctx.id() == 0 {
                ctx.compute(100);
                ctx.remote_write(1, r, 0, vec![1.0; 16], true)?;
            }
            Ok(Step::Halt)
        })
        .unwrap();
        assert_eq!(m.ledger().compute_cycles()[0], 100);

        let p = CostParams { remote_store_overlapped: false, ..CostParams::default() };
        m.set_params(p).unwrap();
        m.step(|ctx| {
            if ctx.id() == 0 {
                ctx.remote_write(1, r, 0, vec![1.0; 16], true)?;
            }
            Ok(Step::Halt)
        })
        .unwrap();
        assert_eq!(m.ledger().compute_cycles()[0], 116);
    }

    #[test]
    fn write_past_region_faults() {
        let mut m = mesh();
        let r = (0..16).map(|c| m.allocate_region(c, "RES1", 3072).unwrap()).last().unwrap();
        let err = m
            .step(|ctx| {
                ctx.remote_write(5, r, 700, vec![0.0; 100], true)?;
                Ok(Step::Barrier)
            })
            .unwrap_err();
        match err {
            Error::Sim(SimError::OutOfBounds { core, region, .. }) => {
                assert_eq!(core, 5);
                assert_eq!(region, "RES1");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn barrier_charges_every_core() {
        let p = CostParams { barrier_cycles: 50, ..CostParams::default() };
        let mut m = Mesh::new(MeshConfig::default(), p).unwrap();
        m.step(|_| Ok(Step::Barrier)).unwrap();
        assert!(m.ledger().compute_cycles().iter().all(|&c| c == 50));
        assert_eq!(m.ledger().barrier_count(), 1);
        assert_eq!(m.phase(), 1);
    }

    #[test]
    fn early_exit_is_deadlock() {
        let mut m = mesh();
        let err = m.step(|ctx| Ok(if ctx.id() == 7 { Step::Halt } else { Step::Barrier })).unwrap_err();
        assert!(matches!(err, Error::Sim(SimError::Deadlock { core: 7, .. })));
    }

    #[test]
    fn hc_transfer_times_and_directions() {
        let p = CostParams { bw_host_write_hc: 100e6, bw_host_read_hc: 10e6, ..CostParams::default() };
        let mut m = Mesh::new(MeshConfig::default(), p).unwrap();
        let t = m.hc_transfer(Direction::HostToHc, 1_000_000).unwrap();
        assert!((t - 0.01).abs() < 1e-15);
        let t = m.hc_transfer(Direction::HcToHost, 1_000_000).unwrap();
        assert!((t - 0.1).abs() < 1e-15);
        assert_eq!(m.ledger().host_to_hc_bytes(), 1_000_000);
        assert_eq!(m.ledger().hc_to_host_bytes(), 1_000_000);
        assert!(m.hc_transfer(Direction::HcToCore, 0).is_err());
    }

    #[test]
    fn shared_ram_round_trip() {
        let mut m = mesh();
        let buf = m.allocate_hc("x", 64).unwrap();
        let data: Vec<f32> = (0..16).map(|i| i as f32 * 0.5).collect();
        m.host_write_hc(buf, 0, &data).unwrap();
        let (back, _) = m.host_read_hc(buf, 0, 16).unwrap();
        assert_eq!(back, data);
        assert!(m.host_write_hc(buf, 10, &data).is_err());
    }

    #[test]
    fn shared_ram_capacity() {
        let mut ram = SharedRam::new(1024);
        ram.allocate("a", 1000).unwrap();
        assert!(ram.allocate("b", 100).is_err());
        assert!(ram.allocate("a", 4).is_err());
    }
}
