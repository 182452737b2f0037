//! The coprocessor program.
//!
//! One task multiplies an `m x KSUB` block of A by a `KSUB x n` block of B
//! and adds the product into the result the cores hold in local memory.
//! Core `j` owns output columns `j * n/CORES ..` and holds the matching
//! `KSUB/CORES` columns of A and rows of B. Inputs stay put. Partial results
//! travel instead: in K iteration `k`, core `j` multiplies its A slice by the
//! 4x4 piece of its B slice that belongs to core `(j - k - 1) mod CORES`,
//! adds the partial block it received in the previous iteration and stores
//! the sum into core `j + 1`. After `CORES` iterations each block has picked
//! up every core's contribution and arrives at its owner.
//!
//! Two buffers carry the traveling blocks: RES1 (one `m x NSUB` block) and
//! the current column window of RES2. They swap roles every iteration, with
//! parity fixed so that the last iteration stores into RES2.
//!
//! Under an accumulate-only command the last iteration forwards to `j + 1`
//! like every other iteration. The finished block for core `j` is then
//! parked in core `j + 1`'s RES2 window. The first iteration of the next
//! task reads that window as its previous result, which carries the running
//! sum into the new task.

use crate::error::{Error, Result};
use crate::mesh::{HcBuffer, Mesh, MeshConfig, RegionId, Step};
use crate::{CORES, KSUB, NSUB, TILE_M, TILE_N};

/// Width of the vector one `doMult` step scales.
pub const STRIP: usize = 32;
/// Depth of one core's A slice and B slice.
pub const K_PER_CORE: usize = 4;
/// Bytes left free for stack and control variables.
pub const STACK_RESERVE: usize = 2048;

/// Geometry of the device program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelConfig {
    pub m: usize,
    pub n: usize,
    pub ksub: usize,
    pub nsub: usize,
    pub cores: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self::PARALLELLA
    }
}

impl KernelConfig {
    pub const PARALLELLA: KernelConfig =
        KernelConfig { m: TILE_M, n: TILE_N, ksub: KSUB, nsub: NSUB, cores: CORES };

    /// Same per-core shapes on a smaller even core count.
    pub fn desk(cores: usize) -> Self {
        Self { m: TILE_M, n: 16 * cores, ksub: K_PER_CORE * cores, nsub: NSUB, cores }
    }

    pub fn k_per_core(&self) -> usize {
        self.ksub / self.cores
    }

    pub fn cols_per_core(&self) -> usize {
        self.n / self.cores
    }

    pub fn column_iterations(&self) -> usize {
        self.n / (self.nsub * self.cores)
    }

    pub fn a_bytes(&self) -> usize {
        4 * self.m * self.k_per_core()
    }

    pub fn b_bytes(&self) -> usize {
        4 * self.k_per_core() * self.n
    }

    pub fn res1_bytes(&self) -> usize {
        4 * self.m * self.nsub
    }

    pub fn res2_bytes(&self) -> usize {
        4 * self.m * self.cols_per_core()
    }

    /// Words in one `m x NSUB` block.
    pub fn block_words(&self) -> usize {
        self.m * self.nsub
    }

    pub fn validate(&self, mesh: &MeshConfig) -> Result<()> {
        let bad = |m: String| Err(Error::KernelConfig(m));
        if self.cores != mesh.cores {
            return bad(format!("kernel for {} cores on a {}-core mesh", self.cores, mesh.cores));
        }
        if self.cores < 2 || !self.cores.is_multiple_of(2) {
            return bad(format!("pipeline parity needs an even core count, got {}", self.cores));
        }
        if self.nsub != NSUB || !self.ksub.is_multiple_of(self.cores) || self.k_per_core() != K_PER_CORE {
            return bad(format!(
                "subMatmul is fixed at {K_PER_CORE}x{NSUB} blocks (ksub {}, nsub {})",
                self.ksub, self.nsub
            ));
        }
        if !self.n.is_multiple_of(self.nsub * self.cores) {
            return bad(format!("n = {} is not a multiple of NSUB*CORES", self.n));
        }
        if self.m == 0 || !self.m.is_multiple_of(STRIP) {
            return bad(format!("m = {} is not a multiple of {STRIP}", self.m));
        }
        let need = mesh.bank_bytes
            + self.a_bytes()
            + self.b_bytes()
            + self.res1_bytes()
            + self.res2_bytes()
            + STACK_RESERVE;
        if need > mesh.local_mem_bytes {
            return bad(format!("needs {need} bytes of local memory, have {}", mesh.local_mem_bytes));
        }
        Ok(())
    }

    /// Core whose output block core `core` works on in iteration `iter_k`.
    pub fn destination(&self, core: usize, iter_k: usize) -> usize {
        (core + 2 * self.cores - iter_k - 1) % self.cores
    }

    /// Whether iteration `iter_k` stores its result into the RES2 window.
    pub fn next_is_res2(&self, iter_k: usize) -> bool {
        (self.cores - 1 - iter_k).is_multiple_of(2)
    }

    /// Whether iteration `iter_k` reads its previous result from RES2.
    pub fn prev_is_res2(&self, iter_k: usize) -> bool {
        if iter_k == 0 {
            self.cores.is_multiple_of(2)
        } else {
            self.next_is_res2(iter_k - 1)
        }
    }
}

/// Value of the shared `command` variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    /// Clear the result buffers, run one task, keep results on chip.
    ClearAccumulate = 0,
    /// Run one task on top of the current results.
    Accumulate = 1,
    /// Run one task, then send the results to shared RAM.
    AccumulateWriteback = 2,
    /// Clear, run one task, send the results back.
    Single = 3,
}

impl Command {
    pub fn from_u32(v: u32) -> Result<Self> {
        match v {
            0 => Ok(Command::ClearAccumulate),
            1 => Ok(Command::Accumulate),
            2 => Ok(Command::AccumulateWriteback),
            3 => Ok(Command::Single),
            other => Err(Error::InvalidCommand(other)),
        }
    }

    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn clears(self) -> bool {
        matches!(self, Command::ClearAccumulate | Command::Single)
    }

    pub fn writes_back(self) -> bool {
        matches!(self, Command::AccumulateWriteback | Command::Single)
    }
}

/// Control values latched at the start of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskContext {
    pub command: Command,
    pub selector: usize,
}

/// Local memory regions, identical on every core.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelRegions {
    pub a: RegionId,
    pub b: RegionId,
    pub res1: RegionId,
    pub res2: RegionId,
    pub stack: RegionId,
}

/// Shared RAM layout: `[a0 | a1 | b0 | b1 | c | control]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HcLayout {
    pub a: [HcBuffer; 2],
    pub b: [HcBuffer; 2],
    pub c: HcBuffer,
}

/// Where a block of words lives in the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLocation {
    pub core: usize,
    pub region: RegionId,
    pub offset: usize,
}

/// `out = prev + a * b4` for a `m x 4` slice of A and a 4x4 block of B.
///
/// `a`, `prev` and `out` are column-major `m x 4`; `b4` is row-major.
/// Each output column is produced in strips of 32 rows: the strip of `prev`
/// is loaded, four scalar-times-vector products are added in k order, and
/// the strip is stored. The summation order is fixed, so the result is
/// bit-reproducible.
pub fn sub_matmul(a: &[f32], b4: &[f32; 16], prev: &[f32], out: &mut [f32]) {
    let m = a.len() / K_PER_CORE;
    debug_assert_eq!(m % STRIP, 0);
    debug_assert_eq!(prev.len(), m * NSUB);
    debug_assert_eq!(out.len(), m * NSUB);
    for col in 0..NSUB {
        for strip in (0..m).step_by(STRIP) {
            let base = col * m + strip;
            let mut acc = [0f32; STRIP];
            acc.copy_from_slice(&prev[base..base + STRIP]);
            for kk in 0..K_PER_CORE {
                let s = b4[kk * NSUB + col];
                let av = &a[kk * m + strip..kk * m + strip + STRIP];
                for (slot, &x) in acc.iter_mut().zip(av) {
                    *slot += s * x;
                }
            }
            out[base..base + STRIP].copy_from_slice(&acc);
        }
    }
}

/// The loaded device program: its geometry plus where its buffers live.
#[derive(Debug, Clone)]
pub struct DeviceKernel {
    cfg: KernelConfig,
    regions: KernelRegions,
    hc: HcLayout,
}

impl DeviceKernel {
    /// Allocate local regions on every core and the input/output buffers in
    /// shared RAM.
    pub fn load(mesh: &mut Mesh, cfg: KernelConfig) -> Result<Self> {
        cfg.validate(mesh.config())?;
        let mut regions = None;
        for core in 0..mesh.num_cores() {
            let r = KernelRegions {
                a: mesh.allocate_region(core, "A", cfg.a_bytes())?,
                b: mesh.allocate_region(core, "B", cfg.b_bytes())?,
                res1: mesh.allocate_region(core, "RES1", cfg.res1_bytes())?,
                res2: mesh.allocate_region(core, "RES2", cfg.res2_bytes())?,
                stack: mesh.allocate_region(core, "STACK", STACK_RESERVE)?,
            };
            regions = Some(r);
        }
        let regions = regions.expect("mesh has cores");
        let a_task = 4 * cfg.m * cfg.ksub;
        let b_task = 4 * cfg.ksub * cfg.n;
        let hc = HcLayout {
            a: [mesh.allocate_hc("a_buf0", a_task)?, mesh.allocate_hc("a_buf1", a_task)?],
            b: [mesh.allocate_hc("b_buf0", b_task)?, mesh.allocate_hc("b_buf1", b_task)?],
            c: mesh.allocate_hc("c_buf", 4 * cfg.m * cfg.n)?,
        };
        Ok(Self { cfg, regions, hc })
    }

    pub fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    pub fn regions(&self) -> &KernelRegions {
        &self.regions
    }

    pub fn hc_layout(&self) -> &HcLayout {
        &self.hc
    }

    fn window(&self, col_iter: usize) -> usize {
        col_iter * self.cfg.block_words()
    }

    fn buffer(&self, res2: bool, col_iter: usize) -> (RegionId, usize) {
        if res2 {
            (self.regions.res2, self.window(col_iter))
        } else {
            (self.regions.res1, 0)
        }
    }

    /// Where the finished block owned by `owner` for `col_iter` sits after a
    /// task run with `command`.
    pub fn block_location(&self, owner: usize, col_iter: usize, command: Command) -> BlockLocation {
        let core = if command.writes_back() { owner } else { (owner + 1) % self.cfg.cores };
        BlockLocation { core, region: self.regions.res2, offset: self.window(col_iter) }
    }

    /// Where the traveling partial block for `dest` sits after iteration
    /// `iter_k` of `col_iter`.
    pub fn partial_location(
        &self,
        dest: usize,
        col_iter: usize,
        iter_k: usize,
        command: Command,
    ) -> BlockLocation {
        let c = self.cfg.cores;
        let worker = (dest + iter_k + 1) % c;
        let core = if iter_k == c - 1 && command.writes_back() { worker } else { (worker + 1) % c };
        let (region, offset) = self.buffer(self.cfg.next_is_res2(iter_k), col_iter);
        BlockLocation { core, region, offset }
    }

    /// Run one task as directed by the control block in shared RAM.
    pub fn epiphany_task(&self, mesh: &mut Mesh) -> Result<()> {
        let ctl = mesh.control();
        let command = Command::from_u32(ctl.command)?;
        if ctl.selector > 1 {
            return Err(Error::InvalidArgument(format!("selector {} not in {{0, 1}}", ctl.selector)));
        }
        let task = TaskContext { command, selector: ctl.selector as usize };
        self.start_task(mesh, task)?;
        for col_iter in 0..self.cfg.column_iterations() {
            self.column_iteration(mesh, task, col_iter)?;
        }
        if command.writes_back() {
            self.writeback_results(mesh)?;
        } else {
            mesh.step(|_| Ok(Step::Halt))?;
        }
        mesh.set_control(crate::mesh::ControlBlock { done_flag: true, ..mesh.control() });
        Ok(())
    }

    /// Clear results if the command asks for it and load every core's input
    /// slices from the selected shared-RAM buffer pair.
    pub fn start_task(&self, mesh: &mut Mesh, task: TaskContext) -> Result<()> {
        let cfg = self.cfg;
        let r = self.regions;
        let a_words = cfg.m * cfg.k_per_core();
        let b_words = cfg.k_per_core() * cfg.n;
        let res2_words = cfg.m * cfg.cols_per_core();
        let (a_buf, b_buf) = (self.hc.a[task.selector], self.hc.b[task.selector]);
        mesh.step(|ctx| {
            let j = ctx.id();
            if task.command.clears() {
                ctx.write_local(r.res2, 0, vec![0.0; res2_words])?;
            }
            // a_ti is column-major, so core j's columns are contiguous; the
            // same holds for b_ti's rows in row-major order.
            ctx.load_from_hc(a_buf, j * a_words, r.a, 0, a_words)?;
            ctx.load_from_hc(b_buf, j * b_words, r.b, 0, b_words)?;
            Ok(Step::Barrier)
        })?;
        Ok(())
    }

    /// `CORES` K iterations finishing one `m x NSUB` block per core.
    pub fn column_iteration(&self, mesh: &mut Mesh, task: TaskContext, col_iter: usize) -> Result<()> {
        if col_iter >= self.cfg.column_iterations() {
            return Err(Error::InvalidArgument(format!(
                "column iteration {col_iter} of {}",
                self.cfg.column_iterations()
            )));
        }
        for iter_k in 0..self.cfg.cores {
            self.k_iteration(mesh, task, col_iter, iter_k)?;
        }
        Ok(())
    }

    /// One pipeline hop, closed by a barrier.
    pub fn k_iteration(
        &self,
        mesh: &mut Mesh,
        task: TaskContext,
        col_iter: usize,
        iter_k: usize,
    ) -> Result<()> {
        let cfg = self.cfg;
        if iter_k >= cfg.cores || col_iter >= cfg.column_iterations() {
            return Err(Error::InvalidArgument(format!(
                "K iteration {iter_k} / column iteration {col_iter} out of range"
            )));
        }
        let r = self.regions;
        let m = cfg.m;
        let kpc = cfg.k_per_core();
        let block = cfg.block_words();
        let last = iter_k == cfg.cores - 1;
        let (prev_region, prev_off) = self.buffer(cfg.prev_is_res2(iter_k), col_iter);
        let (next_region, next_off) = self.buffer(cfg.next_is_res2(iter_k), col_iter);
        mesh.step(|ctx| {
            let j = ctx.id();
            let dest = cfg.destination(j, iter_k);
            let a = ctx.read(r.a, 0, m * kpc)?;
            let b = ctx.read(r.b, 0, kpc * cfg.n)?;
            let col0 = dest * cfg.cols_per_core() + col_iter * cfg.nsub;
            let mut b4 = [0f32; 16];
            for kk in 0..kpc {
                b4[kk * NSUB..(kk + 1) * NSUB]
                    .copy_from_slice(&b[kk * cfg.n + col0..kk * cfg.n + col0 + NSUB]);
            }
            let prev = ctx.read(prev_region, prev_off, block)?;
            let mut out = vec![0f32; block];
            sub_matmul(a, &b4, prev, &mut out);
            ctx.compute((m * kpc * cfg.nsub) as u64);
            let target = if last && task.command.writes_back() { j } else { (j + 1) % cfg.cores };
            ctx.remote_write(target, next_region, next_off, out, true)?;
            Ok(Step::Barrier)
        })?;
        Ok(())
    }

    /// Every core sends its RES2 block to the `c` buffer in shared RAM; the
    /// assembled matrix is column-major with core `j` owning columns
    /// `j * n/CORES ..`. Ends the task.
    pub fn writeback_results(&self, mesh: &mut Mesh) -> Result<()> {
        let words = self.cfg.m * self.cfg.cols_per_core();
        let (res2, c) = (self.regions.res2, self.hc.c);
        mesh.step(|ctx| {
            let j = ctx.id();
            ctx.store_to_hc(res2, 0, words, c, j * words)?;
            Ok(Step::Halt)
        })?;
        Ok(())
    }
}
