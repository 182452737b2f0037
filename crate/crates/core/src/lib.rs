//! Single-precision gemm offloaded to a simulated 16-core mesh coprocessor.
//!
//! The crate is layered bottom-up:
//!
//! - [`matrix`]: strided views, the f64 reference gemm, packing, error metrics.
//! - [`mesh`]: a cycle-counting simulator of the coprocessor and its shared RAM.
//! - [`cost`]: turns the simulator's ledger into model seconds.
//! - [`device`]: the per-core kernel that pipelines partial products around the ring.
//! - [`host`]: the micro-kernel driver (`c = alpha * a1 * b1 + beta * c`).
//! - [`service`]: a long-lived worker owning the coprocessor.
//! - [`blas`]: blocked `sgemm`/`dgemm` on top of the micro-kernel.
//! - [`bench`]: benchmark, test-suite and calibration drivers behind the `bench` binary.

pub mod bench;
pub mod blas;
pub mod config;
pub mod cost;
pub mod device;
pub mod error;
pub mod host;
pub mod matrix;
pub mod mesh;
pub mod service;

/// Rows of the micro-kernel's output block.
pub const TILE_M: usize = 192;
/// Columns of the micro-kernel's output block.
pub const TILE_N: usize = 256;
/// K depth of one device task.
pub const KSUB: usize = 64;
/// Columns of B each core handles per column iteration.
pub const NSUB: usize = 4;
/// Cores in the mesh.
pub const CORES: usize = 16;

pub use config::MeshSetup;
pub use cost::{CostParams, TimingBreakdown};
pub use error::{Error, Result};
pub use host::{InnerKernel, InnerKernelRequest};
pub use matrix::{Layout, Matrix, MatrixView, MatrixViewMut, OpFlag};
pub use service::OffloadService;
