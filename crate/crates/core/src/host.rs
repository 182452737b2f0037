//! Host half of the micro-kernel: `c_out = alpha * a1 * b1 + beta * c_in`
//! for a fixed `m x n` output and any K that is a multiple of `KSUB`.
//!
//! K is cut into `KSUB`-deep tasks. The host stages each task's inputs in
//! one of two shared-RAM buffer pairs; the `selector` tells the device which
//! pair is current, so the next task can be staged while the device works.
//! The `command` sequence clears the on-chip accumulator once, accumulates
//! every task, and asks for the result only after the last one.

use crate::config::MeshSetup;
use crate::cost::{self, KernelProfile, TaskCost, TimingBreakdown};
use crate::device::{Command, DeviceKernel, KernelConfig};
use crate::error::{Error, Result};
use crate::matrix::{Matrix, MatrixView, MatrixViewMut};
use crate::mesh::{ControlBlock, Mesh};

/// Commands for a call made of `num_tasks` tasks.
pub fn command_schedule(num_tasks: usize) -> Result<Vec<Command>> {
    match num_tasks {
        0 => Err(Error::InvalidArgument("a kernel call needs at least one task".into())),
        1 => Ok(vec![Command::Single]),
        n => {
            let mut s = Vec::with_capacity(n);
            s.push(Command::ClearAccumulate);
            s.extend(std::iter::repeat_n(Command::Accumulate, n - 2));
            s.push(Command::AccumulateWriteback);
            Ok(s)
        }
    }
}

/// One micro-kernel call.
///
/// `a1` is `m x K` and `b1` is `K x n`; any strides work, though the
/// natural layouts are column-major for `a1` and row-major for `b1`.
/// When `c_in` is `None`, `c_out`'s current contents are the input.
#[derive(Debug)]
pub struct InnerKernelRequest<'a> {
    pub a1: MatrixView<'a, f32>,
    pub b1: MatrixView<'a, f32>,
    pub c_in: Option<MatrixView<'a, f32>>,
    pub c_out: MatrixViewMut<'a, f32>,
    pub alpha: f32,
    pub beta: f32,
}

/// What one call cost.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerKernelRun {
    pub timing: TimingBreakdown,
    pub profile: KernelProfile,
    /// Floating point operations the device performed.
    pub flops: u64,
}

/// `c_out = alpha * acc + beta * c_in`, honoring both views' strides.
/// `c_in` (or `c_out`'s old contents) is not read when `beta == 0`.
pub fn postprocess(
    acc: MatrixView<'_, f32>,
    alpha: f32,
    beta: f32,
    c_in: Option<MatrixView<'_, f32>>,
    c_out: &mut MatrixViewMut<'_, f32>,
) -> Result<()> {
    let shape = acc.shape();
    if c_out.shape() != shape || c_in.is_some_and(|c| c.shape() != shape) {
        return Err(Error::DimensionMismatch(format!(
            "postprocess of {}x{} into {}x{}",
            shape.0,
            shape.1,
            c_out.rows(),
            c_out.cols()
        )));
    }
    for j in 0..shape.1 {
        for i in 0..shape.0 {
            let v = if beta == 0.0 {
                if alpha == 0.0 {
                    0.0
                } else {
                    alpha * acc.get(i, j)
                }
            } else {
                let c = match &c_in {
                    Some(view) => view.get(i, j),
                    None => c_out.get(i, j),
                };
                if alpha == 0.0 {
                    beta * c
                } else {
                    alpha * acc.get(i, j) + beta * c
                }
            };
            c_out.set(i, j, v);
        }
    }
    Ok(())
}

/// The micro-kernel together with the coprocessor it drives.
#[derive(Debug, Clone)]
pub struct InnerKernel {
    mesh: Mesh,
    device: DeviceKernel,
    overlap: bool,
}

impl InnerKernel {
    /// Bring up the mesh and load the device program.
    pub fn new(setup: MeshSetup) -> Result<Self> {
        Self::with_config(setup, KernelConfig::PARALLELLA)
    }

    pub fn with_config(setup: MeshSetup, cfg: KernelConfig) -> Result<Self> {
        let mut mesh = Mesh::new(setup.mesh, setup.cost)?;
        let device = DeviceKernel::load(&mut mesh, cfg)?;
        Ok(Self { mesh, device, overlap: true })
    }

    pub fn config(&self) -> &KernelConfig {
        self.device.config()
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_mut(&mut self) -> &mut Mesh {
        &mut self.mesh
    }

    pub fn device(&self) -> &DeviceKernel {
        &self.device
    }

    /// Stage the next task while the device runs the current one (default),
    /// or run strictly one after the other.
    pub fn set_overlap(&mut self, overlap: bool) {
        self.overlap = overlap;
    }

    fn stage(
        &mut self,
        a1: &MatrixView<'_, f32>,
        b1: &MatrixView<'_, f32>,
        task: usize,
        sel: usize,
    ) -> Result<u64> {
        let cfg = *self.device.config();
        let k0 = task * cfg.ksub;
        let mut a = Vec::with_capacity(cfg.m * cfg.ksub);
        for p in k0..k0 + cfg.ksub {
            a.extend((0..cfg.m).map(|i| a1.get(i, p)));
        }
        let mut b = Vec::with_capacity(cfg.ksub * cfg.n);
        for p in k0..k0 + cfg.ksub {
            b.extend((0..cfg.n).map(|j| b1.get(p, j)));
        }
        let before = self.mesh.ledger().host_to_hc_bytes();
        let hc = *self.device.hc_layout();
        self.mesh.host_write_hc(hc.a[sel], 0, &a)?;
        self.mesh.host_write_hc(hc.b[sel], 0, &b)?;
        Ok(self.mesh.ledger().host_to_hc_bytes() - before)
    }

    fn issue(&mut self, command: Command, selector: usize) -> Result<()> {
        if !self.mesh.control().done_flag {
            return Err(Error::DeviceBusy);
        }
        self.mesh.set_control(ControlBlock {
            command: command.code(),
            selector: selector as u32,
            done_flag: false,
        });
        Ok(())
    }

    /// Run the micro-kernel; writes `req.c_out` and returns the modeled cost.
    pub fn run(&mut self, mut req: InnerKernelRequest<'_>) -> Result<InnerKernelRun> {
        let cfg = *self.device.config();
        let k = req.a1.cols();
        if req.a1.rows() != cfg.m || req.b1.shape() != (k, cfg.n) || req.c_out.shape() != (cfg.m, cfg.n) {
            return Err(Error::DimensionMismatch(format!(
                "micro-kernel is {}x{}: got a1 {}x{}, b1 {}x{}, c {}x{}",
                cfg.m,
                cfg.n,
                req.a1.rows(),
                k,
                req.b1.rows(),
                req.b1.cols(),
                req.c_out.rows(),
                req.c_out.cols()
            )));
        }
        if k == 0 || !k.is_multiple_of(cfg.ksub) {
            return Err(Error::DimensionMismatch(format!(
                "K = {k} must be a positive multiple of {}",
                cfg.ksub
            )));
        }
        let schedule = command_schedule(k / cfg.ksub)?;
        let start = self.mesh.ledger().clone();
        let mut tasks = vec![TaskCost::default(); schedule.len()];

        if self.overlap {
            tasks[0].staged_bytes = self.stage(&req.a1, &req.b1, 0, 0)?;
        }
        for (t, &command) in schedule.iter().enumerate() {
            let sel = t % 2;
            if !self.overlap {
                tasks[t].staged_bytes = self.stage(&req.a1, &req.b1, t, sel)?;
            }
            self.issue(command, sel)?;
            if self.overlap && t + 1 < schedule.len() {
                tasks[t + 1].staged_bytes = self.stage(&req.a1, &req.b1, t + 1, 1 - sel)?;
            }
            let before = self.mesh.ledger().clone();
            self.device.epiphany_task(&mut self.mesh)?;
            let delta = self.mesh.ledger().since(&before);
            tasks[t].device_cycles = delta.max_core_cycles();
            tasks[t].core_bytes = delta.hc_to_core_bytes() + delta.core_to_hc_bytes();
        }

        let (acc, _) = self.mesh.host_read_hc(self.device.hc_layout().c, 0, cfg.m * cfg.n)?;
        let acc = Matrix::from_vec(cfg.m, cfg.n, crate::matrix::Layout::ColMajor, acc)?;
        postprocess(acc.view(), req.alpha, req.beta, req.c_in, &mut req.c_out)?;

        let delta = self.mesh.ledger().since(&start);
        let profile = KernelProfile {
            tasks,
            retrieved_bytes: delta.hc_to_host_bytes(),
            hh_bytes: 0,
            overlap: self.overlap,
        };
        let timing = cost::evaluate(&profile, self.mesh.params(), self.mesh.config().clock_hz);
        Ok(InnerKernelRun { timing, profile, flops: delta.flop_count() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Layout;

    #[test]
    fn schedules() {
        assert_eq!(command_schedule(1).unwrap(), vec![Command::Single]);
        assert_eq!(
            command_schedule(2).unwrap(),
            vec![Command::ClearAccumulate, Command::AccumulateWriteback]
        );
        let s = command_schedule(64).unwrap();
        assert_eq!(s.len(), 64);
        assert_eq!(s[0], Command::ClearAccumulate);
        assert!(s[1..63].iter().all(|&c| c == Command::Accumulate));
        assert_eq!(s[63], Command::AccumulateWriteback);
        assert!(command_schedule(0).is_err());
    }

    #[test]
    fn postprocess_beta_zero_ignores_nan() {
        let acc = Matrix::<f32>::from_fn(3, 2, Layout::ColMajor, |i, j| (i + j) as f32);
        let c_in = Matrix::<f32>::from_fn(3, 2, Layout::ColMajor, |_, _| f32::NAN);
        let mut out = Matrix::<f32>::zeros(3, 2, Layout::ColMajor);
        postprocess(acc.view(), 1.0, 0.0, Some(c_in.view()), &mut out.view_mut()).unwrap();
        assert_eq!(out, acc);

        let mut inplace = c_in.clone();
        postprocess(acc.view(), 1.0, 0.0, None, &mut inplace.view_mut()).unwrap();
        assert_eq!(inplace, acc);
    }

    #[test]
    fn postprocess_arithmetic() {
        let ones = Matrix::<f32>::from_fn(4, 4, Layout::ColMajor, |_, _| 1.0);
        let mut out = Matrix::<f32>::zeros(4, 4, Layout::ColMajor);
        postprocess(ones.view(), 2.0, -1.0, Some(ones.view()), &mut out.view_mut()).unwrap();
        assert_eq!(out, ones);
    }

    #[test]
    fn postprocess_strided_output() {
        let (m, n) = (192, 8);
        let acc = Matrix::<f32>::from_fn(m, n, Layout::ColMajor, |i, j| (i * 7 + j) as f32);
        let c_in = Matrix::<f32>::from_fn(m, n, Layout::RowMajor, |i, j| (i as f32) - (j as f32));
        // Every other row of a row-major buffer.
        let mut buf = vec![f32::NAN; 2 * m * n];
        let mut view = MatrixViewMut::new(&mut buf, m, n, 2 * n, 1).unwrap();
        postprocess(acc.view(), 0.5, 2.0, Some(c_in.view()), &mut view).unwrap();
        for i in 0..m {
            for j in 0..n {
                let expect = 0.5 * acc.get(i, j) + 2.0 * c_in.get(i, j);
                assert_eq!(buf[i * 2 * n + j], expect);
                assert!(buf[i * 2 * n + n + j].is_nan());
            }
        }
    }

    #[test]
    fn rejects_unpadded_k() {
        let mut kernel = InnerKernel::new(MeshSetup::parallella()).unwrap();
        let a = Matrix::<f32>::zeros(192, 65, Layout::ColMajor);
        let b = Matrix::<f32>::zeros(65, 256, Layout::RowMajor);
        let mut c = Matrix::<f32>::zeros(192, 256, Layout::ColMajor);
        let req = InnerKernelRequest {
            a1: a.view(),
            b1: b.view(),
            c_in: None,
            c_out: c.view_mut(),
            alpha: 1.0,
            beta: 0.0,
        };
        assert!(matches!(kernel.run(req), Err(Error::DimensionMismatch(_))));
    }
}
