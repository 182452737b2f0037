//! Offload service: a long-lived worker that owns the coprocessor.
//!
//! Bringing the coprocessor up and tearing it down is expensive, so a
//! dedicated worker does it exactly once and then serves micro-kernel calls.
//! Clients talk to it through a single host-to-host request slot: inputs are
//! copied into the slot, `request_ready` is raised, the worker runs the
//! inner kernel and raises `response_ready` once the output is in the slot.
//! One request may be outstanding at a time.

use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::JoinHandle;

use crate::config::MeshSetup;
use crate::cost::{self, KernelProfile, TimingBreakdown};
use crate::error::{Error, Result};
use crate::host::{postprocess, InnerKernel, InnerKernelRequest};
use crate::matrix::{Layout, Matrix, MatrixView, MatrixViewMut};
use crate::mesh::CycleLedger;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lifecycle {
    Stopped,
    Ready,
    Busy,
}

/// Flag transitions in the request slot, in the order they happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlagEvent {
    RequestReady,
    ResponseReady,
}

/// Dimensions and scalars of the request in the slot.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RequestHeader {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub alpha: f32,
    pub beta: f32,
}

/// Result of one served call.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceResponse {
    pub timing: TimingBreakdown,
    pub profile: KernelProfile,
    pub flops: u64,
    /// Worker's mesh ledger after the call.
    pub ledger: CycleLedger,
}

#[derive(Debug, Default)]
struct SlotState {
    header: RequestHeader,
    /// a1 column-major, then b1 row-major, then c_in column-major.
    input: Vec<f32>,
    /// c_out column-major.
    output: Vec<f32>,
    request_ready: bool,
    response_ready: bool,
    in_flight: bool,
    shutdown: bool,
    init: Option<std::result::Result<CycleLedger, String>>,
    response: Option<std::result::Result<ServiceResponse, String>>,
    trace: Vec<FlagEvent>,
}

#[derive(Debug, Default)]
struct Slot {
    state: Mutex<SlotState>,
    cv: Condvar,
}

impl Slot {
    fn lock(&self) -> MutexGuard<'_, SlotState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Handle to the service.
#[derive(Debug)]
pub struct OffloadService {
    setup: MeshSetup,
    slot: Arc<Slot>,
    worker: Option<JoinHandle<()>>,
    started: bool,
    init_ledger: Option<CycleLedger>,
}

/// Receipt for a request placed in the slot.
#[must_use = "the response must be collected with `finish`"]
#[derive(Debug)]
pub struct Ticket {
    slot: Arc<Slot>,
}

impl OffloadService {
    /// A stopped service; call [`start`](Self::start) to bring it up.
    pub fn new(setup: MeshSetup) -> Self {
        Self { setup, slot: Arc::new(Slot::default()), worker: None, started: false, init_ledger: None }
    }

    /// Convenience: construct and start.
    pub fn spawn(setup: MeshSetup) -> Result<Self> {
        let mut s = Self::new(setup);
        s.start()?;
        Ok(s)
    }

    pub fn state(&self) -> Lifecycle {
        if self.worker.is_none() {
            Lifecycle::Stopped
        } else if self.slot.lock().in_flight {
            Lifecycle::Busy
        } else {
            Lifecycle::Ready
        }
    }

    /// Initialize the mesh and load the kernel in the worker. A service is
    /// started at most once.
    pub fn start(&mut self) -> Result<()> {
        if self.started {
            return Err(Error::Service(if self.worker.is_some() {
                "already started".into()
            } else {
                "service lifetime ended; create a new one".into()
            }));
        }
        self.started = true;
        let slot = Arc::clone(&self.slot);
        let setup = self.setup;
        let worker =
            std::thread::Builder::new().name("offload-service".into()).spawn(move || serve(setup, slot))?;
        let mut st = self.slot.lock();
        while st.init.is_none() {
            st = self.slot.cv.wait(st).unwrap_or_else(|p| p.into_inner());
        }
        match st.init.clone().expect("init reported") {
            Ok(ledger) => {
                drop(st);
                self.init_ledger = Some(ledger);
                self.worker = Some(worker);
                Ok(())
            }
            Err(msg) => {
                drop(st);
                let _ = worker.join();
                Err(Error::Service(format!("initialization failed: {msg}")))
            }
        }
    }

    /// Ledger right after initialization; no gemm work has been done yet.
    pub fn init_ledger(&self) -> Option<&CycleLedger> {
        self.init_ledger.as_ref()
    }

    /// Place a request in the slot and hand control to the worker.
    pub fn begin(
        &self,
        a1: MatrixView<'_, f32>,
        b1: MatrixView<'_, f32>,
        c_in: MatrixView<'_, f32>,
        alpha: f32,
        beta: f32,
    ) -> Result<Ticket> {
        if self.worker.is_none() {
            return Err(Error::Service("service is not running".into()));
        }
        let (m, k) = a1.shape();
        let n = b1.cols();
        if b1.rows() != k || c_in.shape() != (m, n) {
            return Err(Error::DimensionMismatch(format!(
                "a1 {}x{}, b1 {}x{}, c {}x{}",
                m,
                k,
                b1.rows(),
                n,
                c_in.rows(),
                c_in.cols()
            )));
        }
        let mut st = self.slot.lock();
        if st.in_flight {
            return Err(Error::Service("a request is already outstanding".into()));
        }
        st.header = RequestHeader { m, n, k, alpha, beta };
        st.input.clear();
        st.input.reserve(m * k + k * n + m * n);
        for p in 0..k {
            st.input.extend((0..m).map(|i| a1.get(i, p)));
        }
        for p in 0..k {
            st.input.extend((0..n).map(|j| b1.get(p, j)));
        }
        for j in 0..n {
            st.input.extend((0..m).map(|i| c_in.get(i, j)));
        }
        st.in_flight = true;
        st.request_ready = true;
        st.trace.push(FlagEvent::RequestReady);
        self.slot.cv.notify_all();
        Ok(Ticket { slot: Arc::clone(&self.slot) })
    }

    /// Run a micro-kernel call through the service. Numerically identical
    /// to [`InnerKernel::run`]; the timing additionally charges the
    /// host-to-host copies.
    pub fn submit(&self, req: InnerKernelRequest<'_>) -> Result<ServiceResponse> {
        let InnerKernelRequest { a1, b1, c_in, mut c_out, alpha, beta } = req;
        let ticket = match c_in {
            Some(c) => self.begin(a1, b1, c, alpha, beta)?,
            None => self.begin(a1, b1, c_out.as_view(), alpha, beta)?,
        };
        ticket.finish(&mut c_out)
    }

    /// Every flag transition so far.
    pub fn flag_trace(&self) -> Vec<FlagEvent> {
        self.slot.lock().trace.clone()
    }

    /// Shut the worker down and release the mesh. The slot must be idle.
    pub fn stop(&mut self) -> Result<()> {
        let Some(worker) = self.worker.take() else {
            return Err(Error::Service("service is not running".into()));
        };
        {
            let mut st = self.slot.lock();
            if st.in_flight {
                drop(st);
                self.worker = Some(worker);
                return Err(Error::Service("cannot stop with a request outstanding".into()));
            }
            st.shutdown = true;
            self.slot.cv.notify_all();
        }
        worker.join().map_err(|_| Error::Service("worker panicked".into()))?;
        Ok(())
    }
}

impl Drop for OffloadService {
    fn drop(&mut self) {
        if let Some(worker) = self.worker.take() {
            {
                let mut st = self.slot.lock();
                st.shutdown = true;
                self.slot.cv.notify_all();
            }
            let _ = worker.join();
        }
    }
}

impl Ticket {
    /// Wait for `response_ready` and copy the output into `c_out`.
    pub fn finish(self, c_out: &mut MatrixViewMut<'_, f32>) -> Result<ServiceResponse> {
        let mut st = self.slot.lock();
        while !st.response_ready {
            st = self.slot.cv.wait(st).unwrap_or_else(|p| p.into_inner());
        }
        st.response_ready = false;
        st.in_flight = false;
        let response = st.response.take().expect("response accompanies flag");
        let response = response.map_err(Error::Service)?;
        let h = st.header;
        if c_out.shape() != (h.m, h.n) {
            return Err(Error::DimensionMismatch(format!(
                "output view {}x{} for a {}x{} result",
                c_out.rows(),
                c_out.cols(),
                h.m,
                h.n
            )));
        }
        let out = MatrixView::col_major(&st.output, h.m, h.n, h.m)?;
        // Plain copy: alpha = 1, beta = 0.
        postprocess(out, 1.0, 0.0, None, c_out)?;
        Ok(response)
    }
}

fn serve(setup: MeshSetup, slot: Arc<Slot>) {
    let kernel = InnerKernel::new(setup);
    let mut kernel = {
        let mut st = slot.lock();
        match kernel {
            Ok(k) => {
                st.init = Some(Ok(k.mesh().ledger().clone()));
                slot.cv.notify_all();
                k
            }
            Err(e) => {
                st.init = Some(Err(e.to_string()));
                slot.cv.notify_all();
                return;
            }
        }
    };
    loop {
        let (header, input) = {
            let mut st = slot.lock();
            while !st.request_ready && !st.shutdown {
                st = slot.cv.wait(st).unwrap_or_else(|p| p.into_inner());
            }
            if st.shutdown {
                return;
            }
            st.request_ready = false;
            (st.header, std::mem::take(&mut st.input))
        };
        let result = run_request(&mut kernel, header, &input);
        let mut st = slot.lock();
        match result {
            Ok((output, response)) => {
                st.output = output;
                st.response = Some(Ok(response));
            }
            Err(e) => st.response = Some(Err(e.to_string())),
        }
        st.input = input;
        st.response_ready = true;
        st.trace.push(FlagEvent::ResponseReady);
        slot.cv.notify_all();
    }
}

fn run_request(
    kernel: &mut InnerKernel,
    h: RequestHeader,
    input: &[f32],
) -> Result<(Vec<f32>, ServiceResponse)> {
    let (m, n, k) = (h.m, h.n, h.k);
    let a_end = m * k;
    let b_end = a_end + k * n;
    let a1 = MatrixView::col_major(&input[..a_end], m, k, m.max(1))?;
    let b1 = MatrixView::row_major(&input[a_end..b_end], k, n, n.max(1))?;
    let c_in = MatrixView::col_major(&input[b_end..], m, n, m.max(1))?;
    let mut out = Matrix::<f32>::zeros(m, n, Layout::ColMajor);
    let run = kernel.run(InnerKernelRequest {
        a1,
        b1,
        c_in: Some(c_in),
        c_out: out.view_mut(),
        alpha: h.alpha,
        beta: h.beta,
    })?;
    let mut profile = run.profile;
    profile.hh_bytes = 4 * (input.len() + m * n) as u64;
    let timing = cost::evaluate(&profile, kernel.mesh().params(), kernel.mesh().config().clock_hz);
    let response =
        ServiceResponse { timing, profile, flops: run.flops, ledger: kernel.mesh().ledger().clone() };
    Ok((out.into_vec(), response))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lifecycle() {
        let mut svc = OffloadService::new(MeshSetup::parallella());
        assert_eq!(svc.state(), Lifecycle::Stopped);
        svc.start().unwrap();
        assert_eq!(svc.state(), Lifecycle::Ready);
        assert!(svc.start().is_err());
        assert_eq!(svc.init_ledger().unwrap().flop_count(), 0);
        svc.stop().unwrap();
        assert_eq!(svc.state(), Lifecycle::Stopped);
        assert!(svc.start().is_err());
        assert!(svc.stop().is_err());
    }

    #[test]
    fn stopped_service_rejects_requests() {
        let svc = OffloadService::new(MeshSetup::parallella());
        let a = Matrix::<f32>::zeros(192, 64, Layout::ColMajor);
        let b = Matrix::<f32>::zeros(64, 256, Layout::RowMajor);
        let c = Matrix::<f32>::zeros(192, 256, Layout::ColMajor);
        assert!(svc.begin(a.view(), b.view(), c.view(), 1.0, 0.0).is_err());
    }
}
