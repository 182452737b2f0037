//! Ring pipeline properties: who computes what, where blocks end up, and
//! how task sequences accumulate.

use meshgemm::config::MeshSetup;
use meshgemm::device::{Command, DeviceKernel, KernelConfig};
use meshgemm::host::{command_schedule, InnerKernel, InnerKernelRequest};
use meshgemm::mesh::{ControlBlock, Mesh, MeshConfig, SimError};
use meshgemm::{Error, Layout, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small integers keep every partial sum exact in f32, so results can be
/// compared bit-for-bit whatever the summation order.
fn int_matrix(rows: usize, cols: usize, layout: Layout, rng: &mut ChaCha8Rng) -> Matrix<f32> {
    Matrix::from_fn(rows, cols, layout, |_, _| rng.gen_range(-4i32..=4) as f32)
}

fn exact_product(a: &Matrix<f32>, b: &Matrix<f32>) -> Matrix<f32> {
    Matrix::from_fn(a.rows(), b.cols(), Layout::ColMajor, |i, j| {
        (0..a.cols()).map(|p| a.get(i, p) as i64 * b.get(p, j) as i64).sum::<i64>() as f32
    })
}

fn run(kernel: &mut InnerKernel, a: &Matrix<f32>, b: &Matrix<f32>) -> Matrix<f32> {
    let cfg = *kernel.config();
    let mut c = Matrix::<f32>::zeros(cfg.m, cfg.n, Layout::ColMajor);
    kernel
        .run(InnerKernelRequest {
            a1: a.view(),
            b1: b.view(),
            c_in: None,
            c_out: c.view_mut(),
            alpha: 1.0,
            beta: 0.0,
        })
        .unwrap();
    c
}

fn kernel_for(cores: usize) -> InnerKernel {
    let base = MeshSetup::parallella();
    if cores == 16 {
        return InnerKernel::new(base).unwrap();
    }
    let setup = MeshSetup { mesh: MeshConfig { cores, ..base.mesh }, ..base };
    InnerKernel::with_config(setup, KernelConfig::desk(cores)).unwrap()
}

fn check_linearity(cores: usize, tasks: usize, seed: u64) {
    let mut kernel = kernel_for(cores);
    let cfg = *kernel.config();
    let k = tasks * cfg.ksub;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = int_matrix(cfg.m, k, Layout::ColMajor, &mut rng);
    let b = int_matrix(k, cfg.n, Layout::RowMajor, &mut rng);

    let whole = run(&mut kernel, &a, &b);
    assert_eq!(whole, exact_product(&a, &b), "cores={cores} tasks={tasks}");

    // The accumulated call equals the sum of one-task calls over its slices.
    let mut sum = Matrix::<f32>::zeros(cfg.m, cfg.n, Layout::ColMajor);
    for t in 0..tasks {
        let a_t = a.view().submatrix(0, t * cfg.ksub, cfg.m, cfg.ksub).unwrap().to_owned();
        let b_t = b.view().submatrix(t * cfg.ksub, 0, cfg.ksub, cfg.n).unwrap().to_owned();
        let part = run(&mut kernel, &a_t, &b_t);
        for (s, p) in sum.data_mut().iter_mut().zip(part.data()) {
            *s += p;
        }
    }
    assert_eq!(whole, sum);
}

#[test]
fn destination_formula_examples() {
    let cfg = KernelConfig::PARALLELLA;
    assert_eq!(cfg.destination(0, 0), 15);
    assert_eq!(cfg.destination(0, 15), 0);
    assert_eq!(cfg.destination(3, 5), 13);
}

proptest! {
    #[test]
    fn destinations_cover_every_core_once(half in 1usize..=16) {
        let cores = 2 * half;
        let cfg = KernelConfig::desk(cores);
        for j in 0..cores {
            let mut seen = vec![0u8; cores];
            for k in 0..cores {
                seen[cfg.destination(j, k)] += 1;
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
        }
        for k in 0..cores {
            let mut seen = vec![0u8; cores];
            for j in 0..cores {
                seen[cfg.destination(j, k)] += 1;
            }
            prop_assert!(seen.iter().all(|&s| s == 1));
        }
        // The last hop always lands on the owner.
        for j in 0..cores {
            prop_assert_eq!(cfg.destination(j, cores - 1), j);
        }
    }
}

#[test]
fn linearity_over_command_sequences() {
    // [3], [0, 2], [0, 1, 2] and [0, 1, 1, 1, 2].
    for (tasks, seed) in [(1, 1), (2, 2), (3, 3), (5, 4)] {
        assert_eq!(command_schedule(tasks).unwrap().len(), tasks);
        check_linearity(16, tasks, seed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn linearity_holds_at_any_even_core_count(half in 1usize..=4, tasks in 1usize..=4, seed in any::<u64>()) {
        check_linearity(2 * half, tasks, seed);
    }
}

#[test]
fn writeback_places_columns_by_owner() {
    let mut kernel = kernel_for(16);
    let cfg = *kernel.config();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = int_matrix(cfg.m, cfg.ksub, Layout::ColMajor, &mut rng);
    let b = int_matrix(cfg.ksub, cfg.n, Layout::RowMajor, &mut rng);
    let c = run(&mut kernel, &a, &b);
    let res2 = kernel.device().regions().res2;
    let cpc = cfg.cols_per_core();
    for j in 0..cfg.cores {
        let local = kernel.mesh().host_read_local(j, res2, 0, cfg.m * cpc).unwrap();
        for (jj, col) in (cpc * j..cpc * (j + 1)).enumerate() {
            for i in 0..cfg.m {
                assert_eq!(local[jj * cfg.m + i], c.get(i, col), "core {j} column {col}");
            }
        }
    }
}

#[test]
fn accumulate_parks_blocks_one_core_over() {
    let setup = MeshSetup::parallella();
    let mut mesh = Mesh::new(setup.mesh, setup.cost).unwrap();
    let dev = DeviceKernel::load(&mut mesh, KernelConfig::PARALLELLA).unwrap();
    let cfg = *dev.config();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = int_matrix(cfg.m, cfg.ksub, Layout::ColMajor, &mut rng);
    let b = int_matrix(cfg.ksub, cfg.n, Layout::RowMajor, &mut rng);
    let expect = exact_product(&a, &b);
    let hc = *dev.hc_layout();
    mesh.host_write_hc(hc.a[0], 0, a.data()).unwrap();
    mesh.host_write_hc(hc.b[0], 0, b.data()).unwrap();
    mesh.set_control(ControlBlock {
        command: Command::ClearAccumulate.code(),
        selector: 0,
        done_flag: false,
    });
    dev.epiphany_task(&mut mesh).unwrap();
    assert!(mesh.control().done_flag);

    let block = cfg.block_words();
    for owner in 0..cfg.cores {
        for ci in 0..cfg.column_iterations() {
            let loc = dev.block_location(owner, ci, Command::ClearAccumulate);
            assert_eq!(loc.core, (owner + 1) % cfg.cores);
            let got = mesh.host_read_local(loc.core, loc.region, loc.offset, block).unwrap();
            let col0 = owner * cfg.cols_per_core() + ci * cfg.nsub;
            for c in 0..cfg.nsub {
                for i in 0..cfg.m {
                    assert_eq!(got[c * cfg.m + i], expect.get(i, col0 + c));
                }
            }
        }
    }
    // Under a writeback command the owner keeps its own block.
    let loc = dev.block_location(3, 2, Command::AccumulateWriteback);
    assert_eq!(loc.core, 3);
}

#[test]
fn host_refuses_to_issue_while_busy() {
    let mut kernel = kernel_for(16);
    kernel.mesh_mut().set_control(ControlBlock { command: 3, selector: 0, done_flag: false });
    let a = Matrix::<f32>::zeros(192, 64, Layout::ColMajor);
    let b = Matrix::<f32>::zeros(64, 256, Layout::RowMajor);
    let mut c = Matrix::<f32>::zeros(192, 256, Layout::ColMajor);
    let r = kernel.run(InnerKernelRequest {
        a1: a.view(),
        b1: b.view(),
        c_in: None,
        c_out: c.view_mut(),
        alpha: 1.0,
        beta: 0.0,
    });
    assert!(matches!(r, Err(Error::DeviceBusy)));
}

#[test]
fn memory_budget() {
    let setup = MeshSetup::parallella();
    let mut mesh = Mesh::new(setup.mesh, setup.cost).unwrap();
    let mut used = 8192;
    for (name, len) in [("A", 3072), ("B", 4096), ("RES1", 3072), ("RES2", 12288)] {
        mesh.allocate_region(0, name, len).unwrap();
        used += len;
    }
    assert_eq!(used, 30720);
    assert_eq!(mesh.core(0).unwrap().used_bytes(), 30720);
    mesh.allocate_region(0, "STACK", 2048).unwrap();
    assert!(matches!(mesh.allocate_region(0, "EXTRA", 4), Err(SimError::CapacityExceeded { core: 0, .. })));

    let mut fresh = Mesh::new(setup.mesh, setup.cost).unwrap();
    assert!(fresh.allocate_region(1, "BIG", 32768 - 8192 + 4).is_err());
}
