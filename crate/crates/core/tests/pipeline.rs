use csa_core::apps::{run_pnmf, DeltaChoice, PnmfInstance, RunOptions};
use csa_core::coreset::{pcps_p2, verify_pcps};
use csa_core::engine::{coreset_guess_solve, SolveConfig};
use csa_core::linalg::{projection_cost, svd, DenseMatrix};
use csa_core::netgen::NetKind;
use csa_core::parallel::Parallelism;
use csa_core::rng::{gaussian_matrix, stream};
use csa_core::solvers::ConstraintSpec;

fn random(d: usize, n: usize, seed: u64) -> DenseMatrix {
    DenseMatrix::new(gaussian_matrix(d, n, &mut stream(seed, "pipeline", 0))).unwrap()
}

#[test]
fn sketch_then_solve_respects_additive_bound() {
    let a = random(5, 12, 1);
    let cfg = SolveConfig::new(2, 2.0, 0.5, 0.5);
    let sol = coreset_guess_solve(&a, &ConstraintSpec::Unconstrained { k: 2 }, &cfg, NetKind::Standard).unwrap();
    let opt = svd(a.as_matrix()).unwrap().tail_energy(2);
    assert!(sol.cost_original >= opt * (1.0 - 1e-9));
    assert!(sol.cost_original <= 1.5 * opt + sol.diagnostics.delta_bound);
    let recomputed = projection_cost(&a, &sol.basis, 2.0).unwrap();
    assert!((recomputed - sol.cost_original).abs() <= 1e-10 * recomputed);
}

#[test]
fn policies_agree() {
    let a = random(4, 10, 2);
    let mut cfg = SolveConfig::new(2, 2.0, 0.5, 0.5);
    cfg.prune = false;
    let seq = coreset_guess_solve(&a, &ConstraintSpec::Unconstrained { k: 2 }, &cfg, NetKind::Standard).unwrap();
    cfg.parallelism = Parallelism::Threads(3);
    let par = coreset_guess_solve(&a, &ConstraintSpec::Unconstrained { k: 2 }, &cfg, NetKind::Standard).unwrap();
    assert_eq!(seq.best_guess_index, par.best_guess_index);
    assert_eq!(seq.cost_original.to_bits(), par.cost_original.to_bits());
}

#[test]
fn sketch_passes_band_check() {
    let a = random(6, 15, 3);
    let c = pcps_p2(&a, 2, 0.5).unwrap();
    let rep = verify_pcps(&a, &c.b, 2, 0.5, 100, 7, Parallelism::Sequential).unwrap();
    assert!(rep.passed, "{rep:?}");
}

#[test]
fn pnmf_runs_on_nonnegative_input() {
    let a = DenseMatrix::from_rows(&[vec![1.0, 0.5, 0.0], vec![0.9, 0.4, 0.1], vec![0.0, 0.2, 1.0]]).unwrap();
    let inst = PnmfInstance {
        a,
        k: 2,
        epsilon: 0.5,
        delta: DeltaChoice::Fixed(0.5),
    };
    let res = run_pnmf(&inst, &RunOptions::default()).unwrap();
    assert!(res.solution.basis.vectors().iter().all(|v| *v >= 0.0));
}
