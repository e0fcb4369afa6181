use nalgebra::DMatrix;
use sdecert::sdp::{read_sdpa, solve, verify_farkas, write_sdpa, LinearFunctional, SdpOptions, SdpProblem, SdpStatus};

fn opts() -> SdpOptions {
    SdpOptions::default()
}

#[test]
fn scalar_equality() {
    let mut p = SdpProblem::new(vec![1], 0);
    p.add_constraint(LinearFunctional::new().with_entry(0, 0, 0, 1.0), 2.0);
    p.objective = LinearFunctional::new().with_entry(0, 0, 0, 1.0);
    let s = solve(&p, &opts());
    assert_eq!(s.status, SdpStatus::Feasible);
    assert!((s.blocks[0][(0, 0)] - 2.0).abs() < 1e-8);
    assert!(s.optimal);
}

#[test]
fn free_offdiagonal_minimized() {
    // [[1, t], [t, 1]] ⪰ 0, minimize t
    let mut p = SdpProblem::new(vec![2], 1);
    p.add_constraint(LinearFunctional::new().with_entry(0, 0, 0, 1.0), 1.0);
    p.add_constraint(LinearFunctional::new().with_entry(0, 1, 1, 1.0), 1.0);
    p.add_constraint(LinearFunctional::new().with_entry(0, 0, 1, 0.5).with_free(0, -1.0), 0.0);
    p.objective = LinearFunctional::new().with_free(0, 1.0);
    let s = solve(&p, &opts());
    assert_eq!(s.status, SdpStatus::Feasible);
    assert!(s.optimal);
    assert!((s.free[0] + 1.0).abs() < 1e-6, "t = {}", s.free[0]);
}

#[test]
fn negative_scalar_is_infeasible() {
    let mut p = SdpProblem::new(vec![1], 0);
    p.add_constraint(LinearFunctional::new().with_entry(0, 0, 0, 1.0), -1.0);
    let s = solve(&p, &opts());
    assert_eq!(s.status, SdpStatus::Infeasible);
    let y = s.farkas.expect("witness");
    assert!(verify_farkas(&p, &y, 1e-9));
    // independent: b·y > 0 and y·A ⪯ 0 for A = [1]
    assert!(-y[0] > 0.0);
}

#[test]
fn duplicated_rows_are_dropped() {
    let mut p = SdpProblem::new(vec![1], 0);
    p.add_constraint(LinearFunctional::new().with_entry(0, 0, 0, 1.0), 3.0);
    p.add_constraint(LinearFunctional::new().with_entry(0, 0, 0, 2.0), 6.0);
    p.objective = LinearFunctional::new().with_entry(0, 0, 0, 1.0);
    let s = solve(&p, &opts());
    assert_eq!(s.status, SdpStatus::Feasible);
    assert_eq!(s.dropped_rows, vec![1]);
    assert!((s.blocks[0][(0, 0)] - 3.0).abs() < 1e-8);
}

#[test]
fn contradictory_rows_infeasible() {
    let mut p = SdpProblem::new(vec![1], 0);
    p.add_constraint(LinearFunctional::new().with_entry(0, 0, 0, 1.0), 3.0);
    p.add_constraint(LinearFunctional::new().with_entry(0, 0, 0, 1.0), 4.0);
    let s = solve(&p, &opts());
    assert_eq!(s.status, SdpStatus::Infeasible);
    assert!(verify_farkas(&p, s.farkas.as_ref().unwrap(), 1e-9));
}

/// Small deterministic generator so the test needs no RNG crate.
fn lcg(state: &mut u64) -> f64 {
    *state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    ((*state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
}

#[test]
fn minimum_eigenvalue_via_trace_constraint() {
    // min ⟨C, X⟩ s.t. tr X = 1 is λ_min(C); the oracle is nalgebra's eigensolver.
    let mut st = 7u64;
    for _ in 0..10 {
        let mut c = DMatrix::zeros(3, 3);
        for r in 0..3 {
            for k in r..3 {
                let v = lcg(&mut st);
                c[(r, k)] = v;
                c[(k, r)] = v;
            }
        }
        let mut p = SdpProblem::new(vec![3], 0);
        let mut tr = LinearFunctional::new();
        let mut obj = LinearFunctional::new();
        for r in 0..3 {
            tr.add_entry(0, r, r, 1.0);
            for k in r..3 {
                obj.add_entry(0, r, k, c[(r, k)]);
            }
        }
        p.add_constraint(tr, 1.0);
        p.objective = obj;
        let s = solve(&p, &opts());
        assert_eq!(s.status, SdpStatus::Feasible);
        let lmin = c.clone().symmetric_eigen().eigenvalues.min();
        assert!((s.objective - lmin).abs() < 1e-6, "{} vs {}", s.objective, lmin);
    }
}

#[test]
fn lattice_oracle_two_by_two() {
    // min x11 + x22 - x12 s.t. x11 = a, x22 = b over a dense grid of x12
    // with the PSD condition checked by determinant.
    let mut st = 11u64;
    for _ in 0..5 {
        let a = 0.5 + lcg(&mut st).abs();
        let b = 0.5 + lcg(&mut st).abs();
        let mut p = SdpProblem::new(vec![2], 0);
        p.add_constraint(LinearFunctional::new().with_entry(0, 0, 0, 1.0), a);
        p.add_constraint(LinearFunctional::new().with_entry(0, 1, 1, 1.0), b);
        p.objective =
            LinearFunctional::new().with_entry(0, 0, 0, 1.0).with_entry(0, 1, 1, 1.0).with_entry(0, 0, 1, -0.5);
        let s = solve(&p, &opts());
        let bound = (a * b).sqrt();
        let n = 1_000_000;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            let x12 = -bound + 2.0 * bound * i as f64 / n as f64;
            if a * b - x12 * x12 >= -1e-15 {
                best = best.min(a + b - x12);
            }
        }
        assert!((s.objective - best).abs() < 1e-5, "{} vs {}", s.objective, best);
    }
}

#[test]
fn complementarity_shrinks() {
    let mut p = SdpProblem::new(vec![2], 1);
    p.add_constraint(LinearFunctional::new().with_entry(0, 0, 0, 1.0), 1.0);
    p.add_constraint(LinearFunctional::new().with_entry(0, 1, 1, 1.0), 1.0);
    p.add_constraint(LinearFunctional::new().with_entry(0, 0, 1, 0.5).with_free(0, -1.0), 0.0);
    p.objective = LinearFunctional::new().with_free(0, 1.0);
    let s = solve(&p, &opts());
    let mus: Vec<f64> = s.history.iter().map(|h| h.mu).collect();
    assert!(mus.len() > 2);
    for w in mus.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{mus:?}");
    }
}

#[test]
fn sdpa_golden_file() {
    let mut p = SdpProblem::new(vec![2], 1);
    p.add_constraint(LinearFunctional::new().with_entry(0, 0, 0, 1.0), 1.0);
    p.add_constraint(LinearFunctional::new().with_entry(0, 1, 1, 1.0), 1.0);
    p.add_constraint(LinearFunctional::new().with_entry(0, 0, 1, 0.5).with_free(0, -1.0), 0.0);
    p.objective = LinearFunctional::new().with_free(0, 1.0);
    let text = write_sdpa(&p);
    let golden = include_str!("data/offdiag.dat-s");
    assert_eq!(text, golden);
    let back = read_sdpa(golden).unwrap();
    assert_eq!(back, p);
}
