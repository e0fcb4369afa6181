//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails. Systems are read from the fixtures in `problems/`.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_rational::BigRational;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use sdecert::mc::{run_mc, simulate_controlled, trace_path, CompiledSystem, InitialSampler, SimConfig};
use sdecert::ops::{adjoint_generator, check_growth, check_integrability, time_change, SdeSystem, Verdict};
use sdecert::poly::{rat, rat_to_f64, BExpr, Monomial, QPoly};
use sdecert::sdp::{read_sdpa, verify_farkas, verify_solution, write_sdpa, SdpProblem, SdpStatus};
use sdecert::sos::{build_sos_feasibility, prove_sos, solve_sos, SosOptions};
use sdecert::synth::{synthesize_controller, verify_density, CertVerdict, CertificateResult, VerifyOptions};
use sdecert_cli::problem::{parse_problem, ProblemFile};

const EPS_RES: f64 = 1e-7;
const EPS_EIG: f64 = 1e-8;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn problem_path(name: &str) -> PathBuf {
    root().join("problems").join(format!("{name}.prob"))
}

fn load(name: &str) -> ProblemFile {
    let text = std::fs::read_to_string(problem_path(name)).expect("fixture exists");
    parse_problem(&text).expect("fixture parses")
}

fn certify(pf: &ProblemFile) -> CertificateResult {
    let sys = pf.system().unwrap();
    verify_density(&sys, &pf.density().unwrap(), &pf.mode(None).unwrap(), &VerifyOptions::default()).unwrap()
}

/// Result of one criterion: every failed check is listed in the detail.
struct Outcome {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { failures: Vec::new(), notes: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }

    fn within(&mut self, start: Instant, limit: Duration) {
        let t = start.elapsed();
        self.check(t <= limit, format!("runtime {:.2}s (limit {}s)", t.as_secs_f64(), limit.as_secs()));
    }
}

fn p2(terms: &[(u32, u32, i64, i64)]) -> QPoly {
    QPoly::from_terms(2, terms.iter().map(|&(i, j, a, b)| (vec![i, j], rat(a, b))))
}

fn symbolic_known_answers() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let cases: [(&str, QPoly, BigRational); 3] = [
        ("example1", QPoly::constant(2, rat(-3, 1)), rat(-2, 1)),
        ("example2", QPoly::from_terms(3, [(vec![2, 0, 0], rat(-12, 1))]), rat(-1, 1)),
        ("example3", QPoly::constant(1, rat(-42, 1)), rat(-3, 2)),
    ];
    let mut built = Vec::new();
    for (name, num, power) in cases {
        let pf = load(name);
        let sys = pf.system().unwrap();
        let d = pf.density().unwrap().to_bexpr().unwrap();
        built.push((name, sys, d, num, power));
    }
    let mut computed = Vec::new();
    let t0 = Instant::now();
    for (name, sys, d, _, _) in &built {
        computed.push((*name, adjoint_generator(sys, d).unwrap()));
    }
    let elapsed = t0.elapsed();
    for ((name, sys, _, num, power), (_, got)) in built.iter().zip(&computed) {
        let want = BExpr::term(num.clone(), power.clone(), sys.base()).unwrap();
        o.check(*got == want, format!("{name}: L*D = {}", got.render(&sdecert::poly::default_names(sys.nvars()))));
    }
    o.check(elapsed < Duration::from_secs(1), format!("generators in {:.3}s", elapsed.as_secs_f64()));
    o.within(start, Duration::from_secs(1));
    o
}

fn reference_sextic() -> QPoly {
    QPoly::from_terms(
        2,
        [
            (vec![0, 6], rat(35, 100)),
            (vec![1, 5], rat(-15, 10000)),
            (vec![2, 4], rat(6, 10)),
            (vec![3, 3], rat(26, 10000)),
            (vec![4, 2], rat(33, 100)),
            (vec![5, 1], rat(4, 1000)),
            (vec![6, 0], rat(13, 100)),
        ],
    )
}

fn forward_check() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let pf = load("planar_plant_feedback");
    let plant = pf.controlled().unwrap();
    let u = pf.feedback_controller().unwrap().expect("fixture has a feedback line");
    let closed = plant.close_with_polynomial(&u.numerator).unwrap();
    let d = BExpr::power(closed.base(), rat(-5, 2)).unwrap();
    let cleared = -adjoint_generator(&closed, &d).unwrap().clear_with_shift(&rat(-9, 2)).unwrap();

    let reference = reference_sextic();
    let mut worst: f64 = 0.0;
    for (m, c) in reference.terms() {
        let ours = rat_to_f64(&cleared.coeff(m));
        let want = rat_to_f64(c);
        let rel = (ours - want).abs() / want.abs();
        worst = worst.max(rel);
        o.check(
            rel <= 0.05,
            format!("coefficient {}: ours {ours} reference {want}", m.render(&["x".into(), "y".into()])),
        );
    }
    let extra: Vec<&Monomial> = cleared.terms().map(|(m, _)| m).filter(|m| reference.coeff(m) == rat(0, 1)).collect();
    o.check(extra.is_empty(), format!("{} monomials absent from the reference sextic", extra.len()));
    o.notes.push(format!("max relative coefficient error {worst:.3}"));

    let prob = build_sos_feasibility(&cleared).unwrap();
    let out = solve_sos(&prob, &SosOptions::default());
    match &out.certificate {
        Some(c) => {
            o.check(c.residual <= EPS_RES, format!("SOS residual {:e}", c.residual));
            o.check(c.min_eig >= -EPS_EIG, format!("SOS min_eig {:e}", c.min_eig));
        }
        None => o.check(false, format!("SOS status {:?}", out.status())),
    }
    o.within(start, Duration::from_secs(10));
    o
}

fn synthesis_and_closed_loop() -> Outcome {
    let mut o = Outcome::new();
    let start = Instant::now();
    let pf = load("planar_plant");
    let plant = pf.controlled().unwrap();
    let spec = pf.synthesis_spec(pf.mode(None).unwrap()).unwrap();
    o.check(spec.gamma == rat(5, 2) && spec.deg_a == 0 && spec.deg_c == 3, "gamma 5/2, constant a, deg c 3");
    let r = synthesize_controller(&plant, &spec, &VerifyOptions::default()).unwrap();
    o.check(r.search_status == Some(SdpStatus::Feasible), format!("search status {:?}", r.search_status));
    o.check(r.verdict == CertVerdict::Certified, format!("verdict {:?}", r.verdict));
    let valid = r.outcome.as_ref().and_then(|x| x.certificate.as_ref()).is_some_and(|c| c.is_valid(EPS_RES, EPS_EIG));
    o.check(valid, "certificate valid");
    let Some(u) = r.controller.as_ref() else {
        o.check(false, "no controller");
        return o;
    };
    let cfg = pf.sim_config(None).unwrap();
    o.check(
        cfg.paths == 500 && cfg.h == 1e-3 && cfg.horizon == 30.0,
        format!("N = {}, h = {}, T = {}, seed = {}", cfg.paths, cfg.h, cfg.horizon, cfg.seed),
    );
    let rep = simulate_controlled(&plant, u, &cfg).unwrap();
    o.check(
        rep.converged.fraction >= 0.90,
        format!(
            "closed loop converged {:.3} (escaped {:.3}, undecided {:.3})",
            rep.converged.fraction, rep.escaped.fraction, rep.undecided.fraction
        ),
    );
    o.within(start, Duration::from_secs(300));
    o
}

fn monte_carlo() -> Outcome {
    let mut o = Outcome::new();
    let e1 = load("example1");
    let cfg1 = e1.sim_config(None).unwrap();
    let r1 = run_mc(&e1.system().unwrap(), &cfg1).unwrap();
    o.check(cfg1.paths == 1000, format!("example1 N = {}", cfg1.paths));
    o.check(r1.converged.fraction >= 0.95, format!("example1 converged {:.3}", r1.converged.fraction));

    let e3 = load("example3");
    let cfg3 = e3.sim_config(None).unwrap();
    let r3 = run_mc(&e3.system().unwrap(), &cfg3).unwrap();
    o.check(r3.escaped.fraction >= 0.95, format!("example3 escaped {:.3}", r3.escaped.fraction));

    for name in ["example1", "example2", "example3"] {
        let pf = load(name);
        let sys = pf.system().unwrap();
        let n = sys.nvars();
        let cfg =
            SimConfig { paths: 1, init: InitialSampler::Fixed(vec![vec![0.0; n]]), ..pf.sim_config(None).unwrap() };
        let trace = trace_path(&CompiledSystem::new(&sys), &cfg, 0, 1).unwrap();
        let still = trace.iter().all(|row| row.state.iter().all(|&v| v == 0.0));
        o.check(still && trace.len() > cfg.steps(), format!("{name}: origin fixed for {} steps", cfg.steps()));
    }
    o
}

fn arb_poly(n: usize, max_deg: u32, max_terms: usize) -> impl Strategy<Value = QPoly> {
    prop::collection::vec((prop::collection::vec(0..=max_deg, n), -5i64..=5, 1i64..=3), 0..=max_terms).prop_map(
        move |terms| {
            let terms = terms.into_iter().filter(|(e, _, _)| e.iter().sum::<u32>() <= max_deg);
            QPoly::from_terms(n, terms.map(|(e, a, b)| (e, rat(a, b))))
        },
    )
}

fn arb_system() -> impl Strategy<Value = (SdeSystem, BExpr)> {
    (1usize..=3).prop_flat_map(|n| {
        (
            prop::collection::vec(1i64..=3, n),
            0i64..=2,
            prop::collection::vec(arb_poly(n, 3, 4), n),
            prop::collection::vec(prop::collection::vec(arb_poly(n, 3, 3), n), 0..=2),
            arb_poly(n, 2, 3),
            -3i64..=3,
        )
            .prop_map(move |(w, c0, drift, noise, num, g)| {
                let mut b = QPoly::constant(n, rat(c0, 1));
                for (i, wi) in w.into_iter().enumerate() {
                    b = &b + &QPoly::var(n, i).pow(2).scale(&rat(wi, 1));
                }
                let b = Arc::new(b);
                let sys = SdeSystem::from_polys(b.clone(), drift, noise).unwrap();
                (sys, BExpr::term(num, rat(g, 2), &b).unwrap())
            })
    })
}

fn time_change_identity() -> Outcome {
    let mut o = Outcome::new();
    let config = Config { cases: 50, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let count = std::cell::Cell::new(0usize);
    let result = runner.run(&arb_system(), |(sys, d)| {
        count.set(count.get() + 1);
        let c = BExpr::power(sys.base(), rat(-2, 1)).unwrap();
        let (changed, inv_c) = time_change(&sys, &c).unwrap();
        let lhs = adjoint_generator(&changed, &d.try_mul(&inv_c).unwrap()).unwrap();
        prop_assert_eq!(lhs, adjoint_generator(&sys, &d).unwrap());
        Ok(())
    });
    o.check(
        result.is_ok(),
        format!(
            "{} systems, {}",
            count.get(),
            result.err().map(|e| e.to_string()).unwrap_or_else(|| "all equal".into())
        ),
    );
    o
}

fn sos_soundness() -> Outcome {
    let mut o = Outcome::new();
    let opts = SosOptions::default();
    let squares = [
        p2(&[(2, 0, 1, 1), (1, 1, 1, 1), (0, 2, 1, 1)]).pow(2),
        p2(&[(1, 0, 1, 1), (0, 1, -1, 1), (2, 1, 1, 1), (0, 0, 1, 2)]).pow(2),
        p2(&[(0, 0, 1, 1), (2, 1, 1, 1), (0, 3, -1, 1)]).pow(2),
    ];
    let mut solved: Vec<(String, SdpProblem, sdecert::sdp::SdpSolution)> = Vec::new();
    for (k, q) in squares.iter().enumerate() {
        let prob = build_sos_feasibility(q).unwrap();
        let out = solve_sos(&prob, &opts);
        let res = out.certificate.as_ref().map_or(f64::INFINITY, |c| c.residual);
        o.check(out.certified() && res <= 1e-9, format!("square {k}: residual {res:e}"));
        solved.push((format!("square {k}"), prob.sdp.clone(), out.solution));
    }

    let motzkin = p2(&[(4, 2, 1, 1), (2, 4, 1, 1), (2, 2, -3, 1), (0, 0, 1, 1)]);
    let mprob = build_sos_feasibility(&motzkin).unwrap();
    let mout = solve_sos(&mprob, &opts);
    o.check(!mout.certified(), format!("Motzkin rejected ({:?})", mout.status()));
    if let Some(y) = &mout.solution.farkas {
        o.check(verify_farkas(&mprob.sdp, y, 1e-6), "Motzkin infeasibility ray verified");
    }
    solved.push(("motzkin".into(), mprob.sdp.clone(), mout.solution));

    let mut fixtures: Vec<(String, SdpProblem)> = Vec::new();
    for name in ["example1", "example2", "example3", "planar_plant_closed", "linear1d", "sign_flipped"] {
        let r = certify(&load(name));
        if let (Some(prob), Some(out)) = (r.sos_problem, r.outcome) {
            fixtures.push((name.into(), prob.sdp.clone()));
            solved.push((name.into(), prob.sdp, out.solution));
        }
    }
    let pf = load("planar_plant");
    let r = synthesize_controller(
        &pf.controlled().unwrap(),
        &pf.synthesis_spec(pf.mode(None).unwrap()).unwrap(),
        &VerifyOptions::default(),
    )
    .unwrap();
    if let Some(search) = r.search {
        fixtures.push(("planar_plant search".into(), search.sdp));
    }
    if let (Some(prob), Some(out)) = (r.sos_problem, r.outcome) {
        solved.push(("planar_plant synthesized".into(), prob.sdp, out.solution));
    }
    let sextic = prove_sos(&reference_sextic(), &opts).unwrap();
    o.notes.push(format!("reference sextic SOS status {:?}", sextic.status()));
    let sextic_prob = build_sos_feasibility(&reference_sextic()).unwrap().sdp;
    solved.push(("reference sextic".into(), sextic_prob, sextic.solution));

    let mut feasible = 0;
    for (name, sdp, sol) in &solved {
        if sol.status == SdpStatus::Feasible {
            feasible += 1;
            let v = verify_solution(sdp, &sol.blocks, &sol.free, EPS_RES, EPS_EIG);
            o.check(
                v.passed,
                format!("{name}: verifier residual {:e} min_eig {:e}", v.primal_residual, v.min_eigenvalue),
            );
        }
    }
    o.notes.push(format!("{feasible} feasible solutions verified"));

    let golden = std::fs::read_to_string(root().join("crates/core/tests/data/offdiag.dat-s")).unwrap();
    let g = read_sdpa(&golden).unwrap();
    o.check(write_sdpa(&g) == golden, "golden SDPA file rewrites byte-identically");
    fixtures.push(("golden".into(), g));
    for (_, sdp, _) in &solved {
        fixtures.push(("solved".into(), sdp.clone()));
    }
    let total = fixtures.len();
    let bad: Vec<&str> = fixtures
        .iter()
        .filter(|(_, p)| read_sdpa(&write_sdpa(p)).ok().as_ref() != Some(p))
        .map(|(n, _)| n.as_str())
        .collect();
    o.check(bad.is_empty(), format!("SDPA round trip on {total} problems, mismatches {bad:?}"));
    o
}

fn condition_checkers() -> Outcome {
    let mut o = Outcome::new();
    let e1 = load("example1");
    let integrable = check_integrability(&e1.density().unwrap(), None).unwrap();
    o.check(integrable.verdict == Verdict::Holds, format!("example1 integrability {:?}", integrable.verdict));
    let r = certify(&e1);
    let route = r.condition("lipschitz_route").map(|c| c.verdict);
    o.check(route == Some(Verdict::Marginal), format!("example1 combined check at p = 1: {route:?}"));
    let g1 = check_growth(&e1.system().unwrap(), 1).unwrap();
    o.check(g1.verdict == Verdict::Holds, format!("example1 growth p = 1: {:?}", g1.verdict));
    let g5 = check_growth(&load("degree5").system().unwrap(), 1).unwrap();
    o.check(g5.verdict == Verdict::Fails, format!("degree-5 growth p = 1: {:?}", g5.verdict));
    o
}

fn run_cli(args: &[&str]) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_sdecert")).args(args).output().expect("binary runs").status.code().unwrap_or(-1)
}

fn determinism() -> Outcome {
    let mut o = Outcome::new();
    let dir = tempfile::tempdir().unwrap();
    let runs = [
        ("verify", "example1", vec![]),
        ("verify", "example2", vec![]),
        ("verify", "malformed", vec![]),
        ("synthesize", "planar_plant", vec![]),
        ("simulate", "example3", vec!["--seed", "17"]),
        ("simulate", "planar_plant_feedback", vec![]),
        ("check", "example1", vec![]),
        ("sweep", "planar_plant", vec![]),
    ];
    for (cmd, name, extra) in runs {
        let file = problem_path(name);
        let mut reports = Vec::new();
        for k in 0..2 {
            let json = dir.path().join(format!("{cmd}-{name}-{k}.json"));
            let mut args = vec![cmd, file.to_str().unwrap(), "--json", json.to_str().unwrap(), "-q"];
            args.extend(extra.iter().copied());
            run_cli(&args);
            reports.push(std::fs::read(&json).unwrap_or_default());
        }
        o.check(!reports[0].is_empty() && reports[0] == reports[1], format!("{cmd} {name}"));
    }
    o
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 symbolic known answers", symbolic_known_answers),
        ("2 reference sextic forward check", forward_check),
        ("3 synthesis and closed-loop Monte Carlo", synthesis_and_closed_loop),
        ("4 Monte Carlo vs theory", monte_carlo),
        ("5 time-change identity", time_change_identity),
        ("6 SOS/SDP soundness", sos_soundness),
        ("7 condition checkers", condition_checkers),
        ("8 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let o = f();
        if o.failures.is_empty() {
            println!("PASS [{name}] {}", o.notes.join("; "));
        } else {
            failed += 1;
            println!("FAIL [{name}] {} | passed: {}", o.failures.join("; "), o.notes.join("; "));
        }
    }
    println!("acceptance: {} of 8 criteria pass", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
