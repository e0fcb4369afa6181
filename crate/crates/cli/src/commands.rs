//! Subcommands and the exit-code contract.

use std::path::PathBuf;

use num_rational::BigRational;
use serde_json::{json, Value};

use sdecert::mc::{run_compiled, trace_path, write_csv, CompiledSystem, SimConfig, SimReport};
use sdecert::ops::{adjoint_generator, check_growth, check_integrability, ConditionReport, Verdict};
use sdecert::sdp::{write_sdpa, SdpStatus};
use sdecert::synth::{
    soundness_margin, sweep, synthesize_controller, verify_density, CertVerdict, CertificateResult, VerifyOptions,
};

use crate::expr::{parse_expr, ParseError};
use crate::problem::{parse_problem, BuildError, ModeName, ProblemFile};
use crate::report::{certificate_json, controller_json, header, short, to_bytes, write_atomic};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Verify,
    Synthesize,
    Simulate,
    Check,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Synthesize => "synthesize",
            Command::Simulate => "simulate",
            Command::Check => "check",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Options {
    pub mode: Option<ModeName>,
    pub sdpa_out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub json: Option<PathBuf>,
    pub strict: bool,
    pub eps_pos: Option<BigRational>,
    pub csv: Option<PathBuf>,
    pub csv_paths: usize,
    pub gammas: Option<Vec<BigRational>>,
    pub deg_c: Option<Vec<u32>>,
    pub growth_p: u32,
}

#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub summary: String,
    pub report: Value,
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("invalid problem: {0}")]
    Build(#[from] BuildError),
    #[error("{0}")]
    Input(String),
    #[error("cannot write {path}: {err}")]
    Io { path: String, err: std::io::Error },
}

struct Done {
    code: i32,
    summary: String,
    body: Value,
}

/// Parses a rational given on the command line (`0.01`, `1/100`, `1e-2`).
pub fn parse_rational(s: &str) -> Result<BigRational, String> {
    match parse_expr(s, &[]) {
        Ok(crate::expr::Expr::Num(q)) => Ok(q),
        Ok(_) => Err(format!("`{s}` is not a constant")),
        Err(e) => Err(e.to_string()),
    }
}

fn verify_options(opts: &Options) -> VerifyOptions {
    VerifyOptions { strict: opts.strict, eps_pos: opts.eps_pos.clone(), ..VerifyOptions::default() }
}

fn write_sdpa_for(opts: &Options, r: &CertificateResult) -> Result<Option<String>, Failure> {
    let Some(path) = &opts.sdpa_out else { return Ok(None) };
    let Some(prob) = r.sos_problem.as_ref().or(r.search.as_ref()) else {
        return Err(Failure::Input("no SDP was built, nothing to export".into()));
    };
    write_atomic(path, write_sdpa(&prob.sdp).as_bytes())
        .map_err(|err| Failure::Io { path: path.display().to_string(), err })?;
    Ok(Some(path.display().to_string()))
}

fn numeric_trouble(status: Option<SdpStatus>) -> bool {
    matches!(status, Some(SdpStatus::MaxIter | SdpStatus::NumericalFailure))
}

fn verdict_code(r: &CertificateResult, status: Option<SdpStatus>) -> i32 {
    match r.verdict {
        CertVerdict::Certified => EXIT_OK,
        _ if numeric_trouble(status) => EXIT_NUMERIC,
        _ => EXIT_NEGATIVE,
    }
}

fn conditions_line(r: &CertificateResult) -> String {
    r.conditions
        .iter()
        .map(|c| format!("{}={:?}{}", c.report.condition, c.report.verdict, if c.mandatory { "" } else { "*" }))
        .collect::<Vec<_>>()
        .join(" ")
}

fn verify(pf: &ProblemFile, opts: &Options) -> Result<Done, Failure> {
    let sys = pf.system()?;
    let d = pf.density()?;
    let mode = pf.mode(opts.mode.as_ref())?;
    let r = verify_density(&sys, &d, &mode, &verify_options(opts)).map_err(|e| Failure::Input(e.to_string()))?;
    let sdpa = write_sdpa_for(opts, &r)?;
    let status = r.outcome.as_ref().map(|o| o.status());
    let code = verdict_code(&r, status);
    let summary = format!(
        "verdict: {:?}\nmode: {}\ngenerator: {}\ntarget: {}\nconditions: {}\n",
        r.verdict,
        r.mode,
        r.generator.render(&pf.vars),
        r.target.render(&pf.vars),
        conditions_line(&r)
    );
    let body = json!({"certificate": certificate_json(&r, Some(&pf.vars)), "sdpa_out": sdpa});
    Ok(Done { code, summary, body })
}

fn synthesize(pf: &ProblemFile, opts: &Options) -> Result<Done, Failure> {
    let plant = pf.controlled()?;
    let spec = pf.synthesis_spec(pf.mode(opts.mode.as_ref())?)?;
    let r = synthesize_controller(&plant, &spec, &verify_options(opts)).map_err(|e| Failure::Input(e.to_string()))?;
    let sdpa = write_sdpa_for(opts, &r)?;
    let code = match r.verdict {
        CertVerdict::Certified => EXIT_OK,
        _ if numeric_trouble(r.search_status) || numeric_trouble(r.outcome.as_ref().map(|o| o.status())) => {
            EXIT_NUMERIC
        }
        _ => EXIT_NEGATIVE,
    };
    let margin = r.controller.is_some().then(|| soundness_margin(&r, 2000, opts.seed.unwrap_or(0), 2.0));
    let controller = r.controller.as_ref().map(|c| c.render_rounded(&pf.vars, 4)).unwrap_or_else(|| "none".into());
    let summary = format!(
        "verdict: {:?}\nsearch: {:?}\ncontroller: u = {}\ntarget: {}\nconditions: {}\n",
        r.verdict,
        r.search_status,
        controller,
        r.target.render(&pf.vars),
        conditions_line(&r)
    );
    let body = json!({
        "certificate": certificate_json(&r, Some(&pf.vars)),
        "soundness_margin": margin,
        "sdpa_out": sdpa,
    });
    Ok(Done { code, summary, body })
}

fn headline(mode: &Option<ModeName>, rep: &SimReport) -> (&'static str, f64) {
    match mode {
        Some(ModeName::Escape) => ("escaped", rep.escaped.fraction),
        _ => ("converged", rep.converged.fraction),
    }
}

fn simulate(pf: &ProblemFile, opts: &Options) -> Result<Done, Failure> {
    let cfg: SimConfig = pf.sim_config(opts.seed)?;
    let (compiled, controller) = match pf.feedback_controller()? {
        Some(u) => {
            let plant = pf.controlled()?;
            (CompiledSystem::controlled(&plant, &u), Some(controller_json(&u, &pf.vars)))
        }
        None => (CompiledSystem::new(&pf.system()?), None),
    };
    let rep = run_compiled(&compiled, &cfg).map_err(|e| Failure::Input(e.to_string()))?;
    let mut csv = None;
    if let Some(path) = &opts.csv {
        let stride = (cfg.steps() / 1000).max(1);
        let k = opts.csv_paths.clamp(1, cfg.paths);
        let traces = (0..k)
            .map(|i| trace_path(&compiled, &cfg, i, stride).map(|t| (i, t)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure::Input(e.to_string()))?;
        let mut buf = Vec::new();
        write_csv(&mut buf, &traces).expect("in-memory write");
        write_atomic(path, &buf).map_err(|err| Failure::Io { path: path.display().to_string(), err })?;
        csv = Some(path.display().to_string());
    }
    let mode = opts.mode.clone().or(pf.mode.clone());
    let (what, frac) = headline(&mode, &rep);
    let summary = format!(
        "paths: {}\nconverged: {} ({})\nescaped: {} ({})\nundecided: {} ({})\n{what} fraction: {}\n",
        rep.paths,
        rep.converged.count,
        short(rep.converged.fraction),
        rep.escaped.count,
        short(rep.escaped.fraction),
        rep.undecided.count,
        short(rep.undecided.fraction),
        short(frac)
    );
    let body = json!({
        "simulation": rep,
        "headline": {"class": what, "fraction": frac},
        "controller": controller,
        "csv_out": csv,
    });
    Ok(Done { code: EXIT_OK, summary, body })
}

fn check(pf: &ProblemFile, opts: &Options) -> Result<Done, Failure> {
    let sys = pf.system()?;
    let mut reports: Vec<ConditionReport> = Vec::new();
    let mut notes = Vec::new();
    let eq = sys.fields_vanish_at_origin().map_err(|e| Failure::Input(e.to_string()))?;
    match check_growth(&sys, opts.growth_p) {
        Ok(r) => reports.push(r),
        Err(e) => notes.push(format!("growth check skipped: {e}")),
    }
    let mut generator = Value::Null;
    if pf.density.is_some() {
        let d = pf.density()?;
        reports.push(check_integrability(&d, None).map_err(|e| Failure::Input(e.to_string()))?);
        let g = adjoint_generator(&sys, &d.to_bexpr().map_err(|e| Failure::Input(e.to_string()))?)
            .map_err(|e| Failure::Input(e.to_string()))?;
        let cleared = g.clear_base().ok();
        generator = json!({
            "adjoint_generator": g.render(&pf.vars),
            "cleared": cleared.as_ref().map(|(p, s)| json!({"polynomial": p.render(&pf.vars), "shift": s.to_string()})),
        });
    }
    let failed = reports.iter().any(|r| r.verdict == Verdict::Fails) || !eq;
    let summary = format!(
        "equilibrium at origin: {eq}\n{}{}",
        reports.iter().map(|r| format!("{}: {:?}\n", r.condition, r.verdict)).collect::<String>(),
        notes.iter().map(|n| format!("note: {n}\n")).collect::<String>()
    );
    let body = json!({
        "equilibrium_at_origin": eq,
        "growth_p": opts.growth_p,
        "conditions": reports,
        "generator": generator,
        "notes": notes,
    });
    Ok(Done { code: if failed { EXIT_NEGATIVE } else { EXIT_OK }, summary, body })
}

fn run_sweep(pf: &ProblemFile, opts: &Options) -> Result<Done, Failure> {
    let plant = pf.controlled()?;
    let spec = pf.synthesis_spec(pf.mode(opts.mode.as_ref())?)?;
    let gammas = opts
        .gammas
        .clone()
        .or_else(|| pf.sweep.as_ref().map(|s| s.gammas.clone()))
        .unwrap_or_else(|| vec![spec.gamma.clone()]);
    let degs =
        opts.deg_c.clone().or_else(|| pf.sweep.as_ref().map(|s| s.deg_c.clone())).unwrap_or_else(|| vec![spec.deg_c]);
    if gammas.is_empty() || degs.is_empty() {
        return Err(Failure::Input("sweep grid is empty".into()));
    }
    let rows = sweep(&plant, &spec, &gammas, &degs, &verify_options(opts));
    let any = rows.iter().any(|r| r.verdict == Some(CertVerdict::Certified));
    let summary = rows
        .iter()
        .map(|r| {
            let v = r.verdict.map(|v| format!("{v:?}")).unwrap_or_else(|| "error".into());
            let mut line = format!(
                "gamma={} deg_c={} verdict={} search={:?} status={:?}",
                r.gamma, r.deg_c, v, r.search_status, r.status
            );
            for note in r.notes.iter().chain(&r.error) {
                line.push_str(&format!("\n    {note}"));
            }
            line.push('\n');
            line
        })
        .collect();
    Ok(Done { code: if any { EXIT_OK } else { EXIT_NEGATIVE }, summary, body: json!({"rows": rows}) })
}

/// Runs one subcommand on problem text. The report is written to
/// `opts.json` whenever requested, including on input errors.
pub fn run(cmd: Command, text: &str, opts: &Options) -> Outcome {
    let mut report = header(cmd.name(), text.as_bytes());
    let flags = json!({
        "mode": opts.mode.as_ref().map(ModeName::as_str),
        "seed": opts.seed,
        "strict_side_conditions": opts.strict,
        "eps_pos": opts.eps_pos.as_ref().map(|q| q.to_string()),
    });
    report["flags"] = flags;
    let result = parse_problem(text).map_err(Failure::from).and_then(|pf| {
        let mode = opts.mode.as_ref().or(pf.mode.as_ref()).unwrap_or(&ModeName::Stabilize).as_str();
        let done = match cmd {
            Command::Verify => verify(&pf, opts),
            Command::Synthesize => synthesize(&pf, opts),
            Command::Simulate => simulate(&pf, opts),
            Command::Check => check(&pf, opts),
            Command::Sweep => run_sweep(&pf, opts),
        };
        done.map(|d| (d, mode.to_string()))
    });
    let (code, summary) = match result {
        Ok((d, mode)) => {
            report["mode"] = json!(mode);
            report["result"] = d.body;
            (d.code, d.summary)
        }
        Err(e) => {
            let code = EXIT_INPUT;
            let detail = match &e {
                Failure::Parse(p) => {
                    json!({"kind": "parse", "line": p.line, "column": p.column, "expected": p.expected, "found": p.found})
                }
                _ => json!({"kind": "input"}),
            };
            report["error"] = json!({"message": e.to_string(), "detail": detail});
            (code, format!("error: {e}\n"))
        }
    };
    report["exit_code"] = json!(code);
    let mut out = Outcome { code, summary, report };
    if let Some(path) = &opts.json {
        if let Err(err) = write_atomic(path, &to_bytes(&out.report)) {
            out.summary.push_str(&format!("error: cannot write {}: {err}\n", path.display()));
            out.code = EXIT_INPUT;
        }
    }
    out
}
