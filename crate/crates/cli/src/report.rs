//! JSON reports: schema-versioned, sorted keys, no timestamps.

use std::io::Write;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use sdecert::poly::{default_names, QPoly};
use sdecert::sos::{sig, SosOutcome};
use sdecert::synth::{CertificateResult, Controller};

pub const SCHEMA: &str = "sdecert-report/1";

pub fn digest(input: &[u8]) -> String {
    hex::encode(Sha256::digest(input))
}

pub fn header(command: &str, input: &[u8]) -> Value {
    json!({
        "schema": SCHEMA,
        "tool": "sdecert",
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "input_sha256": digest(input),
    })
}

fn names_for(n: usize, names: Option<&[String]>) -> Vec<String> {
    names.map(<[String]>::to_vec).unwrap_or_else(|| default_names(n))
}

pub fn outcome_json(o: &SosOutcome, names: &[String]) -> Value {
    let s = &o.solution;
    let certificate = o.certificate.as_ref().map(|c| {
        json!({
            "residual": c.residual,
            "min_eig": c.min_eig,
            "params": c.params,
            "valid": c.is_valid(o.eps_res, o.eps_eig),
            "blocks": c.blocks.iter().map(|b| json!({
                "label": b.label,
                "basis": b.basis.iter().map(|m| m.render(names)).collect::<Vec<_>>(),
                "multiplier": b.multiplier.render(names),
                "min_eig": b.min_eig,
                "gram": (0..b.gram.nrows()).map(|r| (0..b.gram.ncols()).map(|c| b.gram[(r, c)]).collect::<Vec<f64>>()).collect::<Vec<_>>(),
            })).collect::<Vec<_>>(),
        })
    });
    json!({
        "status": s.status,
        "optimal": s.optimal,
        "certified": o.certified(),
        "iterations": s.iterations,
        "primal_residual": s.primal_residual,
        "dual_residual": s.dual_residual,
        "objective": s.objective,
        "dropped_rows": s.dropped_rows,
        "farkas_certificate": s.farkas.is_some(),
        "message": s.message,
        "tolerances": {"residual": o.eps_res, "min_eig": o.eps_eig},
        "certificate": certificate,
    })
}

pub fn controller_json(c: &Controller, names: &[String]) -> Value {
    json!({
        "numerator": c.numerator.render(names),
        "denominator": c.denominator.render(names),
        "u": c.render(names),
        "u_rounded": c.render_rounded(names, 3),
    })
}

fn poly_text(p: &QPoly, names: &[String]) -> String {
    p.render(names)
}

pub fn certificate_json(r: &CertificateResult, names: Option<&[String]>) -> Value {
    let names = names_for(r.generator.nvars(), names);
    json!({
        "verdict": r.verdict,
        "mode": r.mode,
        "sos_certified": r.sos_certified(),
        "density": r.density.render(&names),
        "generator": r.generator.render(&names),
        "target": poly_text(&r.target, &names),
        "target_degree": r.target.degree(),
        "shift": r.shift.to_string(),
        "sign": r.sign,
        "controller": r.controller.as_ref().map(|c| controller_json(c, &names)),
        "conditions": r.conditions,
        "notes": r.notes,
        "sos": r.outcome.as_ref().map(|o| outcome_json(o, &names)),
        "sdp_size": r.sos_problem.as_ref().map(|p| json!({
            "blocks": p.sdp.blocks,
            "constraints": p.sdp.constraints.len(),
            "free_vars": p.sdp.free_vars,
        })),
        "search": r.search.as_ref().map(|p| json!({
            "status": r.search_status,
            "blocks": p.sdp.blocks,
            "constraints": p.sdp.constraints.len(),
            "params": p.param_labels,
        })),
    })
}

/// One-line rendering of a float with 6 significant digits.
pub fn short(v: f64) -> String {
    sig(v, 6)
}

/// Writes to a sibling temporary file and renames it into place, so the
/// target is either absent, the old file, or complete.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| std::io::Error::other("path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

pub fn to_bytes(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("JSON values serialize");
    out.push(b'\n');
    out
}
