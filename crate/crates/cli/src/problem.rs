//! Line-oriented problem files.
//!
//! ```text
//! # comment
//! vars x y
//! base = x^2 + y^2
//! drift = [2*x^3 + x^2*y - 6*x*y^2 + 5*y^3, 0]
//! noise 1 = [x^2 + y^2, -(x^2 + y^2)]
//! control = [0, 1]
//! density a = 1; gamma = 5/2
//! synthesis deg_a = 0; deg_c = 3; lambda = 1; gamma = 5/2
//! constraints = [1 - x^2 - y^2]
//! feedback = -2.7*x^3 + 4.6*x^2*y
//! mode = stabilize
//! sim h = 1e-3; horizon = 30; paths = 500; seed = 1; box = [-1, 1]; exclude = 0.05
//! sweep gammas = [2, 5/2, 3]; deg_c = [1, 3]
//! ```
//!
//! `vars` comes first. Drift, noise and control entries may use `base`
//! with any rational power; all other expressions are polynomials.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use sdecert::mc::{InitialSampler, SimConfig};
use sdecert::ops::{DensityCandidate, SdeSystem};
use sdecert::poly::{rat_to_f64, BExpr, QPoly};
use sdecert::synth::{ControlledSdeSystem, Controller, Mode, SynthesisSpec};

use crate::expr::{render_num, tokenize, Expr, ParseError, Parser, Tok};

#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    pub a: Expr,
    pub gamma: BigRational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthesis {
    pub deg_a: u32,
    pub deg_c: u32,
    pub lambda: BigRational,
    pub gamma: BigRational,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ModeName {
    Stabilize,
    Escape,
    InvariantSet,
}

impl ModeName {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "stabilize" => Some(ModeName::Stabilize),
            "escape" => Some(ModeName::Escape),
            "invariant-set" | "invariant_set" => Some(ModeName::InvariantSet),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ModeName::Stabilize => "stabilize",
            ModeName::Escape => "escape",
            ModeName::InvariantSet => "invariant-set",
        }
    }
}

/// Simulation fields as written; unset fields take [`SimConfig`] defaults.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimFields {
    pub values: BTreeMap<String, SimValue>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SimValue {
    Num(BigRational),
    List(Vec<BigRational>),
    Flag(bool),
}

const SIM_KEYS: [&str; 12] =
    ["h", "horizon", "paths", "seed", "box", "exclude", "start", "sphere", "eps_conv", "dwell", "r_escape", "jacobian"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sweep {
    pub gammas: Vec<BigRational>,
    pub deg_c: Vec<u32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProblemFile {
    pub vars: Vec<String>,
    pub base: Option<Expr>,
    pub drift: Vec<Expr>,
    /// `(k, column)` in increasing `k`, starting at 1.
    pub noise: Vec<(u32, Vec<Expr>)>,
    pub control: Option<Vec<Expr>>,
    pub density: Option<Density>,
    pub synthesis: Option<Synthesis>,
    pub constraints: Option<Vec<Expr>>,
    pub feedback: Option<Expr>,
    pub mode: Option<ModeName>,
    pub sim: Option<SimFields>,
    pub sweep: Option<Sweep>,
}

fn number(p: &mut Parser) -> Result<BigRational, ParseError> {
    let t = p.peek().clone();
    match p.expr()? {
        Expr::Num(q) => Ok(q),
        _ => Err(ParseError::new(t.line, t.column, &["constant"], "non-constant expression")),
    }
}

fn natural(p: &mut Parser, cap: u64) -> Result<u64, ParseError> {
    let t = p.peek().clone();
    let q = number(p)?;
    match q.is_integer().then(|| q.to_integer().to_u64()).flatten() {
        Some(v) if v <= cap => Ok(v),
        _ => Err(ParseError::new(t.line, t.column, &[format!("integer in 0..={cap}").as_str()], q.to_string())),
    }
}

fn list<T>(p: &mut Parser, mut item: impl FnMut(&mut Parser) -> Result<T, ParseError>) -> Result<Vec<T>, ParseError> {
    p.expect(Tok::LBracket)?;
    let mut out = Vec::new();
    if p.eat(&Tok::RBracket) {
        return Ok(out);
    }
    loop {
        out.push(item(p)?);
        if p.eat(&Tok::RBracket) {
            return Ok(out);
        }
        if !p.eat(&Tok::Comma) {
            return Err(p.error(&[",", "]"]));
        }
    }
}

/// `key = value (; key = value)*`, each key at most once.
fn fields(
    p: &mut Parser,
    allowed: &[&str],
    mut value: impl FnMut(&mut Parser, &str) -> Result<(), ParseError>,
) -> Result<(), ParseError> {
    let mut seen = Vec::new();
    loop {
        let t = p.peek().clone();
        let (key, line, column) = p.ident("field name")?;
        if !allowed.contains(&key.as_str()) {
            return Err(ParseError::new(line, column, allowed, t.tok.describe()));
        }
        if seen.contains(&key) {
            return Err(ParseError::new(line, column, &["field not yet given"], format!("repeated `{key}`")));
        }
        seen.push(key.clone());
        p.expect(Tok::Eq)?;
        value(p, &key)?;
        if !p.eat(&Tok::Semi) {
            break;
        }
    }
    p.expect_end()
}

fn positioned(line: usize, column: usize, expected: &str, found: impl Into<String>) -> ParseError {
    ParseError::new(line, column, &[expected], found)
}

impl ProblemFile {
    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    fn check_length(&self, line: usize, column: usize, n: usize, what: &str) -> Result<(), ParseError> {
        if n != self.vars.len() {
            return Err(positioned(
                line,
                column,
                &format!("{} entries", self.vars.len()),
                format!("{n} {what} entries"),
            ));
        }
        Ok(())
    }

    fn statement(&mut self, p: &mut Parser, seen: &mut Vec<String>) -> Result<(), ParseError> {
        let (kw, line, column) = p.ident("keyword")?;
        let key = if kw == "noise" { String::new() } else { kw.clone() };
        if !key.is_empty() && seen.contains(&key) {
            return Err(positioned(line, column, "statement not yet given", format!("repeated `{kw}`")));
        }
        if kw != "vars" && self.vars.is_empty() {
            return Err(positioned(line, column, "vars", format!("`{kw}`")));
        }
        match kw.as_str() {
            "vars" => {
                while let Tok::Ident(_) = p.peek().tok {
                    let (v, vl, vc) = p.ident("variable")?;
                    if v == "base" || self.vars.contains(&v) {
                        return Err(positioned(vl, vc, "new variable name", format!("`{v}`")));
                    }
                    self.vars.push(v);
                }
                if self.vars.is_empty() {
                    return Err(p.error(&["variable"]));
                }
                p.expect_end()?;
            }
            "base" => {
                p.expect(Tok::Eq)?;
                p.set_allow_base(false);
                self.base = Some(p.expr()?);
                p.expect_end()?;
            }
            "drift" | "control" | "constraints" => {
                p.expect(Tok::Eq)?;
                p.set_allow_base(kw != "constraints");
                let t = p.peek().clone();
                let v = list(p, |p| p.expr())?;
                p.expect_end()?;
                match kw.as_str() {
                    "drift" => {
                        self.check_length(t.line, t.column, v.len(), "drift")?;
                        self.drift = v;
                    }
                    "control" => {
                        self.check_length(t.line, t.column, v.len(), "control")?;
                        self.control = Some(v);
                    }
                    _ => self.constraints = Some(v),
                }
            }
            "noise" => {
                let t = p.peek().clone();
                let k = natural(p, 1 << 16)? as u32;
                if k as usize != self.noise.len() + 1 {
                    return Err(positioned(
                        t.line,
                        t.column,
                        &format!("noise index {}", self.noise.len() + 1),
                        k.to_string(),
                    ));
                }
                p.expect(Tok::Eq)?;
                p.set_allow_base(true);
                let t = p.peek().clone();
                let v = list(p, |p| p.expr())?;
                p.expect_end()?;
                self.check_length(t.line, t.column, v.len(), "noise")?;
                self.noise.push((k, v));
            }
            "feedback" => {
                p.expect(Tok::Eq)?;
                p.set_allow_base(false);
                self.feedback = Some(p.expr()?);
                p.expect_end()?;
            }
            "mode" => {
                p.expect(Tok::Eq)?;
                let (m, ml, mc) = p.ident("mode name")?;
                let name = if m == "invariant" && p.eat(&Tok::Minus) {
                    let (s, _, _) = p.ident("set")?;
                    format!("invariant-{s}")
                } else {
                    m
                };
                self.mode = Some(ModeName::parse(&name).ok_or_else(|| {
                    ParseError::new(ml, mc, &["stabilize", "escape", "invariant-set"], format!("`{name}`"))
                })?);
                p.expect_end()?;
            }
            "density" => {
                p.set_allow_base(false);
                let (mut a, mut gamma) = (None, None);
                fields(p, &["a", "gamma"], |p, k| {
                    match k {
                        "a" => a = Some(p.expr()?),
                        _ => gamma = Some(number(p)?),
                    }
                    Ok(())
                })?;
                let (Some(a), Some(gamma)) = (a, gamma) else {
                    return Err(positioned(line, column, "both `a` and `gamma`", "incomplete density"));
                };
                self.density = Some(Density { a, gamma });
            }
            "synthesis" => {
                let mut s = Synthesis {
                    deg_a: 0,
                    deg_c: 0,
                    lambda: BigRational::from_integer(1.into()),
                    gamma: BigRational::zero(),
                };
                let mut got = Vec::new();
                fields(p, &["deg_a", "deg_c", "lambda", "gamma"], |p, k| {
                    match k {
                        "deg_a" => s.deg_a = natural(p, 64)? as u32,
                        "deg_c" => s.deg_c = natural(p, 64)? as u32,
                        "lambda" => s.lambda = number(p)?,
                        _ => s.gamma = number(p)?,
                    }
                    got.push(k.to_string());
                    Ok(())
                })?;
                if !got.iter().any(|k| k == "deg_c") || !got.iter().any(|k| k == "gamma") {
                    return Err(positioned(line, column, "`deg_c` and `gamma`", "incomplete synthesis"));
                }
                self.synthesis = Some(s);
            }
            "sim" => {
                let mut sim = SimFields::default();
                fields(p, &SIM_KEYS, |p, k| {
                    let v = match k {
                        "box" | "start" => SimValue::List(list(p, number)?),
                        "jacobian" => {
                            let (b, bl, bc) = p.ident("true or false")?;
                            match b.as_str() {
                                "true" => SimValue::Flag(true),
                                "false" => SimValue::Flag(false),
                                _ => return Err(ParseError::new(bl, bc, &["true", "false"], format!("`{b}`"))),
                            }
                        }
                        "paths" | "seed" => SimValue::Num(BigRational::from_integer(natural(p, u64::MAX)?.into())),
                        _ => SimValue::Num(number(p)?),
                    };
                    sim.values.insert(k.to_string(), v);
                    Ok(())
                })?;
                self.sim = Some(sim);
            }
            "sweep" => {
                let mut sw = Sweep::default();
                fields(p, &["gammas", "deg_c"], |p, k| {
                    match k {
                        "gammas" => sw.gammas = list(p, number)?,
                        _ => sw.deg_c = list(p, |p| natural(p, 64).map(|v| v as u32))?,
                    }
                    Ok(())
                })?;
                self.sweep = Some(sw);
            }
            _ => {
                return Err(ParseError::new(
                    line,
                    column,
                    &[
                        "vars",
                        "base",
                        "drift",
                        "noise",
                        "control",
                        "density",
                        "synthesis",
                        "constraints",
                        "feedback",
                        "mode",
                        "sim",
                        "sweep",
                    ],
                    format!("`{kw}`"),
                ))
            }
        }
        if !key.is_empty() {
            seen.push(key);
        }
        Ok(())
    }

    /// Canonical text; parsing it gives back an equal value.
    pub fn render(&self) -> String {
        let v = &self.vars;
        let exprs = |es: &[Expr]| es.iter().map(|e| e.render(v)).collect::<Vec<_>>().join(", ");
        let nums = |qs: &[BigRational]| qs.iter().map(render_num).collect::<Vec<_>>().join(", ");
        let mut out = vec![format!("vars {}", v.join(" "))];
        if let Some(b) = &self.base {
            out.push(format!("base = {}", b.render(v)));
        }
        if !self.drift.is_empty() {
            out.push(format!("drift = [{}]", exprs(&self.drift)));
        }
        for (k, col) in &self.noise {
            out.push(format!("noise {k} = [{}]", exprs(col)));
        }
        if let Some(c) = &self.control {
            out.push(format!("control = [{}]", exprs(c)));
        }
        if let Some(d) = &self.density {
            out.push(format!("density a = {}; gamma = {}", d.a.render(v), render_num(&d.gamma)));
        }
        if let Some(s) = &self.synthesis {
            out.push(format!(
                "synthesis deg_a = {}; deg_c = {}; lambda = {}; gamma = {}",
                s.deg_a,
                s.deg_c,
                render_num(&s.lambda),
                render_num(&s.gamma)
            ));
        }
        if let Some(g) = &self.constraints {
            out.push(format!("constraints = [{}]", exprs(g)));
        }
        if let Some(f) = &self.feedback {
            out.push(format!("feedback = {}", f.render(v)));
        }
        if let Some(m) = &self.mode {
            out.push(format!("mode = {}", m.as_str()));
        }
        if let Some(sim) = &self.sim {
            let parts: Vec<String> = sim
                .values
                .iter()
                .map(|(k, val)| match val {
                    SimValue::Num(q) => format!("{k} = {}", render_num(q)),
                    SimValue::List(qs) => format!("{k} = [{}]", nums(qs)),
                    SimValue::Flag(b) => format!("{k} = {b}"),
                })
                .collect();
            if !parts.is_empty() {
                out.push(format!("sim {}", parts.join("; ")));
            }
        }
        if let Some(sw) = &self.sweep {
            let degs: Vec<String> = sw.deg_c.iter().map(|d| d.to_string()).collect();
            out.push(format!("sweep gammas = [{}]; deg_c = [{}]", nums(&sw.gammas), degs.join(", ")));
        }
        out.join("\n") + "\n"
    }
}

pub fn parse_problem(text: &str) -> Result<ProblemFile, ParseError> {
    let mut pf = ProblemFile::default();
    let mut seen = Vec::new();
    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        last_line = i + 1;
        let toks = tokenize(raw, i + 1, 1)?;
        if toks.len() == 1 {
            continue;
        }
        let vars = pf.vars.clone();
        pf.statement(&mut Parser::new(toks, &vars, false), &mut seen)?;
    }
    if pf.vars.is_empty() {
        return Err(ParseError::new(last_line.max(1), 1, &["vars"], "end of input"));
    }
    if pf.drift.is_empty() {
        return Err(ParseError::new(last_line.max(1), 1, &["drift"], "end of input"));
    }
    Ok(pf)
}

/// Problems the parser accepts but the workflows cannot use.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BuildError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Poly(#[from] sdecert::poly::PolyError),
    #[error(transparent)]
    Ops(#[from] sdecert::ops::OpsError),
}

/// Degree of an expression tree, with `base` counted as the base degree.
fn degree_bound(e: &Expr, base_deg: u64) -> u64 {
    match e {
        Expr::Num(_) => 0,
        Expr::Var(_) => 1,
        Expr::Base => base_deg,
        Expr::Add(a, b) | Expr::Sub(a, b) => degree_bound(a, base_deg).max(degree_bound(b, base_deg)),
        Expr::Mul(a, b) => degree_bound(a, base_deg).saturating_add(degree_bound(b, base_deg)),
        Expr::Div(a, _) | Expr::Neg(a) => degree_bound(a, base_deg),
        Expr::Pow(a, q) => {
            let k = q.abs().ceil().to_integer().to_u64().unwrap_or(u64::MAX);
            degree_bound(a, base_deg).saturating_mul(k)
        }
    }
}

/// Cap on the degree of any input expression.
pub const MAX_INPUT_DEGREE: u64 = 40;

impl ProblemFile {
    fn poly(&self, e: &Expr, what: &str) -> Result<QPoly, BuildError> {
        if degree_bound(e, 1) > MAX_INPUT_DEGREE {
            return Err(BuildError::Invalid(format!("{what} exceeds degree {MAX_INPUT_DEGREE}")));
        }
        e.to_poly(self.nvars()).ok_or_else(|| BuildError::Invalid(format!("{what} must be a polynomial")))
    }

    pub fn base_poly(&self) -> Result<Arc<QPoly>, BuildError> {
        let b = match &self.base {
            Some(e) => self.poly(e, "base")?,
            None => QPoly::one(self.nvars()),
        };
        if b.is_zero() {
            return Err(BuildError::Invalid("base is zero".into()));
        }
        Ok(Arc::new(b))
    }

    fn field(&self, e: &Expr, base: &Arc<QPoly>, what: &str) -> Result<BExpr, BuildError> {
        let bd = base.degree().unwrap_or(0) as u64;
        if degree_bound(e, bd.max(1)) > MAX_INPUT_DEGREE {
            return Err(BuildError::Invalid(format!("{what} exceeds degree {MAX_INPUT_DEGREE}")));
        }
        Ok(e.to_bexpr(self.nvars(), base)?)
    }

    pub fn system(&self) -> Result<SdeSystem, BuildError> {
        let base = self.base_poly()?;
        let drift = self
            .drift
            .iter()
            .enumerate()
            .map(|(i, e)| self.field(e, &base, &format!("drift entry {}", i + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        let diffusion = self
            .noise
            .iter()
            .map(|(k, col)| {
                col.iter().map(|e| self.field(e, &base, &format!("noise {k}"))).collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SdeSystem::new(base, drift, diffusion)?)
    }

    pub fn controlled(&self) -> Result<ControlledSdeSystem, BuildError> {
        let sys = self.system()?;
        let Some(control) = &self.control else {
            return Err(BuildError::Invalid("problem has no `control` line".into()));
        };
        let base = sys.base().clone();
        let channel = control.iter().map(|e| self.field(e, &base, "control entry")).collect::<Result<Vec<_>, _>>()?;
        Ok(ControlledSdeSystem::new(sys, channel)?)
    }

    pub fn density(&self) -> Result<DensityCandidate, BuildError> {
        let Some(d) = &self.density else {
            return Err(BuildError::Invalid("problem has no `density` line".into()));
        };
        let a = self.poly(&d.a, "density numerator")?;
        Ok(DensityCandidate::new(a, self.base_poly()?, d.gamma.clone()))
    }

    pub fn constraint_polys(&self) -> Result<Vec<QPoly>, BuildError> {
        self.constraints.iter().flatten().map(|g| self.poly(g, "constraint")).collect()
    }

    /// Mode from the flag, then the file, then stabilize; invariant-set
    /// carries the constraints.
    pub fn mode(&self, flag: Option<&ModeName>) -> Result<Mode, BuildError> {
        Ok(match flag.or(self.mode.as_ref()).unwrap_or(&ModeName::Stabilize) {
            ModeName::Stabilize => Mode::Stabilize,
            ModeName::Escape => Mode::Escape,
            ModeName::InvariantSet => Mode::InvariantSet(self.constraint_polys()?),
        })
    }

    pub fn synthesis_spec(&self, mode: Mode) -> Result<SynthesisSpec, BuildError> {
        let Some(s) = &self.synthesis else {
            return Err(BuildError::Invalid("problem has no `synthesis` line".into()));
        };
        Ok(SynthesisSpec {
            base: (*self.base_poly()?).clone(),
            gamma: s.gamma.clone(),
            deg_a: s.deg_a,
            deg_c: s.deg_c,
            lambda: s.lambda.clone(),
            mode,
        })
    }

    pub fn feedback_controller(&self) -> Result<Option<Controller>, BuildError> {
        let Some(f) = &self.feedback else { return Ok(None) };
        Ok(Some(Controller { numerator: self.poly(f, "feedback")?, denominator: QPoly::one(self.nvars()) }))
    }

    /// Simulation settings; `seed` overrides the file.
    pub fn sim_config(&self, seed: Option<u64>) -> Result<SimConfig, BuildError> {
        let n = self.nvars();
        let mut cfg = SimConfig { init: InitialSampler::cube(n, -1.0, 1.0, 0.0), ..SimConfig::default() };
        let empty = BTreeMap::new();
        let values = self.sim.as_ref().map(|s| &s.values).unwrap_or(&empty);
        let num = |k: &str| -> Result<Option<&BigRational>, BuildError> {
            match values.get(k) {
                None => Ok(None),
                Some(SimValue::Num(q)) => Ok(Some(q)),
                Some(_) => Err(BuildError::Invalid(format!("sim field `{k}` must be a number"))),
            }
        };
        let f = |k: &str| -> Result<Option<f64>, BuildError> { Ok(num(k)?.map(rat_to_f64)) };
        let int = |k: &str| -> Result<Option<u64>, BuildError> {
            num(k)?
                .map(|q| {
                    q.to_integer().to_u64().ok_or_else(|| BuildError::Invalid(format!("sim field `{k}` out of range")))
                })
                .transpose()
        };
        if let Some(v) = f("h")? {
            cfg.h = v;
        }
        if let Some(v) = f("horizon")? {
            cfg.horizon = v;
        }
        if let Some(v) = int("paths")? {
            cfg.paths = usize::try_from(v).map_err(|_| BuildError::Invalid("too many paths".into()))?;
        }
        if let Some(v) = int("seed")? {
            cfg.seed = v;
        }
        if let Some(v) = f("eps_conv")? {
            cfg.eps_conv = v;
        }
        if let Some(v) = f("dwell")? {
            cfg.dwell_fraction = v;
        }
        if let Some(v) = f("r_escape")? {
            cfg.r_escape = v;
        }
        if let Some(SimValue::Flag(b)) = values.get("jacobian") {
            cfg.track_jacobian = *b;
        }
        let exclude = f("exclude")?.unwrap_or(0.0);
        let given = ["box", "start", "sphere"].iter().filter(|k| values.contains_key(**k)).count();
        if given > 1 {
            return Err(BuildError::Invalid("give at most one of `box`, `start`, `sphere`".into()));
        }
        match (values.get("box"), values.get("start"), num("sphere")?) {
            (Some(SimValue::List(b)), _, _) => {
                let [lo, hi] = b.as_slice() else {
                    return Err(BuildError::Invalid("`box` takes [lo, hi]".into()));
                };
                cfg.init = InitialSampler::cube(n, rat_to_f64(lo), rat_to_f64(hi), exclude);
            }
            (_, Some(SimValue::List(x)), _) => {
                cfg.init = InitialSampler::Fixed(vec![x.iter().map(rat_to_f64).collect()]);
            }
            (_, _, Some(r)) => cfg.init = InitialSampler::Sphere(rat_to_f64(r)),
            _ => cfg.init = InitialSampler::cube(n, -1.0, 1.0, exclude),
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate(n).map_err(|e| BuildError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}
