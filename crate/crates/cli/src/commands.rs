//! Subcommand implementations.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use grr_core::dgp::{simulate, DgpSpec};
use grr_core::diagnostics::{breakdown_value, correlation_map, lopo, zoo_information, BREAKDOWN_RESOLUTION};
use grr_core::io::{load_panel, load_proxies, write_panel, write_proxy, Panel, ProxySeries};
use grr_core::quality::{solve_cstar, with_oracle_gap, TauBoundResult};
use grr_core::restrictions::{compile_sign, LinearColumnConstraint};
use grr_core::setid::{format_tau, point_identified_irf, sweep, IdentifiedSetGrid, SolverStats};
use grr_core::var::{attach_moments, estimate_var, ReducedForm};
use grr_core::{Error as CoreError, Tau};

use crate::config::{DataConfig, OutputConfig, RunConfig, VarRef};
use crate::output::{read_artifact, with_hash_column, write_artifact, write_atomic};
use crate::{Cli, Command};

/// Marker for exit code 3.
#[derive(Debug)]
pub struct Infeasible(pub String);

impl std::fmt::Display for Infeasible {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for Infeasible {}

pub const REDUCED_FORM: &str = "reduced_form.json";
pub const TAUBAR: &str = "taubar.json";
pub const BOUNDS: &str = "bounds.json";

struct Ctx {
    cfg: RunConfig,
    hash: String,
    out: PathBuf,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Ctx> {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| anyhow!("this command needs --config <file>"))?;
        let mut overrides = cli.overrides.clone();
        if let Some(s) = cli.seed {
            overrides.push(format!("solver.seed={s}"));
        }
        if let Command::Breakdown { claims: Some(c), .. } = &cli.command {
            let abs = std::path::absolute(c)?;
            overrides.push(format!("diagnostics.claims={}", toml::Value::String(abs.display().to_string())));
        }
        let cfg = RunConfig::load(path, &overrides)?;
        let hash = cfg.hash()?;
        let out = match (&cli.out, &cfg.output.dir) {
            (Some(o), _) => o.clone(),
            (None, Some(d)) => d.clone(),
            (None, None) => path.parent().unwrap_or(Path::new(".")).join("out"),
        };
        Ok(Ctx { cfg, hash, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn reduced_form(&self) -> Result<ReducedForm> {
        read_artifact(&self.path(REDUCED_FORM), &self.hash, "estimate")
    }

    fn bounds(&self) -> Result<BoundsPayload> {
        read_artifact(&self.path(BOUNDS), &self.hash, "bounds")
    }

    fn sign(&self, rf: &ReducedForm) -> Result<Vec<LinearColumnConstraint>> {
        Ok(compile_sign(&self.cfg.sign_spec(&rf.names)?, rf)?)
    }

    fn load_data(&self) -> Result<(Panel, Vec<ProxySeries>)> {
        let d = &self.cfg.data;
        let panel = load_panel(&d.panel, d.date_column.as_deref())?;
        let proxies = load_proxies(&d.proxies, &panel, d.missing_policy, d.date_column.as_deref())?;
        Ok((panel, proxies))
    }

    /// Configured grid, or τ = 0 plus log-spaced points up to τ̄ (or the cap
    /// when τ̄ is infinite).
    fn tau_grid(&self) -> Result<Vec<Tau>> {
        if let Some(g) = &self.cfg.tau.grid {
            return Ok(g.clone());
        }
        let report: TaubarReport = read_artifact(&self.path(TAUBAR), &self.hash, "taubar")
            .context("no tau.grid configured, so the default grid needs τ̄")?;
        let tb = report.bound.tau_bar;
        let cap = if tb.is_finite() { tb } else { self.cfg.tau.cap };
        Ok(default_grid(cap, self.cfg.tau.size))
    }

    fn diagnostic_tau(&self, flag: Option<f64>, grid: &[Tau]) -> Result<Tau> {
        flag.or(self.cfg.diagnostics.tau)
            .or_else(|| grid.iter().rev().copied().find(|t| t.is_finite()))
            .ok_or_else(|| anyhow!("no finite τ available; pass --tau"))
    }

    fn summary(&self, command: &str, extra: Value) -> Value {
        let mut v = serde_json::json!({ "command": command, "config_hash": self.hash });
        if let (Some(obj), Value::Object(more)) = (v.as_object_mut(), extra) {
            obj.extend(more);
        }
        v
    }
}

/// `[0] ∪ {cap·100^{k/(size−1)−1}}`, i.e. `size` log-spaced points on
/// `[cap/100, cap]`.
pub fn default_grid(cap: f64, size: usize) -> Vec<Tau> {
    let mut g = vec![0.0];
    if cap > 0.0 {
        let steps = (size.max(2) - 1) as f64;
        g.extend((0..size.max(2)).map(|k| cap * 100f64.powf(k as f64 / steps - 1.0)));
    }
    g
}

#[derive(Debug, Serialize, Deserialize)]
struct TaubarReport {
    proxies: Vec<String>,
    bound: TauBoundResult,
}

#[derive(Debug, Serialize, Deserialize)]
struct BoundsPayload {
    grid: IdentifiedSetGrid,
    sign_only: IdentifiedSetGrid,
    stats: SolverStats,
}

/// Runs one subcommand and returns its one-line JSON summary.
pub fn run(cli: Cli) -> Result<Value> {
    if let Command::Simulate { spec, t } = &cli.command {
        return cmd_simulate(&cli, spec.as_deref(), *t);
    }
    let ctx = Ctx::new(&cli)?;
    match &cli.command {
        Command::Estimate => cmd_estimate(&ctx),
        Command::Taubar { oracle_points } => cmd_taubar(&ctx, *oracle_points),
        Command::Bounds => cmd_bounds(&ctx),
        Command::Breakdown { no_refine, .. } => cmd_breakdown(&ctx, !no_refine),
        Command::Info { tau } => cmd_info(&ctx, *tau),
        Command::Lopo { tau } => cmd_lopo(&ctx, *tau),
        Command::Corrmap => cmd_corrmap(&ctx),
        Command::Benchmark { proxy, normalize } => cmd_benchmark(&ctx, proxy.as_deref(), normalize.as_deref()),
        Command::Simulate { .. } => unreachable!("handled above"),
    }
}

fn cmd_estimate(ctx: &Ctx) -> Result<Value> {
    let (panel, proxies) = ctx.load_data()?;
    let rf = estimate_var(&panel, &ctx.cfg.var_spec()?)?;
    let rf = if proxies.is_empty() {
        rf
    } else {
        attach_moments(rf, &proxies, ctx.cfg.data.missing_policy)?
    };
    write_artifact(&ctx.path(REDUCED_FORM), &ctx.hash, "reduced_form", &rf)?;
    Ok(ctx.summary(
        "estimate",
        serde_json::json!({
            "n": rf.n(),
            "p": rf.lags,
            "k": rf.k(),
            "t_eff": rf.residuals.nrows(),
            "stable": rf.stable,
            "max_root_modulus": rf.max_root_modulus,
        }),
    ))
}

fn cmd_taubar(ctx: &Ctx, oracle_points: usize) -> Result<Value> {
    let rf = ctx.reduced_form()?;
    if rf.moments.is_empty() {
        bail!("τ̄ needs at least one proxy (data.proxies is empty)");
    }
    let sign = ctx.sign(&rf)?;
    let moments = rf.moment_matrix();
    let bound = match solve_cstar(&moments, &sign, &ctx.cfg.solver) {
        Err(CoreError::EmptySignRegion) => {
            return Err(Infeasible("empty sign-feasible sphere region".into()).into());
        }
        other => other?,
    };
    let bound = if rf.n() <= 3 && oracle_points > 0 {
        with_oracle_gap(bound, &moments, &sign, oracle_points)?
    } else {
        bound
    };
    let report = TaubarReport {
        proxies: rf.moments.iter().map(|m| m.label.clone()).collect(),
        bound,
    };
    write_artifact(&ctx.path(TAUBAR), &ctx.hash, "taubar", &report)?;
    Ok(ctx.summary(
        "taubar",
        serde_json::json!({ "c_star": report.bound.c_star, "tau_bar": format_tau(report.bound.tau_bar) }),
    ))
}

fn cmd_bounds(ctx: &Ctx) -> Result<Value> {
    let rf = ctx.reduced_form()?;
    let sign = ctx.sign(&rf)?;
    let grid_tau = ctx.tau_grid()?;
    let vars: Vec<usize> = (0..rf.n()).collect();
    let horizons: Vec<usize> = (0..=rf.horizon).collect();
    let cfg = &ctx.cfg.solver;
    let grid = sweep(&rf, &sign, &grid_tau, &vars, &horizons, cfg)?;
    let sign_only = if rf.moments.is_empty() {
        grid.clone()
    } else {
        sweep(&rf.clone().with_moments(Vec::new()), &sign, &grid_tau[..1], &vars, &horizons, cfg)?
    };
    let stats = grid.stats();
    let payload = BoundsPayload { grid, sign_only, stats };
    write_artifact(&ctx.path(BOUNDS), &ctx.hash, "bounds", &payload)?;
    write_atomic(
        &ctx.path("bounds.csv"),
        with_hash_column(&payload.grid.to_csv_string(), &ctx.hash).as_bytes(),
    )?;
    if payload.stats.empty_cells == payload.stats.cells {
        return Err(Infeasible(format!(
            "no feasible rotation at any requested τ ({} cells, artifacts written)",
            payload.stats.cells
        ))
        .into());
    }
    Ok(ctx.summary(
        "bounds",
        serde_json::json!({
            "tau_grid": payload.grid.tau_grid.iter().map(|t| format_tau(*t)).collect::<Vec<_>>(),
            "cells": payload.stats.cells,
            "empty_cells": payload.stats.empty_cells,
            "flagged_cells": payload.stats.flagged_cells,
            "max_violation": payload.stats.max_violation,
        }),
    ))
}

fn cmd_breakdown(ctx: &Ctx, refine: bool) -> Result<Value> {
    let rf = ctx.reduced_form()?;
    let sign = ctx.sign(&rf)?;
    let path = ctx
        .cfg
        .diagnostics
        .claims
        .as_ref()
        .ok_or_else(|| anyhow!("no claims file: pass --claims or set diagnostics.claims"))?;
    let claims = crate::config::load_claims(path, &rf.names)?;
    let grid = ctx.tau_grid()?;
    let resolution = refine.then_some(BREAKDOWN_RESOLUTION);
    let results = claims
        .iter()
        .map(|c| Ok(breakdown_value(c, &rf, &sign, &grid, &ctx.cfg.solver, resolution)?))
        .collect::<Result<Vec<_>>>()?;
    write_artifact(&ctx.path("breakdown.json"), &ctx.hash, "breakdown", &results)?;
    let mut csv = String::from("claim,tau_star,grid_tau_star,vacuous\n");
    for r in &results {
        let fmt = |t: Option<Tau>| t.map_or_else(|| "NOT_SUPPORTED".to_string(), format_tau);
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.claim,
            fmt(r.tau_star),
            fmt(r.grid_tau_star),
            u8::from(r.vacuous)
        ));
    }
    write_atomic(&ctx.path("breakdown.csv"), with_hash_column(&csv, &ctx.hash).as_bytes())?;
    let summary: Vec<_> = results
        .iter()
        .map(|r| serde_json::json!({ "claim": r.claim, "tau_star": r.tau_star.map(format_tau) }))
        .collect();
    Ok(ctx.summary("breakdown", serde_json::json!({ "claims": summary })))
}

fn cmd_info(ctx: &Ctx, tau: Option<f64>) -> Result<Value> {
    let b = ctx.bounds()?;
    let tau = ctx.diagnostic_tau(tau, &b.grid.tau_grid)?;
    let report = zoo_information(&b.grid, &b.sign_only, tau)?;
    write_artifact(&ctx.path("info.json"), &ctx.hash, "info", &report)?;
    let mut csv = String::from("variable,horizon,kappa\n");
    for c in &report.kappa_cells {
        csv.push_str(&format!("{},{},{:?}\n", b.grid.names[c.variable], c.horizon, c.kappa));
    }
    write_atomic(&ctx.path("info.csv"), with_hash_column(&csv, &ctx.hash).as_bytes())?;
    Ok(ctx.summary(
        "info",
        serde_json::json!({
            "tau": format_tau(tau),
            "kappa": report.kappa_full,
            "excluded_zero_baseline": report.excluded_zero_baseline,
            "excluded_empty": report.excluded_empty,
        }),
    ))
}

fn cmd_lopo(ctx: &Ctx, tau: Option<f64>) -> Result<Value> {
    let rf = ctx.reduced_form()?;
    let sign = ctx.sign(&rf)?;
    let tau = match (tau, ctx.cfg.diagnostics.tau) {
        (Some(t), _) | (None, Some(t)) => t,
        _ => ctx.diagnostic_tau(None, &ctx.tau_grid()?)?,
    };
    let horizons: Vec<usize> = (0..=rf.horizon).collect();
    let report = lopo(&rf, &sign, tau, &horizons, &ctx.cfg.solver)?;
    write_artifact(&ctx.path("lopo.json"), &ctx.hash, "lopo", &report)?;
    let mut csv = String::from("proxy,kappa_full,kappa_without,delta,caveat\n");
    for e in &report.lopo {
        csv.push_str(&format!(
            "{},{:?},{:?},{:?},{}\n",
            e.label,
            report.kappa_full,
            e.kappa_without,
            e.delta,
            u8::from(e.caveat)
        ));
    }
    write_atomic(&ctx.path("lopo.csv"), with_hash_column(&csv, &ctx.hash).as_bytes())?;
    let deltas: Vec<_> = report
        .lopo
        .iter()
        .map(|e| serde_json::json!({ "proxy": e.label, "delta": e.delta }))
        .collect();
    Ok(ctx.summary(
        "lopo",
        serde_json::json!({ "tau": format_tau(tau), "kappa": report.kappa_full, "lopo": deltas }),
    ))
}

fn cmd_corrmap(ctx: &Ctx) -> Result<Value> {
    let (_, proxies) = ctx.load_data()?;
    if proxies.is_empty() {
        bail!("the correlation map needs proxies (data.proxies is empty)");
    }
    let map = correlation_map(&proxies, &proxies);
    write_artifact(&ctx.path("corrmap.json"), &ctx.hash, "corrmap", &map)?;
    write_atomic(
        &ctx.path("corrmap.csv"),
        with_hash_column(&map.to_csv_string(), &ctx.hash).as_bytes(),
    )?;
    let na = map.cells.iter().filter(|c| c.corr.is_none()).count();
    Ok(ctx.summary("corrmap", serde_json::json!({ "pairs": map.cells.len(), "na": na })))
}

#[derive(Debug, Serialize, Deserialize)]
struct BenchmarkRow {
    #[serde(with = "grr_core::tau_serde")]
    tau: Tau,
    variable: String,
    horizon: usize,
    point: f64,
    lower: Option<f64>,
    upper: Option<f64>,
    inside: Option<bool>,
}

fn cmd_benchmark(ctx: &Ctx, proxy: Option<&str>, normalize: Option<&str>) -> Result<Value> {
    let rf = ctx.reduced_form()?;
    let b = ctx.bounds()?;
    let label = proxy
        .map(str::to_string)
        .or_else(|| ctx.cfg.benchmark.proxy.clone())
        .or_else(|| rf.moments.first().map(|m| m.label.clone()))
        .ok_or_else(|| anyhow!("no proxies to benchmark"))?;
    let ell = rf
        .moments
        .iter()
        .position(|m| m.label == label)
        .ok_or_else(|| anyhow!("unknown proxy '{label}'"))?;
    let norm_ref = match normalize {
        Some(s) => Some(s.parse::<usize>().map_or_else(|_| VarRef::Name(s.to_string()), VarRef::Index)),
        None => ctx.cfg.benchmark.normalize.clone(),
    };
    let v = norm_ref.map_or(Ok(0), |r| r.resolve(&rf.names))?;
    let horizons = b.grid.horizons.clone();
    let point = point_identified_irf(&rf, ell, &horizons)?;
    let h0 = horizons
        .iter()
        .position(|&h| h == 0)
        .ok_or_else(|| anyhow!("bounds lack the impact horizon"))?;
    let scale = point[(v, h0)];
    if scale.abs() < 1e-12 {
        bail!("point-identified impact on '{}' is zero; choose another normalization variable", rf.names[v]);
    }
    let mut rows = Vec::new();
    let mut csv = String::from("tau,variable,horizon,point,lower,upper,inside\n");
    let fmt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |y| format!("{y:?}"));
    for c in &b.grid.cells {
        let col = horizons.iter().position(|&h| h == c.horizon).expect("grid horizon");
        let p = point[(c.variable, col)] / scale;
        let (mut lo, mut hi) = (c.lower.map(|x| x / scale), c.upper.map(|x| x / scale));
        if scale < 0.0 {
            std::mem::swap(&mut lo, &mut hi);
        }
        let tol = 1e-6 * p.abs().max(1.0);
        let inside = lo.zip(hi).map(|(l, u)| l - tol <= p && p <= u + tol);
        csv.push_str(&format!(
            "{},{},{},{:?},{},{},{}\n",
            format_tau(c.tau),
            rf.names[c.variable],
            c.horizon,
            p,
            fmt(lo),
            fmt(hi),
            inside.map_or("NA", |b| if b { "1" } else { "0" })
        ));
        rows.push(BenchmarkRow {
            tau: c.tau,
            variable: rf.names[c.variable].clone(),
            horizon: c.horizon,
            point: p,
            lower: lo,
            upper: hi,
            inside,
        });
    }
    write_artifact(&ctx.path("benchmark.json"), &ctx.hash, "benchmark", &rows)?;
    write_atomic(&ctx.path("benchmark.csv"), with_hash_column(&csv, &ctx.hash).as_bytes())?;
    let outside = rows.iter().filter(|r| r.inside == Some(false)).count();
    Ok(ctx.summary(
        "benchmark",
        serde_json::json!({
            "proxy": label,
            "normalize": rf.names[v],
            "cells": rows.len(),
            "outside": outside,
        }),
    ))
}

fn cmd_simulate(cli: &Cli, spec_path: Option<&Path>, t: Option<usize>) -> Result<Value> {
    let mut spec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str::<DgpSpec>(&text).with_context(|| format!("parsing DGP spec {}", p.display()))?
        }
        None => DgpSpec::desk_scale(500, 20_240_601),
    };
    if let Some(t) = t {
        spec.t = t;
    }
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let sim = simulate(&spec)?;
    std::fs::create_dir_all(&out)?;
    let spec_text = toml::to_string(&spec)?;
    let hash = hex::encode(&Sha256::digest(spec_text.as_bytes())[..8]);

    let tmp_write = |name: &str, f: &dyn Fn(&Path) -> grr_core::Result<()>| -> Result<()> {
        let tmp = out.join(format!(".{name}.tmp{}", std::process::id()));
        f(&tmp)?;
        std::fs::rename(&tmp, out.join(name))?;
        Ok(())
    };
    tmp_write("panel.csv", &|p| write_panel(p, &sim.panel))?;
    let mut proxy_files = Vec::new();
    for proxy in &sim.proxies {
        let name = format!("{}.csv", proxy.label);
        tmp_write(&name, &|p| write_proxy(p, proxy))?;
        proxy_files.push(PathBuf::from(name));
    }
    write_atomic(&out.join("dgp.toml"), spec_text.as_bytes())?;
    write_artifact(&out.join("truth.json"), &hash, "truth", &sim.truth)?;

    let run = RunConfig {
        data: DataConfig {
            panel: PathBuf::from("panel.csv"),
            proxies: proxy_files,
            date_column: Some("date".into()),
            missing_policy: Default::default(),
        },
        var: crate::config::VarConfig {
            lags: spec.coefficients.len(),
            include_constant: true,
            horizon: spec.horizon,
        },
        restrictions: Default::default(),
        tau: Default::default(),
        solver: Default::default(),
        diagnostics: Default::default(),
        benchmark: Default::default(),
        output: OutputConfig {
            dir: Some(PathBuf::from("out")),
        },
    };
    write_atomic(&out.join("run.toml"), toml::to_string(&run)?.as_bytes())?;
    Ok(serde_json::json!({
        "command": "simulate",
        "spec_hash": hash,
        "t": spec.t,
        "n": spec.n(),
        "proxies": sim.proxies.iter().map(|p| p.label.clone()).collect::<Vec<_>>(),
        "tau0": sim.truth.tau0.iter().map(|t| format_tau(*t)).collect::<Vec<_>>(),
    }))
}
