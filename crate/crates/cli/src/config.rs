//! Run configuration: a TOML file whose fields can be overridden from the
//! command line with `--set section.key=value`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use grr_core::diagnostics::{Claim, ClaimKind, ClaimTarget};
use grr_core::io::MissingPolicy;
use grr_core::optim::SolverConfig;
use grr_core::restrictions::{Direction, IrfRestriction, NarrativeRestriction, SignRestrictionSpec};
use grr_core::var::VarSpec;

/// A variable given by name or by zero-based index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VarRef {
    Index(usize),
    Name(String),
}

impl VarRef {
    pub fn resolve(&self, names: &[String]) -> Result<usize> {
        match self {
            VarRef::Index(i) if *i < names.len() => Ok(*i),
            VarRef::Index(i) => bail!("variable index {i} out of range (n = {})", names.len()),
            VarRef::Name(s) => names
                .iter()
                .position(|n| n == s)
                .ok_or_else(|| anyhow!("unknown variable '{s}' (have {})", names.join(", "))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub panel: PathBuf,
    #[serde(default)]
    pub proxies: Vec<PathBuf>,
    #[serde(default)]
    pub date_column: Option<String>,
    #[serde(default)]
    pub missing_policy: MissingPolicy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VarConfig {
    pub lags: usize,
    pub include_constant: bool,
    pub horizon: usize,
}

impl Default for VarConfig {
    fn default() -> Self {
        VarConfig {
            lags: 1,
            include_constant: true,
            horizon: 12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrfEntry {
    pub variable: VarRef,
    #[serde(default)]
    pub shock: usize,
    pub horizons: Vec<usize>,
    pub direction: Direction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RestrictionsConfig {
    pub self_sign: bool,
    pub irf: Vec<IrfEntry>,
    pub narrative: Vec<NarrativeRestriction>,
}

impl Default for RestrictionsConfig {
    fn default() -> Self {
        RestrictionsConfig {
            self_sign: true,
            irf: Vec::new(),
            narrative: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TauConfig {
    /// Explicit grid; when absent, `size` log-spaced points up to the cap
    /// plus τ = 0.
    pub grid: Option<Vec<f64>>,
    pub size: usize,
    /// Cap used when τ̄ is infinite.
    pub cap: f64,
}

impl Default for TauConfig {
    fn default() -> Self {
        TauConfig {
            grid: None,
            size: 25,
            cap: 20.0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsConfig {
    /// τ at which κ and LOPO are evaluated.
    pub tau: Option<f64>,
    pub claims: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub proxy: Option<String>,
    pub normalize: Option<VarRef>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub var: VarConfig,
    #[serde(default)]
    pub restrictions: RestrictionsConfig,
    #[serde(default)]
    pub tau: TauConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Applies one `a.b.c=value` override. Values parse as TOML when possible
/// and fall back to plain strings.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| anyhow!("override '{assignment}' must look like key=value"))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in path {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("override path '{key}' crosses a non-table value"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads the file, applies overrides, resolves relative paths against
    /// the file's directory and validates.
    pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .with_context(|| format!("invalid configuration in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data.panel = resolve(base, &cfg.data.panel);
        cfg.data.proxies = cfg.data.proxies.iter().map(|p| resolve(base, p)).collect();
        cfg.diagnostics.claims = cfg.diagnostics.claims.as_ref().map(|p| resolve(base, p));
        cfg.output.dir = cfg.output.dir.as_ref().map(|p| resolve(base, p));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.data.panel.is_file() {
            bail!("panel file {} does not exist", self.data.panel.display());
        }
        for p in &self.data.proxies {
            if !p.is_file() {
                bail!("proxy file {} does not exist", p.display());
            }
        }
        if let Some(c) = &self.diagnostics.claims {
            if !c.is_file() {
                bail!("claims file {} does not exist", c.display());
            }
        }
        if let Some(g) = &self.tau.grid {
            if g.is_empty() || g.iter().any(|t| t.is_nan() || *t < 0.0) || g.windows(2).any(|w| !(w[0] < w[1])) {
                bail!("tau.grid must be non-empty, non-negative and strictly ascending");
            }
        }
        if self.tau.size < 2 {
            bail!("tau.size must be at least 2");
        }
        if !(self.tau.cap.is_finite() && self.tau.cap > 0.0) {
            bail!("tau.cap must be positive and finite");
        }
        let s = &self.solver;
        if !(s.feas_tol > 0.0 && s.obj_tol > 0.0) || s.max_iter == 0 {
            bail!("solver tolerances must be positive and max_iter at least 1");
        }
        VarSpec::new(self.var.lags, self.var.include_constant, self.var.horizon)?;
        Ok(())
    }

    pub fn var_spec(&self) -> Result<VarSpec> {
        Ok(VarSpec::new(self.var.lags, self.var.include_constant, self.var.horizon)?)
    }

    pub fn sign_spec(&self, names: &[String]) -> Result<SignRestrictionSpec> {
        let irf = self
            .restrictions
            .irf
            .iter()
            .map(|e| {
                Ok(IrfRestriction {
                    variable: e.variable.resolve(names)?,
                    shock: e.shock,
                    horizons: e.horizons.clone(),
                    direction: e.direction,
                })
            })
            .collect::<Result<_>>()?;
        Ok(SignRestrictionSpec {
            irf,
            narrative: self.restrictions.narrative.clone(),
            self_sign: self.restrictions.self_sign,
        })
    }

    /// SHA-256 over the effective configuration and the bytes of every input
    /// file, as 16 hex digits. Output location and the settings that only
    /// shape leaf reports (claims, diagnostic τ, benchmark) are left out, so
    /// changing them does not invalidate upstream artifacts.
    pub fn hash(&self) -> Result<String> {
        let mut hashed = self.clone();
        hashed.output = OutputConfig::default();
        hashed.diagnostics = DiagnosticsConfig::default();
        hashed.benchmark = BenchmarkConfig::default();
        let mut h = Sha256::new();
        h.update(toml::to_string(&hashed)?.as_bytes());
        let mut inputs: Vec<&PathBuf> = vec![&self.data.panel];
        inputs.extend(&self.data.proxies);
        for p in inputs {
            h.update(std::fs::read(p).with_context(|| format!("reading {}", p.display()))?);
        }
        Ok(hex::encode(&h.finalize()[..8]))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetEntry {
    variable: VarRef,
    horizons: Vec<usize>,
    #[serde(default = "positive")]
    direction: Direction,
    #[serde(default)]
    threshold: f64,
}

fn positive() -> Direction {
    Direction::Positive
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClaimEntry {
    name: String,
    kind: ClaimKind,
    targets: Vec<TargetEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClaimsFile {
    claims: Vec<ClaimEntry>,
}

/// Parses a claims file (`[[claims]]` tables with `[[claims.targets]]`).
pub fn load_claims(path: &Path, names: &[String]) -> Result<Vec<Claim>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading claims {}", path.display()))?;
    let file: ClaimsFile = toml::from_str(&text).with_context(|| format!("parsing claims {}", path.display()))?;
    file.claims
        .into_iter()
        .map(|c| {
            let targets = c
                .targets
                .into_iter()
                .map(|t| {
                    Ok(ClaimTarget {
                        variable: t.variable.resolve(names)?,
                        horizons: t.horizons,
                        direction: t.direction,
                        threshold: t.threshold,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Claim {
                name: c.name,
                kind: c.kind,
                targets,
            })
        })
        .collect()
}
