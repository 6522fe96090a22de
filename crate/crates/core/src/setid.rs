//! Identified-set bounds for impulse responses to the target shock.
//!
//! Each bound minimizes or maximizes `e_iᵀ C_h L O_{•1}` over rotations that
//! satisfy the compiled restrictions. Problems are solved locally from several
//! starts (warm start, identity, random rotations) and the best feasible
//! value is kept, so reported intervals are inner approximations.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::optim::{solve_local, Problem, SolverConfig};
use crate::restrictions::{compile_grr, LinearColumnConstraint, LinearForm, RestrictionSet};
use crate::rotation::{expm, log_rotation, random_rotation_matrix, skew_from_coords, SkewParams};
use crate::var::ReducedForm;
use crate::Tau;

/// Slack on width growth across the τ grid before a cell is flagged.
pub const MONOTONICITY_SLACK: f64 = 1e-6;
/// Slack on interval inclusion across the τ grid.
pub const INCLUSION_SLACK: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Min,
    Max,
}

impl Sense {
    fn sign(self) -> f64 {
        match self {
            Sense::Min => 1.0,
            Sense::Max => -1.0,
        }
    }
}

/// One bound problem: extremize the response of `variable` at `horizon`.
#[derive(Debug, Clone, Copy)]
pub struct BoundProblem<'a> {
    pub rf: &'a ReducedForm,
    pub restrictions: &'a RestrictionSet,
    pub variable: usize,
    pub horizon: usize,
    pub sense: Sense,
}

/// Result of a multi-start bound solve.
#[derive(Debug, Clone)]
pub struct BoundSolution {
    /// Best feasible objective, `None` when no start reached feasibility.
    pub value: Option<f64>,
    /// Rotation attaining `value`.
    pub argmin: Option<DMatrix<f64>>,
    /// Smallest scaled violation over all local solutions.
    pub violation: f64,
    pub iterations: usize,
    pub starts: usize,
}

/// One term `scale · bᵀ O_{•column}` of a packed constraint.
#[derive(Debug, Clone, Copy)]
struct Term {
    owner: usize,
    column: usize,
    base: usize,
    scale: f64,
}

/// Constraint forms sharing a small set of unit base vectors. Ranking
/// constraints reuse each proxy moment many times, so products with the
/// rotation are computed once per base vector.
#[derive(Debug, Clone)]
struct PackedForms {
    n: usize,
    count: usize,
    /// Unit base vectors as columns.
    bases: DMatrix<f64>,
    terms: Vec<Term>,
}

impl PackedForms {
    /// Packs `forms`, each rescaled to unit Frobenius norm.
    fn new(n: usize, forms: &[LinearForm]) -> PackedForms {
        let mut bases: Vec<DVector<f64>> = Vec::new();
        let mut terms = Vec::new();
        for (c, f) in forms.iter().enumerate() {
            // unit-norm forms make the feasibility tolerance scale-free
            let form_scale = 1.0 / f.norm();
            for (j, r) in &f.terms {
                let len = r.norm();
                if len == 0.0 {
                    continue;
                }
                let unit = r / len;
                let (base, sign) = match bases.iter().position(|b| (b - &unit).amax() <= 1e-14) {
                    Some(k) => (k, 1.0),
                    None => match bases.iter().position(|b| (b + &unit).amax() <= 1e-14) {
                        Some(k) => (k, -1.0),
                        None => {
                            bases.push(unit);
                            (bases.len() - 1, 1.0)
                        }
                    },
                };
                terms.push(Term {
                    owner: c,
                    column: *j,
                    base,
                    scale: sign * len * form_scale,
                });
            }
        }
        let bases = if bases.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&bases)
        };
        PackedForms {
            n,
            count: forms.len(),
            bases,
            terms,
        }
    }

    /// `W = Oᵀ B`: entry (i, b) is the inner product of column i with base b.
    fn projections(&self, o: &DMatrix<f64>) -> DMatrix<f64> {
        o.tr_mul(&self.bases)
    }

    fn eval_into(&self, w: &DMatrix<f64>, out: &mut [f64]) {
        out.fill(0.0);
        for t in &self.terms {
            out[t.owner] += t.scale * w[(t.column, t.base)];
        }
    }

    /// Adds `Σ_c weights[c]·G_c` into `gamma`.
    fn accumulate(&self, weights: &[f64], gamma: &mut DMatrix<f64>) {
        let nb = self.bases.ncols();
        if nb == 0 {
            return;
        }
        // coefficient of base b in column j of Γ
        let mut agg = DMatrix::zeros(nb, self.n);
        for t in &self.terms {
            let w = weights[t.owner];
            if w != 0.0 {
                agg[(t.base, t.column)] += w * t.scale;
            }
        }
        gamma.gemm(1.0, &self.bases, &agg, 1.0);
    }
}

/// The bound problem as a smooth problem on SO(n), with the retraction
/// `O ↦ O·exp(S(step))`.
struct RotationProblem {
    n: usize,
    objective: DVector<f64>,
    n_ineq: usize,
    /// Inequalities first, then equalities.
    forms: PackedForms,
    /// Skew coordinate index pairs (i, j), i > j, in coordinate order.
    pairs: Vec<(usize, usize)>,
    /// For each column c: the coordinates whose derivative reads (OᵀG)_{•c},
    /// as (coordinate, row, sign).
    column_pairs: Vec<Vec<(usize, usize, f64)>>,
}

impl RotationProblem {
    fn new(target: &DVector<f64>, sense: Sense, set: &RestrictionSet) -> RotationProblem {
        let (mut ineq, eq) = set.forms();
        let n_ineq = ineq.len();
        ineq.extend(eq);
        let n = set.n;
        let pairs: Vec<(usize, usize)> = (1..n).flat_map(|i| (0..i).map(move |j| (i, j))).collect();
        let mut column_pairs = vec![Vec::new(); n];
        for (k, &(i, j)) in pairs.iter().enumerate() {
            // ∂/∂δ_k = A_ij - A_ji
            column_pairs[j].push((k, i, 1.0));
            column_pairs[i].push((k, j, -1.0));
        }
        // the optimizer sees a unit-norm objective; values are re-read from
        // the argmin with the original target
        let scale = target.norm();
        let scale = if scale > 0.0 { sense.sign() / scale } else { 0.0 };
        RotationProblem {
            n,
            objective: target * scale,
            n_ineq,
            forms: PackedForms::new(n, &ineq),
            pairs,
            column_pairs,
        }
    }

    /// `Γ = w_obj·G_obj + Σ_c w_c·G_c` as an n×n matrix.
    fn gamma(&self, w_obj: f64, w_cons: &[f64]) -> DMatrix<f64> {
        let mut gamma = DMatrix::zeros(self.n, self.n);
        gamma.set_column(0, &(&self.objective * w_obj));
        self.forms.accumulate(w_cons, &mut gamma);
        gamma
    }

    fn scaled_violation(&self, o: &DMatrix<f64>) -> f64 {
        let mut cons = vec![0.0; self.forms.count];
        self.evaluate(o, &mut cons);
        crate::optim::max_violation(&cons, self.n_ineq)
    }
}

impl Problem for RotationProblem {
    type Point = DMatrix<f64>;

    fn dim(&self) -> usize {
        self.pairs.len()
    }

    fn n_ineq(&self) -> usize {
        self.n_ineq
    }

    fn n_eq(&self) -> usize {
        self.forms.count - self.n_ineq
    }

    fn evaluate(&self, o: &DMatrix<f64>, cons: &mut [f64]) -> f64 {
        let w = self.forms.projections(o);
        self.forms.eval_into(&w, cons);
        o.column(0).dot(&self.objective)
    }

    fn combined_gradient(&self, o: &DMatrix<f64>, w_obj: f64, w_cons: &[f64], out: &mut [f64]) {
        let n = self.n;
        // d/dt ⟨Γ, O exp(tE_ij)⟩ = (OᵀΓ)_ij - (OᵀΓ)_ji
        let a = o.tr_mul(&self.gamma(w_obj, w_cons));
        let mut k = 0;
        for i in 1..n {
            for j in 0..i {
                out[k] = a[(i, j)] - a[(j, i)];
                k += 1;
            }
        }
    }

    fn has_hessian(&self) -> bool {
        true
    }

    fn hessian(&self, o: &DMatrix<f64>, w_obj: f64, w_cons: &[f64], out: &mut [f64]) {
        // ∂²/∂δ_a∂δ_b ⟨Γ, O exp(S(δ))⟩ at δ = 0 is ⟨OᵀΓ, (E_aE_b + E_bE_a)/2⟩
        let a = o.tr_mul(&self.gamma(w_obj, w_cons));
        let pairs = &self.pairs;
        let d = pairs.len();
        let half = |(i, j): (usize, usize), (k, l): (usize, usize)| {
            let mut v = 0.0;
            if j == k {
                v += a[(i, l)];
            }
            if j == l {
                v -= a[(i, k)];
            }
            if i == k {
                v -= a[(j, l)];
            }
            if i == l {
                v += a[(j, k)];
            }
            v
        };
        for p in 0..d {
            for q in p..d {
                let v = 0.5 * (half(pairs[p], pairs[q]) + half(pairs[q], pairs[p]));
                out[p * d + q] = v;
                out[q * d + p] = v;
            }
        }
    }

    fn jacobian(&self, o: &DMatrix<f64>, out: &mut [f64]) {
        let d = self.pairs.len();
        out.fill(0.0);
        let w = self.forms.projections(o);
        for t in &self.forms.terms {
            // OᵀG has the single non-zero column `column`, equal to scale·W_{•base}
            let grad = &mut out[t.owner * d..(t.owner + 1) * d];
            for &(k, other, sign) in &self.column_pairs[t.column] {
                grad[k] += sign * t.scale * w[(other, t.base)];
            }
        }
    }

    fn retract(&self, o: &DMatrix<f64>, step: &[f64]) -> DMatrix<f64> {
        o * expm(&skew_from_coords(self.n, step))
    }

    fn normalize(&self, o: DMatrix<f64>) -> DMatrix<f64> {
        // one Newton–Schulz step toward the orthogonal polar factor
        let n = self.n;
        let gram = o.tr_mul(&o);
        let corr = DMatrix::<f64>::identity(n, n) * 1.5 - gram * 0.5;
        o * corr
    }
}

/// Solves a bound problem from every start and keeps the best feasible
/// local solution. Feasibility is judged on unit-norm constraint forms.
pub fn solve_bound(problem: &BoundProblem<'_>, starts: &[DMatrix<f64>], cfg: &SolverConfig) -> Result<BoundSolution> {
    let n = problem.rf.n();
    if starts.is_empty() {
        return invalid("at least one start is required");
    }
    if problem.variable >= n || problem.horizon >= problem.rf.irfs.len() {
        return invalid(format!(
            "target ({}, {}) out of range",
            problem.variable, problem.horizon
        ));
    }
    if problem.restrictions.n != n {
        return invalid("restriction dimension differs from the reduced form");
    }
    let target = problem.rf.response_vector(problem.variable, problem.horizon);
    let rp = RotationProblem::new(&target, problem.sense, problem.restrictions);
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    let mut min_violation = f64::INFINITY;
    let mut iterations = 0;
    for start in starts {
        let sol = solve_local(&rp, start.clone(), cfg);
        iterations += sol.iterations;
        let o = sol.point;
        let viol = rp.scaled_violation(&o);
        min_violation = min_violation.min(viol);
        if viol <= cfg.feas_tol {
            let value = target.dot(&o.column(0));
            let better = match &best {
                None => true,
                Some((b, _)) => match problem.sense {
                    Sense::Min => value < *b,
                    Sense::Max => value > *b,
                },
            };
            if better {
                best = Some((value, o));
            }
        }
    }
    let (value, argmin) = match best {
        Some((v, o)) => (Some(v), Some(o)),
        None => (None, None),
    };
    Ok(BoundSolution {
        value,
        argmin,
        violation: min_violation,
        iterations,
        starts: starts.len(),
    })
}

/// Interval for one (variable, horizon, τ) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCell {
    pub variable: usize,
    pub horizon: usize,
    pub tau_index: usize,
    #[serde(with = "crate::tau_serde")]
    pub tau: Tau,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// No start reached feasibility in either direction.
    pub empty: bool,
    /// Largest scaled violation of the reported argmins, or the smallest
    /// violation attained when the cell is empty.
    pub violation: f64,
    pub lower_arg: Option<Vec<f64>>,
    pub upper_arg: Option<Vec<f64>>,
    pub iterations: usize,
    pub restarts: usize,
    /// Width grew or the interval escaped the previous τ's interval:
    /// evidence of a local optimum.
    pub flagged: bool,
}

impl BoundCell {
    pub fn width(&self) -> Option<f64> {
        match (self.lower, self.upper) {
            (Some(l), Some(u)) => Some(u - l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiedSetGrid {
    pub names: Vec<String>,
    #[serde(with = "crate::tau_serde::vec")]
    pub tau_grid: Vec<Tau>,
    pub variables: Vec<usize>,
    pub horizons: Vec<usize>,
    /// Ordered by (τ index, variable, horizon).
    pub cells: Vec<BoundCell>,
}

/// Summary solver statistics over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub cells: usize,
    pub empty_cells: usize,
    pub flagged_cells: usize,
    pub total_iterations: usize,
    pub restarts: usize,
    pub max_violation: f64,
}

impl IdentifiedSetGrid {
    pub fn cell(&self, variable: usize, horizon: usize, tau_index: usize) -> Option<&BoundCell> {
        self.cells
            .iter()
            .find(|c| c.variable == variable && c.horizon == horizon && c.tau_index == tau_index)
    }

    pub fn cells_at(&self, tau_index: usize) -> impl Iterator<Item = &BoundCell> {
        self.cells.iter().filter(move |c| c.tau_index == tau_index)
    }

    pub fn stats(&self) -> SolverStats {
        SolverStats {
            cells: self.cells.len(),
            empty_cells: self.cells.iter().filter(|c| c.empty).count(),
            flagged_cells: self.cells.iter().filter(|c| c.flagged).count(),
            total_iterations: self.cells.iter().map(|c| c.iterations).sum(),
            restarts: self.cells.iter().map(|c| c.restarts).sum(),
            max_violation: self
                .cells
                .iter()
                .filter(|c| !c.empty)
                .map(|c| c.violation)
                .fold(0.0, f64::max),
        }
    }

    /// Flags cells whose interval widens or escapes the interval at the
    /// previous grid point. Returns the number of flagged cells.
    fn flag_monotonicity(&mut self) -> usize {
        let mut flags = Vec::new();
        for (idx, c) in self.cells.iter().enumerate() {
            if c.tau_index == 0 {
                continue;
            }
            let Some(prev) = self.cell(c.variable, c.horizon, c.tau_index - 1) else {
                continue;
            };
            let (Some(l), Some(u)) = (c.lower, c.upper) else {
                continue;
            };
            let (Some(pl), Some(pu)) = (prev.lower, prev.upper) else {
                // previous cell empty: any non-empty set here contradicts nesting
                flags.push(idx);
                continue;
            };
            let widened = (u - l) > (pu - pl) + MONOTONICITY_SLACK;
            let escaped = l < pl - INCLUSION_SLACK || u > pu + INCLUSION_SLACK;
            if widened || escaped {
                flags.push(idx);
            }
        }
        for &i in &flags {
            self.cells[i].flagged = true;
        }
        flags.len()
    }

    /// Long-format CSV: variable, horizon, tau, lower, upper, empty flag,
    /// violation and local-optimum flag.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io_err = |source| Error::Io {
            path: path.display().to_string(),
            source,
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
        let text = self.to_csv_string();
        f.write_all(text.as_bytes()).map_err(io_err)?;
        f.flush().map_err(io_err)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("variable,horizon,tau,lower,upper,empty_flag,violation,local_optimum_flag\n");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_else(|| "NA".into());
        for c in &self.cells {
            s.push_str(&format!(
                "{},{},{},{},{},{},{:e},{}\n",
                self.names.get(c.variable).cloned().unwrap_or_else(|| c.variable.to_string()),
                c.horizon,
                format_tau(c.tau),
                fmt(c.lower),
                fmt(c.upper),
                u8::from(c.empty),
                c.violation,
                u8::from(c.flagged)
            ));
        }
        s
    }
}

/// `inf` for the valid-instrument case, shortest round-trip form otherwise.
pub fn format_tau(tau: Tau) -> String {
    if tau.is_infinite() {
        "inf".into()
    } else {
        format!("{tau:?}")
    }
}

/// Seeds random restarts per (variable, horizon, sense) only, so that two
/// sweeps over the same cells use the same starts regardless of τ.
fn cell_seed(base: u64, variable: usize, horizon: usize, sense: Sense) -> u64 {
    let mut z = base
        ^ (variable as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (horizon as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ match sense {
            Sense::Min => 0x1656_67B1_9E37_79F9,
            Sense::Max => 0x27D4_EB2F_1656_67C5,
        };
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn start_list(n: usize, warm: &[&DMatrix<f64>], seed: u64, restarts: usize) -> Vec<DMatrix<f64>> {
    let mut starts: Vec<DMatrix<f64>> = warm.iter().map(|m| (*m).clone()).collect();
    starts.push(DMatrix::identity(n, n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..restarts {
        starts.push(random_rotation_matrix(n, &mut rng));
    }
    starts
}

fn skew_coords(o: &DMatrix<f64>) -> Option<Vec<f64>> {
    match log_rotation(o) {
        Ok(p) => Some(p.theta().to_vec()),
        Err(e) => {
            log::debug!("argmin not stored: {e}");
            None
        }
    }
}

/// Solves the horizon chain for one variable at one τ.
fn solve_chain(
    rf: &ReducedForm,
    set: &RestrictionSet,
    variable: usize,
    horizons: &[usize],
    tau_index: usize,
    cfg: &SolverConfig,
) -> Result<Vec<BoundCell>> {
    let n = rf.n();
    let mut warm_min: Option<DMatrix<f64>> = None;
    let mut warm_max: Option<DMatrix<f64>> = None;
    let mut cells = Vec::with_capacity(horizons.len());
    for &h in horizons {
        let mut sols = Vec::with_capacity(2);
        for (sense, warm) in [(Sense::Min, &warm_min), (Sense::Max, &warm_max)] {
            let warm: Vec<&DMatrix<f64>> = warm.iter().collect();
            let starts = start_list(n, &warm, cell_seed(cfg.seed, variable, h, sense), cfg.restarts);
            let problem = BoundProblem {
                rf,
                restrictions: set,
                variable,
                horizon: h,
                sense,
            };
            sols.push(solve_bound(&problem, &starts, cfg)?);
        }
        let (smin, smax) = (&sols[0], &sols[1]);
        let target = rf.response_vector(variable, h);
        let eval = |o: &DMatrix<f64>| target.dot(&o.column(0));
        // a feasible point from either direction certifies non-emptiness
        let (lower, lower_o) = match (&smin.argmin, &smax.argmin) {
            (Some(o), _) | (None, Some(o)) => (Some(eval(o)), Some(o.clone())),
            _ => (None, None),
        };
        let (upper, upper_o) = match (&smax.argmin, &smin.argmin) {
            (Some(o), _) | (None, Some(o)) => (Some(eval(o)), Some(o.clone())),
            _ => (None, None),
        };
        let empty = lower.is_none();
        let probe = RotationProblem::new(&target, Sense::Min, set);
        let violation = if empty {
            smin.violation.min(smax.violation)
        } else {
            lower_o
                .iter()
                .chain(upper_o.iter())
                .map(|o| probe.scaled_violation(o))
                .fold(0.0, f64::max)
        };
        cells.push(BoundCell {
            variable,
            horizon: h,
            tau_index,
            tau: set.grr.tau,
            lower,
            upper,
            empty,
            violation,
            lower_arg: lower_o.as_ref().and_then(skew_coords),
            upper_arg: upper_o.as_ref().and_then(skew_coords),
            iterations: smin.iterations + smax.iterations,
            restarts: smin.starts + smax.starts,
            flagged: false,
        });
        if lower_o.is_some() {
            warm_min = lower_o;
            warm_max = upper_o;
        }
    }
    Ok(cells)
}

/// Bounds for every (τ, variable, horizon) cell. The moments attached to
/// `rf` define the proxy zoo; with none attached the sweep returns the
/// sign-only identified set at every τ.
pub fn sweep(
    rf: &ReducedForm,
    sign: &[LinearColumnConstraint],
    tau_grid: &[Tau],
    variables: &[usize],
    horizons: &[usize],
    cfg: &SolverConfig,
) -> Result<IdentifiedSetGrid> {
    let n = rf.n();
    if tau_grid.is_empty() {
        return invalid("empty τ grid");
    }
    if tau_grid.windows(2).any(|w| !(w[0] < w[1])) || tau_grid.iter().any(|t| t.is_nan() || *t < 0.0) {
        return invalid("τ grid must be non-negative and strictly ascending");
    }
    if horizons.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("horizons must be strictly ascending");
    }
    if let Some(&h) = horizons.last() {
        if h >= rf.irfs.len() {
            return invalid(format!("horizon {h} exceeds the computed horizon {}", rf.horizon));
        }
    }
    if let Some(&v) = variables.iter().find(|&&v| v >= n) {
        return invalid(format!("variable index {v} out of range"));
    }
    let sets: Vec<RestrictionSet> = tau_grid
        .iter()
        .map(|&tau| Ok(RestrictionSet::new(n, sign.to_vec(), compile_grr(&rf.moments, tau, n)?)))
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize)> = (0..tau_grid.len())
        .flat_map(|g| variables.iter().map(move |&v| (g, v)))
        .collect();
    let chains: Vec<Vec<BoundCell>> = tasks
        .par_iter()
        .map(|&(g, v)| solve_chain(rf, &sets[g], v, horizons, g, cfg))
        .collect::<Result<_>>()?;
    let mut grid = IdentifiedSetGrid {
        names: rf.names.clone(),
        tau_grid: tau_grid.to_vec(),
        variables: variables.to_vec(),
        horizons: horizons.to_vec(),
        cells: chains.into_iter().flatten().collect(),
    };
    let flagged = grid.flag_monotonicity();
    if flagged > 0 {
        log::warn!("{flagged} cells violate τ-monotonicity beyond solver slack (local optima)");
    }
    Ok(grid)
}

/// Point-identified response when proxy `proxy` is a valid instrument: the
/// first column is `M/‖M‖`. Rows are variables, columns horizons.
pub fn point_identified_irf(rf: &ReducedForm, proxy: usize, horizons: &[usize]) -> Result<DMatrix<f64>> {
    let m = rf
        .moments
        .get(proxy)
        .ok_or_else(|| Error::Invalid(format!("no proxy moment with index {proxy}")))?;
    let norm = m.values.norm();
    if norm == 0.0 {
        return Err(Error::DegenerateProxy(m.label.clone()));
    }
    let q = &m.values / norm;
    let n = rf.n();
    let mut out = DMatrix::zeros(n, horizons.len());
    for (c, &h) in horizons.iter().enumerate() {
        if h >= rf.irfs.len() {
            return invalid(format!("horizon {h} exceeds the computed horizon {}", rf.horizon));
        }
        let resp = &rf.irfs[h] * &rf.chol * &q;
        out.set_column(c, &resp);
    }
    Ok(out)
}

/// Rotation parameters of the stored argmin, when available.
pub fn argmin_rotation(theta: &[f64], n: usize) -> Result<DMatrix<f64>> {
    let p = SkewParams::new(n, theta.to_vec())?;
    Ok(crate::rotation::exp_skew(&p).matrix)
}
