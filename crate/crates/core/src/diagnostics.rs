//! Breakdown values, proxy-zoo information and the correlation map.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Error, Result};
use crate::io::{DateKey, ProxySeries};
use crate::optim::SolverConfig;
use crate::restrictions::{Direction, LinearColumnConstraint};
use crate::setid::{sweep, IdentifiedSetGrid};
use crate::var::ReducedForm;
use crate::Tau;

/// Baseline widths at or below this are excluded from κ.
pub const ZERO_WIDTH: f64 = 1e-10;
/// Endpoint slack for claim checks, relative to the interval magnitude;
/// matches the solver's feasibility scale so that a bound of `-1e-9` on a
/// sign-restricted response still counts as non-negative.
pub const CLAIM_SLACK: f64 = 1e-7;
/// Resolution of the breakdown bisection.
pub const BREAKDOWN_RESOLUTION: f64 = 0.01;
/// Negative LOPO deltas down to this are attributed to local optima.
pub const LOPO_SLACK: f64 = 0.02;
/// Fewest jointly observed dates for a correlation.
pub const MIN_PAIR_OVERLAP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimKind {
    SignPositive,
    SignNegative,
    JointSign,
    Magnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimTarget {
    pub variable: usize,
    pub horizons: Vec<usize>,
    /// Direction for joint-sign and magnitude claims.
    #[serde(default = "default_direction")]
    pub direction: Direction,
    /// Threshold δ for magnitude claims.
    #[serde(default)]
    pub threshold: f64,
}

fn default_direction() -> Direction {
    Direction::Positive
}

/// A substantive statement about the responses, checked on interval
/// endpoints. Positive targets require `lower ≥ δ`, negative ones
/// `upper ≤ δ`; δ is zero except for magnitude claims.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub name: String,
    pub kind: ClaimKind,
    pub targets: Vec<ClaimTarget>,
}

impl Claim {
    pub fn validate(&self, n: usize, max_horizon: usize) -> Result<()> {
        if self.targets.is_empty() {
            return invalid(format!("claim '{}' has no targets", self.name));
        }
        for t in &self.targets {
            if t.variable >= n {
                return invalid(format!("claim '{}': variable {} out of range", self.name, t.variable));
            }
            if t.horizons.is_empty() || t.horizons.iter().any(|&h| h > max_horizon) {
                return invalid(format!("claim '{}': horizons must lie in [0, {max_horizon}]", self.name));
            }
            if !t.threshold.is_finite() {
                return invalid(format!("claim '{}': threshold must be finite", self.name));
            }
        }
        Ok(())
    }

    fn requirement(&self, t: &ClaimTarget) -> (Direction, f64) {
        match self.kind {
            ClaimKind::SignPositive => (Direction::Positive, 0.0),
            ClaimKind::SignNegative => (Direction::Negative, 0.0),
            ClaimKind::JointSign => (t.direction, 0.0),
            ClaimKind::Magnitude => (t.direction, t.threshold),
        }
    }

    pub fn variables(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.targets.iter().map(|t| t.variable).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn horizons(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.targets.iter().flat_map(|t| t.horizons.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Whether the claim holds on every cell at one τ index. Empty cells
    /// hold vacuously; the second value reports whether any was empty.
    pub fn holds_on(&self, grid: &IdentifiedSetGrid, tau_index: usize) -> Result<(bool, bool)> {
        let mut all = true;
        let mut vacuous = false;
        for t in &self.targets {
            let (dir, thr) = self.requirement(t);
            for &h in &t.horizons {
                let cell = grid
                    .cell(t.variable, h, tau_index)
                    .ok_or_else(|| Error::Invalid(format!("grid lacks cell ({}, {h})", t.variable)))?;
                let ok = match (dir, cell.lower, cell.upper) {
                    (_, Some(l), Some(u)) => {
                        let slack = CLAIM_SLACK * l.abs().max(u.abs()).max(thr.abs()).max(1.0);
                        match dir {
                            Direction::Positive => l >= thr - slack,
                            Direction::Negative => u <= thr + slack,
                        }
                    }
                    _ => {
                        vacuous = true;
                        true
                    }
                };
                all &= ok;
            }
        }
        Ok((all, vacuous))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownResult {
    pub claim: String,
    /// Refined breakdown value; `None` when the claim fails at the grid maximum.
    #[serde(with = "opt_tau")]
    pub tau_star: Option<Tau>,
    /// First grid point at which the claim holds.
    #[serde(with = "opt_tau")]
    pub grid_tau_star: Option<Tau>,
    /// Some identified set on the path was empty, so the claim held vacuously.
    pub vacuous: bool,
    /// (τ, holds) for every evaluated point, in evaluation order.
    pub evaluations: Vec<(f64, bool)>,
}

impl BreakdownResult {
    pub fn supported(&self) -> bool {
        self.tau_star.is_some()
    }
}

mod opt_tau {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrapped(#[serde(with = "crate::tau_serde")] f64);

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.map(Wrapped).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(Option::<Wrapped>::deserialize(d)?.map(|w| w.0))
    }
}

fn claim_at(claim: &Claim, rf: &ReducedForm, sign: &[LinearColumnConstraint], tau: Tau, cfg: &SolverConfig) -> Result<(bool, bool)> {
    let grid = sweep(rf, sign, &[tau], &claim.variables(), &claim.horizons(), cfg)?;
    claim.holds_on(&grid, 0)
}

/// Smallest τ at which the claim holds on the identified set: an ascending
/// grid scan with early exit, then bisection between the bracketing grid
/// points down to `resolution` (skipped when `resolution` is `None` or the
/// bracket contains ∞).
pub fn breakdown_value(
    claim: &Claim,
    rf: &ReducedForm,
    sign: &[LinearColumnConstraint],
    tau_grid: &[Tau],
    cfg: &SolverConfig,
    resolution: Option<f64>,
) -> Result<BreakdownResult> {
    if tau_grid.is_empty() || tau_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return invalid("τ grid must be non-empty and strictly ascending");
    }
    claim.validate(rf.n(), rf.horizon)?;
    let mut evaluations = Vec::new();
    let mut vacuous = false;
    let mut found = None;
    for (g, &tau) in tau_grid.iter().enumerate() {
        let (holds, vac) = claim_at(claim, rf, sign, tau, cfg)?;
        evaluations.push((tau, holds));
        vacuous |= vac;
        if holds {
            found = Some(g);
            break;
        }
    }
    let Some(g) = found else {
        return Ok(BreakdownResult {
            claim: claim.name.clone(),
            tau_star: None,
            grid_tau_star: None,
            vacuous,
            evaluations,
        });
    };
    let grid_tau = tau_grid[g];
    let mut hi = grid_tau;
    if let (Some(res), true) = (resolution, g > 0) {
        let mut lo = tau_grid[g - 1];
        if hi.is_finite() {
            while hi - lo > res {
                let mid = 0.5 * (lo + hi);
                let (holds, vac) = claim_at(claim, rf, sign, mid, cfg)?;
                evaluations.push((mid, holds));
                vacuous |= vac;
                if holds {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
        }
    }
    Ok(BreakdownResult {
        claim: claim.name.clone(),
        tau_star: Some(hi),
        grid_tau_star: Some(grid_tau),
        vacuous,
        evaluations,
    })
}

/// Claim profile over a solved grid: one flag per τ, plus the indices at
/// which the claim fails after having held (monotonicity violations).
pub fn claim_profile(claim: &Claim, grid: &IdentifiedSetGrid) -> Result<(Vec<bool>, Vec<usize>)> {
    let mut flags = Vec::with_capacity(grid.tau_grid.len());
    let mut violations = Vec::new();
    for g in 0..grid.tau_grid.len() {
        let (holds, _) = claim.holds_on(grid, g)?;
        if !holds && flags.iter().any(|&f| f) {
            violations.push(g);
        }
        flags.push(holds);
    }
    if !violations.is_empty() {
        log::warn!("claim '{}' fails at larger τ after holding: local optima suspected", claim.name);
    }
    Ok((flags, violations))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaCell {
    pub variable: usize,
    pub horizon: usize,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LopoEntry {
    pub label: String,
    pub kappa_without: f64,
    pub delta: f64,
    /// Δ is negative: removing the proxy appeared to add information,
    /// which only local optima can produce.
    pub caveat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoReport {
    #[serde(with = "crate::tau_serde")]
    pub tau_used: Tau,
    pub kappa_full: f64,
    pub kappa_cells: Vec<KappaCell>,
    /// Cells left out because the sign-only width is zero.
    pub excluded_zero_baseline: usize,
    /// Cells left out because the zoo's identified set is empty.
    pub excluded_empty: usize,
    pub lopo: Vec<LopoEntry>,
}

fn grid_tau_index(grid: &IdentifiedSetGrid, tau: Tau) -> Result<usize> {
    grid.tau_grid
        .iter()
        .position(|&t| t == tau || (t - tau).abs() <= 1e-12 * tau.abs().max(1.0))
        .ok_or_else(|| Error::Invalid(format!("τ = {tau} is not on the grid")))
}

/// κ at one τ: the mean over cells of `1 − width_full/width_sign`.
pub fn zoo_information(full: &IdentifiedSetGrid, sign_only: &IdentifiedSetGrid, tau: Tau) -> Result<InfoReport> {
    let g = grid_tau_index(full, tau)?;
    // the sign-only set does not depend on τ; prefer the matching index
    let gs = grid_tau_index(sign_only, tau).unwrap_or(0);
    let mut cells = Vec::new();
    let mut zero = 0;
    let mut empty = 0;
    for c in full.cells_at(g) {
        let base = sign_only
            .cell(c.variable, c.horizon, gs)
            .ok_or_else(|| Error::Invalid(format!("baseline lacks cell ({}, {})", c.variable, c.horizon)))?;
        let Some(wb) = base.width().filter(|w| *w > ZERO_WIDTH) else {
            zero += 1;
            continue;
        };
        let Some(wf) = c.width() else {
            empty += 1;
            continue;
        };
        cells.push(KappaCell {
            variable: c.variable,
            horizon: c.horizon,
            kappa: 1.0 - wf / wb,
        });
    }
    if cells.is_empty() {
        if empty > 0 {
            return invalid(format!("identified set is empty in every cell at τ = {tau}"));
        }
        return Err(Error::DegenerateBaseline);
    }
    if zero > 0 {
        log::info!("{zero} cells with zero sign-only width excluded from κ");
    }
    let kappa_full = cells.iter().map(|c| c.kappa).sum::<f64>() / cells.len() as f64;
    Ok(InfoReport {
        tau_used: tau,
        kappa_full,
        kappa_cells: cells,
        excluded_zero_baseline: zero,
        excluded_empty: empty,
        lopo: Vec::new(),
    })
}

/// κ of the full zoo plus leave-one-proxy-out deltas, each from an
/// independent sweep over all variables and `horizons`.
pub fn lopo(
    rf: &ReducedForm,
    sign: &[LinearColumnConstraint],
    tau: Tau,
    horizons: &[usize],
    cfg: &SolverConfig,
) -> Result<InfoReport> {
    let k = rf.moments.len();
    if k < 2 {
        return invalid("leave-one-out analysis needs at least two proxies");
    }
    let vars: Vec<usize> = (0..rf.n()).collect();
    let baseline_rf = rf.clone().with_moments(Vec::new());
    let baseline = sweep(&baseline_rf, sign, &[tau], &vars, horizons, cfg)?;
    let full = sweep(rf, sign, &[tau], &vars, horizons, cfg)?;
    let mut report = zoo_information(&full, &baseline, tau)?;
    let without: Vec<Result<f64>> = (0..k)
        .into_par_iter()
        .map(|l| {
            let mut m = rf.moments.clone();
            m.remove(l);
            let sub = sweep(&rf.clone().with_moments(m), sign, &[tau], &vars, horizons, cfg)?;
            Ok(zoo_information(&sub, &baseline, tau)?.kappa_full)
        })
        .collect();
    for (l, kw) in without.into_iter().enumerate() {
        let kw = kw?;
        let delta = report.kappa_full - kw;
        if delta < -LOPO_SLACK {
            log::warn!("LOPO delta for '{}' is {delta:.4}, beyond the local-optimum slack", rf.moments[l].label);
        }
        report.lopo.push(LopoEntry {
            label: rf.moments[l].label.clone(),
            kappa_without: kw,
            delta,
            caveat: delta < 0.0,
        });
    }
    Ok(report)
}

/// Pearson correlation of paired samples.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len();
    if n != b.len() || n < 2 {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of the t-test of zero correlation with `n − 2` degrees
/// of freedom.
pub fn correlation_p_value(r: f64, n: usize) -> Option<f64> {
    if n < 3 {
        return None;
    }
    if r.abs() >= 1.0 {
        return Some(0.0);
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).ok()?;
    Some((2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Significance {
    /// p ≤ 0.01
    P01,
    /// p ≤ 0.05
    P05,
    /// p ≤ 0.10
    P10,
    None,
}

impl Significance {
    pub fn from_p(p: f64) -> Significance {
        if p <= 0.01 {
            Significance::P01
        } else if p <= 0.05 {
            Significance::P05
        } else if p <= 0.10 {
            Significance::P10
        } else {
            Significance::None
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Significance::P01 => "p01",
            Significance::P05 => "p05",
            Significance::P10 => "p10",
            Significance::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrCell {
    pub row: String,
    pub col: String,
    pub overlap: usize,
    /// `None` (NA) when fewer than the minimum overlap are observed.
    pub corr: Option<f64>,
    pub p_value: Option<f64>,
    pub bucket: Option<Significance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMap {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// Row-major.
    pub cells: Vec<CorrCell>,
}

impl CorrelationMap {
    pub fn get(&self, r: usize, c: usize) -> &CorrCell {
        &self.cells[r * self.cols.len() + c]
    }

    /// Plot-ready long table: pair, row, col, corr, p, bucket, overlap.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("pair,row,col,corr,p_value,bucket,overlap\n");
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_else(|| "NA".into());
        for c in &self.cells {
            s.push_str(&format!(
                "{}:{},{},{},{},{},{},{}\n",
                c.row,
                c.col,
                c.row,
                c.col,
                fmt(c.corr),
                fmt(c.p_value),
                c.bucket.map_or("NA", Significance::label),
                c.overlap
            ));
        }
        s
    }
}

fn observed(series: &ProxySeries) -> HashMap<&DateKey, f64> {
    series
        .dates
        .iter()
        .zip(&series.values)
        .filter_map(|(d, v)| v.map(|x| (d, x)))
        .collect()
}

/// Pairwise correlations over dates on which both series are observed.
pub fn correlation_map(a: &[ProxySeries], b: &[ProxySeries]) -> CorrelationMap {
    let maps_b: Vec<HashMap<&DateKey, f64>> = b.iter().map(observed).collect();
    let mut cells = Vec::with_capacity(a.len() * b.len());
    for sa in a {
        for (sb, mb) in b.iter().zip(&maps_b) {
            let (xs, ys): (Vec<f64>, Vec<f64>) = sa
                .dates
                .iter()
                .zip(&sa.values)
                .filter_map(|(d, v)| Some((v.as_ref().copied()?, *mb.get(d)?)))
                .unzip();
            let overlap = xs.len();
            let corr = (overlap >= MIN_PAIR_OVERLAP).then(|| pearson(&xs, &ys)).flatten();
            let p_value = corr.and_then(|r| correlation_p_value(r, overlap));
            cells.push(CorrCell {
                row: sa.label.clone(),
                col: sb.label.clone(),
                overlap,
                corr,
                p_value,
                bucket: p_value.map(Significance::from_p),
            });
        }
    }
    CorrelationMap {
        rows: a.iter().map(|s| s.label.clone()).collect(),
        cols: b.iter().map(|s| s.label.clone()).collect(),
        cells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::restrictions::{compile_sign, SignRestrictionSpec};
    use crate::var::ProxyMoment;
    use nalgebra::{DMatrix, DVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn rf2(moments: &[&[f64]]) -> ReducedForm {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]);
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.8]);
        ReducedForm::from_population(vec!["y".into(), "z".into()], vec![a], sigma, 3)
            .unwrap()
            .with_moments(
                moments
                    .iter()
                    .enumerate()
                    .map(|(i, m)| ProxyMoment::new(format!("m{i}"), DVector::from_row_slice(m)))
                    .collect(),
            )
    }

    fn series(label: &str, vals: &[f64]) -> ProxySeries {
        let dates = (0..vals.len() as i64).map(DateKey::index).collect();
        ProxySeries::from_values(label, dates, vals).unwrap()
    }

    fn cfg() -> SolverConfig {
        SolverConfig {
            restarts: 3,
            ..Default::default()
        }
    }

    #[test]
    fn claim_true_at_zero_breaks_down_at_first_point() {
        let rf = rf2(&[&[0.6, -0.3]]);
        let sign = compile_sign(&SignRestrictionSpec::self_sign_only(), &rf).unwrap();
        // self-sign makes the impact response of y non-negative everywhere
        let claim = Claim {
            name: "y up on impact".into(),
            kind: ClaimKind::SignPositive,
            targets: vec![ClaimTarget {
                variable: 0,
                horizons: vec![0],
                direction: Direction::Positive,
                threshold: 0.0,
            }],
        };
        let res = breakdown_value(&claim, &rf, &sign, &[0.0, 1.0, 2.0], &cfg(), Some(0.01)).unwrap();
        assert_eq!(res.tau_star, Some(0.0));
        assert_eq!(res.evaluations.len(), 1);
    }

    #[test]
    fn unsupported_claim_reports_none() {
        let rf = rf2(&[&[0.6, -0.3]]);
        let sign = compile_sign(&SignRestrictionSpec::self_sign_only(), &rf).unwrap();
        let claim = Claim {
            name: "y down on impact".into(),
            kind: ClaimKind::SignNegative,
            targets: vec![ClaimTarget {
                variable: 0,
                horizons: vec![0],
                direction: Direction::Negative,
                threshold: 0.0,
            }],
        };
        let res = breakdown_value(&claim, &rf, &sign, &[0.0, 5.0], &cfg(), Some(0.01)).unwrap();
        assert!(!res.supported());
        let json = serde_json::to_string(&res).unwrap();
        assert!(json.contains("\"tau_star\":null"));
    }

    #[test]
    fn breakdown_matches_dense_grid() {
        let rf = rf2(&[&[0.6, -0.3]]);
        let sign = compile_sign(&SignRestrictionSpec::self_sign_only(), &rf).unwrap();
        // the point-identified response decides the sign in the valid-IV limit
        let point = crate::setid::point_identified_irf(&rf, 0, &[1]).unwrap()[(1, 0)];
        let claim = Claim {
            name: "z at h=1".into(),
            kind: ClaimKind::JointSign,
            targets: vec![ClaimTarget {
                variable: 1,
                horizons: vec![1],
                direction: if point >= 0.0 { Direction::Positive } else { Direction::Negative },
                threshold: 0.0,
            }],
        };
        let grid = [0.0, 0.5, 1.0, 2.0, 5.0, 20.0];
        let res = breakdown_value(&claim, &rf, &sign, &grid, &cfg(), Some(BREAKDOWN_RESOLUTION)).unwrap();
        let tau_star = res.tau_star.expect("claim holds near the valid-IV limit");
        let g = res.grid_tau_star.unwrap();
        let lo = grid[grid.iter().position(|&t| t == g).unwrap().saturating_sub(1)];
        assert!(tau_star > lo && tau_star <= g);
        let mut dense = lo;
        let mut dense_star = None;
        while dense <= g + 1e-12 {
            if claim_at(&claim, &rf, &sign, dense, &cfg()).unwrap().0 {
                dense_star = Some(dense);
                break;
            }
            dense += BREAKDOWN_RESOLUTION;
        }
        let dense_star = dense_star.unwrap();
        assert!((tau_star - dense_star).abs() <= BREAKDOWN_RESOLUTION + 1e-9, "{tau_star} vs {dense_star}");
    }

    #[test]
    fn empty_zoo_has_zero_information() {
        let rf = rf2(&[&[0.6, -0.3]]);
        let sign = compile_sign(&SignRestrictionSpec::self_sign_only(), &rf).unwrap();
        let base_rf = rf.clone().with_moments(Vec::new());
        let base = sweep(&base_rf, &sign, &[1.0], &[0, 1], &[0, 1, 2], &cfg()).unwrap();
        let again = sweep(&base_rf, &sign, &[1.0], &[0, 1], &[0, 1, 2], &cfg()).unwrap();
        let info = zoo_information(&again, &base, 1.0).unwrap();
        assert_eq!(info.kappa_full, 0.0);
        let full = sweep(&rf, &sign, &[1.0], &[0, 1], &[0, 1, 2], &cfg()).unwrap();
        let info = zoo_information(&full, &base, 1.0).unwrap();
        assert!(info.kappa_full > 0.0 && info.kappa_full <= 1.02);
    }

    #[test]
    fn degenerate_baseline_is_an_error() {
        let rf = rf2(&[&[0.6, -0.3]]);
        let mut base = sweep(&rf, &[], &[1.0], &[0], &[0, 1], &cfg()).unwrap();
        for c in &mut base.cells {
            c.upper = c.lower;
        }
        assert!(matches!(zoo_information(&base, &base, 1.0), Err(Error::DegenerateBaseline)));
    }

    #[test]
    fn duplicate_proxy_adds_nothing() {
        let rf = rf2(&[&[0.6, -0.3], &[0.6, -0.3], &[0.5, 0.1]]);
        let sign = compile_sign(&SignRestrictionSpec::self_sign_only(), &rf).unwrap();
        let info = lopo(&rf, &sign, 1.0, &[0, 1, 2], &cfg()).unwrap();
        assert_eq!(info.lopo.len(), 3);
        assert!(info.lopo[0].delta <= 0.01, "{:?}", info.lopo);
        assert!(info.lopo[1].delta <= 0.01, "{:?}", info.lopo);
        assert!(lopo(&rf2(&[&[0.6, -0.3]]), &sign, 1.0, &[0], &cfg()).is_err());
    }

    #[test]
    fn correlation_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = series("x", &x);
        let b = series("y", &y);
        let map = correlation_map(&[a.clone(), b.clone()], &[a.clone(), b.clone()]);
        assert!((map.get(0, 0).corr.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(map.get(0, 0).p_value, Some(0.0));
        assert!(map.get(0, 1).corr.unwrap().abs() < 0.15);
        assert_eq!(map.get(0, 1).corr, map.get(1, 0).corr);
        for c in &map.cells {
            let p = c.p_value.unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
        assert_eq!(map.to_csv_string().lines().count(), 5);
    }

    #[test]
    fn p_value_matches_reference() {
        // r = 0.3 with n = 30: t = 1.6595, two-sided p ≈ 0.1082
        let p = correlation_p_value(0.3, 30).unwrap();
        assert!((p - 0.1082).abs() < 1e-3, "{p}");
        assert_eq!(Significance::from_p(p), Significance::None);
        assert_eq!(Significance::from_p(0.07), Significance::P10);
        assert_eq!(Significance::from_p(0.05), Significance::P05);
        assert_eq!(Significance::from_p(0.001), Significance::P01);
    }

    #[test]
    fn short_overlap_is_na() {
        let a = series("a", &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let mut vals: Vec<Option<f64>> = (0..12).map(|i| Some(i as f64 * 0.5 + (i % 3) as f64)).collect();
        for v in vals.iter_mut().take(4) {
            *v = None;
        }
        let b = ProxySeries::new("b", a.dates.clone(), vals).unwrap();
        let map = correlation_map(&[a], &[b]);
        let c = map.get(0, 0);
        assert_eq!(c.overlap, 8);
        assert!(c.corr.is_none() && c.p_value.is_none() && c.bucket.is_none());
    }
}
