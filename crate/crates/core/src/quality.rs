//! Partial identification of the proxy-quality parameter.
//!
//! Every feasible target column lies within the cap of half-angle `ρ(τ)`
//! around each normalized proxy moment. The largest `τ` compatible with some
//! sign-feasible direction follows from the max-min cosine
//! `c* = max_q min_ℓ M̂_ℓᵀq`, solved in epigraph form.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::optim::{solve_local, Problem, SolverConfig};
use crate::restrictions::LinearColumnConstraint;
use crate::Tau;

/// c* values this close to one are treated as one (τ̄ = ∞).
pub const CSTAR_CLIP: f64 = 1e-9;

/// Cap half-angle `arctan(√(n−1)/τ)`, with `ρ(0) = π/2` and `ρ(∞) = 0`.
pub fn rho(tau: Tau, n: usize) -> Result<f64> {
    if n < 2 {
        return invalid("dimension must be at least 2");
    }
    if tau.is_nan() || tau < 0.0 {
        return invalid(format!("quality parameter must be non-negative, got {tau}"));
    }
    if tau == 0.0 {
        return Ok(std::f64::consts::FRAC_PI_2);
    }
    if tau.is_infinite() {
        return Ok(0.0);
    }
    Ok(((n as f64 - 1.0).sqrt() / tau).atan())
}

/// `√(n−1)·c*/√(1−c*²)`, infinite at `c* = 1`.
pub fn tau_bar(c_star: f64, n: usize) -> Result<Tau> {
    if n < 2 {
        return invalid("dimension must be at least 2");
    }
    if c_star.is_nan() || !(0.0..=1.0 + CSTAR_CLIP).contains(&c_star) {
        return invalid(format!("c* must lie in [0, 1], got {c_star}"));
    }
    let c = c_star.min(1.0);
    if c >= 1.0 - CSTAR_CLIP {
        return Ok(f64::INFINITY);
    }
    Ok((n as f64 - 1.0).sqrt() * c / (1.0 - c * c).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauBoundResult {
    pub c_star: f64,
    #[serde(with = "crate::tau_serde")]
    pub tau_bar: Tau,
    pub arg_q: Vec<f64>,
    /// Angle (radians) between `arg_q` and each proxy moment.
    pub angles: Vec<f64>,
    /// Relative gap `(c*_grid − c*)/c*_grid` against a sphere grid, when computed.
    pub oracle_gap: Option<f64>,
}

/// `min_ℓ M̂_ℓᵀq` for unit `q`.
pub fn min_cosine(units: &[DVector<f64>], q: &DVector<f64>) -> f64 {
    units.iter().map(|m| m.dot(q)).fold(f64::INFINITY, f64::min)
}

/// Epigraph form over `x = (q, t)`: maximize `t` subject to
/// `M̂_ℓᵀq/‖q‖ ≥ t` and `r̂ᵀq/‖q‖ ≥ 0`.
struct Epigraph<'a> {
    n: usize,
    units: &'a [DVector<f64>],
    signs: &'a [DVector<f64>],
}

impl Problem for Epigraph<'_> {
    type Point = DVector<f64>;

    fn dim(&self) -> usize {
        self.n + 1
    }

    fn n_ineq(&self) -> usize {
        self.units.len() + self.signs.len()
    }

    fn n_eq(&self) -> usize {
        0
    }

    fn evaluate(&self, x: &DVector<f64>, cons: &mut [f64]) -> f64 {
        let q = x.rows(0, self.n);
        let t = x[self.n];
        let len = q.norm();
        for (c, m) in self.units.iter().enumerate() {
            cons[c] = m.dot(&q) / len - t;
        }
        let k = self.units.len();
        for (c, r) in self.signs.iter().enumerate() {
            cons[k + c] = r.dot(&q) / len;
        }
        -t
    }

    fn combined_gradient(&self, x: &DVector<f64>, w_obj: f64, w_cons: &[f64], out: &mut [f64]) {
        let n = self.n;
        let q = x.rows(0, n);
        let len = q.norm();
        let qhat = q / len;
        let mut gq = DVector::zeros(n);
        let mut gt = -w_obj;
        // ∇_q (aᵀq/‖q‖) = (a − (aᵀq̂)q̂)/‖q‖
        for (a, &w) in self.units.iter().chain(self.signs.iter()).zip(w_cons) {
            if w != 0.0 {
                gq += (a - &qhat * a.dot(&qhat)) * (w / len);
            }
        }
        for &w in &w_cons[..self.units.len()] {
            gt -= w;
        }
        out[..n].copy_from_slice(gq.as_slice());
        out[n] = gt;
    }

    fn retract(&self, x: &DVector<f64>, step: &[f64]) -> DVector<f64> {
        x + DVector::from_column_slice(step)
    }

    fn normalize(&self, mut x: DVector<f64>) -> DVector<f64> {
        let len = x.rows(0, self.n).norm();
        if len > 0.0 {
            x.rows_mut(0, self.n).unscale_mut(len);
        }
        x
    }
}

fn unit_vectors(moments: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    moments
        .iter()
        .enumerate()
        .map(|(l, m)| {
            let len = m.norm();
            if len == 0.0 || !len.is_finite() {
                Err(Error::DegenerateProxy(format!("proxy {l}")))
            } else {
                Ok(m / len)
            }
        })
        .collect()
}

/// Constraints on the target column only enter the sphere problem.
fn target_sign_units(sign: &[LinearColumnConstraint]) -> Vec<DVector<f64>> {
    sign.iter()
        .filter(|c| c.column == 0)
        .map(|c| &c.vector / c.vector.norm())
        .collect()
}

fn sign_ok(signs: &[DVector<f64>], q: &DVector<f64>, tol: f64) -> bool {
    signs.iter().all(|r| r.dot(q) >= -tol)
}

/// Exact max-min on the active set: with active proxies `A` and active sign
/// rows `R`, the best `t` with `Aq = t·1`, `Rq = 0`, `‖q‖ = 1` is `1/‖p‖` for
/// the minimum-norm `p` solving `Ap = 1`, `Rp = 0`.
fn polish(units: &[DVector<f64>], signs: &[DVector<f64>], q: &DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    let cmin = min_cosine(units, q);
    let active_m: Vec<&DVector<f64>> = units.iter().filter(|m| m.dot(q) <= cmin + tol).collect();
    let active_r: Vec<&DVector<f64>> = signs.iter().filter(|r| r.dot(q).abs() <= tol).collect();
    let rows = active_m.len() + active_r.len();
    let n = q.len();
    if rows == 0 || rows > n {
        return None;
    }
    let mut a = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(rows);
    for (i, m) in active_m.iter().enumerate() {
        a.set_row(i, &m.transpose());
        b[i] = 1.0;
    }
    for (i, r) in active_r.iter().enumerate() {
        a.set_row(active_m.len() + i, &r.transpose());
    }
    // minimum-norm solution p = Aᵀ(AAᵀ)⁻¹b
    let gram = &a * a.transpose();
    let y = gram.cholesky()?.solve(&b);
    let p = a.transpose() * y;
    let len = p.norm();
    if !(len.is_finite() && len > 0.0) {
        return None;
    }
    let cand = p / len;
    (cand.dot(q) > 0.0).then_some(cand)
}

/// Solves for `c*` and its maximizer over the sign-feasible sphere.
pub fn solve_cstar(
    moments: &[DVector<f64>],
    sign: &[LinearColumnConstraint],
    cfg: &SolverConfig,
) -> Result<TauBoundResult> {
    if moments.is_empty() {
        return invalid("at least one proxy moment is required");
    }
    let n = moments[0].len();
    if n < 2 || moments.iter().any(|m| m.len() != n) {
        return invalid("proxy moments must share a dimension of at least 2");
    }
    let units = unit_vectors(moments)?;
    let signs = target_sign_units(sign);
    let problem = Epigraph {
        n,
        units: &units,
        signs: &signs,
    };

    let mut starts: Vec<DVector<f64>> = units.clone();
    let mean: DVector<f64> = units.iter().fold(DVector::zeros(n), |acc, u| acc + u);
    if mean.norm() > 1e-12 {
        starts.push(&mean / mean.norm());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.restarts {
        let g = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        starts.push(&g / g.norm());
    }

    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut consider = |q: DVector<f64>| {
        let q = &q / q.norm();
        if !sign_ok(&signs, &q, cfg.feas_tol) {
            return;
        }
        let c = min_cosine(&units, &q);
        if best.as_ref().is_none_or(|(b, _)| c > *b) {
            best = Some((c, q));
        }
    };
    for q0 in starts {
        let mut x = DVector::zeros(n + 1);
        x.rows_mut(0, n).copy_from(&q0);
        x[n] = min_cosine(&units, &q0);
        let sol = solve_local(&problem, x, cfg);
        let q = sol.point.rows(0, n).into_owned();
        if q.norm() > 0.0 {
            consider(q);
        }
    }
    let (mut c_star, mut q) = best.ok_or(Error::EmptySignRegion)?;
    if let Some(p) = polish(&units, &signs, &q, 1e-6) {
        let c = min_cosine(&units, &p);
        if sign_ok(&signs, &p, 1e-12) && c >= c_star {
            c_star = c;
            q = p;
        }
    }
    let c_clipped = if c_star >= 1.0 - CSTAR_CLIP { 1.0 } else { c_star.max(0.0) };
    let angles = units.iter().map(|m| m.dot(&q).clamp(-1.0, 1.0).acos()).collect();
    Ok(TauBoundResult {
        c_star: c_clipped,
        tau_bar: tau_bar(c_clipped, n)?,
        arg_q: q.iter().copied().collect(),
        angles,
        oracle_gap: None,
    })
}

/// Quasi-uniform points on the unit sphere: an even circle grid for n = 2
/// and a Fibonacci lattice for n = 3.
pub fn sphere_grid(n: usize, count: usize) -> Result<Vec<DVector<f64>>> {
    match n {
        2 => Ok((0..count)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect()),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            Ok((0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * k as f64;
                    DVector::from_vec(vec![r * phi.cos(), r * phi.sin(), z])
                })
                .collect())
        }
        _ => invalid("sphere grids are available for n ≤ 3 only"),
    }
}

/// Max-min cosine over a sphere grid; `None` when no grid point is
/// sign-feasible.
pub fn grid_cstar(moments: &[DVector<f64>], sign: &[LinearColumnConstraint], count: usize) -> Result<Option<f64>> {
    let n = moments.first().map(|m| m.len()).unwrap_or(0);
    let units = unit_vectors(moments)?;
    let signs = target_sign_units(sign);
    let best = sphere_grid(n, count)?
        .iter()
        .filter(|q| sign_ok(&signs, q, 0.0))
        .map(|q| min_cosine(&units, q))
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))));
    Ok(best)
}

/// Attaches the relative gap against a grid oracle (n ≤ 3).
pub fn with_oracle_gap(
    mut result: TauBoundResult,
    moments: &[DVector<f64>],
    sign: &[LinearColumnConstraint],
    count: usize,
) -> Result<TauBoundResult> {
    if let Some(g) = grid_cstar(moments, sign, count)? {
        let denom = g.abs().max(1e-12);
        result.oracle_gap = Some((g - result.c_star) / denom);
    }
    Ok(result)
}

/// Two unit proxy moments that, at quality `tau0`, admit exactly one
/// feasible target column: the first column of `o0`.
pub fn construct_point_id_zoo(o0: &DMatrix<f64>, tau0: Tau) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = o0.nrows();
    if n < 2 || o0.ncols() != n {
        return invalid("rotation must be square with n ≥ 2");
    }
    if tau0.is_nan() || tau0 < 1.0 {
        return invalid(format!("construction requires τ₀ ≥ 1, got {tau0}"));
    }
    let r = rho(tau0, n)?;
    let rest: DVector<f64> = (1..n).fold(DVector::zeros(n), |acc, j| acc + o0.column(j));
    let along = o0.column(0) * r.cos();
    let across = rest * (r.sin() / (n as f64 - 1.0).sqrt());
    Ok((&along + &across, &along - &across))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn half_space(r: &[f64]) -> LinearColumnConstraint {
        LinearColumnConstraint {
            column: 0,
            vector: v(r),
            label: "h".into(),
        }
    }

    #[test]
    fn rho_conventions() {
        assert_eq!(rho(0.0, 3).unwrap(), FRAC_PI_2);
        assert!((rho(1.0, 2).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert_eq!(rho(f64::INFINITY, 4).unwrap(), 0.0);
        assert!(rho(-1.0, 3).is_err());
        let mut last = FRAC_PI_2;
        for k in 1..50 {
            let r = rho(k as f64 * 0.3, 4).unwrap();
            assert!(r < last);
            last = r;
        }
    }

    #[test]
    fn tau_bar_values() {
        assert_eq!(tau_bar(0.0, 3).unwrap(), 0.0);
        assert!((tau_bar(SQRT_2 / 2.0, 2).unwrap() - 1.0).abs() < 1e-12);
        assert!(tau_bar(1.0, 3).unwrap().is_infinite());
        assert!(tau_bar(1.0 - 1e-10, 3).unwrap().is_infinite());
        assert!(tau_bar(1.1, 3).is_err());
        assert!(tau_bar(-0.1, 3).is_err());
        let mut last = -1.0;
        for k in 0..99 {
            let t = tau_bar(k as f64 / 100.0, 3).unwrap();
            assert!(t > last);
            last = t;
        }
    }

    #[test]
    fn single_proxy_inside_cone_is_unbounded() {
        let m = v(&[0.5, 0.2, 0.1]);
        let res = solve_cstar(&[m.clone()], &[half_space(&[1.0, 0.0, 0.0])], &SolverConfig::default()).unwrap();
        assert_eq!(res.c_star, 1.0);
        assert!(res.tau_bar.is_infinite());
        let q = v(&res.arg_q);
        assert!((q - &m / m.norm()).amax() < 1e-8);
    }

    #[test]
    fn orthogonal_pair_in_two_dimensions() {
        let res = solve_cstar(&[v(&[1.0, 0.0]), v(&[0.0, 2.0])], &[], &SolverConfig::default()).unwrap();
        assert!((res.c_star - SQRT_2 / 2.0).abs() < 1e-9);
        assert!((res.tau_bar - 1.0).abs() < 1e-8);
        assert!((res.arg_q[0] - SQRT_2 / 2.0).abs() < 1e-8);
        assert!((res.arg_q[1] - SQRT_2 / 2.0).abs() < 1e-8);
    }

    #[test]
    fn proxy_outside_half_space_projects_to_boundary() {
        // boundary x = 0 in the plane; M at angle δ beyond it
        for delta in [0.1f64, 0.4, 1.0] {
            let m = v(&[-delta.sin(), delta.cos(), 0.0]);
            let res = solve_cstar(&[m], &[half_space(&[1.0, 0.0, 0.0])], &SolverConfig::default()).unwrap();
            assert!((res.c_star - delta.cos()).abs() < 1e-8, "δ = {delta}: {}", res.c_star);
        }
    }

    #[test]
    fn empty_sign_region_is_an_error() {
        let signs = [half_space(&[1.0, 0.0]), half_space(&[-1.0, 0.0]), half_space(&[0.0, 1.0]), half_space(&[0.0, -1.0])];
        let cfg = SolverConfig {
            restarts: 4,
            ..Default::default()
        };
        assert!(matches!(solve_cstar(&[v(&[1.0, 1.0])], &signs, &cfg), Err(Error::EmptySignRegion)));
    }

    #[test]
    fn epigraph_matches_ratio_form() {
        let ms = [v(&[1.0, 0.2, 0.1]), v(&[0.3, 1.0, -0.2]), v(&[0.5, 0.1, 0.9])];
        let res = solve_cstar(&ms, &[], &SolverConfig::default()).unwrap();
        let q = v(&res.arg_q);
        let ratio = ms
            .iter()
            .map(|m| {
                let c = m.dot(&q) / m.norm();
                c / (1.0 - c * c).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
            * 2f64.sqrt();
        assert!((ratio - res.tau_bar).abs() < 1e-6 * res.tau_bar.max(1.0));
    }

    #[test]
    fn solver_dominates_sphere_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..6 {
            let k = 2 + case % 3;
            let ms: Vec<DVector<f64>> = (0..k)
                .map(|_| {
                    let mut g = DVector::<f64>::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
                    g[0] += 1.5;
                    g
                })
                .collect();
            let signs = if case % 2 == 0 { vec![half_space(&[1.0, 0.0, 0.0])] } else { vec![] };
            let res = solve_cstar(&ms, &signs, &SolverConfig::default()).unwrap();
            let res = with_oracle_gap(res, &ms, &signs, 100_000).unwrap();
            let grid = grid_cstar(&ms, &signs, 100_000).unwrap().unwrap();
            assert!(res.c_star >= grid - 1e-3, "case {case}: {} vs grid {grid}", res.c_star);
            assert!(res.oracle_gap.unwrap() <= 1e-3);
        }
    }

    #[test]
    fn zoo_closed_form_in_two_dimensions() {
        let (m1, m2) = construct_point_id_zoo(&DMatrix::identity(2, 2), 1.0).unwrap();
        let h = SQRT_2 / 2.0;
        assert!((m1 - v(&[h, h])).amax() < 1e-15);
        assert!((m2 - v(&[h, -h])).amax() < 1e-15);
        assert!(construct_point_id_zoo(&DMatrix::identity(2, 2), 0.5).is_err());
    }

    #[test]
    fn zoo_vectors_are_unit_and_bound_is_tight() {
        let o0 = crate::rotation::random_rotation_seeded(4, 3).matrix;
        for tau0 in [1.0, 2.0, 7.5] {
            let (m1, m2) = construct_point_id_zoo(&o0, tau0).unwrap();
            assert!((m1.norm() - 1.0).abs() < 1e-14);
            assert!((m2.norm() - 1.0).abs() < 1e-14);
            let res = solve_cstar(&[m1, m2], &[], &SolverConfig::default()).unwrap();
            assert!((res.tau_bar - tau0).abs() < 1e-9 * tau0, "{} vs {tau0}", res.tau_bar);
        }
    }
}
