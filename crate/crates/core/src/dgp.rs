//! Synthetic SVAR data with contaminated proxies and known ground truth.
//!
//! Proxies are built directly from the structural shocks plus independent
//! noise, so their population correlations with every shock are exactly the
//! planned ones.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::io::{DateKey, Panel, ProxySeries};
use crate::restrictions::{check_feasibility, GrrConstraintSet, LinearColumnConstraint, RestrictionSet};
use crate::rotation::random_rotation_matrix;
use crate::var::{cholesky_factor, companion_spectral_radius, reduced_irfs, ReducedForm};
use crate::Tau;

pub const BURN_IN: usize = 200;
/// Fewest admissible rotations accepted for the Median-B construction.
pub const MIN_ADMISSIBLE_DRAWS: usize = 100;

/// Population correlations of one proxy with each structural shock; the
/// remaining variance `1 − ‖c‖²` is independent noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyPlan {
    pub label: String,
    pub correlations: Vec<f64>,
}

impl ProxyPlan {
    pub fn new(label: impl Into<String>, correlations: Vec<f64>) -> ProxyPlan {
        ProxyPlan {
            label: label.into(),
            correlations,
        }
    }

    pub fn noise_variance(&self) -> f64 {
        1.0 - self.correlations.iter().map(|c| c * c).sum::<f64>()
    }

    /// `min_j c₁/|c_j|` over contaminating shocks with non-zero loading.
    pub fn tau0(&self) -> Tau {
        let c1 = self.correlations[0];
        self.correlations[1..]
            .iter()
            .filter(|c| **c != 0.0)
            .map(|c| c1 / c.abs())
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub names: Vec<String>,
    pub t: usize,
    pub seed: u64,
    #[serde(with = "crate::var::mat_list_serde")]
    pub coefficients: Vec<DMatrix<f64>>,
    #[serde(with = "crate::var::mat_serde")]
    pub b0: DMatrix<f64>,
    pub proxies: Vec<ProxyPlan>,
    /// Horizon of the stored true impulse responses.
    pub horizon: usize,
}

impl DgpSpec {
    /// Three-variable VAR(1) with one proxy loading 0.3 on the target shock
    /// and −0.05 / 0.10 on the others (true quality 3).
    pub fn desk_scale(t: usize, seed: u64) -> DgpSpec {
        DgpSpec {
            names: vec!["y1".into(), "y2".into(), "y3".into()],
            t,
            seed,
            coefficients: vec![DMatrix::from_row_slice(
                3,
                3,
                &[0.5, 0.1, 0.0, 0.2, 0.4, 0.1, 0.0, 0.1, 0.3],
            )],
            b0: DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.2, 0.5, 1.0, -0.3, -0.2, 0.4, 1.0]),
            proxies: vec![ProxyPlan::new("m1", vec![0.3, -0.05, 0.10])],
            horizon: 12,
        }
    }

    pub fn n(&self) -> usize {
        self.b0.nrows()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        if n < 2 || self.b0.ncols() != n || self.names.len() != n {
            return invalid("B0 must be square with one name per variable (n ≥ 2)");
        }
        if self.coefficients.is_empty() || self.coefficients.iter().any(|a| a.shape() != (n, n)) {
            return invalid("coefficient matrices must be n×n, at least one lag");
        }
        let radius = companion_spectral_radius(&self.coefficients);
        if !(radius < 1.0) {
            return invalid(format!("unstable DGP: companion spectral radius {radius:.6}"));
        }
        if self.b0.clone().lu().determinant().abs() < 1e-10 {
            return invalid("B0 is singular");
        }
        if self.t == 0 {
            return invalid("sample length must be positive");
        }
        for p in &self.proxies {
            if p.correlations.len() != n {
                return invalid(format!("proxy '{}' needs {n} correlations", p.label));
            }
            if !(p.correlations[0] > 0.0) {
                return invalid(format!("proxy '{}' must load positively on the target shock", p.label));
            }
            if !(p.noise_variance() > 0.0) {
                return invalid(format!("proxy '{}': correlation vector must have norm < 1", p.label));
            }
        }
        Ok(())
    }
}

/// Ground truth of a simulated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    #[serde(with = "crate::var::mat_serde")]
    pub b0: DMatrix<f64>,
    /// `L₀⁻¹B₀` with `L₀` the Cholesky factor of `B₀B₀ᵀ`.
    #[serde(with = "crate::var::mat_serde")]
    pub o0: DMatrix<f64>,
    #[serde(with = "crate::tau_serde::vec")]
    pub tau0: Vec<Tau>,
    /// Responses to the target shock: rows are variables, columns horizons.
    #[serde(with = "crate::var::mat_serde")]
    pub irf: DMatrix<f64>,
    /// Realized structural shocks, `T × n`.
    #[serde(with = "crate::var::mat_serde")]
    pub shocks: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub panel: Panel,
    pub proxies: Vec<ProxySeries>,
    pub truth: Truth,
}

/// Flips columns of `B₀` to a positive diagonal (a relabeling of shock signs).
fn sign_normalize(b0: &DMatrix<f64>) -> DMatrix<f64> {
    let mut b = b0.clone();
    for j in 0..b.ncols() {
        if b[(j, j)] < 0.0 {
            log::info!("flipping the sign of shock {j} so that B0 has a positive diagonal");
            b.column_mut(j).neg_mut();
        }
    }
    b
}

/// Structural responses to shock 0 up to `horizon`.
pub fn true_irf(coefficients: &[DMatrix<f64>], b0: &DMatrix<f64>, horizon: usize) -> DMatrix<f64> {
    let c = reduced_irfs(coefficients, horizon);
    let mut out = DMatrix::zeros(b0.nrows(), horizon + 1);
    for (h, ch) in c.iter().enumerate() {
        out.set_column(h, &(ch * b0.column(0)));
    }
    out
}

pub fn simulate(spec: &DgpSpec) -> Result<Simulation> {
    spec.validate()?;
    let n = spec.n();
    let p = spec.coefficients.len();
    let b0 = sign_normalize(&spec.b0);
    let sigma = &b0 * b0.transpose();
    let l0 = cholesky_factor(&sigma)?;
    let o0 = l0
        .clone()
        .solve_lower_triangular(&b0)
        .ok_or_else(|| Error::Invalid("singular Cholesky factor".into()))?;
    if o0.determinant() < 0.0 {
        log::warn!("true rotation has determinant −1; only its first column is reachable within SO(n) under full self-sign restrictions");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = BURN_IN + spec.t;
    let mut y = DMatrix::<f64>::zeros(total + p, n);
    let mut shocks = DMatrix::<f64>::zeros(spec.t, n);
    for s in 0..total {
        let eps = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let mut next = &b0 * &eps;
        for (l, a) in spec.coefficients.iter().enumerate() {
            next += a * y.row(s + p - 1 - l).transpose();
        }
        y.set_row(s + p, &next.transpose());
        if s >= BURN_IN {
            shocks.set_row(s - BURN_IN, &eps.transpose());
        }
    }
    let values = y.rows(BURN_IN + p, spec.t).into_owned();
    let dates: Vec<DateKey> = (0..spec.t as i64).map(DateKey::index).collect();
    let panel = Panel::new(dates.clone(), values, spec.names.clone())?;

    let mut proxies = Vec::with_capacity(spec.proxies.len());
    for plan in &spec.proxies {
        let c = DVector::from_column_slice(&plan.correlations);
        let sd = plan.noise_variance().sqrt();
        let vals: Vec<f64> = (0..spec.t)
            .map(|t| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                shocks.row(t).transpose().dot(&c) + sd * noise
            })
            .collect();
        proxies.push(ProxySeries::from_values(plan.label.clone(), dates.clone(), &vals)?);
    }

    Ok(Simulation {
        panel,
        proxies,
        truth: Truth {
            irf: true_irf(&spec.coefficients, &b0, spec.horizon),
            b0,
            o0,
            tau0: spec.proxies.iter().map(ProxyPlan::tau0).collect(),
            shocks,
        },
    })
}

/// Accept/reject draws of Haar rotations against the sign constraints.
/// Stops after `wanted` acceptances or `max_attempts` draws.
pub fn sample_admissible_rotations(
    rf: &ReducedForm,
    sign: &[LinearColumnConstraint],
    wanted: usize,
    max_attempts: usize,
    seed: u64,
) -> Result<Vec<DMatrix<f64>>> {
    let n = rf.n();
    let set = RestrictionSet::new(n, sign.to_vec(), GrrConstraintSet::empty(0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(wanted);
    for _ in 0..max_attempts {
        if out.len() >= wanted {
            break;
        }
        let o = random_rotation_matrix(n, &mut rng);
        if check_feasibility(&o, &set, 0.0).0 {
            out.push(o);
        }
    }
    if out.len() < MIN_ADMISSIBLE_DRAWS {
        return Err(Error::SamplingTooTight {
            accepted: out.len(),
            required: MIN_ADMISSIBLE_DRAWS,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BVariant {
    /// Element-wise median of the admissible `B = LO`.
    Median,
    /// Admissible draw closest to the median in Frobenius norm.
    Closest,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Element-wise median of `L·O` over the draws.
pub fn median_b(draws: &[DMatrix<f64>], chol: &DMatrix<f64>) -> DMatrix<f64> {
    let bs: Vec<DMatrix<f64>> = draws.iter().map(|o| chol * o).collect();
    let n = chol.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        let mut col: Vec<f64> = bs.iter().map(|b| b[(i, j)]).collect();
        median(&mut col)
    })
}

/// Index of the draw whose `L·O` is closest to `target` in Frobenius norm.
pub fn closest_draw(draws: &[DMatrix<f64>], chol: &DMatrix<f64>, target: &DMatrix<f64>) -> Option<usize> {
    draws
        .iter()
        .map(|o| (chol * o - target).norm())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

/// Target-shock series `(B⁻¹u_t)₁` implied by the Median-B or Closest-B
/// representation, over the residual sample.
pub fn median_b_proxy(draws: &[DMatrix<f64>], rf: &ReducedForm, variant: BVariant) -> Result<ProxySeries> {
    if draws.len() < MIN_ADMISSIBLE_DRAWS {
        return Err(Error::SamplingTooTight {
            accepted: draws.len(),
            required: MIN_ADMISSIBLE_DRAWS,
        });
    }
    if rf.residuals.nrows() == 0 {
        return invalid("reduced form carries no residuals");
    }
    let med = median_b(draws, &rf.chol);
    let (b, label) = match variant {
        BVariant::Median => (med, "median_b"),
        BVariant::Closest => {
            let i = closest_draw(draws, &rf.chol, &med).expect("non-empty draws");
            (&rf.chol * &draws[i], "closest_b")
        }
    };
    let lu = b.lu();
    let shocks = lu
        .solve(&rf.residuals.transpose())
        .ok_or_else(|| Error::Invalid("median B is singular".into()))?;
    let vals: Vec<f64> = shocks.row(0).iter().copied().collect();
    ProxySeries::from_values(label, rf.residual_dates.clone(), &vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::restrictions::{compile_sign, SignRestrictionSpec};
    use crate::var::{estimate_var, VarSpec};

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn tau0_from_plan() {
        assert!((ProxyPlan::new("m", vec![0.3, -0.05, 0.10]).tau0() - 3.0).abs() < 1e-12);
        assert!(ProxyPlan::new("m", vec![0.4, 0.0, 0.0]).tau0().is_infinite());
        assert_eq!(ProxyPlan::new("m", vec![0.5, 0.25]).tau0(), 2.0);
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut s = DgpSpec::desk_scale(100, 1);
        s.coefficients[0] *= 3.0;
        assert!(simulate(&s).is_err());
        let mut s = DgpSpec::desk_scale(100, 1);
        s.proxies[0].correlations = vec![0.9, 0.5, 0.1];
        assert!(simulate(&s).is_err());
        let mut s = DgpSpec::desk_scale(100, 1);
        s.b0 = DMatrix::zeros(3, 3);
        assert!(simulate(&s).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = simulate(&DgpSpec::desk_scale(300, 9)).unwrap();
        let b = simulate(&DgpSpec::desk_scale(300, 9)).unwrap();
        let c = simulate(&DgpSpec::desk_scale(300, 10)).unwrap();
        assert_eq!(a.panel.values(), b.panel.values());
        assert_eq!(a.proxies, b.proxies);
        assert_ne!(a.panel.values(), c.panel.values());
    }

    #[test]
    fn truth_rotation_and_sample_correlations() {
        let sim = simulate(&DgpSpec::desk_scale(5000, 4)).unwrap();
        let t = &sim.truth;
        assert!((t.tau0[0] - 3.0).abs() < 1e-12);
        assert!((t.o0.transpose() * &t.o0 - DMatrix::identity(3, 3)).amax() < 1e-12);
        assert!(t.o0.determinant() > 0.0);
        let m: Vec<f64> = sim.proxies[0].values.iter().map(|v| v.unwrap()).collect();
        for (j, c) in [0.3, -0.05, 0.10].iter().enumerate() {
            let e: Vec<f64> = t.shocks.column(j).iter().copied().collect();
            assert!((corr(&m, &e) - c).abs() < 0.03, "shock {j}");
        }
        // impact response equals the first column of B0
        assert!((t.irf.column(0) - t.b0.column(0)).amax() < 1e-15);
    }

    #[test]
    fn estimated_moment_matches_rotated_correlations() {
        let sim = simulate(&DgpSpec::desk_scale(5000, 5)).unwrap();
        let rf = estimate_var(&sim.panel, &VarSpec::new(1, true, 4).unwrap()).unwrap();
        let rf = crate::var::attach_moments(rf, &sim.proxies, Default::default()).unwrap();
        let implied = sim.truth.o0.transpose() * &rf.moments[0].values;
        for (j, c) in [0.3, -0.05, 0.10].iter().enumerate() {
            assert!((implied[j] - c).abs() < 0.04, "{implied}");
        }
    }

    #[test]
    fn closest_draw_matches_exhaustive_scan() {
        let sim = simulate(&DgpSpec::desk_scale(400, 2)).unwrap();
        let rf = estimate_var(&sim.panel, &VarSpec::new(1, true, 2).unwrap()).unwrap();
        let sign = compile_sign(&SignRestrictionSpec::self_sign_only(), &rf).unwrap();
        let draws = sample_admissible_rotations(&rf, &sign, 150, 100_000, 3).unwrap();
        assert_eq!(draws.len(), 150);
        let med = median_b(&draws, &rf.chol);
        let i = closest_draw(&draws, &rf.chol, &med).unwrap();
        let best = (&rf.chol * &draws[i] - &med).norm();
        for o in &draws {
            assert!(best <= (&rf.chol * o - &med).norm());
        }
    }

    #[test]
    fn duplicated_draw_gives_its_own_shock_series() {
        let sim = simulate(&DgpSpec::desk_scale(400, 2)).unwrap();
        let rf = estimate_var(&sim.panel, &VarSpec::new(1, true, 2).unwrap()).unwrap();
        let o = crate::rotation::random_rotation_seeded(3, 8).matrix;
        let draws = vec![o.clone(); MIN_ADMISSIBLE_DRAWS];
        let proxy = median_b_proxy(&draws, &rf, BVariant::Median).unwrap();
        let b = &rf.chol * &o;
        let direct = b.lu().solve(&rf.residuals.transpose()).unwrap();
        for (t, v) in proxy.values.iter().enumerate() {
            assert!((v.unwrap() - direct[(0, t)]).abs() < 1e-12);
        }
        assert!(median_b_proxy(&draws[..50], &rf, BVariant::Median).is_err());
    }

    #[test]
    fn tight_signs_fail_sampling() {
        let sim = simulate(&DgpSpec::desk_scale(400, 2)).unwrap();
        let rf = estimate_var(&sim.panel, &VarSpec::new(1, true, 2).unwrap()).unwrap();
        let r = rf.response_vector(0, 0);
        let sign = vec![
            LinearColumnConstraint {
                column: 0,
                vector: r.clone(),
                label: "a".into(),
            },
            LinearColumnConstraint {
                column: 0,
                vector: -r,
                label: "b".into(),
            },
        ];
        assert!(matches!(
            sample_admissible_rotations(&rf, &sign, 200, 2000, 1),
            Err(Error::SamplingTooTight { .. })
        ));
    }
}
