//! Reference designs shared by the acceptance suite: small population
//! reduced forms with known geometry, and proxies with prescribed sample
//! moments.

use anyhow::{Context, Result};
use nalgebra::{DMatrix, DVector};

use grr_core::io::ProxySeries;
use grr_core::quality::construct_point_id_zoo;
use grr_core::rotation::random_rotation_seeded;
use grr_core::var::{ProxyMoment, ReducedForm};

/// Bivariate VAR(1) in population with the given proxy moments.
pub fn bivariate(moments: &[&[f64]], horizon: usize) -> ReducedForm {
    let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.3]);
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 0.8]);
    ReducedForm::from_population(vec!["y".into(), "z".into()], vec![a], sigma, horizon)
        .expect("valid population design")
        .with_moments(
            moments
                .iter()
                .enumerate()
                .map(|(i, m)| ProxyMoment::new(format!("m{i}"), DVector::from_row_slice(m)))
                .collect(),
        )
}

/// Trivariate VAR(1) in population, no proxies attached.
pub fn trivariate(horizon: usize) -> ReducedForm {
    let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.0, 0.3, 0.2, 0.1, 0.0, 0.4]);
    let sigma = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.1, 0.3, 2.0, 0.4, 0.1, 0.4, 1.5]);
    ReducedForm::from_population(vec!["a".into(), "b".into(), "c".into()], vec![a], sigma, horizon)
        .expect("valid population design")
}

/// Seven variables, eight proxies loading mainly on the first orthogonal
/// direction; the size of the performance benchmark.
pub fn seven_variable(horizon: usize) -> Result<ReducedForm> {
    let n = 7;
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.5 } else { 0.03 * ((i + 2 * j) % 5) as f64 - 0.06 });
    let b = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.1 * ((3 * i + j) % 7) as f64 - 0.3 });
    let names = (0..n).map(|i| format!("v{i}")).collect();
    let moments = (0..8)
        .map(|l| {
            let mut v = DVector::from_fn(n, |i, _| 0.05 * (((i + l) % 4) as f64 - 1.5));
            v[0] += 1.0;
            ProxyMoment::new(format!("p{l}"), v)
        })
        .collect();
    Ok(ReducedForm::from_population(names, vec![a], &b * b.transpose(), horizon)?.with_moments(moments))
}

/// Two proxy moments that point-identify the first column of a fixed
/// rotation at quality `tau0`.
pub fn point_id_moments(n: usize, tau0: f64) -> Result<Vec<DVector<f64>>> {
    let o0 = random_rotation_seeded(n, 17).matrix;
    let (m1, m2) = construct_point_id_zoo(&o0, tau0)?;
    Ok(vec![m1, m2])
}

/// Attaches [`point_id_moments`] to `rf`.
pub fn with_point_id_zoo(rf: ReducedForm, tau0: f64) -> Result<ReducedForm> {
    let moments = point_id_moments(rf.n(), tau0)?
        .into_iter()
        .enumerate()
        .map(|(i, m)| ProxyMoment::new(format!("zoo{}", i + 1), m))
        .collect();
    Ok(rf.with_moments(moments))
}

/// Proxies whose sample moments equal prescribed vectors exactly:
/// `m_t = z_tᵀa` with `z_t = L⁻¹û_t` and `a = (ZᵀZ/T)⁻¹M`.
pub fn proxies_with_moments(rf: &ReducedForm, targets: &[DVector<f64>]) -> Result<Vec<ProxySeries>> {
    let z = rf.chol.clone().solve_lower_triangular(&rf.residuals.transpose()).context("singular L")?;
    let gram: DMatrix<f64> = &z * z.transpose() / z.ncols() as f64;
    let chol = gram.cholesky().context("singular residual Gram matrix")?;
    targets
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let a = chol.solve(m);
            let vals: Vec<f64> = (0..z.ncols()).map(|c| z.column(c).dot(&a)).collect();
            Ok(ProxySeries::from_values(format!("zoo{}", i + 1), rf.residual_dates.clone(), &vals)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    use grr_core::dgp::{simulate, DgpSpec};
    use grr_core::var::{attach_moments, estimate_var, VarSpec};

    #[test]
    fn prescribed_moments_are_exact() {
        let sim = simulate(&DgpSpec::desk_scale(300, 3)).unwrap();
        let rf = estimate_var(&sim.panel, &VarSpec::new(1, true, 2).unwrap()).unwrap();
        let targets = point_id_moments(3, 2.0).unwrap();
        let proxies = proxies_with_moments(&rf, &targets).unwrap();
        let rf = attach_moments(rf, &proxies, Default::default()).unwrap();
        for (m, t) in rf.moments.iter().zip(&targets) {
            assert!((&m.values - t).amax() < 1e-10, "{} vs {t}", m.values);
        }
    }

    #[test]
    fn zoo_moments_are_unit_vectors() {
        for m in point_id_moments(3, 2.0).unwrap() {
            assert!((m.norm() - 1.0).abs() < 1e-12);
        }
    }
}
