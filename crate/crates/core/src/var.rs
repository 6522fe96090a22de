//! Reduced-form VAR estimation.
//!
//! Collects everything that is consistently estimable from the data: lag
//! coefficients, residual covariance and its Cholesky factor, reduced-form
//! impulse responses and the proxy moment vectors `E[L⁻¹ u_t m_t]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::io::{DateKey, MissingPolicy, Panel, ProxySeries};

/// Lag order, intercept flag and impulse-response horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarSpec {
    pub lags: usize,
    pub include_constant: bool,
    pub horizon: usize,
}

impl VarSpec {
    pub fn new(lags: usize, include_constant: bool, horizon: usize) -> Result<VarSpec> {
        if lags == 0 {
            return invalid("lag order must be at least 1");
        }
        Ok(VarSpec {
            lags,
            include_constant,
            horizon,
        })
    }
}

/// Sample moment of one proxy with the orthogonalized residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyMoment {
    pub label: String,
    #[serde(with = "vec_serde")]
    pub values: DVector<f64>,
    /// Number of observations the average runs over.
    pub t_eff: usize,
}

impl ProxyMoment {
    pub fn new(label: impl Into<String>, values: DVector<f64>) -> ProxyMoment {
        ProxyMoment {
            label: label.into(),
            values,
            t_eff: 0,
        }
    }
}

/// Least-squares fit before covariance checks.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: Vec<DMatrix<f64>>,
    pub intercept: DVector<f64>,
    pub residuals: DMatrix<f64>,
    pub residual_dates: Vec<DateKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedForm {
    pub names: Vec<String>,
    pub lags: usize,
    pub include_constant: bool,
    pub horizon: usize,
    #[serde(with = "mat_list_serde")]
    pub coefficients: Vec<DMatrix<f64>>,
    #[serde(with = "vec_serde")]
    pub intercept: DVector<f64>,
    #[serde(with = "date_list_serde")]
    pub residual_dates: Vec<DateKey>,
    #[serde(with = "mat_serde")]
    pub residuals: DMatrix<f64>,
    #[serde(with = "mat_serde")]
    pub sigma: DMatrix<f64>,
    #[serde(with = "mat_serde")]
    pub chol: DMatrix<f64>,
    #[serde(with = "mat_list_serde")]
    pub irfs: Vec<DMatrix<f64>>,
    pub moments: Vec<ProxyMoment>,
    pub stable: bool,
    pub max_root_modulus: f64,
}

impl ReducedForm {
    /// Population reduced form from known coefficients and covariance; no
    /// residual sample is attached.
    pub fn from_population(
        names: Vec<String>,
        coefficients: Vec<DMatrix<f64>>,
        sigma: DMatrix<f64>,
        horizon: usize,
    ) -> Result<ReducedForm> {
        let n = sigma.nrows();
        if names.len() != n {
            return invalid("names and covariance dimension differ");
        }
        if coefficients.is_empty() {
            return invalid("at least one coefficient matrix is required");
        }
        for a in &coefficients {
            if a.nrows() != n || a.ncols() != n {
                return invalid("coefficient matrices must be n×n");
            }
        }
        let chol = cholesky_factor(&sigma)?;
        let irfs = reduced_irfs(&coefficients, horizon);
        let max_root_modulus = companion_spectral_radius(&coefficients);
        Ok(ReducedForm {
            names,
            lags: coefficients.len(),
            include_constant: false,
            horizon,
            coefficients,
            intercept: DVector::zeros(n),
            residual_dates: Vec::new(),
            residuals: DMatrix::zeros(0, n),
            sigma,
            chol,
            irfs,
            moments: Vec::new(),
            stable: max_root_modulus < 1.0,
            max_root_modulus,
        })
    }

    pub fn n(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn k(&self) -> usize {
        self.moments.len()
    }

    pub fn with_moments(mut self, moments: Vec<ProxyMoment>) -> ReducedForm {
        self.moments = moments;
        self
    }

    pub fn with_horizon(mut self, horizon: usize) -> ReducedForm {
        self.horizon = horizon;
        self.irfs = reduced_irfs(&self.coefficients, horizon);
        self
    }

    /// `(C_h L)' e_i`: the linear functional mapping a unit column `q` to the
    /// response of variable `i` at horizon `h`.
    pub fn response_vector(&self, variable: usize, horizon: usize) -> DVector<f64> {
        let cl = &self.irfs[horizon] * &self.chol;
        cl.row(variable).transpose()
    }

    /// Structural response `e_i' C_h L q`.
    pub fn response(&self, variable: usize, horizon: usize, q: &DVector<f64>) -> f64 {
        self.response_vector(variable, horizon).dot(q)
    }

    pub fn variable_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Residual row for a date, if it lies in the estimation sample.
    pub fn residual_at(&self, date: &DateKey) -> Option<DVector<f64>> {
        let row = self.residual_dates.iter().position(|d| d == date)?;
        Some(self.residuals.row(row).transpose())
    }

    pub fn moment_matrix(&self) -> Vec<DVector<f64>> {
        self.moments.iter().map(|m| m.values.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Invalid(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<ReducedForm> {
        serde_json::from_str(s).map_err(|e| Error::Invalid(format!("reduced form json: {e}")))
    }
}

/// Least-squares VAR fit with `p` lags and optional intercept.
pub fn fit_ols(panel: &Panel, spec: &VarSpec) -> Result<OlsFit> {
    let n = panel.n();
    let p = spec.lags;
    let t = panel.t();
    if p == 0 {
        return invalid("lag order must be at least 1");
    }
    let nreg = n * p + usize::from(spec.include_constant);
    if t <= p || t - p <= n * p + 1 {
        return invalid(format!(
            "sample too short: T - p = {} must exceed n·p + 1 = {}",
            t.saturating_sub(p),
            n * p + 1
        ));
    }
    let rows = t - p;
    let y = panel.values();
    let target = DMatrix::from_fn(rows, n, |r, c| y[(r + p, c)]);
    let design = DMatrix::from_fn(rows, nreg, |r, c| {
        if spec.include_constant && c == nreg - 1 {
            1.0
        } else {
            let lag = c / n + 1;
            let var = c % n;
            y[(r + p - lag, var)]
        }
    });

    let qr = design.clone().qr();
    let rmat = qr.r();
    let max_diag = (0..nreg).map(|i| rmat[(i, i)].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 || (0..nreg).any(|i| rmat[(i, i)].abs() <= 1e-10 * max_diag) {
        return Err(Error::CollinearRegressors);
    }
    let qty = qr.q().transpose() * &target;
    let beta = rmat
        .solve_upper_triangular(&qty)
        .ok_or(Error::CollinearRegressors)?;
    let residuals = &target - &design * &beta;

    let coefficients = (0..p)
        .map(|l| DMatrix::from_fn(n, n, |i, j| beta[(l * n + j, i)]))
        .collect();
    let intercept = if spec.include_constant {
        DVector::from_fn(n, |i, _| beta[(nreg - 1, i)])
    } else {
        DVector::zeros(n)
    };
    Ok(OlsFit {
        coefficients,
        intercept,
        residuals,
        residual_dates: panel.dates()[p..].to_vec(),
    })
}

/// Estimates the reduced form (without proxy moments).
pub fn estimate_var(panel: &Panel, spec: &VarSpec) -> Result<ReducedForm> {
    let fit = fit_ols(panel, spec)?;
    let rows = fit.residuals.nrows() as f64;
    let mut sigma = fit.residuals.transpose() * &fit.residuals / rows;
    sigma = (&sigma + sigma.transpose()) * 0.5;

    // Σ that is tiny relative to the data scale is numerically singular.
    let scale = (0..panel.n())
        .map(|c| {
            let col = panel.values().column(c);
            let mean = col.mean();
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / panel.t() as f64
        })
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let min_eig = sigma.clone().symmetric_eigenvalues().min();
    if min_eig <= 1e-12 * scale {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min_eig,
        });
    }
    let chol = cholesky_factor(&sigma)?;
    let irfs = reduced_irfs(&fit.coefficients, spec.horizon);
    let max_root_modulus = companion_spectral_radius(&fit.coefficients);
    let stable = max_root_modulus < 1.0;
    if !stable {
        log::warn!("estimated VAR is not stable: companion spectral radius {max_root_modulus:.6}");
    }
    Ok(ReducedForm {
        names: panel.names().to_vec(),
        lags: spec.lags,
        include_constant: spec.include_constant,
        horizon: spec.horizon,
        coefficients: fit.coefficients,
        intercept: fit.intercept,
        residual_dates: fit.residual_dates,
        residuals: fit.residuals,
        sigma,
        chol,
        irfs,
        moments: Vec::new(),
        stable,
        max_root_modulus,
    })
}

/// Lower-triangular Cholesky factor with positive diagonal.
pub fn cholesky_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sigma.nrows();
    if n == 0 || sigma.ncols() != n {
        return invalid("covariance must be a non-empty square matrix");
    }
    let asym = (sigma - sigma.transpose()).amax();
    if asym > 1e-10 * sigma.amax().max(1.0) {
        return invalid("covariance is not symmetric");
    }
    let min_eig = || sigma.clone().symmetric_eigenvalues().min();
    let chol = sigma.clone().cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        min_eigenvalue: min_eig(),
    })?;
    let mut l = chol.unpack();
    let max_diag = (0..n).map(|i| sigma[(i, i)]).fold(0.0, f64::max);
    for i in 0..n {
        if l[(i, i)] <= (1e-14 * max_diag).sqrt() {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: min_eig(),
            });
        }
        for j in (i + 1)..n {
            l[(i, j)] = 0.0;
        }
    }
    Ok(l)
}

/// Reduced-form responses `C_0 = I`, `C_h = Σ_{l=1}^{h} C_{h-l} A_l`.
pub fn reduced_irfs(coefficients: &[DMatrix<f64>], horizon: usize) -> Vec<DMatrix<f64>> {
    let n = coefficients.first().map_or(0, |a| a.nrows());
    let mut c: Vec<DMatrix<f64>> = Vec::with_capacity(horizon + 1);
    c.push(DMatrix::identity(n, n));
    for h in 1..=horizon {
        let mut ch = DMatrix::zeros(n, n);
        for (l, a) in coefficients.iter().enumerate().take(h) {
            ch += &c[h - l - 1] * a;
        }
        c.push(ch);
    }
    c
}

/// Largest modulus among the companion-matrix eigenvalues.
pub fn companion_spectral_radius(coefficients: &[DMatrix<f64>]) -> f64 {
    let p = coefficients.len();
    if p == 0 {
        return 0.0;
    }
    let n = coefficients[0].nrows();
    let mut comp = DMatrix::zeros(n * p, n * p);
    for (l, a) in coefficients.iter().enumerate() {
        comp.view_mut((0, l * n), (n, n)).copy_from(a);
    }
    for i in n..n * p {
        comp[(i, i - n)] = 1.0;
    }
    comp.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Proxy moments `M_l = (1/T_eff) Σ_t L⁻¹ u_t m_{l,t}` over the residual sample.
///
/// Proxies are re-aligned to the residual dates and demeaned over their
/// observed entries. Under `Zero` the average runs over all residual rows;
/// under `DropReport` only over dates where the proxy is observed.
pub fn proxy_moments(
    residuals: &DMatrix<f64>,
    residual_dates: &[DateKey],
    chol: &DMatrix<f64>,
    proxies: &[ProxySeries],
    policy: MissingPolicy,
) -> Result<Vec<ProxyMoment>> {
    let rows = residuals.nrows();
    if residual_dates.len() != rows {
        return invalid("residual dates and rows differ");
    }
    let z = chol
        .clone()
        .solve_lower_triangular(&residuals.transpose())
        .ok_or_else(|| Error::Invalid("singular Cholesky factor".into()))?;
    let n = chol.nrows();
    let mut out = Vec::with_capacity(proxies.len());
    for proxy in proxies {
        let aligned = proxy.align(residual_dates);
        let m = aligned.prepared(policy);
        let mut acc = DVector::zeros(n);
        let mut count = 0usize;
        let mut any_nonzero = false;
        for (t, v) in m.iter().enumerate() {
            if let Some(x) = v {
                count += 1;
                if *x != 0.0 {
                    any_nonzero = true;
                    acc.axpy(*x, &z.column(t), 1.0);
                }
            }
        }
        if !any_nonzero || count == 0 {
            return Err(Error::DegenerateProxy(proxy.label.clone()));
        }
        let t_eff = match policy {
            MissingPolicy::Zero => rows,
            MissingPolicy::DropReport => count,
        };
        let values = acc / t_eff as f64;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateProxy(proxy.label.clone()));
        }
        out.push(ProxyMoment {
            label: proxy.label.clone(),
            values,
            t_eff,
        });
    }
    Ok(out)
}

/// Attaches proxy moments to an estimated reduced form.
pub fn attach_moments(rf: ReducedForm, proxies: &[ProxySeries], policy: MissingPolicy) -> Result<ReducedForm> {
    let moments = proxy_moments(&rf.residuals, &rf.residual_dates, &rf.chol, proxies, policy)?;
    Ok(rf.with_moments(moments))
}

pub(crate) mod mat_serde {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|r| m.row(r).iter().copied().collect())
            .collect();
        Serialize::serialize(&(m.ncols(), rows), s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DMatrix<f64>, D::Error> {
        let (cols, rows): (usize, Vec<Vec<f64>>) = Deserialize::deserialize(d)?;
        if rows.iter().any(|r| r.len() != cols) {
            return Err(serde::de::Error::custom("ragged matrix"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
    }
}

pub(crate) mod mat_list_serde {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Wrapped(#[serde(with = "super::mat_serde")] DMatrix<f64>);

    pub fn serialize<S: Serializer>(m: &[DMatrix<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
        let w: Vec<Wrapped> = m.iter().cloned().map(Wrapped).collect();
        Serialize::serialize(&w, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<DMatrix<f64>>, D::Error> {
        let w: Vec<Wrapped> = Deserialize::deserialize(d)?;
        Ok(w.into_iter().map(|x| x.0).collect())
    }
}

pub(crate) mod vec_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        Serialize::serialize(v.as_slice(), s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DVector<f64>, D::Error> {
        let v: Vec<f64> = Deserialize::deserialize(d)?;
        Ok(DVector::from_vec(v))
    }
}

pub(crate) mod date_list_serde {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[DateKey], s: S) -> std::result::Result<S::Ok, S::Error> {
        let labels: Vec<&str> = v.iter().map(|d| d.label()).collect();
        Serialize::serialize(&labels, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<DateKey>, D::Error> {
        let labels: Vec<String> = Deserialize::deserialize(d)?;
        labels
            .iter()
            .map(|l| DateKey::parse(l).ok_or_else(|| serde::de::Error::custom(format!("bad date '{l}'"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::DateKey;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn panel_from(values: DMatrix<f64>) -> Panel {
        let dates = (0..values.nrows() as i64).map(DateKey::index).collect();
        let names = (0..values.ncols()).map(|i| format!("y{i}")).collect();
        Panel::new(dates, values, names).unwrap()
    }

    #[test]
    fn noiseless_ar1_recovers_coefficient_and_fails_pd() {
        let t = 60;
        let mut y = DMatrix::zeros(t, 1);
        y[(0, 0)] = 1.0;
        for i in 1..t {
            y[(i, 0)] = 0.5 * y[(i - 1, 0)];
        }
        let panel = panel_from(y);
        let spec = VarSpec::new(1, false, 4).unwrap();
        let fit = fit_ols(&panel, &spec).unwrap();
        assert!((fit.coefficients[0][(0, 0)] - 0.5).abs() < 1e-12);
        assert!(fit.residuals.amax() < 1e-12);
        assert!(matches!(
            estimate_var(&panel, &spec),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn short_sample_is_rejected() {
        // n = 2, p = 2: T - p = 4 ≤ n·p
        let panel = panel_from(DMatrix::from_fn(6, 2, |r, c| (r * 3 + c * 5) as f64 % 7.0));
        let spec = VarSpec::new(2, true, 0).unwrap();
        assert!(matches!(fit_ols(&panel, &spec), Err(Error::Invalid(_))));
    }

    #[test]
    fn duplicated_series_is_collinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..80).map(|_| StandardNormal.sample(&mut rng)).collect();
        let panel = panel_from(DMatrix::from_fn(80, 2, |r, _| x[r]));
        let spec = VarSpec::new(1, true, 0).unwrap();
        assert!(matches!(fit_ols(&panel, &spec), Err(Error::CollinearRegressors)));
    }

    #[test]
    fn cholesky_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(cholesky_factor(&id).unwrap(), id);
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 2.0]);
        let l = cholesky_factor(&s).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]);
        assert!((&l - &expected).amax() < 1e-15);
        assert!((&l * l.transpose() - &s).amax() < 1e-15);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        match cholesky_factor(&singular) {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => assert!(min_eigenvalue.abs() < 1e-12),
            other => panic!("expected PD failure, got {other:?}"),
        }
    }

    #[test]
    fn irf_recursion_matches_matrix_power() {
        let a = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, -0.2, 0.3, 0.1, 0.05, 0.0, 0.4]);
        let c = reduced_irfs(std::slice::from_ref(&a), 5);
        assert_eq!(c[0], DMatrix::identity(3, 3));
        let mut power = DMatrix::identity(3, 3);
        for ch in c.iter().skip(1) {
            power = &power * &a;
            assert!((ch - &power).amax() < 1e-15);
        }
        // degenerate second lag
        let c2 = reduced_irfs(&[a.clone(), DMatrix::zeros(3, 3)], 5);
        for (x, y) in c.iter().zip(&c2) {
            assert!((x - y).amax() < 1e-15);
        }
        let only_impact = reduced_irfs(&[a], 0);
        assert_eq!(only_impact.len(), 1);
    }

    #[test]
    fn stable_irfs_decay() {
        let a = DMatrix::from_row_slice(2, 2, &[0.6, 0.2, -0.1, 0.5]);
        let c = reduced_irfs(std::slice::from_ref(&a), 50);
        assert!(companion_spectral_radius(&[a]) < 1.0);
        assert!(c[50].amax() < 1e-6);
    }

    #[test]
    fn unit_root_is_flagged_not_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        assert!((companion_spectral_radius(&[a]) - 1.0).abs() < 1e-12);
    }

    fn simulated_rf(seed: u64) -> (Panel, ReducedForm) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.2, 0.3]);
        let t = 400;
        let mut y = DMatrix::zeros(t, 2);
        for i in 1..t {
            let e0: f64 = StandardNormal.sample(&mut rng);
            let e1: f64 = StandardNormal.sample(&mut rng);
            let prev = y.row(i - 1).transpose();
            let next = &a * prev + DVector::from_vec(vec![e0, 0.5 * e0 + e1]);
            y.set_row(i, &next.transpose());
        }
        let panel = panel_from(y);
        let rf = estimate_var(&panel, &VarSpec::new(1, true, 3).unwrap()).unwrap();
        (panel, rf)
    }

    #[test]
    fn proxy_equal_to_first_orthogonal_residual() {
        let (_, rf) = simulated_rf(11);
        let z = rf.chol.clone().solve_lower_triangular(&rf.residuals.transpose()).unwrap();
        let vals: Vec<f64> = z.row(0).iter().copied().collect();
        let proxy = ProxySeries::from_values("z1", rf.residual_dates.clone(), &vals).unwrap();
        let m = proxy_moments(&rf.residuals, &rf.residual_dates, &rf.chol, &[proxy], MissingPolicy::Zero).unwrap();
        // direct summation oracle
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let s2: f64 = vals.iter().map(|v| (v - mean) * v).sum::<f64>() / vals.len() as f64;
        assert!((m[0].values[0] - s2).abs() < 1e-12);
        assert!(m[0].values[1].abs() < 1e-12);
    }

    #[test]
    fn orthogonal_proxy_has_zero_moment_and_shift_invariance() {
        let (_, rf) = simulated_rf(12);
        let rows = rf.residuals.nrows();
        // project a pattern off the residual columns (and the constant)
        let mut design = DMatrix::from_element(rows, 3, 1.0);
        design.view_mut((0, 0), (rows, 2)).copy_from(&rf.residuals);
        let raw = DVector::from_fn(rows, |i, _| ((i * 13) % 7) as f64);
        let coef = design.clone().svd(true, true).solve(&raw, 1e-12).unwrap();
        let orth = &raw - &design * coef;
        let proxy = ProxySeries::from_values("o", rf.residual_dates.clone(), orth.as_slice()).unwrap();
        let m = proxy_moments(&rf.residuals, &rf.residual_dates, &rf.chol, &[proxy], MissingPolicy::Zero).unwrap();
        assert!(m[0].values.amax() < 1e-12);

        let base: Vec<f64> = (0..rows).map(|i| (i as f64 * 0.37).sin()).collect();
        let shifted: Vec<f64> = base.iter().map(|v| v + 42.0).collect();
        let a = ProxySeries::from_values("a", rf.residual_dates.clone(), &base).unwrap();
        let b = ProxySeries::from_values("b", rf.residual_dates.clone(), &shifted).unwrap();
        let m = proxy_moments(&rf.residuals, &rf.residual_dates, &rf.chol, &[a, b], MissingPolicy::Zero).unwrap();
        assert!((&m[0].values - &m[1].values).amax() < 1e-12);
    }

    #[test]
    fn degenerate_proxy_rejected() {
        let (_, rf) = simulated_rf(13);
        let constant = vec![3.0; rf.residuals.nrows()];
        let p = ProxySeries::from_values("c", rf.residual_dates.clone(), &constant).unwrap();
        assert!(matches!(
            proxy_moments(&rf.residuals, &rf.residual_dates, &rf.chol, &[p], MissingPolicy::Zero),
            Err(Error::DegenerateProxy(_))
        ));
    }

    #[test]
    fn drop_report_divides_by_observed_count() {
        let (_, rf) = simulated_rf(14);
        let rows = rf.residuals.nrows();
        let vals: Vec<Option<f64>> = (0..rows)
            .map(|i| if i % 2 == 0 { Some((i as f64).cos()) } else { None })
            .collect();
        let p = ProxySeries::new("half", rf.residual_dates.clone(), vals).unwrap();
        let m = proxy_moments(&rf.residuals, &rf.residual_dates, &rf.chol, std::slice::from_ref(&p), MissingPolicy::DropReport)
            .unwrap();
        assert_eq!(m[0].t_eff, rows.div_ceil(2));
        let z = m_zero(&rf, &p);
        // zero-fill sums the same terms but divides by all rows
        assert!((&m[0].values * m[0].t_eff as f64 - &z * rows as f64).amax() < 1e-9);
    }

    fn m_zero(rf: &ReducedForm, p: &ProxySeries) -> DVector<f64> {
        proxy_moments(&rf.residuals, &rf.residual_dates, &rf.chol, std::slice::from_ref(p), MissingPolicy::Zero)
            .unwrap()[0]
            .values
            .clone()
    }

    #[test]
    fn json_round_trip() {
        let (_, rf) = simulated_rf(15);
        let text = rf.to_json().unwrap();
        let back = ReducedForm::from_json(&text).unwrap();
        assert_eq!(back, rf);
    }
}
