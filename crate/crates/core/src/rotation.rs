//! Coordinates on the rotation group SO(n).
//!
//! A rotation is written `O = exp(S)` with `S` skew-symmetric. The free
//! coordinates are the strictly-lower-triangular entries of `S` in row-major
//! order: `S[1,0], S[2,0], S[2,1], S[3,0], …`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

/// Eigenvalues closer than this to -1 are treated as lying on the branch cut.
const BRANCH_CUT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SkewParams {
    n: usize,
    theta: Vec<f64>,
}

impl SkewParams {
    pub fn new(n: usize, theta: Vec<f64>) -> Result<SkewParams> {
        if theta.len() != n * (n.saturating_sub(1)) / 2 {
            return invalid(format!(
                "expected {} skew coordinates for n = {n}, got {}",
                n * (n.saturating_sub(1)) / 2,
                theta.len()
            ));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return invalid("skew coordinates must be finite");
        }
        Ok(SkewParams { n, theta })
    }

    pub fn zeros(n: usize) -> SkewParams {
        SkewParams {
            n,
            theta: vec![0.0; n * (n.saturating_sub(1)) / 2],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// The skew-symmetric matrix `S = S_lower - S_lower'`.
    pub fn to_skew(&self) -> DMatrix<f64> {
        skew_from_coords(self.n, &self.theta)
    }

    /// Reads the strictly-lower entries of `S` (assumed skew-symmetric).
    pub fn from_skew(s: &DMatrix<f64>) -> SkewParams {
        let n = s.nrows();
        let mut theta = Vec::with_capacity(n * (n - 1) / 2);
        for i in 1..n {
            for j in 0..i {
                theta.push(0.5 * (s[(i, j)] - s[(j, i)]));
            }
        }
        SkewParams { n, theta }
    }
}

pub(crate) fn skew_from_coords(n: usize, theta: &[f64]) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 1..n {
        for j in 0..i {
            s[(i, j)] = theta[k];
            s[(j, i)] = -theta[k];
            k += 1;
        }
    }
    s
}

/// A point on SO(n): coordinates plus the cached matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationPoint {
    pub params: SkewParams,
    pub matrix: DMatrix<f64>,
}

impl RotationPoint {
    pub fn identity(n: usize) -> RotationPoint {
        RotationPoint {
            params: SkewParams::zeros(n),
            matrix: DMatrix::identity(n, n),
        }
    }

    /// Wraps an orthogonal matrix with det +1, recovering its coordinates.
    pub fn from_matrix(o: DMatrix<f64>) -> Result<RotationPoint> {
        let params = log_rotation(&o)?;
        Ok(RotationPoint { params, matrix: o })
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn column(&self, j: usize) -> nalgebra::DVector<f64> {
        self.matrix.column(j).into_owned()
    }
}

/// `O = exp(S)` for the skew matrix built from `params`.
pub fn exp_skew(params: &SkewParams) -> RotationPoint {
    RotationPoint {
        params: params.clone(),
        matrix: expm(&params.to_skew()),
    }
}

/// Matrix exponential by scaling and squaring with a diagonal [6/6] Padé
/// approximant; the scaled argument has 1-norm at most 1/2, where the
/// truncation error is below 1e-16.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    const PADE: [f64; 7] = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15_840.0,
        1.0 / 665_280.0,
    ];
    let n = a.nrows();
    let norm = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if norm == 0.0 {
        return DMatrix::identity(n, n);
    }
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let x = a / 2f64.powi(squarings);
    let x2 = &x * &x;
    let x4 = &x2 * &x2;
    let x6 = &x4 * &x2;
    let id = DMatrix::<f64>::identity(n, n);
    let even = &id * PADE[0] + &x2 * PADE[2] + &x4 * PADE[4] + &x6 * PADE[6];
    let odd = &x * (&id * PADE[1] + &x2 * PADE[3] + &x4 * PADE[5]);
    let num = &even + &odd;
    let den = &even - &odd;
    let mut r = den.lu().solve(&num).expect("Padé denominator is nonsingular for ‖X‖ ≤ 1/2");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Fréchet derivative of `exp` at `a` in direction `e`, read off the
/// upper-right block of `exp([[a, e], [0, a]])`.
pub fn expm_frechet(a: &DMatrix<f64>, e: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(a);
    block.view_mut((n, n), (n, n)).copy_from(a);
    block.view_mut((0, n), (n, n)).copy_from(e);
    expm(&block).view((0, n), (n, n)).into_owned()
}

/// Gradient of `θ ↦ ⟨G, exp(S(θ))⟩_F` with respect to the skew coordinates.
pub fn linear_form_gradient(params: &SkewParams, g: &DMatrix<f64>) -> Vec<f64> {
    let s = params.to_skew();
    let n = params.n;
    let mut out = Vec::with_capacity(params.len());
    for i in 1..n {
        for j in 0..i {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = -1.0;
            out.push(g.dot(&expm_frechet(&s, &e)));
        }
    }
    out
}

/// Principal logarithm of a rotation, via the real Schur form.
pub fn log_rotation(o: &DMatrix<f64>) -> Result<SkewParams> {
    let n = o.nrows();
    if n == 0 || o.ncols() != n {
        return invalid("rotation must be square");
    }
    let orth = (o.transpose() * o - DMatrix::<f64>::identity(n, n)).amax();
    if orth > 1e-8 {
        return invalid(format!("matrix is not orthogonal (‖O'O - I‖ = {orth:e})"));
    }
    if n == 1 {
        return if o[(0, 0)] > 0.0 {
            Ok(SkewParams::zeros(1))
        } else {
            Err(Error::BranchCut)
        };
    }
    let (q, t) = o.clone().schur().unpack();
    let mut log_t = DMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        let is_block = i + 1 < n && t[(i + 1, i)].abs() > 1e-14;
        if is_block {
            let a = 0.5 * (t[(i, i)] + t[(i + 1, i + 1)]);
            let s = 0.5 * (t[(i + 1, i)] - t[(i, i + 1)]);
            let phi = s.atan2(a);
            if (a + 1.0).abs() < BRANCH_CUT_TOL && s.abs() < BRANCH_CUT_TOL.sqrt() {
                return Err(Error::BranchCut);
            }
            log_t[(i + 1, i)] = phi;
            log_t[(i, i + 1)] = -phi;
            i += 2;
        } else {
            if t[(i, i)] < 0.0 {
                return Err(Error::BranchCut);
            }
            i += 1;
        }
    }
    let s = &q * log_t * q.transpose();
    Ok(SkewParams::from_skew(&s))
}

/// Haar-uniform draw from SO(n): QR of a Gaussian matrix with the
/// positive-diagonal correction, last column flipped when det = -1.
pub fn random_rotation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> RotationPoint {
    loop {
        let o = random_rotation_matrix(n, rng);
        if let Ok(p) = RotationPoint::from_matrix(o) {
            return p;
        }
    }
}

pub(crate) fn random_rotation_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(n - 1).neg_mut();
    }
    q
}

/// Deterministic draw from a seed.
pub fn random_rotation_seeded(n: usize, seed: u64) -> RotationPoint {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    random_rotation(n, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn orth_err(o: &DMatrix<f64>) -> f64 {
        let n = o.nrows();
        (o.transpose() * o - DMatrix::<f64>::identity(n, n)).amax()
    }

    #[test]
    fn zero_params_give_identity() {
        let p = exp_skew(&SkewParams::zeros(4));
        assert_eq!(p.matrix, DMatrix::identity(4, 4));
        let back = log_rotation(&p.matrix).unwrap();
        assert!(back.theta().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn planar_rotation_closed_form() {
        for &alpha in &[0.3, -1.2, 2.5, 3.0] {
            let o = exp_skew(&SkewParams::new(2, vec![alpha]).unwrap()).matrix;
            let expected = DMatrix::from_row_slice(2, 2, &[alpha.cos(), -alpha.sin(), alpha.sin(), alpha.cos()]);
            assert!((&o - &expected).amax() < 1e-14, "alpha = {alpha}");
        }
        let o = DMatrix::from_row_slice(2, 2, &[0.3f64.cos(), -0.3f64.sin(), 0.3f64.sin(), 0.3f64.cos()]);
        let theta = log_rotation(&o).unwrap();
        assert!((theta.theta()[0] - 0.3).abs() < 1e-14);
    }

    #[test]
    fn three_dim_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let theta: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let o = exp_skew(&SkewParams::new(3, theta).unwrap()).matrix;
            assert!(orth_err(&o) < 1e-12);
            assert!((o.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_n4() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let o = random_rotation(4, &mut rng).matrix;
            let back = exp_skew(&log_rotation(&o).unwrap()).matrix;
            worst = worst.max((&back - &o).amax());
        }
        assert!(worst < 1e-8, "worst {worst}");
    }

    #[test]
    fn half_turn_hits_branch_cut() {
        let o = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(log_rotation(&o), Err(Error::BranchCut)));
        let o3 = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0]);
        assert!(matches!(log_rotation(&o3), Err(Error::BranchCut)));
    }

    #[test]
    fn random_rotation_is_deterministic_and_orthonormal() {
        let a = random_rotation_seeded(5, 77);
        let b = random_rotation_seeded(5, 77);
        assert_eq!(a, b);
        for j in 0..5 {
            assert!((a.matrix.column(j).norm() - 1.0).abs() < 1e-12);
        }
        assert!((a.matrix.determinant() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn haar_first_column_has_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 10_000;
        let n = 3;
        let mut mean = vec![0.0; n];
        for _ in 0..draws {
            let o = random_rotation_matrix(n, &mut rng);
            for i in 0..n {
                mean[i] += o[(i, 0)] / draws as f64;
            }
        }
        // entries have variance 1/n, so 3/sqrt(draws) is a loose bound
        for m in mean {
            assert!(m.abs() < 3.0 / (draws as f64).sqrt(), "mean {m}");
        }
    }

    #[test]
    fn frechet_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for n in 2..=5 {
            let d = n * (n - 1) / 2;
            let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
            let params = SkewParams::new(n, theta.clone()).unwrap();
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let grad = linear_form_gradient(&params, &g);
            let dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let analytic: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
            let h = 1e-5;
            let shifted = |sign: f64| {
                let th: Vec<f64> = theta.iter().zip(&dir).map(|(t, v)| t + sign * h * v).collect();
                g.dot(&exp_skew(&SkewParams::new(n, th).unwrap()).matrix)
            };
            let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * h);
            assert!(
                (analytic - fd).abs() <= 1e-5 * analytic.abs().max(1e-3),
                "n = {n}: analytic {analytic} vs fd {fd}"
            );
        }
    }
}
