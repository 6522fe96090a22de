//! Sign, narrative and ranking restrictions compiled to linear forms in the
//! columns of the rotation matrix.
//!
//! Every restriction is a linear functional `g(O) = Σ r_jᵀ O_{•j}` of the
//! rotation; sign and narrative entries touch one column, ranking entries
//! couple the target column with one other column.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::io::DateKey;
use crate::var::{ProxyMoment, ReducedForm};
use crate::Tau;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `≥ 0`
    Positive,
    /// `≤ 0`
    Negative,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Positive => 1.0,
            Direction::Negative => -1.0,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Direction> {
        match s.trim() {
            "positive" | "+" | ">=0" | "pos" => Ok(Direction::Positive),
            "negative" | "-" | "<=0" | "neg" => Ok(Direction::Negative),
            other => invalid(format!("unknown sign direction '{other}'")),
        }
    }
}

/// Sign of the response of `variable` to `shock` over a horizon range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrfRestriction {
    pub variable: usize,
    pub shock: usize,
    pub horizons: Vec<usize>,
    pub direction: Direction,
}

/// Sign of structural shock `shock` at a given residual date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeRestriction {
    pub shock: usize,
    pub date: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignRestrictionSpec {
    #[serde(default)]
    pub irf: Vec<IrfRestriction>,
    #[serde(default)]
    pub narrative: Vec<NarrativeRestriction>,
    /// Positive impact of every shock on its own variable.
    #[serde(default)]
    pub self_sign: bool,
}

impl SignRestrictionSpec {
    pub fn self_sign_only() -> SignRestrictionSpec {
        SignRestrictionSpec {
            self_sign: true,
            ..Default::default()
        }
    }

    pub fn max_horizon(&self) -> usize {
        self.irf.iter().flat_map(|r| r.horizons.iter().copied()).max().unwrap_or(0)
    }
}

/// `rᵀ O_{•column} ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearColumnConstraint {
    pub column: usize,
    pub vector: DVector<f64>,
    pub label: String,
}

/// A linear functional of the rotation, `Σ_terms rᵀ O_{•j}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForm {
    pub terms: Vec<(usize, DVector<f64>)>,
}

impl LinearForm {
    pub fn column(column: usize, vector: DVector<f64>) -> LinearForm {
        LinearForm {
            terms: vec![(column, vector)],
        }
    }

    pub fn value(&self, o: &DMatrix<f64>) -> f64 {
        self.terms.iter().map(|(j, r)| r.dot(&o.column(*j))).sum()
    }

    /// Frobenius norm of the coefficient matrix.
    pub fn norm(&self) -> f64 {
        self.terms.iter().map(|(_, r)| r.norm_squared()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> LinearForm {
        LinearForm {
            terms: self.terms.iter().map(|(j, r)| (*j, r * factor)).collect(),
        }
    }
}

impl From<&LinearColumnConstraint> for LinearForm {
    fn from(c: &LinearColumnConstraint) -> LinearForm {
        LinearForm::column(c.column, c.vector.clone())
    }
}

/// Ranking restrictions for a common quality parameter `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrrConstraintSet {
    pub tau: Tau,
    /// Half-spaces `O₁ᵀM ± τ O_jᵀM ≥ 0` (or `O₁ᵀM ≥ 0` when τ is zero or infinite).
    pub inequalities: Vec<LinearForm>,
    /// `O_jᵀM = 0` for j ≥ 2; only populated when τ is infinite.
    pub equalities: Vec<LinearForm>,
}

impl GrrConstraintSet {
    pub fn empty(tau: Tau) -> GrrConstraintSet {
        GrrConstraintSet {
            tau,
            inequalities: Vec::new(),
            equalities: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.inequalities.len() + self.equalities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sign constraints plus ranking restrictions at one quality level.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictionSet {
    pub n: usize,
    pub sign: Vec<LinearColumnConstraint>,
    pub grr: GrrConstraintSet,
}

impl RestrictionSet {
    pub fn new(n: usize, sign: Vec<LinearColumnConstraint>, grr: GrrConstraintSet) -> RestrictionSet {
        RestrictionSet { n, sign, grr }
    }

    /// All inequality forms (sign first, then ranking) and the equality forms.
    pub fn forms(&self) -> (Vec<LinearForm>, Vec<LinearForm>) {
        let mut ineq: Vec<LinearForm> = self.sign.iter().map(LinearForm::from).collect();
        ineq.extend(self.grr.inequalities.iter().cloned());
        (ineq, self.grr.equalities.clone())
    }
}

fn push_nonzero(out: &mut Vec<LinearColumnConstraint>, column: usize, vector: DVector<f64>, label: String) {
    let scale = vector.amax();
    if scale == 0.0 || !scale.is_finite() {
        log::warn!("dropping degenerate restriction {label}: zero constraint vector");
        return;
    }
    out.push(LinearColumnConstraint { column, vector, label });
}

/// Compiles sign, narrative and self-sign entries to column constraints.
pub fn compile_sign(spec: &SignRestrictionSpec, rf: &ReducedForm) -> Result<Vec<LinearColumnConstraint>> {
    let n = rf.n();
    let mut out = Vec::new();
    for r in &spec.irf {
        if r.variable >= n || r.shock >= n {
            return invalid(format!(
                "restriction indices ({}, {}) out of range for n = {n}",
                r.variable, r.shock
            ));
        }
        for &h in &r.horizons {
            if h >= rf.irfs.len() {
                return invalid(format!("restricted horizon {h} exceeds the computed horizon {}", rf.horizon));
            }
            let v = rf.response_vector(r.variable, h) * r.direction.sign();
            push_nonzero(
                &mut out,
                r.shock,
                v,
                format!("irf(var={}, shock={}, h={h})", r.variable, r.shock),
            );
        }
    }
    if !spec.narrative.is_empty() {
        let lu = rf.chol.clone().lu();
        for r in &spec.narrative {
            if r.shock >= n {
                return invalid(format!("narrative shock {} out of range for n = {n}", r.shock));
            }
            let date = DateKey::parse(&r.date).ok_or_else(|| Error::BadDate {
                value: r.date.clone(),
                row: 0,
            })?;
            let u = rf
                .residual_at(&date)
                .ok_or_else(|| Error::Invalid(format!("narrative date {} outside the residual sample", r.date)))?;
            let e = lu
                .solve(&u)
                .ok_or_else(|| Error::Invalid("singular Cholesky factor".into()))?;
            push_nonzero(
                &mut out,
                r.shock,
                e * r.direction.sign(),
                format!("narrative(shock={}, date={})", r.shock, r.date),
            );
        }
    }
    if spec.self_sign {
        for i in 0..n {
            push_nonzero(&mut out, i, rf.response_vector(i, 0), format!("self_sign({i})"));
        }
    }
    Ok(out)
}

/// Splits the ranking restriction for each proxy into smooth constraints.
pub fn compile_grr(moments: &[ProxyMoment], tau: Tau, n: usize) -> Result<GrrConstraintSet> {
    if tau.is_nan() || tau < 0.0 {
        return invalid(format!("quality parameter must be non-negative, got {tau}"));
    }
    let mut set = GrrConstraintSet::empty(tau);
    for m in moments {
        let v = &m.values;
        if v.len() != n {
            return invalid(format!("moment '{}' has length {}, expected {n}", m.label, v.len()));
        }
        if v.amax() == 0.0 {
            return Err(Error::DegenerateProxy(m.label.clone()));
        }
        if tau == 0.0 || tau.is_infinite() {
            set.inequalities.push(LinearForm::column(0, v.clone()));
            if tau.is_infinite() {
                for j in 1..n {
                    set.equalities.push(LinearForm::column(j, v.clone()));
                }
            }
            continue;
        }
        for j in 1..n {
            for s in [-1.0, 1.0] {
                set.inequalities.push(LinearForm {
                    terms: vec![(0, v.clone()), (j, v * (s * tau))],
                });
            }
        }
    }
    Ok(set)
}

/// Feasibility of a rotation: every inequality at least `-slack`, every
/// equality within `slack`. The violation is reported in the units of the
/// compiled constraint vectors.
pub fn check_feasibility(o: &DMatrix<f64>, set: &RestrictionSet, slack: f64) -> (bool, f64) {
    let (ineq, eq) = set.forms();
    let worst_ineq = ineq.iter().map(|f| (-f.value(o)).max(0.0)).fold(0.0, f64::max);
    let worst_eq = eq.iter().map(|f| f.value(o).abs()).fold(0.0, f64::max);
    let worst = worst_ineq.max(worst_eq);
    (worst <= slack, worst)
}

/// Largest violation after rescaling every form to unit norm; this is the
/// scale on which the bound solver judges feasibility.
pub fn scaled_violation(o: &DMatrix<f64>, set: &RestrictionSet) -> f64 {
    let (ineq, eq) = set.forms();
    let worst_ineq = ineq
        .iter()
        .map(|f| (-f.value(o) / f.norm()).max(0.0))
        .fold(0.0, f64::max);
    let worst_eq = eq.iter().map(|f| (f.value(o) / f.norm()).abs()).fold(0.0, f64::max);
    worst_ineq.max(worst_eq)
}
