//! Set-identified structural impulse responses for proxy-SVARs under
//! generalized ranking restrictions.
//!
//! The crate covers the full pipeline: loading observables and proxies,
//! estimating the reduced form, compiling sign/narrative/ranking restrictions,
//! solving bound problems on the rotation group, bounding the proxy-quality
//! parameter, and computing breakdown values and proxy-zoo diagnostics.
//! A synthetic data generator with known ground truth backs the tests.

pub mod dgp;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod optim;
pub mod quality;
pub mod restrictions;
pub mod rotation;
pub mod setid;
pub mod var;

pub use error::{Error, Result};

/// Quality parameter value; `f64::INFINITY` encodes the valid-instrument case.
pub type Tau = f64;

/// Serializes `τ = ∞` as the string `"inf"`; finite values stay numeric.
pub mod tau_serde {
    use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    fn to_repr(tau: f64) -> Repr {
        if tau.is_infinite() && tau > 0.0 {
            Repr::Text("inf".into())
        } else {
            Repr::Num(tau)
        }
    }

    fn from_repr<E: de::Error>(r: Repr) -> Result<f64, E> {
        match r {
            Repr::Num(x) => Ok(x),
            Repr::Text(s) if s == "inf" || s == "Infinity" => Ok(f64::INFINITY),
            Repr::Text(s) => Err(E::custom(format!("invalid τ value '{s}'"))),
        }
    }

    pub fn serialize<S: Serializer>(tau: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*tau).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(taus: &[f64], s: S) -> Result<S::Ok, S::Error> {
            taus.iter().map(|t| to_repr(*t)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Repr>::deserialize(d)?.into_iter().map(from_repr).collect()
        }
    }
}
