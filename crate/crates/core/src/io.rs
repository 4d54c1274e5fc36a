//! JSON formats shared by the library and the command-line tool.
//!
//! * matrices: `{ "dim": n, "re": [[..]], "im": [[..]] }`
//! * models: `{ "type": "realized", "d", "k", "A", "state": {"kind": "trace" | "vector", "v"} }`
//!   and `{ "type": "cp", "gamma", "A", "V" }` with `V` given as `dk` rows of `d` entries
//! * maps on `vec(M_d)`: `{ "eta": [[..]] }`, column-major vec
//! * moment and cumulant tensors: `{ "d", "order", "maps" }` where `maps[n-1]` lists the values
//!   of `m_n` on all matrix-unit tuples, first slot slowest
//!
//! Complex scalars are written as `[re, im]`; a bare number is read as a real scalar.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cumulants::{CumulantTensor, Species};
use crate::dist::{MomentTensor, RealizedCP, RealizedDistribution, State};
use crate::error::{Error, Result};
use crate::matalg::{CMatrix, C64};
use crate::tensor::Multilinear;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexJson {
    Real(f64),
    Pair([f64; 2]),
}

impl From<ComplexJson> for C64 {
    fn from(z: ComplexJson) -> C64 {
        match z {
            ComplexJson::Real(x) => C64::new(x, 0.0),
            ComplexJson::Pair([re, im]) => C64::new(re, im),
        }
    }
}

impl From<C64> for ComplexJson {
    fn from(z: C64) -> Self {
        ComplexJson::Pair([z.re, z.im])
    }
}

fn to_complex_rows(rows: Vec<Vec<ComplexJson>>) -> Vec<Vec<C64>> {
    rows.into_iter()
        .map(|r| r.into_iter().map(C64::from).collect())
        .collect()
}

fn from_complex_rows(rows: &[Vec<C64>]) -> Vec<Vec<ComplexJson>> {
    rows.iter()
        .map(|r| r.iter().map(|&z| z.into()).collect())
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum StateJson {
    Trace,
    Vector { v: Vec<ComplexJson> },
}

impl Serialize for State {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            State::Trace => StateJson::Trace,
            State::Vector(v) => StateJson::Vector {
                v: v.iter().map(|&z| z.into()).collect(),
            },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for State {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(match StateJson::deserialize(d)? {
            StateJson::Trace => State::Trace,
            StateJson::Vector { v } => State::Vector(v.into_iter().map(C64::from).collect()),
        })
    }
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModelKind {
    Realized,
    Cp,
}

// a plain struct rather than a tagged enum, so that errors inside fields keep their position
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelJson {
    #[serde(rename = "type")]
    kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<CMatrix>,
    #[serde(rename = "A")]
    a: CMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state: Option<State>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    v: Option<Vec<Vec<ComplexJson>>>,
}

/// A model file: either a distribution given by a matrix model, or a pair `(gamma, sigma)`.
#[derive(Clone, Debug)]
pub enum Model {
    Realized(RealizedDistribution),
    Cp { gamma: CMatrix, sigma: RealizedCP },
}

fn require<T>(field: Option<T>, name: &str, kind: &str) -> Result<T> {
    field.ok_or_else(|| Error::Invalid(format!("model of type \"{kind}\" needs field \"{name}\"")))
}

fn forbid<T>(field: &Option<T>, name: &str, kind: &str) -> Result<()> {
    match field {
        Some(_) => Err(Error::Invalid(format!("field \"{name}\" does not apply to type \"{kind}\""))),
        None => Ok(()),
    }
}

impl TryFrom<ModelJson> for Model {
    type Error = Error;

    fn try_from(j: ModelJson) -> Result<Self> {
        match j.kind {
            ModelKind::Realized => {
                forbid(&j.gamma, "gamma", "realized")?;
                forbid(&j.v, "V", "realized")?;
                let d = require(j.d, "d", "realized")?;
                let k = require(j.k, "k", "realized")?;
                let state = require(j.state, "state", "realized")?;
                Ok(Model::Realized(RealizedDistribution::new(d, k, j.a, state)?))
            }
            ModelKind::Cp => {
                forbid(&j.state, "state", "cp")?;
                let gamma = require(j.gamma, "gamma", "cp")?;
                let v = require(j.v, "V", "cp")?;
                let d = gamma.dim();
                if !gamma.is_hermitian(1e-12) {
                    return Err(Error::Invalid("gamma must be Hermitian".into()));
                }
                if d == 0 || !j.a.dim().is_multiple_of(d) {
                    return Err(Error::Invalid(format!(
                        "A has dimension {}, not a multiple of d = {d}",
                        j.a.dim()
                    )));
                }
                let k = j.a.dim() / d;
                for (name, given, want) in [("d", j.d, d), ("k", j.k, k)] {
                    if given.is_some_and(|x| x != want) {
                        return Err(Error::Invalid(format!("{name} does not match the matrix sizes")));
                    }
                }
                let sigma = RealizedCP::new(d, k, j.a, to_complex_rows(v))?;
                Ok(Model::Cp { gamma, sigma })
            }
        }
    }
}

impl From<&Model> for ModelJson {
    fn from(m: &Model) -> Self {
        match m {
            Model::Realized(r) => ModelJson {
                kind: ModelKind::Realized,
                d: Some(r.d()),
                k: Some(r.k()),
                gamma: None,
                a: r.a().clone(),
                state: Some(r.state().clone()),
                v: None,
            },
            Model::Cp { gamma, sigma } => ModelJson {
                kind: ModelKind::Cp,
                d: None,
                k: None,
                gamma: Some(gamma.clone()),
                a: sigma.a().clone(),
                state: None,
                v: Some(from_complex_rows(&sigma.v_rows())),
            },
        }
    }
}

impl Serialize for Model {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ModelJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Model {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Model::try_from(ModelJson::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// A linear map on `vec(M_d)`, as consumed by [`crate::cumulants::power_eta`].
#[derive(Clone, Debug)]
pub struct Eta(pub CMatrix);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EtaJson {
    eta: Vec<Vec<ComplexJson>>,
}

impl Serialize for Eta {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EtaJson {
            eta: from_complex_rows(&self.0.rows()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Eta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = EtaJson::deserialize(d)?;
        let m = CMatrix::from_rows(&to_complex_rows(j.eta)).map_err(serde::de::Error::custom)?;
        let d = (m.dim() as f64).sqrt().round() as usize;
        if d * d != m.dim() {
            return Err(serde::de::Error::custom(format!(
                "eta has dimension {}, which is not d^2",
                m.dim()
            )));
        }
        Ok(Eta(m))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    species: Option<Species>,
    d: usize,
    order: usize,
    maps: Vec<Vec<CMatrix>>,
}

fn maps_to_json(t: &MomentTensor) -> Vec<Vec<CMatrix>> {
    t.maps().iter().map(|m| m.basis_values().collect()).collect()
}

fn maps_from_json(j: &TensorJson) -> Result<MomentTensor> {
    if j.maps.len() != j.order {
        return Err(Error::Invalid(format!(
            "order is {} but {} maps are given",
            j.order,
            j.maps.len()
        )));
    }
    let dd = j.d * j.d;
    let mut maps = Vec::with_capacity(j.order);
    for (i, values) in j.maps.iter().enumerate() {
        let want = dd.pow(i as u32);
        if values.len() != want {
            return Err(Error::Invalid(format!(
                "maps[{i}] has {} entries, expected {want}",
                values.len()
            )));
        }
        let mut data = Vec::with_capacity(want * dd);
        for v in values {
            if v.dim() != j.d {
                return Err(Error::dim(j.d, v.dim()));
            }
            data.extend(v.row_major());
        }
        maps.push(Multilinear::from_data(j.d, i, data));
    }
    MomentTensor::new(j.d, maps)
}

impl Serialize for MomentTensor {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TensorJson {
            species: None,
            d: self.d(),
            order: self.order(),
            maps: maps_to_json(self),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for MomentTensor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = TensorJson::deserialize(d)?;
        maps_from_json(&j).map_err(serde::de::Error::custom)
    }
}

impl Serialize for CumulantTensor {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TensorJson {
            species: Some(self.species()),
            d: self.d(),
            order: self.order(),
            maps: maps_to_json(self.as_tensor()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CumulantTensor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = TensorJson::deserialize(d)?;
        let species = j
            .species
            .ok_or_else(|| serde::de::Error::missing_field("species"))?;
        let t = maps_from_json(&j).map_err(serde::de::Error::custom)?;
        CumulantTensor::new(species, j.d, t.into_maps()).map_err(serde::de::Error::custom)
    }
}

/// Parses `text`; every error carries a line and column of `text`.
pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    // serde_json only attaches positions to errors raised inside a container,
    // so parse the value as the sole element of an array opened on line 1
    let (value,): (T,) = serde_json::from_str(&format!("[{text}]"))?;
    Ok(value)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    from_json_str(&text)
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulants::moments_to_cumulants;
    use crate::dist::moments_of;
    use crate::random::{random_cp, random_distribution, rng};

    #[test]
    fn matrix_without_imaginary_part() {
        let m: CMatrix = from_json_str(r#"{"dim": 2, "re": [[1, 2], [3, 4]]}"#).unwrap();
        assert_eq!(m.get(1, 0), C64::new(3.0, 0.0));
        assert!(from_json_str::<CMatrix>(r#"{"dim": 2, "re": [[1, 2]]}"#).is_err());
        let err = from_json_str::<Model>(r#"{"type": "cp", "gamma": {"dim": 1, "re": [[0]]},
            "A": {"dim": 2, "re": [[1, 2]]},
            "V": [[1], [0]]}"#)
        .unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = from_json_str::<Model>(r#"{"type": "cp", "A": {"dim": 1, "re": [[0]]}, "V": [[1]]}"#).unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        let err = from_json_str::<CMatrix>("{\"dim\": 2,\n \"re\": [1]}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn realized_model_round_trip() {
        let mut g = rng(3);
        let r = random_distribution(&mut g, 2, 3, 1.0);
        let text = to_json_string(&Model::Realized(r.clone())).unwrap();
        let back: Model = from_json_str(&text).unwrap();
        let Model::Realized(back) = back else { panic!() };
        assert_eq!(back.a(), r.a());
        assert_eq!(back.state(), r.state());
    }

    #[test]
    fn cp_model_parses_mixed_entries() {
        let text = r#"{"type": "cp",
            "gamma": {"dim": 1, "re": [[0.5]]},
            "A": {"dim": 2, "re": [[0, 1], [1, 0]]},
            "V": [[1], [[0, 0.5]]]}"#;
        let Model::Cp { gamma, sigma } = from_json_str(text).unwrap() else { panic!() };
        assert_eq!(gamma.get(0, 0), C64::new(0.5, 0.0));
        assert_eq!(sigma.k(), 2);
        assert_eq!(sigma.v()[(1, 0)], C64::new(0.0, 0.5));

        let mut g = rng(4);
        let s = random_cp(&mut g, 2, 2, 1.0, 1.0);
        let model = Model::Cp { gamma: CMatrix::identity(2), sigma: s.clone() };
        let Model::Cp { sigma, .. } = from_json_str(&to_json_string(&model).unwrap()).unwrap() else {
            panic!()
        };
        assert_eq!(sigma.v(), s.v());
    }

    #[test]
    fn invalid_models_are_rejected() {
        let not_hermitian = r#"{"type": "realized", "d": 1, "k": 2,
            "A": {"dim": 2, "re": [[0, 1], [0, 0]]}, "state": {"kind": "trace"}}"#;
        assert!(from_json_str::<Model>(not_hermitian).is_err());
        let bad_vector = r#"{"type": "realized", "d": 1, "k": 2,
            "A": {"dim": 2, "re": [[0, 1], [1, 0]]}, "state": {"kind": "vector", "v": [1, 1]}}"#;
        assert!(from_json_str::<Model>(bad_vector).is_err());
        assert!(from_json_str::<Model>(r#"{"type": "gaussian"}"#).is_err());
    }

    #[test]
    fn tensors_round_trip_exactly() {
        let mut g = rng(5);
        let r = random_distribution(&mut g, 2, 2, 1.0);
        let m = moments_of(&r, 4).unwrap();
        let back: MomentTensor = from_json_str(&to_json_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);

        let c = moments_to_cumulants(&m, Species::Boolean).unwrap();
        let back: CumulantTensor = from_json_str(&to_json_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(from_json_str::<CumulantTensor>(&to_json_string(&m).unwrap()).is_err());
    }

    #[test]
    fn eta_accepts_real_and_complex() {
        let e: Eta = from_json_str(r#"{"eta": [[2, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, [2, 0]]]}"#)
            .unwrap();
        assert_eq!(e.0.dim(), 4);
        assert!(from_json_str::<Eta>(r#"{"eta": [[1, 0], [0, 1]]}"#).is_err());
    }
}
