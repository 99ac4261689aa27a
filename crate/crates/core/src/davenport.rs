//! Davenport's eigenproblem: the gain matrix `K` built from weighted vector
//! observations, and the Wahba loss, gain and TASTE statistic evaluated on it.
//!
//! With `B = Σ wₙ bₙ rₙᵀ`, `ρ = B + Bᵀ`, `z = Σ wₙ bₙ × rₙ`, `σ = tr B` and
//! `λ₀ = Σ wₙ`, the 4×4 matrix in scalar-last block form is
//!
//! ```text
//!     K = [ ρ − σI   z ]
//!         [   zᵀ     σ ]
//! ```
//!
//! and for every unit quaternion `q`, the Wahba loss is `λ₀ − qᵀKq`.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat3, Mat4, Vec3};
use crate::quat::Quaternion;

/// Tolerance on `| |v| − 1 |` for measurement directions.
pub const MEASUREMENT_UNIT_TOL: f64 = 1e-9;

/// One weighted observation: a body-frame direction `b`, its reference-frame
/// counterpart `r`, and a positive weight `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub b: Vec3,
    pub r: Vec3,
    pub w: f64,
}

impl Measurement {
    pub fn new(b: Vec3, r: Vec3, w: f64) -> Self {
        Measurement { b, r, w }
    }

    fn validate(&self, index: usize) -> Result<()> {
        if !(self.w.is_finite() && self.w > 0.0) {
            return Err(Error::InvalidMeasurement(format!(
                "entry {index}: weight must be positive and finite, got {}",
                self.w
            )));
        }
        for (name, v) in [("b", self.b), ("r", self.r)] {
            let n = v.norm();
            if !v.is_finite() || (n - 1.0).abs() > MEASUREMENT_UNIT_TOL {
                return Err(Error::InvalidMeasurement(format!(
                    "entry {index}: {name} is not a unit vector (norm {n})"
                )));
            }
        }
        Ok(())
    }
}

/// A validated set of at least two weighted observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct MeasurementSet {
    entries: Vec<Measurement>,
}

impl MeasurementSet {
    /// Validates the entries as given. Directions are not renormalized.
    pub fn new(entries: Vec<Measurement>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::InvalidMeasurement(format!(
                "at least 2 measurements are required, got {}",
                entries.len()
            )));
        }
        for (i, m) in entries.iter().enumerate() {
            m.validate(i)?;
        }
        Ok(MeasurementSet { entries })
    }

    /// Normalizes every `b` and `r` before validating. Zero vectors still fail.
    pub fn renormalized(entries: Vec<Measurement>) -> Result<Self> {
        let entries = entries
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                let unit = |v: Vec3, name: &str| {
                    v.normalized().ok_or_else(|| {
                        Error::InvalidMeasurement(format!("entry {i}: {name} cannot be normalized"))
                    })
                };
                Ok(Measurement { b: unit(m.b, "b")?, r: unit(m.r, "r")?, w: m.w })
            })
            .collect::<Result<Vec<_>>>()?;
        MeasurementSet::new(entries)
    }

    pub fn entries(&self) -> &[Measurement] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn into_entries(self) -> Vec<Measurement> {
        self.entries
    }

    /// Parses the JSON array form `[{"b":[..],"r":[..],"w":..}, ...]`.
    pub fn parse_json(text: &str, renormalize: bool) -> std::result::Result<Self, ParseError> {
        let entries: Vec<Measurement> = serde_json::from_str(text).map_err(ParseError::Json)?;
        Self::finish(entries, renormalize)
    }

    /// Parses CSV with header `bx,by,bz,rx,ry,rz,w`.
    pub fn parse_csv<R: Read>(reader: R, renormalize: bool) -> std::result::Result<Self, ParseError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let entries = rdr
            .deserialize::<CsvRow>()
            .map(|row| row.map(Measurement::from).map_err(ParseError::Csv))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Self::finish(entries, renormalize)
    }

    fn finish(entries: Vec<Measurement>, renormalize: bool) -> std::result::Result<Self, ParseError> {
        let set = if renormalize {
            MeasurementSet::renormalized(entries)
        } else {
            MeasurementSet::new(entries)
        };
        set.map_err(ParseError::Invalid)
    }

    /// Serializes to the CSV form read by [`MeasurementSet::parse_csv`].
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for m in &self.entries {
            w.serialize(CsvRow::from(*m)).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    bx: f64,
    by: f64,
    bz: f64,
    rx: f64,
    ry: f64,
    rz: f64,
    w: f64,
}

impl From<CsvRow> for Measurement {
    fn from(c: CsvRow) -> Self {
        Measurement::new(Vec3::new(c.bx, c.by, c.bz), Vec3::new(c.rx, c.ry, c.rz), c.w)
    }
}

impl From<Measurement> for CsvRow {
    fn from(m: Measurement) -> Self {
        CsvRow { bx: m.b[0], by: m.b[1], bz: m.b[2], rx: m.r[0], ry: m.r[1], rz: m.r[2], w: m.w }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("malformed JSON measurement file: {0}")]
    Json(#[source] serde_json::Error),
    #[error("malformed CSV measurement file: {0}")]
    Csv(#[source] csv::Error),
    #[error(transparent)]
    Invalid(Error),
}

/// Precomputed data of Davenport's eigenproblem for one measurement set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DavenportSystem {
    pub b: Mat3,
    pub rho: Mat3,
    pub z: Vec3,
    pub sigma: f64,
    pub lambda0: f64,
    pub k: Mat4,
}

impl DavenportSystem {
    /// Builds `ρ`, `z`, `σ` and `K` from an attitude profile matrix `B` and the
    /// weight sum `λ₀`.
    pub fn from_profile(b: Mat3, lambda0: f64) -> Self {
        let rho = b + b.transpose();
        // b × r summed over entries equals the axial vector of B − Bᵀ
        let z = Vec3::new(b[(1, 2)] - b[(2, 1)], b[(2, 0)] - b[(0, 2)], b[(0, 1)] - b[(1, 0)]);
        let sigma = b.trace();
        let k = assemble_k(&rho, &z, sigma);
        DavenportSystem { b, rho, z, sigma, lambda0, k }
    }

    /// `qᵀKq`. Does not check `q` for unit norm.
    pub fn rayleigh(&self, q: &Quaternion) -> f64 {
        self.k.quadratic_form(&q.to_array())
    }

    /// `|Kq − λq|₂`.
    pub fn eigen_residual(&self, q: &Quaternion, lambda: f64) -> f64 {
        let qa = q.to_array();
        let kq = self.k.mul_vec(&qa);
        kq.iter().zip(qa).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt()
    }

    /// `(λ + σ)I − ρ`, the matrix whose inverse recovers Rodrigues parameters.
    pub fn shifted(&self, lambda: f64) -> Mat3 {
        Mat3::IDENTITY * (lambda + self.sigma) - self.rho
    }
}

fn assemble_k(rho: &Mat3, z: &Vec3, sigma: f64) -> Mat4 {
    let mut k = Mat4::ZERO;
    for i in 0..3 {
        for j in 0..3 {
            k[(i, j)] = rho[(i, j)];
        }
        k[(i, i)] -= sigma;
        k[(i, 3)] = z[i];
        k[(3, i)] = z[i];
    }
    k[(3, 3)] = sigma;
    k
}

/// Assembles B, then ρ, z, σ, λ₀ and K from the measurements.
pub fn build_system(meas: &MeasurementSet) -> DavenportSystem {
    let mut b = Mat3::ZERO;
    let mut z = Vec3::ZERO;
    let mut lambda0 = 0.0;
    for m in meas.entries() {
        b += m.b.outer(&m.r) * m.w;
        z += m.b.cross(&m.r) * m.w;
        lambda0 += m.w;
    }
    let rho = b + b.transpose();
    let sigma = b.trace();
    let k = assemble_k(&rho, &z, sigma);
    DavenportSystem { b, rho, z, sigma, lambda0, k }
}

/// `G(A(q)) = qᵀKq`.
pub fn gain(q: &Quaternion, sys: &DavenportSystem) -> Result<f64> {
    q.ensure_unit()?;
    Ok(sys.rayleigh(q))
}

/// `J(A(q)) = λ₀ − qᵀKq`.
pub fn wahba_loss(q: &Quaternion, sys: &DavenportSystem) -> Result<f64> {
    Ok(sys.lambda0 - gain(q, sys)?)
}

/// TASTE statistic `λ₀ − λ_m`.
pub fn taste(lambda0: f64, lambda_m: f64) -> f64 {
    lambda0 - lambda_m
}
