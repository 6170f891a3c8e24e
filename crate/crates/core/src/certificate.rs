//! Certificates: recovered gains and Lyapunov matrices, the LMI variables they
//! came from, and their JSON representation.

use serde::{Deserialize, Serialize};

use crate::dpoly::DerivativePolytope;
use crate::lmi::{Matrix, SolverDiagnostics};
use crate::model::{Mode, ModelError};

/// Matrices serialize as arrays of rows.
pub mod matrix_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::lmi::Matrix;

    pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix, String> {
        let nr = rows.len();
        let nc = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nc) {
            return Err("ragged matrix rows".into());
        }
        Ok(Matrix::from_fn(nr, nc, |i, j| rows[i][j]))
    }

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    pub mod list {
        use super::*;

        pub fn serialize<S: Serializer>(ms: &[Matrix], s: S) -> Result<S::Ok, S::Error> {
            ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Matrix>, D::Error> {
            let all = Vec::<Vec<Vec<f64>>>::deserialize(d)?;
            all.iter()
                .map(|rows| from_rows(rows).map_err(serde::de::Error::custom))
                .collect()
        }
    }
}

/// The SDP variables behind a certificate: `T_i = R' P_i R`, `S_i = K_i R`,
/// `U_k = L_k R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmiVariables {
    #[serde(rename = "R", with = "matrix_rows")]
    pub r: Matrix,
    #[serde(rename = "T", with = "matrix_rows::list")]
    pub t: Vec<Matrix>,
    #[serde(rename = "S", with = "matrix_rows::list")]
    pub s: Vec<Matrix>,
    #[serde(rename = "U", with = "matrix_rows::list")]
    pub u: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalCertificate {
    pub mode: Mode,
    pub alpha: f64,
    pub polytope: DerivativePolytope,
    /// Absent for certificates loaded from published gains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variables: Option<LmiVariables>,
    #[serde(rename = "K", with = "matrix_rows::list")]
    pub k: Vec<Matrix>,
    #[serde(rename = "L", with = "matrix_rows::list")]
    pub l: Vec<Matrix>,
    #[serde(rename = "P", with = "matrix_rows::list")]
    pub p: Vec<Matrix>,
}

impl GlobalCertificate {
    pub fn rules(&self) -> usize {
        self.k.len()
    }

    /// `K(h) = sum h_i K_i`.
    pub fn k_blend(&self, h: &[f64]) -> Matrix {
        crate::model::blend_matrices(&self.k, h)
    }

    /// `L(d) = sum d_k L_k`.
    pub fn l_blend(&self, d: &[f64]) -> Matrix {
        crate::model::blend_matrices(&self.l, d)
    }

    pub fn p_blend(&self, h: &[f64]) -> Matrix {
        crate::model::blend_matrices(&self.p, h)
    }
}

mod opt_matrix_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::matrix_rows::{from_rows, to_rows};
    use crate::lmi::Matrix;

    pub fn serialize<S: Serializer>(m: &Option<Matrix>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Matrix>, D::Error> {
        Option::<Vec<Vec<f64>>>::deserialize(d)?
            .map(|rows| from_rows(&rows).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalCertificate {
    pub global: GlobalCertificate,
    pub h_enl: Option<Matrix>,
    pub mu: Vec<f64>,
    pub x_bar: Vec<f64>,
    pub phi: Vec<f64>,
}

/// On-disk certificate: a global certificate, optionally with local data,
/// solver diagnostics and the verification report of the producing command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateFile {
    #[serde(flatten)]
    pub global: GlobalCertificate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local: Option<LocalFields>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFields {
    #[serde(rename = "H_enl", default, with = "opt_matrix_rows", skip_serializing_if = "Option::is_none")]
    pub h_enl: Option<Matrix>,
    pub mu: Vec<f64>,
    pub x_bar: Vec<f64>,
    pub phi: Vec<f64>,
}

impl CertificateFile {
    pub fn from_global(global: GlobalCertificate) -> Self {
        Self {
            global,
            local: None,
            solver: None,
            verification: None,
            notes: Vec::new(),
        }
    }

    pub fn from_local(cert: &LocalCertificate) -> Self {
        let mut file = Self::from_global(cert.global.clone());
        file.local = Some(LocalFields {
            h_enl: cert.h_enl.clone(),
            mu: cert.mu.clone(),
            x_bar: cert.x_bar.clone(),
            phi: cert.phi.clone(),
        });
        file
    }

    pub fn local_certificate(&self) -> Option<LocalCertificate> {
        self.local.as_ref().map(|l| LocalCertificate {
            global: self.global.clone(),
            h_enl: l.h_enl.clone(),
            mu: l.mu.clone(),
            x_bar: l.x_bar.clone(),
            phi: l.phi.clone(),
        })
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let file: Self = serde_json::from_str(text)?;
        file.check_shapes()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serializes")
    }

    fn check_shapes(&self) -> Result<(), ModelError> {
        let g = &self.global;
        let r = g.k.len();
        if r == 0 || g.l.len() != r || g.p.len() != r {
            return Err(ModelError::Dimension(format!(
                "certificate has {} K, {} L and {} P matrices",
                g.k.len(),
                g.l.len(),
                g.p.len()
            )));
        }
        let (m, n) = g.k[0].shape();
        for (i, ((k, l), p)) in g.k.iter().zip(&g.l).zip(&g.p).enumerate() {
            if k.shape() != (m, n) || l.shape() != (m, n) || p.shape() != (n, n) {
                return Err(ModelError::Dimension(format!("certificate matrices of rule {} have inconsistent shapes", i + 1)));
            }
        }
        if g.polytope.r() != r {
            return Err(ModelError::Dimension(format!(
                "polytope has {} rules, certificate {r}",
                g.polytope.r()
            )));
        }
        Ok(())
    }
}

/// Fixed certificate from published gains and Lyapunov matrices. Asymmetric
/// `P_i` are replaced by their symmetric part; every such replacement is
/// returned as a note.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishedDoc {
    #[serde(default)]
    pub source: Option<String>,
    pub mode: Mode,
    pub alpha: f64,
    pub phi: Vec<f64>,
    pub mu: Vec<f64>,
    pub x_bar: Vec<crate::model::Entry>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<Vec<f64>>>,
}

pub fn load_published(text: &str) -> Result<(LocalCertificate, Vec<String>), ModelError> {
    let doc: PublishedDoc = serde_json::from_str(text)?;
    let conv = |rows: &Vec<Vec<f64>>| matrix_rows::from_rows(rows).map_err(ModelError::Dimension);
    let k = doc.k.iter().map(conv).collect::<Result<Vec<_>, _>>()?;
    let l = doc.l.iter().map(conv).collect::<Result<Vec<_>, _>>()?;
    let mut notes = Vec::new();
    let mut p = Vec::new();
    for (i, rows) in doc.p.iter().enumerate() {
        let raw = conv(rows)?;
        if !raw.is_square() {
            return Err(ModelError::Dimension(format!("P_{} is not square", i + 1)));
        }
        let sym = (&raw + raw.transpose()) * 0.5;
        let asym = (&raw - raw.transpose()).amax();
        if asym > 0.0 {
            notes.push(format!(
                "P_{} is asymmetric (max |P - P'| = {asym:.4e}); replaced by (P + P')/2",
                i + 1
            ));
        }
        p.push(sym);
    }
    let x_bar = doc
        .x_bar
        .iter()
        .map(|e| crate::model::eval_entry(e, &Default::default(), "x_bar"))
        .collect::<Result<Vec<_>, _>>()?;
    let lower: Vec<f64> = doc.phi.iter().map(|v| -v).collect();
    let polytope = crate::dpoly::enumerate_vertices(&lower, &doc.phi)
        .map_err(|e| ModelError::Invalid(e.to_string()))?;
    let cert = LocalCertificate {
        global: GlobalCertificate {
            mode: doc.mode,
            alpha: doc.alpha,
            polytope,
            variables: None,
            k,
            l,
            p,
        },
        h_enl: None,
        mu: doc.mu,
        x_bar,
        phi: doc.phi,
    };
    let file = CertificateFile::from_local(&cert);
    file.check_shapes()?;
    Ok((cert, notes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> GlobalCertificate {
        GlobalCertificate {
            mode: Mode::Proposed,
            alpha: 0.1,
            polytope: crate::dpoly::enumerate_vertices(&[-1.0, -1.0], &[1.0, 1.0]).unwrap(),
            variables: Some(LmiVariables {
                r: Matrix::identity(2, 2),
                t: vec![Matrix::identity(2, 2); 2],
                s: vec![Matrix::from_row_slice(1, 2, &[0.1, 1.0 / 3.0]); 2],
                u: vec![Matrix::zeros(1, 2); 2],
            }),
            k: vec![Matrix::from_row_slice(1, 2, &[0.1, 1.0 / 3.0]); 2],
            l: vec![Matrix::zeros(1, 2); 2],
            p: vec![Matrix::identity(2, 2); 2],
        }
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let cert = LocalCertificate {
            global: sample(),
            h_enl: Some(Matrix::from_row_slice(2, 2, &[0.7, 0.1, 0.1, 0.3])),
            mu: vec![0.5, 0.5],
            x_bar: vec![2.0, std::f64::consts::PI],
            phi: vec![1.0, 1.0],
        };
        let text = CertificateFile::from_local(&cert).to_json();
        let back = CertificateFile::parse(&text).unwrap();
        assert_eq!(back.local_certificate().unwrap(), cert);
    }

    #[test]
    fn published_loader_symmetrizes() {
        let text = r#"{"mode":"proposed","alpha":0.006,"phi":[28.5,28.5],"mu":[0.83,0.83],
            "x_bar":[2,"1.35*pi"],
            "K":[[[13.755,-11.2376]],[[14.9228,-14.5855]]],
            "L":[[[-0.1496,0.1481]],[[0.1496,-0.1481]]],
            "P":[[[0.3621,-0.1559],[-0.1559,0.1227]],[[0.2596,-0.1146],[-0.1136,0.1296]]]}"#;
        let (cert, notes) = load_published(text).unwrap();
        assert_eq!(notes.len(), 1);
        assert!(notes[0].starts_with("P_2"));
        assert!((cert.global.p[1][(0, 1)] + 0.1141).abs() < 1e-12);
        assert_eq!(cert.global.p[1], cert.global.p[1].transpose());
        assert!((cert.x_bar[1] - 1.35 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn inconsistent_shapes_are_rejected() {
        let mut file = CertificateFile::from_global(sample());
        file.global.p.pop();
        assert!(CertificateFile::parse(&file.to_json()).is_err());
    }
}
