//! Parameter-file parsing, validation, normalization and digests.
//!
//! The on-disk format is JSON with complex entries written as `[re, im]`
//! pairs and matrices as row-major nested arrays.  A "normalized" file is
//! the exact output of [`normalize`]; parse-then-serialize is the identity
//! on those.

use cdshift_core::bundle::BundleSpec;
use cdshift_core::nalgebra::DMatrix;
use cdshift_core::C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// On-disk spec: twist, multiplicities, blocks, optional claimed
/// normalizer products.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub eta: f64,
    pub multiplicities: Vec<usize>,
    /// Block `j` is the matrix mapping grade `j` to grade `j+1`, rows of
    /// `[re, im]` pairs.
    pub blocks: Vec<Vec<Vec<[f64; 2]>>>,
    /// Optional Hermitian products `P_0..P_m` to be checked against the
    /// solved ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    #[serde(default)]
    pub normalizer_products: Option<Vec<Vec<Vec<[f64; 2]>>>>,
}

fn matrix_from_rows(rows: &[Vec<[f64; 2]>], what: &str) -> Result<DMatrix<C64>, String> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(format!("{what}: matrix needs at least one row"));
    }
    let ncols = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(format!(
                "{what}: row {i} has {} entries, expected {ncols}",
                r.len()
            ));
        }
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| {
        C64::new(rows[r][c][0], rows[r][c][1])
    }))
}

pub fn matrix_to_rows(m: &DMatrix<C64>) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

impl SpecFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("spec parse error: {e}"))
    }

    /// Validate shapes and build the working spec.
    pub fn to_spec(&self) -> Result<BundleSpec<f64>, String> {
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(j, rows)| matrix_from_rows(rows, &format!("blocks[{j}]")))
            .collect::<Result<Vec<_>, _>>()?;
        BundleSpec::new(self.eta, self.multiplicities.clone(), blocks)
            .map_err(|e| format!("spec validation error: {e}"))
    }

    /// The claimed normalizer products, when present.
    pub fn products(&self) -> Result<Option<Vec<DMatrix<C64>>>, String> {
        match &self.normalizer_products {
            None => Ok(None),
            Some(list) => list
                .iter()
                .enumerate()
                .map(|(j, rows)| matrix_from_rows(rows, &format!("normalizer_products[{j}]")))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }

    /// Canonical serialization; files in this form round-trip byte-for-byte.
    pub fn normalize(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    /// Content digest of the normalized form.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.normalize().as_bytes());
        format!("sha256:{:x}", hasher.finalize())
    }
}

/// Kernel evaluation points: a JSON array of `[z, w]` pairs, each point a
/// `[re, im]` pair.
pub fn parse_points(text: &str) -> Result<Vec<(C64, C64)>, String> {
    let raw: Vec<[[f64; 2]; 2]> =
        serde_json::from_str(text).map_err(|e| format!("points parse error: {e}"))?;
    Ok(raw
        .into_iter()
        .map(|[z, w]| (C64::new(z[0], z[1]), C64::new(w[0], w[1])))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
  "eta": 1.0,
  "multiplicities": [1, 1],
  "blocks": [[[[1.0, 0.0]]]]
}"#;

    #[test]
    fn parse_and_validate() {
        let f = SpecFile::parse(SAMPLE).unwrap();
        let spec = f.to_spec().unwrap();
        assert_eq!(spec.dim(), 2);
        assert_eq!(spec.eta(), 1.0);
    }

    #[test]
    fn normalized_round_trip_is_identity() {
        let f = SpecFile::parse(SAMPLE).unwrap();
        let normalized = f.normalize();
        let again = SpecFile::parse(&normalized).unwrap();
        assert_eq!(again.normalize(), normalized);
        assert_eq!(f.digest(), again.digest());
    }

    #[test]
    fn shape_errors_are_reported() {
        let bad = r#"{"eta": 1.0, "multiplicities": [1, 2], "blocks": [[[[1.0, 0.0]]]]}"#;
        let f = SpecFile::parse(bad).unwrap();
        let err = f.to_spec().unwrap_err();
        assert!(err.contains("block 1"), "{err}");
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = SpecFile::parse("{\n  \"eta\": oops\n}").unwrap_err();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn ragged_rows_rejected() {
        let bad = r#"{"eta": 1.0, "multiplicities": [1, 2], "blocks": [[[[1.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]]}"#;
        let f = SpecFile::parse(bad).unwrap();
        assert!(f.to_spec().is_err());
    }

    #[test]
    fn points_file() {
        let pts = parse_points("[[[0.0, 0.0], [0.0, 0.0]], [[0.3, 0.0], [0.2, -0.1]]]").unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].1, C64::new(0.2, -0.1));
    }
}
