//! DCC model parameterization, validation and structure detection.
//!
//! A [`DccSpec`] carries the volatility recursion (intercept `v0`, matrices
//! `a[i]` on lagged variances and `b[j]` on lagged squared returns) and the
//! correlation-driver recursion (intercept `w0`, matrices `m_mats[k]` acting
//! by congruence on lagged `Q` and `n_mats[l]` acting by congruence on lagged
//! residual outer products).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, SpdMatrix};

/// Full parameterization of a DCC process.
///
/// Serialization uses row-major nested arrays for every matrix, which is the
/// on-disk config schema; deserialization re-checks all shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DccSpecData", into = "DccSpecData")]
pub struct DccSpec {
    /// Asset dimension.
    pub m: usize,
    /// Variance intercepts, length `m`, strictly positive.
    pub v0: DVector<f64>,
    /// Volatility-on-volatility matrices, one per lag, entrywise nonnegative.
    pub a: Vec<DMatrix<f64>>,
    /// Volatility-on-squared-return matrices, entrywise nonnegative.
    pub b: Vec<DMatrix<f64>>,
    /// Correlation-driver intercept, symmetric positive definite.
    pub w0: DMatrix<f64>,
    /// Congruence matrices on lagged `Q`.
    pub m_mats: Vec<DMatrix<f64>>,
    /// Congruence matrices on lagged residual outer products.
    pub n_mats: Vec<DMatrix<f64>>,
}

impl DccSpec {
    /// Number of variance lags `r`.
    pub fn r(&self) -> usize {
        self.a.len()
    }

    /// Number of squared-return lags `s`.
    pub fn s(&self) -> usize {
        self.b.len()
    }

    /// Number of `Q` lags.
    pub fn nu(&self) -> usize {
        self.m_mats.len()
    }

    /// Number of residual lags.
    pub fn mu(&self) -> usize {
        self.n_mats.len()
    }

    /// Packed symmetric length `m(m+1)/2`.
    pub fn m_star(&self) -> usize {
        self.m * (self.m + 1) / 2
    }

    /// `w0` as a checked SPD matrix.
    pub fn w0_spd(&self) -> Result<SpdMatrix> {
        SpdMatrix::new(self.w0.clone())
    }
}

/// Plain-array mirror of [`DccSpec`] used as the (de)serialization schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DccSpecData {
    m: usize,
    v0: Vec<f64>,
    a: Vec<Vec<Vec<f64>>>,
    b: Vec<Vec<Vec<f64>>>,
    w0: Vec<Vec<f64>>,
    m_mats: Vec<Vec<Vec<f64>>>,
    n_mats: Vec<Vec<Vec<f64>>>,
}

fn rows_to_matrix(rows: &[Vec<f64>], m: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != m || rows.iter().any(|r| r.len() != m) {
        return Err(Error::Dimension(format!("{what} must be {m}x{m}")));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

fn matrix_to_rows(mat: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..mat.nrows())
        .map(|i| mat.row(i).iter().copied().collect())
        .collect()
}

impl TryFrom<DccSpecData> for DccSpec {
    type Error = Error;

    fn try_from(data: DccSpecData) -> Result<Self> {
        let m = data.m;
        if m == 0 {
            return Err(Error::Dimension("dimension m must be at least 1".into()));
        }
        if data.v0.len() != m {
            return Err(Error::Dimension(format!("v0 must have length {m}")));
        }
        let lift = |mats: &[Vec<Vec<f64>>], what: &str| -> Result<Vec<DMatrix<f64>>> {
            mats.iter()
                .enumerate()
                .map(|(i, rows)| rows_to_matrix(rows, m, &format!("{what}[{i}]")))
                .collect()
        };
        Ok(DccSpec {
            m,
            v0: DVector::from_column_slice(&data.v0),
            a: lift(&data.a, "a")?,
            b: lift(&data.b, "b")?,
            w0: rows_to_matrix(&data.w0, m, "w0")?,
            m_mats: lift(&data.m_mats, "m_mats")?,
            n_mats: lift(&data.n_mats, "n_mats")?,
        })
    }
}

impl From<DccSpec> for DccSpecData {
    fn from(spec: DccSpec) -> Self {
        DccSpecData {
            m: spec.m,
            v0: spec.v0.iter().copied().collect(),
            a: spec.a.iter().map(matrix_to_rows).collect(),
            b: spec.b.iter().map(matrix_to_rows).collect(),
            w0: matrix_to_rows(&spec.w0),
            m_mats: spec.m_mats.iter().map(matrix_to_rows).collect(),
            n_mats: spec.n_mats.iter().map(matrix_to_rows).collect(),
        }
    }
}

/// Outcome of [`validate`]: empty means the spec is admissible.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_valid() {
            write!(f, "spec admissible")
        } else {
            for v in &self.violations {
                writeln!(f, "- {v}")?;
            }
            Ok(())
        }
    }
}

fn shape_ok(out: &mut Vec<String>, mat: &DMatrix<f64>, m: usize, name: &str) -> bool {
    if mat.nrows() != m || mat.ncols() != m {
        out.push(format!("{name} is {}x{}, expected {m}x{m}", mat.nrows(), mat.ncols()));
        false
    } else {
        true
    }
}

fn check_nonnegative(out: &mut Vec<String>, mats: &[DMatrix<f64>], m: usize, name: &str) {
    for (i, mat) in mats.iter().enumerate() {
        if !shape_ok(out, mat, m, &format!("{name}[{i}]")) {
            continue;
        }
        for r in 0..m {
            for c in 0..m {
                let x = mat[(r, c)];
                if !(x >= 0.0) || !x.is_finite() {
                    out.push(format!(
                        "{name}[{i}][({r},{c})] = {x} must be nonnegative and finite"
                    ));
                }
            }
        }
    }
}

/// Checks every model invariant and reports all violations; never aborts on
/// finite or non-finite inputs.
pub fn validate(spec: &DccSpec) -> ValidationReport {
    let mut out = Vec::new();
    let m = spec.m;

    if m == 0 {
        out.push("dimension m must be at least 1".into());
        return ValidationReport { violations: out };
    }
    if spec.v0.len() != m {
        out.push(format!("v0 has length {}, expected {m}", spec.v0.len()));
    }
    for (k, v) in spec.v0.iter().enumerate() {
        if !(*v > 0.0) || !v.is_finite() {
            out.push(format!("v0[{k}] = {v} must be strictly positive and finite"));
        }
    }

    check_nonnegative(&mut out, &spec.a, m, "a");
    check_nonnegative(&mut out, &spec.b, m, "b");
    for (k, mat) in spec.m_mats.iter().enumerate() {
        if shape_ok(&mut out, mat, m, &format!("m_mats[{k}]")) && matrix::ensure_finite(mat).is_err() {
            out.push(format!("m_mats[{k}] has non-finite entries"));
        }
    }
    for (l, mat) in spec.n_mats.iter().enumerate() {
        if shape_ok(&mut out, mat, m, &format!("n_mats[{l}]")) && matrix::ensure_finite(mat).is_err() {
            out.push(format!("n_mats[{l}] has non-finite entries"));
        }
    }

    if shape_ok(&mut out, &spec.w0, m, "w0") {
        if let Err(e) = SpdMatrix::new(spec.w0.clone()) {
            out.push(format!("w0 is not symmetric positive definite: {e}"));
        }
    }

    ValidationReport { violations: out }
}

/// Structural family of a spec, from most to least specific.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StructureKind {
    /// Every parameter matrix is a scalar multiple of the identity.
    Scalar,
    /// Every parameter matrix is diagonal.
    Diagonal,
    /// Only the `Q`-autoregression matrices are scalar multiples of the identity.
    PartiallyScalarM,
    General,
}

/// Detected structure plus extracted scalar coefficients where applicable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelStructure {
    pub kind: StructureKind,
    pub a_coefs: Option<Vec<f64>>,
    pub b_coefs: Option<Vec<f64>>,
    pub m_coefs: Option<Vec<f64>>,
    pub n_coefs: Option<Vec<f64>>,
}

fn scalar_coef(mat: &DMatrix<f64>) -> Option<f64> {
    let c = mat[(0, 0)];
    for i in 0..mat.nrows() {
        for j in 0..mat.ncols() {
            let want = if i == j { c } else { 0.0 };
            if mat[(i, j)] != want {
                return None;
            }
        }
    }
    Some(c)
}

fn is_diagonal(mat: &DMatrix<f64>) -> bool {
    for i in 0..mat.nrows() {
        for j in 0..mat.ncols() {
            if i != j && mat[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}

fn all_scalar(mats: &[DMatrix<f64>]) -> Option<Vec<f64>> {
    mats.iter().map(scalar_coef).collect()
}

/// Scalar coefficients of the `Q`-autoregression matrices when every one of
/// them is a multiple of the identity, regardless of the other blocks.
pub fn partial_scalar_m_coefs(spec: &DccSpec) -> Option<Vec<f64>> {
    all_scalar(&spec.m_mats)
}

/// Returns the most specific structure the spec satisfies. Coefficient
/// extraction is exact (matrices must equal `c * I` bit for bit).
pub fn detect_structure(spec: &DccSpec) -> ModelStructure {
    let a = all_scalar(&spec.a);
    let b = all_scalar(&spec.b);
    let mm = all_scalar(&spec.m_mats);
    let nn = all_scalar(&spec.n_mats);
    if let (Some(a), Some(b), Some(mm), Some(nn)) = (&a, &b, &mm, &nn) {
        return ModelStructure {
            kind: StructureKind::Scalar,
            a_coefs: Some(a.clone()),
            b_coefs: Some(b.clone()),
            m_coefs: Some(mm.clone()),
            n_coefs: Some(nn.clone()),
        };
    }
    let diagonal = spec.a.iter().all(is_diagonal)
        && spec.b.iter().all(is_diagonal)
        && spec.m_mats.iter().all(is_diagonal)
        && spec.n_mats.iter().all(is_diagonal);
    if diagonal {
        return ModelStructure {
            kind: StructureKind::Diagonal,
            a_coefs: None,
            b_coefs: None,
            m_coefs: mm,
            n_coefs: nn,
        };
    }
    if let Some(mm) = mm {
        return ModelStructure {
            kind: StructureKind::PartiallyScalarM,
            a_coefs: None,
            b_coefs: None,
            m_coefs: Some(mm),
            n_coefs: None,
        };
    }
    ModelStructure {
        kind: StructureKind::General,
        a_coefs: None,
        b_coefs: None,
        m_coefs: None,
        n_coefs: None,
    }
}

/// Builds a scalar spec where every parameter matrix is `coef * I`.
pub fn build_scalar(
    m: usize,
    a: &[f64],
    b: &[f64],
    m_coefs: &[f64],
    n_coefs: &[f64],
    v0: f64,
    w0: DMatrix<f64>,
) -> Result<DccSpec> {
    if m == 0 {
        return Err(Error::Dimension("dimension m must be at least 1".into()));
    }
    if !(v0 > 0.0) {
        return Err(Error::Domain(format!("v0 = {v0} must be strictly positive")));
    }
    if let Some(x) = a.iter().chain(b.iter()).find(|x| !(**x >= 0.0)) {
        return Err(Error::Domain(format!(
            "volatility coefficients must be nonnegative, got {x}"
        )));
    }
    SpdMatrix::new(w0.clone())
        .map_err(|e| Error::Domain(format!("w0 is not symmetric positive definite: {e}")))?;
    let eye = |c: f64| DMatrix::<f64>::identity(m, m) * c;
    Ok(DccSpec {
        m,
        v0: DVector::from_element(m, v0),
        a: a.iter().map(|c| eye(*c)).collect(),
        b: b.iter().map(|c| eye(*c)).collect(),
        w0,
        m_mats: m_coefs.iter().map(|c| eye(*c)).collect(),
        n_mats: n_coefs.iter().map(|c| eye(*c)).collect(),
    })
}

/// The bivariate scalar order-one benchmark model used across the test and
/// experiment suites: `v0 = 1/4`, `a = 0.8`, `b = 0.1`,
/// `w0 = I/2 + ee'/2`, `M1 = sqrt(m_sq) * I`, `N1 = n_coef * I`.
pub fn reference_bivariate(m_sq: f64, n_coef: f64) -> DccSpec {
    let w0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    build_scalar(2, &[0.8], &[0.1], &[m_sq.sqrt()], &[n_coef], 0.25, w0)
        .expect("reference parameters are admissible")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_spec_is_valid() {
        let spec = reference_bivariate(0.999, 3.0f64.sqrt());
        let report = validate(&spec);
        assert!(report.is_valid(), "{report}");
        assert_eq!(spec.m_star(), 3);
        assert_eq!((spec.r(), spec.s(), spec.nu(), spec.mu()), (1, 1, 1, 1));
    }

    #[test]
    fn zero_w0_is_rejected() {
        let mut spec = reference_bivariate(0.999, 1.0);
        spec.w0 = DMatrix::zeros(2, 2);
        let report = validate(&spec);
        assert!(!report.is_valid());
        assert!(report.violations.iter().any(|v| v.contains("w0")));
    }

    #[test]
    fn negative_entry_is_identified() {
        let mut spec = reference_bivariate(0.999, 1.0);
        spec.a[0][(0, 1)] = -0.2;
        let report = validate(&spec);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].contains("a[0][(0,1)]"));
    }

    #[test]
    fn validate_tolerates_non_finite_inputs() {
        let mut spec = reference_bivariate(0.999, 1.0);
        spec.v0[0] = f64::NAN;
        spec.m_mats[0][(1, 1)] = f64::INFINITY;
        let report = validate(&spec);
        assert!(!report.is_valid());
        assert!(report.violations.iter().any(|v| v.contains("v0[0]")));
        assert!(report.violations.iter().any(|v| v.contains("m_mats[0]")));
    }

    #[test]
    fn detect_scalar_roundtrip() {
        let w0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let spec = build_scalar(2, &[0.5, 0.4], &[0.05], &[0.9], &[0.3], 0.25, w0).unwrap();
        let st = detect_structure(&spec);
        assert_eq!(st.kind, StructureKind::Scalar);
        assert_eq!(st.a_coefs.unwrap(), vec![0.5, 0.4]);
        assert_eq!(st.b_coefs.unwrap(), vec![0.05]);
        assert_eq!(st.m_coefs.unwrap(), vec![0.9]);
        assert_eq!(st.n_coefs.unwrap(), vec![0.3]);
    }

    #[test]
    fn detect_diagonal_and_partially_scalar() {
        let mut spec = reference_bivariate(0.999, 1.0);
        spec.a[0] = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.3]);
        assert_eq!(detect_structure(&spec).kind, StructureKind::Diagonal);

        // full N with scalar M: only the Q-autoregression stays scalar
        spec.n_mats[0] = DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.0, 0.2]);
        let st = detect_structure(&spec);
        assert_eq!(st.kind, StructureKind::PartiallyScalarM);
        assert!(st.m_coefs.is_some());
        assert!(partial_scalar_m_coefs(&spec).is_some());

        spec.m_mats[0] = DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.0, 0.2]);
        assert_eq!(detect_structure(&spec).kind, StructureKind::General);
        assert!(partial_scalar_m_coefs(&spec).is_none());
    }

    #[test]
    fn build_scalar_edge_cases() {
        let w0 = DMatrix::<f64>::identity(2, 2);
        // all coefficients zero: constant-correlation degenerate spec, valid
        let spec = build_scalar(2, &[], &[], &[], &[], 0.25, w0.clone()).unwrap();
        assert!(validate(&spec).is_valid());
        assert_eq!(detect_structure(&spec).kind, StructureKind::Scalar);

        let spec = build_scalar(2, &[0.5, 0.4], &[], &[], &[], 1.0, w0.clone()).unwrap();
        assert_eq!(spec.a[0], DMatrix::identity(2, 2) * 0.5);
        assert_eq!(spec.a[1], DMatrix::identity(2, 2) * 0.4);

        assert!(build_scalar(2, &[-0.1], &[], &[], &[], 1.0, w0.clone()).is_err());
        assert!(build_scalar(2, &[], &[], &[], &[], 1.0, DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn serde_roundtrip_is_bit_exact() {
        let spec = reference_bivariate(0.999, 3.0f64.sqrt());
        let json = serde_json::to_string(&spec).unwrap();
        let back: DccSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn serde_rejects_unknown_keys_and_bad_shapes() {
        let json = r#"{"m":2,"v0":[0.25,0.25],"a":[],"b":[],"w0":[[1.0,0.0],[0.0,1.0]],"m_mats":[],"n_mats":[],"extra":1}"#;
        assert!(serde_json::from_str::<DccSpec>(json).is_err());
        let json = r#"{"m":2,"v0":[0.25],"a":[],"b":[],"w0":[[1.0,0.0],[0.0,1.0]],"m_mats":[],"n_mats":[]}"#;
        assert!(serde_json::from_str::<DccSpec>(json).is_err());
        let json = r#"{"m":2,"v0":[0.25,0.25],"a":[[[0.1,0.0],[0.0]]],"b":[],"w0":[[1.0,0.0],[0.0,1.0]],"m_mats":[],"n_mats":[]}"#;
        assert!(serde_json::from_str::<DccSpec>(json).is_err());
    }
}
