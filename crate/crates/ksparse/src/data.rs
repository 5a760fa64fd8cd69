//! Dataset representation, CSV ingestion, validation, standardization, and
//! the support/indicator abstraction shared by every selection method.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A regression dataset: `p` responses with per-sample noise levels and a
/// `p x n` design matrix. Immutable after construction; all validation
/// happens in [`Dataset::from_parts`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    sigma: DVector<f64>,
    x: DMatrix<f64>,
    column_names: Vec<String>,
}

impl Dataset {
    /// Build and validate a dataset. Rejects shape mismatches, non-finite
    /// entries, non-positive noise levels, and constant design columns.
    pub fn from_parts(
        y: Vec<f64>,
        sigma: Vec<f64>,
        x: DMatrix<f64>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        let p = y.len();
        if p < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 samples, got {p}"
            )));
        }
        if sigma.len() != p || x.nrows() != p {
            return Err(Error::Validation(format!(
                "shape mismatch: len(y)={}, len(sigma)={}, rows(X)={}",
                p,
                sigma.len(),
                x.nrows()
            )));
        }
        if column_names.len() != x.ncols() {
            return Err(Error::Validation(format!(
                "shape mismatch: {} column names for {} columns",
                column_names.len(),
                x.ncols()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("y[{i}] is not finite")));
        }
        if let Some(i) = sigma.iter().position(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Validation(format!(
                "sigma must be positive and finite; sigma[{i}] = {}",
                sigma[i]
            )));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("X contains non-finite value {v}")));
        }
        for (j, name) in column_names.iter().enumerate() {
            let col = x.column(j);
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                return Err(Error::Validation(format!(
                    "column {name:?} (index {j}) is constant"
                )));
            }
        }
        Ok(Dataset {
            y: DVector::from_vec(y),
            sigma: DVector::from_vec(sigma),
            x,
            column_names,
        })
    }

    /// Number of samples.
    pub fn p(&self) -> usize {
        self.y.len()
    }

    /// Number of explanatory variables.
    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn sigma(&self) -> &DVector<f64> {
        &self.sigma
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Noise-precision weight `1/sigma^2` of sample `mu`.
    pub fn weight(&self, mu: usize) -> f64 {
        1.0 / (self.sigma[mu] * self.sigma[mu])
    }

    /// Names of the columns in a support, in index order.
    pub fn support_names(&self, s: &SupportSet) -> Vec<String> {
        s.indices()
            .iter()
            .map(|&j| self.column_names[j].clone())
            .collect()
    }

    /// Content hash of the dataset (shape, values, and column names),
    /// independent of the textual formatting it was loaded from.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.p() as u64).to_le_bytes());
        h.update((self.n() as u64).to_le_bytes());
        for v in self.y.iter() {
            h.update(v.to_le_bytes());
        }
        for v in self.sigma.iter() {
            h.update(v.to_le_bytes());
        }
        for v in self.x.iter() {
            h.update(v.to_le_bytes());
        }
        for name in &self.column_names {
            h.update(name.as_bytes());
            h.update([0u8]);
        }
        let digest = h.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        format!("sha256:{hex}")
    }

    /// Dataset metadata as JSON for downstream tooling.
    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::json!({
            "p": self.p(),
            "n": self.n(),
            "column_names": self.column_names,
            "fingerprint": self.fingerprint(),
        })
    }
}

/// Options controlling CSV ingestion.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// When set, the file is expected to have no `sigma` column and every
    /// sample gets this constant noise level instead.
    pub fill_sigma: Option<f64>,
}

/// Load a dataset from a CSV file with header `y,sigma,<name1>,...,<nameN>`
/// (or `y,<name1>,...` when `fill_sigma` is set).
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    load_dataset_with(path, &LoadOptions::default())
}

pub fn load_dataset_with(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_dataset(file, opts)
}

/// Parse a dataset from any reader; see [`load_dataset`] for the format.
pub fn read_dataset(reader: impl Read, opts: &LoadOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut cols = headers.iter();
    match cols.next() {
        Some("y") => {}
        other => {
            return Err(Error::Parse {
                row: 1,
                message: format!("first column must be \"y\", got {other:?}"),
            })
        }
    }
    let has_sigma = opts.fill_sigma.is_none();
    if has_sigma {
        match cols.next() {
            Some("sigma") => {}
            other => {
                return Err(Error::Parse {
                    row: 1,
                    message: format!(
                        "second column must be \"sigma\", got {other:?} \
                         (use the sigma-fill option for data without noise levels)"
                    ),
                })
            }
        }
    }
    let column_names: Vec<String> = cols.map(str::to_owned).collect();
    if column_names.is_empty() {
        return Err(Error::Parse {
            row: 1,
            message: "no explanatory columns in header".into(),
        });
    }
    let n = column_names.len();

    let mut y = Vec::new();
    let mut sigma = Vec::new();
    let mut x_rows: Vec<f64> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2; // 1-based, after header
        let record = record.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let expected = n + 1 + usize::from(has_sigma);
        if record.len() != expected {
            return Err(Error::Parse {
                row,
                message: format!("expected {expected} fields, got {}", record.len()),
            });
        }
        let parse = |field: &str, col: usize| -> Result<f64> {
            field.parse::<f64>().map_err(|_| Error::Parse {
                row,
                message: format!("column {col}: cannot parse {field:?} as a number"),
            })
        };
        let mut fields = record.iter().enumerate();
        let (c, f) = fields.next().unwrap();
        y.push(parse(f, c + 1)?);
        if has_sigma {
            let (c, f) = fields.next().unwrap();
            sigma.push(parse(f, c + 1)?);
        } else {
            sigma.push(opts.fill_sigma.unwrap());
        }
        for (c, f) in fields {
            x_rows.push(parse(f, c + 1)?);
        }
    }
    let p = y.len();
    let x = DMatrix::from_row_slice(p, n, &x_rows);
    Dataset::from_parts(y, sigma, x, column_names)
}

/// Preprocessing state recorded by [`standardize`], sufficient to invert it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingInfo {
    pub y_mean: f64,
    pub y_std: f64,
    pub x_means: Vec<f64>,
    pub x_stds: Vec<f64>,
}

/// Standardize `y` to zero mean and unit variance (population convention,
/// divide by `p`) and center every design column. `sigma` is rescaled by
/// `1/y_std` so relative noise weights are preserved.
pub fn standardize(d: &Dataset) -> Result<(Dataset, ScalingInfo)> {
    let p = d.p();
    let y_mean = d.y.iter().sum::<f64>() / p as f64;
    let y_var = d.y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / p as f64;
    if y_var <= 0.0 {
        return Err(Error::Validation("y has zero variance".into()));
    }
    let y_std = y_var.sqrt();

    let y = d.y.iter().map(|v| (v - y_mean) / y_std).collect();
    let sigma = d.sigma.iter().map(|v| v / y_std).collect();
    let mut x = d.x.clone();
    let mut x_means = Vec::with_capacity(d.n());
    let mut x_stds = Vec::with_capacity(d.n());
    for j in 0..d.n() {
        let mut col = x.column_mut(j);
        let m = col.iter().sum::<f64>() / p as f64;
        let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / p as f64;
        col.iter_mut().for_each(|v| *v -= m);
        x_means.push(m);
        x_stds.push(var.sqrt());
    }
    let info = ScalingInfo {
        y_mean,
        y_std,
        x_means,
        x_stds,
    };
    let std = Dataset::from_parts(y, sigma, x, d.column_names.clone())?;
    Ok((std, info))
}

/// Invert [`standardize`].
pub fn destandardize(d: &Dataset, info: &ScalingInfo) -> Result<Dataset> {
    let y = d.y.iter().map(|v| v * info.y_std + info.y_mean).collect();
    let sigma = d.sigma.iter().map(|v| v * info.y_std).collect();
    let mut x = d.x.clone();
    for j in 0..d.n() {
        x.column_mut(j).iter_mut().for_each(|v| *v += info.x_means[j]);
    }
    Dataset::from_parts(y, sigma, x, d.column_names.clone())
}

/// Center `y` and every design column by their noise-precision-weighted
/// means. After this transform the intercept drops out of weighted least
/// squares exactly, so the criteria can be written without it.
pub fn weighted_center(d: &Dataset) -> Result<Dataset> {
    let w: Vec<f64> = (0..d.p()).map(|mu| d.weight(mu)).collect();
    let w_total: f64 = w.iter().sum();
    let y_wmean = d
        .y
        .iter()
        .zip(&w)
        .map(|(y, w)| y * w)
        .sum::<f64>()
        / w_total;
    let y = d.y.iter().map(|v| v - y_wmean).collect();
    let mut x = d.x.clone();
    for j in 0..d.n() {
        let mut col = x.column_mut(j);
        let m = col.iter().zip(&w).map(|(v, w)| v * w).sum::<f64>() / w_total;
        col.iter_mut().for_each(|v| *v -= m);
    }
    Dataset::from_parts(y, d.sigma.iter().copied().collect(), x, d.column_names.clone())
}

/// A set of active explanatory variables: strictly increasing column
/// indices, never empty. Equivalent to a binary indicator vector with
/// exactly `k` ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SupportSet {
    indices: Vec<usize>,
}

impl SupportSet {
    /// Construct from indices in any order; duplicates and empty sets are
    /// rejected.
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Validation("support must contain at least one index".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("support contains duplicate indices".into()));
        }
        Ok(SupportSet { indices })
    }

    /// Construct from indices already known to be strictly increasing.
    /// Panics in debug builds if they are not.
    pub(crate) fn from_sorted(indices: Vec<usize>) -> Self {
        debug_assert!(!indices.is_empty());
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        SupportSet { indices }
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.indices.binary_search(&idx).is_ok()
    }

    /// Validate every index against a variable count.
    pub fn check_bounds(&self, n: usize) -> Result<()> {
        if let Some(&max) = self.indices.last() {
            if max >= n {
                return Err(Error::Validation(format!(
                    "support index {max} out of range for {n} variables"
                )));
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for SupportSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (i, idx) in self.indices.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{idx}")?;
        }
        write!(f, "}}")
    }
}

/// Expand a support into its indicator vector of length `n`.
pub fn support_to_indicator(s: &SupportSet, n: usize) -> Result<Vec<bool>> {
    s.check_bounds(n)?;
    let mut c = vec![false; n];
    for &idx in s.indices() {
        c[idx] = true;
    }
    Ok(c)
}

/// Collapse an indicator vector back into a support.
pub fn indicator_to_support(c: &[bool]) -> Result<SupportSet> {
    let indices: Vec<usize> = c
        .iter()
        .enumerate()
        .filter_map(|(i, &on)| on.then_some(i))
        .collect();
    SupportSet::new(indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toy() -> Dataset {
        Dataset::from_parts(
            vec![1.0, 2.0],
            vec![1.0, 1.0],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn minimal_csv_roundtrip() {
        let csv = "y,sigma,a,b\n1,1,1,0\n2,1,0,1\n";
        let d = read_dataset(csv.as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(d.p(), 2);
        assert_eq!(d.n(), 2);
        assert_eq!(d.column_names(), ["a", "b"]);
        assert_eq!(d, toy());
    }

    #[test]
    fn nonpositive_sigma_rejected() {
        let csv = "y,sigma,a,b\n1,0,1,0\n2,1,0,1\n";
        let err = read_dataset(csv.as_bytes(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        assert!(err.to_string().contains("sigma must be positive"));
    }

    #[test]
    fn constant_column_rejected_by_name() {
        let csv = "y,sigma,a,b\n1,1,5,0\n2,1,5,1\n";
        let err = read_dataset(csv.as_bytes(), &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("\"a\""));
    }

    #[test]
    fn non_finite_rejected() {
        let csv = "y,sigma,a,b\nNaN,1,1,0\n2,1,0,1\n";
        assert!(read_dataset(csv.as_bytes(), &LoadOptions::default()).is_err());
    }

    #[test]
    fn malformed_field_reports_row_and_column() {
        let csv = "y,sigma,a,b\n1,1,1,0\n2,oops,0,1\n";
        let err = read_dataset(csv.as_bytes(), &LoadOptions::default()).unwrap_err();
        match err {
            Error::Parse { row, message } => {
                assert_eq!(row, 3);
                assert!(message.contains("column 2"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn sigma_fill_skips_sigma_column() {
        let csv = "y,a,b\n1,1,0\n2,0,1\n";
        let d = read_dataset(
            csv.as_bytes(),
            &LoadOptions {
                fill_sigma: Some(0.5),
            },
        )
        .unwrap();
        assert_eq!(d.sigma().as_slice(), [0.5, 0.5]);
    }

    #[test]
    fn real_analysis_shape() {
        // 78 samples, 276 explanatory columns.
        let p = 78;
        let n = 276;
        let mut csv = String::from("y,sigma");
        for j in 0..n {
            csv.push_str(&format!(",v{j}"));
        }
        csv.push('\n');
        for i in 0..p {
            csv.push_str(&format!("{},1", i as f64 * 0.1));
            for j in 0..n {
                csv.push_str(&format!(",{}", ((i * 37 + j * 11) % 19) as f64 - 9.0 + i as f64 * 1e-3));
            }
            csv.push('\n');
        }
        let d = read_dataset(csv.as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!(d.p(), 78);
        assert_eq!(d.n(), 276);
    }

    #[test]
    fn standardize_two_point_symmetry() {
        let d = Dataset::from_parts(
            vec![1.0, 3.0],
            vec![1.0, 1.0],
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            vec!["a".into()],
        )
        .unwrap();
        let (std, info) = standardize(&d).unwrap();
        // Population convention: std of (1,3) is 1.
        assert_relative_eq!(info.y_std, 1.0);
        assert_relative_eq!(std.y()[0], -1.0);
        assert_relative_eq!(std.y()[1], 1.0);
        assert_relative_eq!(std.x().column(0).sum(), 0.0);
    }

    #[test]
    fn standardize_roundtrip_identity() {
        let mut rng = crate::rng::seeded(7, 0);
        use rand::Rng;
        let p = 13;
        let n = 4;
        let y: Vec<f64> = (0..p).map(|_| rng.random_range(-5.0..5.0)).collect();
        let sigma: Vec<f64> = (0..p).map(|_| rng.random_range(0.1..2.0)).collect();
        let x = DMatrix::from_fn(p, n, |_, _| rng.random_range(-3.0..3.0));
        let names = (0..n).map(|j| format!("v{j}")).collect();
        let d = Dataset::from_parts(y, sigma, x, names).unwrap();
        let (std, info) = standardize(&d).unwrap();
        let back = destandardize(&std, &info).unwrap();
        for i in 0..p {
            assert_relative_eq!(back.y()[i], d.y()[i], max_relative = 1e-12);
            assert_relative_eq!(back.sigma()[i], d.sigma()[i], max_relative = 1e-12);
            for j in 0..n {
                assert_relative_eq!(back.x()[(i, j)], d.x()[(i, j)], max_relative = 1e-12, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn weighted_center_kills_weighted_means() {
        let d = Dataset::from_parts(
            vec![1.0, 2.0, 5.0],
            vec![1.0, 2.0, 0.5],
            DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 4.0, -1.0]),
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let c = weighted_center(&d).unwrap();
        let w: Vec<f64> = (0..3).map(|mu| c.weight(mu)).collect();
        let wy: f64 = c.y().iter().zip(&w).map(|(y, w)| y * w).sum();
        assert_relative_eq!(wy, 0.0, epsilon = 1e-12);
        for j in 0..2 {
            let wx: f64 = c.x().column(j).iter().zip(&w).map(|(v, w)| v * w).sum();
            assert_relative_eq!(wx, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn indicator_basics() {
        let s = SupportSet::new(vec![2, 0]).unwrap();
        assert_eq!(s.indices(), [0, 2]);
        let c = support_to_indicator(&s, 4).unwrap();
        assert_eq!(c, [true, false, true, false]);
        assert_eq!(indicator_to_support(&c).unwrap(), s);
    }

    #[test]
    fn empty_support_rejected() {
        assert!(SupportSet::new(vec![]).is_err());
        assert!(indicator_to_support(&[false, false]).is_err());
    }

    #[test]
    fn out_of_range_index_rejected() {
        let s = SupportSet::new(vec![1, 4]).unwrap();
        assert!(support_to_indicator(&s, 4).is_err());
    }

    #[test]
    fn indicator_roundtrip_all_supports_20_choose_3() {
        let mut count = 0usize;
        for s in crate::exhaustive::enumerate_supports(20, 3).unwrap() {
            let c = support_to_indicator(&s, 20).unwrap();
            assert_eq!(indicator_to_support(&c).unwrap(), s);
            count += 1;
        }
        assert_eq!(count, 1140);
    }

    proptest! {
        #[test]
        fn indicator_roundtrip_prop(mut idx in proptest::collection::vec(0usize..50, 1..8)) {
            idx.sort_unstable();
            idx.dedup();
            let s = SupportSet::new(idx).unwrap();
            let c = support_to_indicator(&s, 50).unwrap();
            prop_assert_eq!(indicator_to_support(&c).unwrap(), s);
        }
    }
}
