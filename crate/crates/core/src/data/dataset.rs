use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::Matrix;

/// Which part of a split a dataset came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitTag {
    Unsplit,
    Train,
    Val,
    Test,
}

/// Per-column z-score statistics, fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl NormStats {
    /// Population mean/std of every column. Refuses validation/test splits
    /// and constant columns.
    pub fn fit(data: &Dataset) -> Result<Self> {
        if matches!(data.split, SplitTag::Val | SplitTag::Test) {
            return Err(Error::Data(format!(
                "normalization statistics must come from training rows, not the {:?} split",
                data.split
            )));
        }
        if data.stats.is_some() {
            return Err(Error::Data("dataset is already normalized".into()));
        }
        let d = data.d();
        let mut feature_mean = Vec::with_capacity(d);
        let mut feature_std = Vec::with_capacity(d);
        for c in 0..d {
            let (m, s) = mean_std(data.column(c));
            if !(s > 0.0) {
                return Err(Error::Data(format!(
                    "feature column '{}' is constant and cannot be standardized",
                    data.columns[c]
                )));
            }
            feature_mean.push(m);
            feature_std.push(s);
        }
        let (target_mean, target_std) = mean_std(data.targets.iter().copied());
        if !(target_std > 0.0) {
            return Err(Error::Data(format!(
                "target column '{}' is constant and cannot be standardized",
                data.target_name
            )));
        }
        Ok(Self {
            feature_mean,
            feature_std,
            target_mean,
            target_std,
        })
    }

    /// Statistics that leave values unchanged.
    pub fn identity(d: usize) -> Self {
        Self {
            feature_mean: vec![0.0; d],
            feature_std: vec![1.0; d],
            target_mean: 0.0,
            target_std: 1.0,
        }
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn features_matrix(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.feature_mean[c]) / self.feature_std[c];
            }
        }
        out
    }

    pub fn target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn target_inverse(&self, z: f64) -> f64 {
        z * self.target_std + self.target_mean
    }

    pub fn feature_inverse(&self, c: usize, z: f64) -> f64 {
        z * self.feature_std[c] + self.feature_mean[c]
    }
}

/// Feature matrix plus targets. When `stats` is set the values are
/// standardized with those statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub targets: Vec<f64>,
    pub columns: Vec<String>,
    pub target_name: String,
    pub split: SplitTag,
    pub stats: Option<NormStats>,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        targets: Vec<f64>,
        columns: Vec<String>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        if targets.is_empty() || features.cols == 0 {
            return Err(Error::Data(format!(
                "dataset needs n >= 1 and d >= 1, got n = {}, d = {}",
                targets.len(),
                features.cols
            )));
        }
        if features.rows != targets.len() || columns.len() != features.cols {
            return Err(Error::Data(format!(
                "shape mismatch: {} feature rows, {} targets, {} columns for {} names",
                features.rows,
                targets.len(),
                features.cols,
                columns.len()
            )));
        }
        Ok(Self {
            features,
            targets,
            columns,
            target_name: target_name.into(),
            split: SplitTag::Unsplit,
            stats: None,
        })
    }

    pub fn n(&self) -> usize {
        self.targets.len()
    }

    pub fn d(&self) -> usize {
        self.features.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        (0..self.n()).map(move |r| self.features.get(r, c))
    }

    pub fn is_normalized(&self) -> bool {
        self.stats.is_some()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize], split: SplitTag) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Data(format!("{split:?} split would be empty")));
        }
        let mut data = Vec::with_capacity(indices.len() * self.d());
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Ok(Self {
            features: Matrix {
                rows: indices.len(),
                cols: self.d(),
                data,
            },
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            columns: self.columns.clone(),
            target_name: self.target_name.clone(),
            split,
            stats: self.stats.clone(),
        })
    }

    /// Standardizes features and targets with `stats`.
    pub fn zscore(&self, stats: &NormStats) -> Result<Self> {
        if self.stats.is_some() {
            return Err(Error::Data("dataset is already normalized".into()));
        }
        if stats.feature_mean.len() != self.d() {
            return Err(Error::Data(format!(
                "statistics cover {} features, dataset has {}",
                stats.feature_mean.len(),
                self.d()
            )));
        }
        Ok(Self {
            features: stats.features_matrix(&self.features),
            targets: self.targets.iter().map(|&y| stats.target(y)).collect(),
            stats: Some(stats.clone()),
            ..self.clone()
        })
    }

    /// Undo `zscore`.
    pub fn denormalized(&self) -> Self {
        let Some(stats) = &self.stats else {
            return self.clone();
        };
        let mut features = self.features.clone();
        for r in 0..features.rows {
            for (c, v) in features.row_mut(r).iter_mut().enumerate() {
                *v = stats.feature_inverse(c, *v);
            }
        }
        Self {
            features,
            targets: self.targets.iter().map(|&z| stats.target_inverse(z)).collect(),
            stats: None,
            ..self.clone()
        }
    }
}

/// Options for [`load_csv`].
#[derive(Debug, Clone, Default)]
pub struct CsvOptions {
    /// Column used to order rows (kept out of the features).
    pub datetime: Option<String>,
    /// Restrict features to these columns (default: all but target/datetime).
    pub features: Option<Vec<String>>,
    /// Drop unparsable rows instead of failing.
    pub skip_invalid_rows: bool,
}

/// Reads a headered UTF-8 CSV. Data rows are numbered from 1 in diagnostics.
pub fn load_csv(path: impl AsRef<Path>, target: &str, options: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(Error::Data(format!("{}: empty file or missing header", path.display())));
    }
    let find = |name: &str| header.iter().position(|h| h == name);
    let target_idx =
        find(target).ok_or_else(|| Error::Data(format!("{}: no target column named '{target}'", path.display())))?;
    let datetime_idx = match &options.datetime {
        Some(name) => Some(
            find(name).ok_or_else(|| Error::Data(format!("{}: no datetime column named '{name}'", path.display())))?,
        ),
        None => None,
    };
    let feature_idx: Vec<usize> = match &options.features {
        Some(names) => names
            .iter()
            .map(|n| find(n).ok_or_else(|| Error::Data(format!("{}: no feature column named '{n}'", path.display()))))
            .collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&i| i != target_idx && Some(i) != datetime_idx)
            .collect(),
    };
    if feature_idx.is_empty() {
        return Err(Error::Data(format!(
            "{}: no feature columns besides the target",
            path.display()
        )));
    }

    let mut rows: Vec<(String, Vec<f64>, f64)> = Vec::new();
    let mut bad: Vec<String> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record.map_err(|e| Error::Data(format!("{}: row {row_no}: {e}", path.display())))?;
        let cell = |idx: usize| -> std::result::Result<f64, String> {
            let raw = record.get(idx).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(format!(
                    "row {row_no}, column '{}': cannot use value '{raw}'",
                    header[idx]
                )),
            }
        };
        let parsed: std::result::Result<(Vec<f64>, f64), String> = (|| {
            let x = feature_idx
                .iter()
                .map(|&c| cell(c))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok((x, cell(target_idx)?))
        })();
        match parsed {
            Ok((x, y)) => {
                let key = datetime_idx
                    .map(|d| record.get(d).unwrap_or("").to_string())
                    .unwrap_or_default();
                rows.push((key, x, y));
            }
            Err(msg) => bad.push(msg),
        }
    }
    if !bad.is_empty() && !options.skip_invalid_rows {
        let shown: Vec<&str> = bad.iter().take(10).map(String::as_str).collect();
        return Err(Error::Data(format!(
            "{}: {} unparsable row(s): {}",
            path.display(),
            bad.len(),
            shown.join("; ")
        )));
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }
    if datetime_idx.is_some() {
        // stable: equal timestamps keep file order
        rows.sort_by(|a, b| a.0.cmp(&b.0));
    }
    let d = feature_idx.len();
    let mut data = Vec::with_capacity(rows.len() * d);
    let mut targets = Vec::with_capacity(rows.len());
    for (_, x, y) in rows {
        data.extend(x);
        targets.push(y);
    }
    Dataset::new(
        Matrix {
            rows: targets.len(),
            cols: d,
            data,
        },
        targets,
        feature_idx.iter().map(|&i| header[i].clone()).collect(),
        target,
    )
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => {
            let csv::ErrorKind::Io(io) = e.into_kind() else {
                unreachable!()
            };
            Error::io(path, io)
        }
        _ => Error::Data(format!("{}: {e}", path.display())),
    }
}

/// Train/validation/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Part sizes: floor each share, then hand out the remainder by largest
/// fractional part (earlier parts win ties).
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::Config(format!("split fractions {fractions:?} must be positive")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions sum to {total}, expected 1")));
    }
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes = [0usize; 3];
    for (s, e) in sizes.iter_mut().zip(&exact) {
        *s = e.floor() as usize;
    }
    let mut remaining = n - sizes.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        sizes[i] += 1;
        remaining -= 1;
    }
    Ok(sizes)
}

/// Shuffled (seeded) or chronological split.
pub fn split_dataset(data: &Dataset, fractions: [f64; 3], seed: u64, chronological: bool) -> Result<Splits> {
    if data.is_normalized() {
        return Err(Error::Data(
            "split before normalizing so statistics come from training rows".into(),
        ));
    }
    let [a, b, _] = split_sizes(data.n(), fractions)?;
    let mut idx: Vec<usize> = (0..data.n()).collect();
    if !chronological {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
    }
    Ok(Splits {
        train: data.select(&idx[..a], SplitTag::Train)?,
        val: data.select(&idx[a..a + b], SplitTag::Val)?,
        test: data.select(&idx[a + b..], SplitTag::Test)?,
    })
}

impl Splits {
    /// Fits statistics on the training part and standardizes all three.
    pub fn normalized(&self) -> Result<(Splits, NormStats)> {
        let stats = NormStats::fit(&self.train)?;
        Ok((
            Splits {
                train: self.train.zscore(&stats)?,
                val: self.val.zscore(&stats)?,
                test: self.test.zscore(&stats)?,
            },
            stats,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn toy(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i * i) as f64]).collect();
        Dataset::new(
            Matrix::from_rows(&rows),
            (0..n).map(|i| 2.0 * i as f64).collect(),
            vec!["a".into(), "b".into()],
            "y",
        )
        .unwrap()
    }

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_simple_file() {
        let f = write_csv("x1,x2,y\n1,2,3\n4,5,6\n7,8,9\n");
        let d = load_csv(f.path(), "y", &CsvOptions::default()).unwrap();
        assert_eq!((d.n(), d.d()), (3, 2));
        assert_eq!(d.row(1), &[4.0, 5.0]);
        assert_eq!(d.targets, vec![3.0, 6.0, 9.0]);
    }

    #[test]
    fn missing_target_is_named() {
        let f = write_csv("x1,x2\n1,2\n");
        let err = load_csv(f.path(), "price", &CsvOptions::default()).unwrap_err();
        assert!(err.to_string().contains("'price'"), "{err}");
    }

    #[test]
    fn nan_cell_reports_row() {
        let mut text = String::from("x,y\n");
        for i in 1..=9 {
            if i == 7 {
                text.push_str("NaN,1\n");
            } else {
                text.push_str(&format!("{i},1\n"));
            }
        }
        let f = write_csv(&text);
        let err = load_csv(f.path(), "y", &CsvOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
        assert!(err.to_string().contains("row 7"), "{err}");

        let opts = CsvOptions {
            skip_invalid_rows: true,
            ..Default::default()
        };
        assert_eq!(load_csv(f.path(), "y", &opts).unwrap().n(), 8);
    }

    #[test]
    fn empty_file_and_non_numeric() {
        let f = write_csv("");
        assert!(load_csv(f.path(), "y", &CsvOptions::default()).is_err());
        let f = write_csv("x,y\n");
        assert!(load_csv(f.path(), "y", &CsvOptions::default()).is_err());
        let f = write_csv("x,y\nabc,1\n");
        assert!(load_csv(f.path(), "y", &CsvOptions::default())
            .unwrap_err()
            .to_string()
            .contains("row 1"));
    }

    #[test]
    fn datetime_orders_rows() {
        let f = write_csv("date,x,y\n2020-01-03,3,30\n2020-01-01,1,10\n2020-01-02,2,20\n");
        let opts = CsvOptions {
            datetime: Some("date".into()),
            ..Default::default()
        };
        let d = load_csv(f.path(), "y", &opts).unwrap();
        assert_eq!(d.targets, vec![10.0, 20.0, 30.0]);
        assert_eq!(d.columns, vec!["x".to_string()]);
    }

    #[test]
    fn zscore_by_hand_and_round_trip() {
        let d = Dataset::new(
            Matrix::from_rows(&[vec![0.0], vec![2.0]]),
            vec![1.0, 3.0],
            vec!["x".into()],
            "y",
        )
        .unwrap();
        let stats = NormStats::fit(&d).unwrap();
        let z = d.zscore(&stats).unwrap();
        assert_eq!(z.features.data, vec![-1.0, 1.0]);
        assert_eq!(z.targets, vec![-1.0, 1.0]);
        let back = z.denormalized();
        for (a, b) in back.features.data.iter().zip(&d.features.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standardized_column_is_unchanged() {
        let d = Dataset::new(
            Matrix::from_rows(&[vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]]),
            vec![1.0, -1.0, -1.0, 1.0],
            vec!["x".into()],
            "y",
        )
        .unwrap();
        let z = d.zscore(&NormStats::fit(&d).unwrap()).unwrap();
        for (a, b) in z.features.data.iter().zip(&d.features.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_column_rejected() {
        let d = Dataset::new(
            Matrix::from_rows(&[vec![5.0], vec![5.0]]),
            vec![1.0, 2.0],
            vec!["flat".into()],
            "y",
        )
        .unwrap();
        let err = NormStats::fit(&d).unwrap_err();
        assert!(err.to_string().contains("'flat'"));
    }

    #[test]
    fn split_sizes_and_determinism() {
        assert_eq!(split_sizes(10, [0.8, 0.1, 0.1]).unwrap(), [8, 1, 1]);
        assert_eq!(split_sizes(7, [0.5, 0.25, 0.25]).unwrap(), [3, 2, 2]);
        assert!(split_sizes(10, [0.8, 0.1, 0.2]).is_err());
        let d = toy(10);
        let a = split_dataset(&d, [0.8, 0.1, 0.1], 3, false).unwrap();
        let b = split_dataset(&d, [0.8, 0.1, 0.1], 3, false).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.train.n(), a.val.n(), a.test.n()), (8, 1, 1));
    }

    #[test]
    fn chronological_split_keeps_order() {
        let d = toy(20);
        let s = split_dataset(&d, [0.6, 0.2, 0.2], 1, true).unwrap();
        let max_train = s.train.column(0).fold(f64::MIN, f64::max);
        let min_val = s.val.column(0).fold(f64::MAX, f64::min);
        assert!(max_train < min_val);
    }

    #[test]
    fn stats_refuse_held_out_splits() {
        let s = split_dataset(&toy(20), [0.6, 0.2, 0.2], 1, false).unwrap();
        assert!(NormStats::fit(&s.val).is_err());
        assert!(NormStats::fit(&s.test).is_err());
        let (norm, stats) = s.normalized().unwrap();
        assert_eq!(norm.test.stats.as_ref(), Some(&stats));
    }
}
