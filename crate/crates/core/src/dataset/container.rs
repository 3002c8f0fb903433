//! On-disk dataset layout.
//!
//! A dataset is a directory holding:
//!
//! * `meta.json`: `{"n_samples": N, "n_views": V, "view_dims": [d_0, ...]}`
//! * `view_0.csv` .. `view_{V-1}.csv`: one sample per row, comma-separated decimals, no header
//! * `mask.csv` (optional): N rows of V entries in `{0, 1}`; all ones when absent
//! * `labels.csv` (optional): one nonnegative integer per row

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::MultiViewDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n_samples: usize,
    pub n_views: usize,
    pub view_dims: Vec<usize>,
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<MultiViewDataset> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Manifest = serde_json::from_str(&text).map_err(|source| Error::Json {
        path: meta_path.clone(),
        source,
    })?;
    if meta.view_dims.len() != meta.n_views {
        return Err(Error::Dimension(format!(
            "manifest lists {} view dims for {} views",
            meta.view_dims.len(),
            meta.n_views
        )));
    }

    let mut views = Vec::with_capacity(meta.n_views);
    for (v, &dim) in meta.view_dims.iter().enumerate() {
        let name = format!("view_{v}.csv");
        let rows = read_rows(&dir.join(&name), &name, |s| s.trim().parse::<f64>().ok())?;
        views.push(to_matrix(rows, &name, meta.n_samples, dim)?);
    }

    let mask_path = dir.join("mask.csv");
    let mask = if mask_path.exists() {
        let rows = read_rows(&mask_path, "mask.csv", |s| match s.trim() {
            "1" => Some(true),
            "0" => Some(false),
            _ => None,
        })?;
        Some(to_matrix(rows, "mask.csv", meta.n_samples, meta.n_views)?)
    } else {
        None
    };

    let labels_path = dir.join("labels.csv");
    let labels = if labels_path.exists() {
        let rows = read_rows(&labels_path, "labels.csv", |s| s.trim().parse::<usize>().ok())?;
        let labels = to_matrix(rows, "labels.csv", meta.n_samples, 1)?;
        Some(labels.into_raw_vec_and_offset().0)
    } else {
        None
    };

    MultiViewDataset::new(views, mask, labels)
}

/// Writes `ds` in the layout read by [`load_dataset`]. Floats are written in
/// shortest round-trip form, so a reload is bit-identical.
pub fn save_dataset(ds: &MultiViewDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = Manifest {
        n_samples: ds.n_samples(),
        n_views: ds.n_views(),
        view_dims: ds.view_dims(),
    };
    let meta_path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta).expect("manifest serializes");
    fs::write(&meta_path, text + "\n").map_err(|e| Error::io(&meta_path, e))?;

    for (v, x) in ds.views().iter().enumerate() {
        write_rows(&dir.join(format!("view_{v}.csv")), x.rows(), |x: &f64| {
            x.to_string()
        })?;
    }
    let mask_path = dir.join("mask.csv");
    if ds.is_complete() {
        if mask_path.exists() {
            fs::remove_file(&mask_path).map_err(|e| Error::io(&mask_path, e))?;
        }
    } else {
        write_rows(&mask_path, ds.mask().rows(), |&m: &bool| {
            if m { "1" } else { "0" }.to_string()
        })?;
    }
    if let Some(labels) = ds.labels() {
        let path = dir.join("labels.csv");
        let body: String = labels.iter().map(|l| format!("{l}\n")).collect();
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn read_rows<T>(
    path: &Path,
    name: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Vec<Vec<T>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                file: name.into(),
                row: 0,
                msg: format!("{other:?}"),
            },
        })?;
    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            file: name.into(),
            row,
            msg: e.to_string(),
        })?;
        let values = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                parse(field).ok_or_else(|| Error::Parse {
                    file: name.into(),
                    row,
                    msg: format!("column {col}: cannot parse `{field}`"),
                })
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(values);
    }
    Ok(rows)
}

fn to_matrix<T: Clone>(rows: Vec<Vec<T>>, name: &str, n: usize, d: usize) -> Result<Array2<T>> {
    if rows.len() != n {
        return Err(Error::Dimension(format!(
            "{name} has {} rows, manifest says {n}",
            rows.len()
        )));
    }
    let mut flat = Vec::with_capacity(n * d);
    for (row, values) in rows.into_iter().enumerate() {
        if values.len() != d {
            return Err(Error::Parse {
                file: name.into(),
                row,
                msg: format!("expected {d} columns, found {}", values.len()),
            });
        }
        flat.extend(values);
    }
    Ok(Array2::from_shape_vec((n, d), flat).expect("shape checked"))
}

fn write_rows<'a, T: 'a>(
    path: &Path,
    rows: impl IntoIterator<Item = ndarray::ArrayView1<'a, T>>,
    fmt: impl Fn(&T) -> String,
) -> Result<()> {
    let mut body = String::new();
    for row in rows {
        let fields: Vec<String> = row.iter().map(&fmt).collect();
        body.push_str(&fields.join(","));
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    #[test]
    fn two_views_without_mask() {
        let tmp = tempfile::tempdir().unwrap();
        write(
            tmp.path(),
            "meta.json",
            r#"{"n_samples": 3, "n_views": 2, "view_dims": [2, 4]}"#,
        );
        write(tmp.path(), "view_0.csv", "1,2\n3,4\n5,6\n");
        write(tmp.path(), "view_1.csv", "1,2,3,4\n0,0,0,0\n1.5,-2,3e-3,4\n");
        let ds = load_dataset(tmp.path()).unwrap();
        assert_eq!(ds.n_samples(), 3);
        assert_eq!(ds.view_dims(), vec![2, 4]);
        assert!(ds.is_complete());
        assert_eq!(ds.view(1)[[2, 2]], 3e-3);
    }

    #[test]
    fn mismatched_row_counts() {
        let tmp = tempfile::tempdir().unwrap();
        write(
            tmp.path(),
            "meta.json",
            r#"{"n_samples": 3, "n_views": 2, "view_dims": [1, 1]}"#,
        );
        write(tmp.path(), "view_0.csv", "1\n2\n3\n");
        write(tmp.path(), "view_1.csv", "1\n2\n3\n4\n");
        assert!(matches!(load_dataset(tmp.path()), Err(Error::Dimension(_))));
    }

    #[test]
    fn malformed_field_names_view_and_row() {
        let tmp = tempfile::tempdir().unwrap();
        write(
            tmp.path(),
            "meta.json",
            r#"{"n_samples": 2, "n_views": 1, "view_dims": [2]}"#,
        );
        write(tmp.path(), "view_0.csv", "1,2\n3,abc\n");
        let err = load_dataset(tmp.path()).unwrap_err().to_string();
        assert!(err.contains("view_0.csv") && err.contains("row 1"), "{err}");
    }

    #[test]
    fn empty_mask_row() {
        let tmp = tempfile::tempdir().unwrap();
        write(
            tmp.path(),
            "meta.json",
            r#"{"n_samples": 2, "n_views": 2, "view_dims": [1, 1]}"#,
        );
        write(tmp.path(), "view_0.csv", "1\n2\n");
        write(tmp.path(), "view_1.csv", "1\n2\n");
        write(tmp.path(), "mask.csv", "1,1\n0,0\n");
        let err = load_dataset(tmp.path()).unwrap_err().to_string();
        assert!(err.contains("sample with no views"), "{err}");
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let tmp = tempfile::tempdir().unwrap();
        let ds = MultiViewDataset::new(
            vec![
                array![[0.1, 1.0 / 3.0], [std::f64::consts::PI, -2e-300], [5.0, 6.0]],
                array![[1e17], [0.0], [-0.25]],
            ],
            Some(array![[true, true], [true, false], [false, true]]),
            Some(vec![0, 2, 1]),
        )
        .unwrap();
        save_dataset(&ds, tmp.path()).unwrap();
        let back = load_dataset(tmp.path()).unwrap();
        assert_eq!(ds, back);
        save_dataset(&back, tmp.path()).unwrap();
        assert_eq!(load_dataset(tmp.path()).unwrap(), ds);
    }
}
