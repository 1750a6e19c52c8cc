use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{CohortManifest, ConnectivityMatrix, DataError, Label, Sex, SubjectRecord};
use crate::numcore::Mat;

const HEADER: [&str; 7] = [
    "subject_id",
    "label",
    "age",
    "sex",
    "site",
    "func_path",
    "struct_path",
];
const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Expected functional region count; taken from the manifest's size line,
    /// or from the first subject when neither is given.
    pub func_regions: Option<usize>,
    pub struct_regions: Option<usize>,
    pub symmetry_tolerance: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            func_regions: None,
            struct_regions: None,
            symmetry_tolerance: 1e-6,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, message: impl ToString) -> DataError {
    DataError::Csv {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Reads an `R×R` matrix stored as comma-separated rows.
pub fn read_matrix_csv(path: &Path) -> Result<Mat, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| csv_err(path, format!("bad number `{f}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(csv_err(path, "rows have differing lengths"));
    }
    Mat::from_shape_vec((n_rows, n_cols), rows.into_iter().flatten().collect())
        .map_err(|e| csv_err(path, e))
}

pub fn write_matrix_csv(path: &Path, m: &Mat) -> Result<(), DataError> {
    let mut out = String::with_capacity(m.len() * 20);
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

fn parse_size_line(line: &str) -> (Option<usize>, Option<usize>) {
    let mut func = None;
    let mut structural = None;
    for token in line.trim_start_matches('#').split_whitespace() {
        if let Some((k, v)) = token.split_once('=') {
            match k {
                "func_regions" => func = v.parse().ok(),
                "struct_regions" => structural = v.parse().ok(),
                _ => {}
            }
        }
    }
    (func, structural)
}

pub fn load_cohort(manifest_path: &Path) -> Result<CohortManifest, DataError> {
    load_cohort_with(manifest_path, LoadOptions::default())
}

/// Loads and validates a manifest plus all referenced matrices.
pub fn load_cohort_with(
    manifest_path: &Path,
    options: LoadOptions,
) -> Result<CohortManifest, DataError> {
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let (mut func_regions, mut struct_regions) = text
        .lines()
        .next()
        .filter(|l| l.starts_with('#'))
        .map(parse_size_line)
        .unwrap_or((None, None));
    func_regions = options.func_regions.or(func_regions);
    struct_regions = options.struct_regions.or(struct_regions);

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| csv_err(manifest_path, e))?
        .clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(csv_err(
            manifest_path,
            format!("expected header `{}`", HEADER.join(",")),
        ));
    }

    let mut subjects = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(manifest_path, e))?;
        let field = |i: usize| record.get(i).unwrap_or("").to_string();
        let subject_id = field(0);
        if !seen.insert(subject_id.clone()) {
            return Err(DataError::DuplicateId(subject_id));
        }
        let label = match field(1).as_str() {
            "0" => Label::Td,
            "1" => Label::Asd,
            other => {
                return Err(DataError::InvalidLabel {
                    subject: subject_id,
                    value: other.to_string(),
                })
            }
        };
        let age: f64 = field(2).parse().map_err(|_| DataError::InvalidField {
            subject: subject_id.clone(),
            field: "age",
            message: format!("`{}` is not a number", field(2)),
        })?;
        if !(age > 0.0 && age.is_finite()) {
            return Err(DataError::InvalidField {
                subject: subject_id,
                field: "age",
                message: format!("age must be positive, got {age}"),
            });
        }
        let sex = Sex::parse(&field(3)).ok_or_else(|| DataError::UnknownSex {
            subject: subject_id.clone(),
            code: field(3),
        })?;
        let site = field(4);
        if site.is_empty() {
            return Err(DataError::InvalidField {
                subject: subject_id,
                field: "site",
                message: "site code is empty".into(),
            });
        }

        let func_path = base.join(field(5));
        let func = read_checked(&subject_id, &func_path, &mut func_regions, options)?;
        if let Some((row, col, value)) = out_of_range(&func) {
            return Err(DataError::OutOfRange {
                subject: subject_id,
                row,
                col,
                value,
            });
        }
        let struct_path = base.join(field(6));
        let structural = read_checked(&subject_id, &struct_path, &mut struct_regions, options)?;

        subjects.push(SubjectRecord {
            subject_id,
            label,
            age,
            sex,
            site,
            func_matrix: func,
            struct_matrix: structural,
        });
    }

    let cohort = CohortManifest {
        subjects,
        func_regions: func_regions.unwrap_or(super::DEFAULT_FUNC_REGIONS),
        struct_regions: struct_regions.unwrap_or(super::DEFAULT_STRUCT_REGIONS),
    };
    cohort.validate()?;
    Ok(cohort)
}

fn out_of_range(m: &ConnectivityMatrix) -> Option<(usize, usize, f64)> {
    m.values()
        .indexed_iter()
        .find(|(_, v)| !(v.abs() <= 1.0 + RANGE_SLACK))
        .map(|((i, j), v)| (i, j, *v))
}

fn read_checked(
    subject: &str,
    path: &Path,
    expected: &mut Option<usize>,
    options: LoadOptions,
) -> Result<ConnectivityMatrix, DataError> {
    let values = read_matrix_csv(path)?;
    let (rows, cols) = values.dim();
    let want = *expected.get_or_insert(rows);
    if rows != want || cols != want {
        return Err(DataError::Shape {
            subject: subject.to_string(),
            path: path.to_path_buf(),
            expected: want,
            found: rows,
            found_cols: cols,
        });
    }
    let m = ConnectivityMatrix::new(values)?;
    if let Some((row, col, _)) = m.asymmetry(options.symmetry_tolerance) {
        return Err(DataError::Asymmetric {
            subject: subject.to_string(),
            path: path.to_path_buf(),
            row,
            col,
            a: m.values()[[row, col]],
            b: m.values()[[col, row]],
            tolerance: options.symmetry_tolerance,
        });
    }
    Ok(m)
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `manifest.csv` and `matrices/*.csv` under `dir`; returns the
/// manifest path.
pub fn save_cohort(cohort: &CohortManifest, dir: &Path) -> Result<PathBuf, DataError> {
    let matrices = dir.join("matrices");
    fs::create_dir_all(&matrices).map_err(io_err(&matrices))?;
    let manifest_path = dir.join("manifest.csv");
    let mut out = format!(
        "# func_regions={} struct_regions={}\n{}\n",
        cohort.func_regions,
        cohort.struct_regions,
        HEADER.join(",")
    );
    for s in &cohort.subjects {
        let stem = file_stem(&s.subject_id);
        let func_rel = format!("matrices/{stem}_func.csv");
        let struct_rel = format!("matrices/{stem}_struct.csv");
        write_matrix_csv(&dir.join(&func_rel), s.func_matrix.values())?;
        write_matrix_csv(&dir.join(&struct_rel), s.struct_matrix.values())?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        w.write_record([
            s.subject_id.as_str(),
            &s.label.index().to_string(),
            &s.age.to_string(),
            s.sex.code(),
            &s.site,
            &func_rel,
            &struct_rel,
        ])
        .map_err(|e| csv_err(&manifest_path, e))?;
        let bytes = w.into_inner().map_err(|e| csv_err(&manifest_path, e))?;
        out.push_str(&String::from_utf8_lossy(&bytes));
    }
    let mut file = fs::File::create(&manifest_path).map_err(io_err(&manifest_path))?;
    file.write_all(out.as_bytes())
        .map_err(io_err(&manifest_path))?;
    Ok(manifest_path)
}
