//! In-memory datasets plus CSV and ARFF ingestion.
//!
//! Feature values must be finite; labels are length-c vectors, one-hot at
//! parse time. Class index order is deterministic: declaration order for
//! ARFF nominals, first-appearance order for CSV label columns. Missing
//! values ('?') and non-numeric features are rejected rather than imputed.

use crate::error::CoreError;
use crate::label_algebra::one_hot;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<Vec<f64>>,
    class_names: Vec<String>,
}

impl Dataset {
    /// General constructor; accepts soft labels. Validates shapes, feature
    /// finiteness, and distinct class names.
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<Vec<f64>>,
        class_names: Vec<String>,
    ) -> Result<Self, CoreError> {
        let n = features.len();
        if n == 0 {
            return Err(CoreError::Shape("dataset needs at least one row".into()));
        }
        if labels.len() != n {
            return Err(CoreError::Shape(format!(
                "{n} feature rows vs {} labels",
                labels.len()
            )));
        }
        let m = features[0].len();
        if m == 0 {
            return Err(CoreError::Shape("dataset needs at least one feature".into()));
        }
        let c = class_names.len();
        if c == 0 {
            return Err(CoreError::Shape("dataset needs at least one class".into()));
        }
        for (i, row) in features.iter().enumerate() {
            if row.len() != m {
                return Err(CoreError::Shape(format!(
                    "feature row {i} has {} values, expected {m}",
                    row.len()
                )));
            }
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(CoreError::Domain(format!(
                        "feature value at row {i}, column {j} is not finite"
                    )));
                }
            }
        }
        for (i, y) in labels.iter().enumerate() {
            if y.len() != c {
                return Err(CoreError::Shape(format!(
                    "label {i} has length {}, expected {c}",
                    y.len()
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::Domain(format!("label {i} has a non-finite entry")));
            }
        }
        for (k, name) in class_names.iter().enumerate() {
            if class_names[..k].contains(name) {
                return Err(CoreError::Label(format!("duplicate class name '{name}'")));
            }
        }
        Ok(Dataset {
            features,
            labels,
            class_names,
        })
    }

    /// Builds a one-hot dataset from (features, class index) rows.
    pub fn from_rows(rows: &[(Vec<f64>, usize)], class_names: &[&str]) -> Result<Self, CoreError> {
        if rows.is_empty() {
            return Err(CoreError::Shape("dataset needs at least one row".into()));
        }
        let c = class_names.len();
        let mut features = Vec::with_capacity(rows.len());
        let mut labels = Vec::with_capacity(rows.len());
        for (i, (x, k)) in rows.iter().enumerate() {
            if *k >= c {
                return Err(CoreError::Label(format!(
                    "row {i} has class index {k}, but only {c} classes are declared"
                )));
            }
            features.push(x.clone());
            labels.push(one_hot(*k, c)?);
        }
        Dataset::new(
            features,
            labels,
            class_names.iter().map(|s| s.to_string()).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.features.len()
    }

    pub fn m(&self) -> usize {
        self.features[0].len()
    }

    pub fn c(&self) -> usize {
        self.class_names.len()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn labels(&self) -> &[Vec<f64>] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &[f64] {
        &self.labels[i]
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// True when every label is exactly an indicator vector (bitwise 0/1).
    pub fn is_one_hot(&self) -> bool {
        self.labels.iter().all(|y| {
            let mut ones = 0;
            for &v in y {
                if v == 1.0 {
                    ones += 1;
                } else if v != 0.0 {
                    return false;
                }
            }
            ones == 1
        })
    }

    /// Class index per sample; errors when any label is soft.
    pub fn class_indices(&self) -> Result<Vec<usize>, CoreError> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, y)| {
                let mut hit = None;
                for (k, &v) in y.iter().enumerate() {
                    if v == 1.0 && hit.is_none() {
                        hit = Some(k);
                    } else if v != 0.0 {
                        return Err(CoreError::Label(format!(
                            "label {i} is not one-hot; class indices are undefined"
                        )));
                    }
                }
                hit.ok_or_else(|| {
                    CoreError::Label(format!("label {i} is not one-hot; class indices are undefined"))
                })
            })
            .collect()
    }

    /// Same features, new labels (noise injection, backward transforms).
    pub fn with_labels(&self, labels: Vec<Vec<f64>>) -> Result<Dataset, CoreError> {
        Dataset::new(self.features.clone(), labels, self.class_names.clone())
    }

    /// Row subset in the given order; duplicate indices are allowed, which is
    /// what bootstrap resampling needs.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset, CoreError> {
        let mut features = Vec::with_capacity(indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n() {
                return Err(CoreError::Index {
                    what: "sample",
                    index: i,
                    size: self.n(),
                });
            }
            features.push(self.features[i].clone());
            labels.push(self.labels[i].clone());
        }
        Dataset::new(features, labels, self.class_names.clone())
    }

    /// Serializes to CSV with a synthetic header f0..f{m-1},label and class
    /// names in the label column. Float formatting is shortest-round-trip,
    /// so parse -> to_csv -> parse is exact.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let mut header: Vec<String> = (0..self.m()).map(|j| format!("f{j}")).collect();
        header.push("label".into());
        w.write_record(&header).expect("in-memory write");
        for (row, y) in self.features.iter().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
            let k = y
                .iter()
                .position(|&v| v == 1.0)
                .expect("to_csv requires one-hot labels");
            rec.push(self.class_names[k].clone());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 csv")
    }
}

/// Which column of a CSV file holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

/// Parses RFC-4180-style CSV with a header row. Every column except the
/// label column must be numeric. Label values become class indices in
/// first-appearance order.
pub fn parse_csv(text: &str, label_column: &LabelColumn) -> Result<Dataset, CoreError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CoreError::parse(1, format!("bad header row: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(CoreError::parse(1, "empty header row"));
    }
    let label_ix = match label_column {
        LabelColumn::Name(name) => headers.iter().position(|h| h == name).ok_or_else(|| {
            CoreError::parse(1, format!("label column '{name}' not found in header"))
        })?,
        LabelColumn::Index(i) => {
            if *i >= headers.len() {
                return Err(CoreError::parse(
                    1,
                    format!("label column index {i} out of range for {} columns", headers.len()),
                ));
            }
            *i
        }
    };

    let mut class_names: Vec<String> = Vec::new();
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::new();
    for (rec_ix, record) in reader.records().enumerate() {
        let line = rec_ix + 2; // header is line 1
        let record = record.map_err(|e| CoreError::parse(line, format!("bad record: {e}")))?;
        if record.len() != headers.len() {
            return Err(CoreError::parse(
                line,
                format!("{} fields, expected {}", record.len(), headers.len()),
            ));
        }
        let mut x = Vec::with_capacity(headers.len() - 1);
        let mut class = None;
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if j == label_ix {
                let k = match class_names.iter().position(|n| n == cell) {
                    Some(k) => k,
                    None => {
                        class_names.push(cell.to_string());
                        class_names.len() - 1
                    }
                };
                class = Some(k);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    CoreError::parse_at(line, j + 1, format!("expected a number, found '{cell}'"))
                })?;
                x.push(v);
            }
        }
        rows.push((x, class.expect("label column visited")));
    }
    if rows.is_empty() {
        return Err(CoreError::Shape("CSV has a header but no data rows".into()));
    }
    let names: Vec<&str> = class_names.iter().map(|s| s.as_str()).collect();
    Dataset::from_rows(&rows, &names)
}

#[derive(Debug, PartialEq)]
enum ArffAttribute {
    Numeric,
    Nominal(Vec<String>),
}

/// Parses the ARFF subset the benchmark datasets use: '%' comment lines,
/// case-insensitive @relation/@attribute/@data, numeric feature attributes,
/// and exactly one nominal attribute holding the class (any position).
/// String/date attributes, sparse rows, and missing values are rejected.
pub fn parse_arff(text: &str) -> Result<Dataset, CoreError> {
    let mut attributes: Vec<(String, ArffAttribute)> = Vec::new();
    let mut in_data = false;
    let mut data_line = 0;
    let mut class_col: Option<usize> = None;
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::new();
    let mut class_names: Vec<String> = Vec::new();

    for (ix, raw) in text.lines().enumerate() {
        let line_no = ix + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = line.to_ascii_lowercase();
            if lower.starts_with("@relation") {
                continue;
            } else if lower.starts_with("@attribute") {
                let rest = line["@attribute".len()..].trim_start();
                let (name, type_spec) = split_attribute(rest, line_no)?;
                let attr = parse_attribute_type(&type_spec, line_no)?;
                if let ArffAttribute::Nominal(values) = &attr {
                    if class_col.is_some() {
                        return Err(CoreError::parse(
                            line_no,
                            "more than one nominal attribute; only a single nominal class is supported",
                        ));
                    }
                    class_col = Some(attributes.len());
                    class_names = values.clone();
                }
                attributes.push((name, attr));
            } else if lower.starts_with("@data") {
                if attributes.is_empty() {
                    return Err(CoreError::parse(line_no, "@data before any @attribute"));
                }
                if class_col.is_none() {
                    return Err(CoreError::parse(
                        line_no,
                        "no nominal class attribute declared before @data",
                    ));
                }
                in_data = true;
                data_line = line_no;
            } else if lower.starts_with('@') {
                return Err(CoreError::parse(
                    line_no,
                    format!("unsupported directive '{}'", line.split_whitespace().next().unwrap_or(line)),
                ));
            } else {
                return Err(CoreError::parse(line_no, "expected a directive before @data"));
            }
            continue;
        }

        // data section
        if line.starts_with('{') {
            return Err(CoreError::parse(line_no, "sparse ARFF rows are not supported"));
        }
        if line.contains('?') {
            return Err(CoreError::parse(line_no, "missing values ('?') are not supported"));
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != attributes.len() {
            return Err(CoreError::parse(
                line_no,
                format!("{} values, expected {}", cells.len(), attributes.len()),
            ));
        }
        let class_col = class_col.expect("checked at @data");
        let mut x = Vec::with_capacity(attributes.len() - 1);
        let mut class = None;
        for (j, cell) in cells.iter().enumerate() {
            let cell = strip_quotes(cell);
            if j == class_col {
                let k = class_names.iter().position(|n| n == cell).ok_or_else(|| {
                    CoreError::parse_at(
                        line_no,
                        j + 1,
                        format!("class value '{cell}' is not among the declared nominals"),
                    )
                })?;
                class = Some(k);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    CoreError::parse_at(line_no, j + 1, format!("expected a number, found '{cell}'"))
                })?;
                x.push(v);
            }
        }
        rows.push((x, class.expect("class column visited")));
    }

    if !in_data {
        return Err(CoreError::parse(text.lines().count().max(1), "missing @data section"));
    }
    if rows.is_empty() {
        return Err(CoreError::parse(data_line, "@data section has no rows"));
    }
    let names: Vec<&str> = class_names.iter().map(|s| s.as_str()).collect();
    Dataset::from_rows(&rows, &names)
}

/// Splits an @attribute body into (name, type spec); the name may be quoted.
fn split_attribute(rest: &str, line_no: usize) -> Result<(String, String), CoreError> {
    let rest = rest.trim_start();
    if rest.is_empty() {
        return Err(CoreError::parse(line_no, "@attribute needs a name and a type"));
    }
    let (name, tail) = if let Some(q) = rest.chars().next().filter(|&q| q == '\'' || q == '"') {
        let body = &rest[1..];
        let end = body
            .find(q)
            .ok_or_else(|| CoreError::parse(line_no, "unterminated quoted attribute name"))?;
        (body[..end].to_string(), &body[end + 1..])
    } else {
        let end = rest.find(char::is_whitespace).ok_or_else(|| {
            CoreError::parse(line_no, "@attribute needs a type after the name")
        })?;
        (rest[..end].to_string(), &rest[end..])
    };
    let type_spec = tail.trim();
    if type_spec.is_empty() {
        return Err(CoreError::parse(line_no, "@attribute needs a type after the name"));
    }
    Ok((name, type_spec.to_string()))
}

fn parse_attribute_type(spec: &str, line_no: usize) -> Result<ArffAttribute, CoreError> {
    if let Some(body) = spec.strip_prefix('{') {
        let body = body
            .strip_suffix('}')
            .ok_or_else(|| CoreError::parse(line_no, "unterminated nominal specification"))?;
        let values: Vec<String> = body
            .split(',')
            .map(|v| strip_quotes(v.trim()).to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err(CoreError::parse(line_no, "nominal attribute with no values"));
        }
        return Ok(ArffAttribute::Nominal(values));
    }
    match spec.to_ascii_lowercase().as_str() {
        "numeric" | "real" | "integer" => Ok(ArffAttribute::Numeric),
        other => Err(CoreError::parse(
            line_no,
            format!("unsupported attribute type '{other}' (only numeric features and one nominal class)"),
        )),
    }
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    if s.len() >= 2 {
        let bytes = s.as_bytes();
        if (bytes[0] == b'\'' && bytes[s.len() - 1] == b'\'')
            || (bytes[0] == b'"' && bytes[s.len() - 1] == b'"')
        {
            return &s[1..s.len() - 1];
        }
    }
    s
}
