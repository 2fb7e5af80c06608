//! Feature table files.
//!
//! Two formats are supported:
//!
//! * CSV with header `patch_id,wsi_id,label,f0,...,f{D-1}`. An empty label
//!   field means unlabeled. The class count is not part of the file and has to
//!   be supplied by the caller.
//! * A JSON manifest `{n, d, classes, dtype: "f64le", payload, ids}` next to a
//!   raw payload of `n * d` little-endian `f64` values (row-major) and an ids
//!   CSV with `patch_id,wsi_id,label`. Paths in the manifest are relative to
//!   the manifest's directory.
//!
//! Row numbers in errors count data rows from 1, header excluded.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use clustent_core::{Domain, Error as CoreError, FeatureTable, PatchRecord};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Binary,
}

impl TableFormat {
    /// `.csv` is CSV, `.json` is a binary manifest.
    pub fn detect(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Ok(TableFormat::Csv),
            Some(e) if e.eq_ignore_ascii_case("json") => Ok(TableFormat::Binary),
            _ => Err(CliError::format(path, "unknown table format (expected .csv or .json)")),
        }
    }

    /// File extension of the main file.
    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Binary => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryManifest {
    pub n: usize,
    pub d: usize,
    pub classes: usize,
    pub dtype: String,
    pub payload: String,
    pub ids: String,
}

const DTYPE: &str = "f64le";

fn table_error(path: &Path, source: CoreError) -> CliError {
    CliError::Table { path: path.to_path_buf(), source }
}

fn ingestion(row: usize, field: &str, reason: impl Into<String>) -> CoreError {
    CoreError::Ingestion { row, field: field.into(), reason: reason.into() }
}

pub(crate) fn ensure_exists(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingInput { path: path.to_path_buf() })
    }
}

/// Loads a table, picking the format from the extension. `classes` is required
/// for CSV and, when given, must agree with a binary manifest.
pub fn load_table(path: &Path, classes: Option<usize>, domain: Domain) -> Result<FeatureTable> {
    ensure_exists(path)?;
    match TableFormat::detect(path)? {
        TableFormat::Csv => {
            let classes = classes.ok_or_else(|| {
                CliError::Usage(format!("{}: CSV tables need --classes", path.display()))
            })?;
            read_csv(path, classes, domain)
        }
        TableFormat::Binary => {
            let table = read_binary(path, domain)?;
            if let Some(c) = classes {
                if c != table.num_classes() {
                    return Err(CliError::format(
                        path,
                        format!("manifest declares {} classes, --classes is {c}", table.num_classes()),
                    ));
                }
            }
            Ok(table)
        }
    }
}

/// Writes `table` to `path` in `format`. For the binary format `path` is the
/// manifest; the payload and ids files are written beside it.
pub fn write_table(table: &FeatureTable, path: &Path, format: TableFormat) -> Result<()> {
    match format {
        TableFormat::Csv => write_csv(table, path),
        TableFormat::Binary => write_binary(table, path),
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().flexible(true).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::format(path, e.to_string())
}

fn parse_label(raw: &str, row: usize) -> std::result::Result<Option<usize>, CoreError> {
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<usize>()
        .map(Some)
        .map_err(|_| ingestion(row, "label", format!("`{raw}` is not a class index")))
}

fn check_id_columns(path: &Path, header: &csv::StringRecord) -> Result<()> {
    let expected = ["patch_id", "wsi_id", "label"];
    for (i, name) in expected.iter().enumerate() {
        if header.get(i) != Some(name) {
            return Err(CliError::format(
                path,
                format!("header column {} must be `{name}`, found {:?}", i + 1, header.get(i)),
            ));
        }
    }
    Ok(())
}

pub fn read_csv(path: &Path, classes: usize, domain: Domain) -> Result<FeatureTable> {
    let mut reader = csv_reader(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    check_id_columns(path, &header)?;
    let dim = header.len() - 3;
    if dim == 0 {
        return Err(CliError::format(path, "header has no feature columns"));
    }
    for (j, name) in header.iter().skip(3).enumerate() {
        if name != format!("f{j}") {
            return Err(CliError::format(path, format!("feature column {j} must be `f{j}`, found `{name}`")));
        }
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| csv_error(path, e))?;
        if row.len() != dim + 3 {
            let found = row.len().saturating_sub(3);
            return Err(table_error(
                path,
                ingestion(row_no, "features", format!("expected {dim} values, found {found}")),
            ));
        }
        let label = parse_label(&row[2], row_no).map_err(|e| table_error(path, e))?;
        let mut features = Vec::with_capacity(dim);
        for j in 0..dim {
            let raw = &row[3 + j];
            let v: f64 = raw.trim().parse().map_err(|_| {
                table_error(path, ingestion(row_no, &format!("f{j}"), format!("`{raw}` is not a number")))
            })?;
            features.push(v);
        }
        records.push(PatchRecord { patch_id: row[0].to_string(), group_id: row[1].to_string(), label, features });
    }
    FeatureTable::new(records, dim, classes, domain).map_err(|e| table_error(path, e))
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::File::create(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(create(path)?))
}

pub(crate) fn write_row<I, S>(w: &mut csv::Writer<fs::File>, path: &Path, fields: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).map_err(|e| csv_error(path, e))
}

pub(crate) fn finish(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Shortest text that parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn label_text(label: Option<usize>) -> String {
    label.map(|c| c.to_string()).unwrap_or_default()
}

pub fn write_csv(table: &FeatureTable, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["patch_id".to_string(), "wsi_id".into(), "label".into()];
    header.extend((0..table.dim()).map(|j| format!("f{j}")));
    write_row(&mut w, path, &header)?;
    for r in table.records() {
        let mut row = vec![r.patch_id.clone(), r.group_id.clone(), label_text(r.label)];
        row.extend(r.features.iter().map(|&v| fmt_f64(v)));
        write_row(&mut w, path, &row)?;
    }
    finish(w, path)
}

fn sibling(manifest: &Path, relative: &str) -> PathBuf {
    manifest.parent().map(|d| d.join(relative)).unwrap_or_else(|| PathBuf::from(relative))
}

pub fn read_binary(path: &Path, domain: Domain) -> Result<FeatureTable> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let m: BinaryManifest =
        serde_json::from_str(&text).map_err(|e| CliError::format(path, format!("bad manifest: {e}")))?;
    if m.dtype != DTYPE {
        return Err(CliError::format(path, format!("unsupported dtype `{}` (expected {DTYPE})", m.dtype)));
    }
    if m.d == 0 {
        return Err(CliError::format(path, "manifest d must be positive"));
    }

    let payload_path = sibling(path, &m.payload);
    ensure_exists(&payload_path)?;
    let bytes = fs::read(&payload_path).map_err(|e| CliError::io(&payload_path, e))?;
    let expected = m.n.checked_mul(m.d).and_then(|x| x.checked_mul(8));
    if expected != Some(bytes.len()) {
        return Err(CliError::format(
            &payload_path,
            format!("payload has {} bytes, manifest implies n*d*8 = {}*{}*8", bytes.len(), m.n, m.d),
        ));
    }

    let ids_path = sibling(path, &m.ids);
    ensure_exists(&ids_path)?;
    let mut reader = csv_reader(&ids_path)?;
    let header = reader.headers().map_err(|e| csv_error(&ids_path, e))?.clone();
    check_id_columns(&ids_path, &header)?;
    let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
    let mut records = Vec::with_capacity(m.n);
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| csv_error(&ids_path, e))?;
        if row_no > m.n {
            return Err(CliError::format(&ids_path, format!("more than n = {} id rows", m.n)));
        }
        if row.len() != 3 {
            return Err(table_error(&ids_path, ingestion(row_no, "ids", format!("expected 3 fields, found {}", row.len()))));
        }
        let label = parse_label(&row[2], row_no).map_err(|e| table_error(&ids_path, e))?;
        let features: Vec<f64> = values.by_ref().take(m.d).collect();
        records.push(PatchRecord { patch_id: row[0].to_string(), group_id: row[1].to_string(), label, features });
    }
    if records.len() != m.n {
        return Err(CliError::format(&ids_path, format!("{} id rows, manifest n = {}", records.len(), m.n)));
    }
    FeatureTable::new(records, m.d, m.classes, domain).map_err(|e| table_error(path, e))
}

pub fn write_binary(table: &FeatureTable, path: &Path) -> Result<()> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| CliError::Usage(format!("{}: cannot derive payload name", path.display())))?;
    let manifest = BinaryManifest {
        n: table.len(),
        d: table.dim(),
        classes: table.num_classes(),
        dtype: DTYPE.into(),
        payload: format!("{stem}.f64"),
        ids: format!("{stem}.ids.csv"),
    };

    let payload_path = sibling(path, &manifest.payload);
    let mut bytes = Vec::with_capacity(table.len() * table.dim() * 8);
    for r in table.records() {
        for v in &r.features {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = create(&payload_path)?;
    f.write_all(&bytes).map_err(|e| CliError::io(&payload_path, e))?;

    let ids_path = sibling(path, &manifest.ids);
    let mut w = csv_writer(&ids_path)?;
    write_row(&mut w, &ids_path, ["patch_id", "wsi_id", "label"])?;
    for r in table.records() {
        write_row(&mut w, &ids_path, [r.patch_id.as_str(), r.group_id.as_str(), &label_text(r.label)])?;
    }
    finish(w, &ids_path)?;

    crate::artifacts::write_json(path, &manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn three_rows_two_groups() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.csv", "patch_id,wsi_id,label,f0,f1\na,w1,0,1.5,2\nb,w1,,3,4\nc,w2,1,5,6e-3\n");
        let t = load_table(&p, Some(2), Domain::Target).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.dim(), 2);
        let sizes: Vec<usize> = t.groups().iter().map(|g| g.len()).collect();
        assert_eq!(sizes, [2, 1]);
        assert_eq!(t.record(1).label, None);
        assert_eq!(t.features(2), [5.0, 0.006]);
    }

    #[test]
    fn short_row_names_row_and_field() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.csv", "patch_id,wsi_id,label,f0,f1\na,w,0,1,2\nb,w,0,3\n");
        let err = load_table(&p, Some(1), Domain::Target).unwrap_err();
        match err {
            CliError::Table { source: CoreError::Ingestion { row, field, .. }, .. } => {
                assert_eq!((row, field.as_str()), (2, "features"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_number_and_nan() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.csv", "patch_id,wsi_id,label,f0,f1\na,w,0,1,x\n");
        let err = load_table(&p, Some(1), Domain::Target).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("`f1`"), "{err}");
        let p = write(dir.path(), "u.csv", "patch_id,wsi_id,label,f0\na,w,0,1\nb,w,0,NaN\n");
        let err = load_table(&p, Some(1), Domain::Target).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("`f0`"), "{err}");
    }

    #[test]
    fn unlabeled_source_and_duplicate_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.csv", "patch_id,wsi_id,label,f0\na,w,0,1\nb,w,,2\n");
        assert!(matches!(
            load_table(&p, Some(1), Domain::Source),
            Err(CliError::Table { source: CoreError::Labeling { row: 2, .. }, .. })
        ));
        let p = write(dir.path(), "u.csv", "patch_id,wsi_id,label,f0\na,w,0,1\na,w,0,2\n");
        let err = load_table(&p, Some(1), Domain::Target).unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn csv_needs_classes() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.csv", "patch_id,wsi_id,label,f0\na,w,0,1\n");
        assert!(matches!(load_table(&p, None, Domain::Target), Err(CliError::Usage(_))));
    }

    #[test]
    fn bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.csv", "id,wsi_id,label,f0\na,w,0,1\n");
        assert!(matches!(load_table(&p, Some(1), Domain::Target), Err(CliError::Format { .. })));
        let p = write(dir.path(), "u.csv", "patch_id,wsi_id,label,f1\na,w,0,1\n");
        assert!(matches!(load_table(&p, Some(1), Domain::Target), Err(CliError::Format { .. })));
    }

    #[test]
    fn missing_file() {
        let err = load_table(Path::new("/nonexistent/t.csv"), Some(1), Domain::Target).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent/t.csv"));
    }

    #[test]
    fn binary_four_by_three_from_raw_bytes() {
        let dir = tempfile::tempdir().unwrap();
        // struct.pack('<12d', *[i * 0.5 - 1.25 for i in range(12)])
        let hex = "000000000000f4bf000000000000e8bf000000000000d0bf000000000000d03f\
                   000000000000e83f000000000000f43f000000000000fc3f0000000000000240\
                   00000000000006400000000000000a400000000000000e400000000000001140";
        let bytes: Vec<u8> = (0..hex.len() / 2).map(|i| u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).unwrap()).collect();
        assert_eq!(bytes.len(), 96);
        let values = [-1.25, -0.75, -0.25, 0.25, 0.75, 1.25, 1.75, 2.25, 2.75, 3.25, 3.75, 4.25];
        fs::write(dir.path().join("x.bin"), &bytes).unwrap();
        write(dir.path(), "x.ids.csv", "patch_id,wsi_id,label\np0,a,0\np1,a,\np2,b,1\np3,c,1\n");
        let m = write(
            dir.path(),
            "x.json",
            r#"{"n":4,"d":3,"classes":2,"dtype":"f64le","payload":"x.bin","ids":"x.ids.csv"}"#,
        );
        let t = load_table(&m, None, Domain::Target).unwrap();
        assert_eq!(t.len(), 4);
        for i in 0..4 {
            assert_eq!(t.features(i), &values[i * 3..i * 3 + 3]);
        }
        assert_eq!(t.record(1).label, None);
        assert_eq!(t.num_classes(), 2);
    }

    #[test]
    fn binary_wrong_payload_size() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.bin"), [0u8; 48]).unwrap();
        write(dir.path(), "x.ids.csv", "patch_id,wsi_id,label\np0,a,0\n");
        let m = write(
            dir.path(),
            "x.json",
            r#"{"n":4,"d":3,"classes":2,"dtype":"f64le","payload":"x.bin","ids":"x.ids.csv"}"#,
        );
        assert!(matches!(load_table(&m, None, Domain::Target), Err(CliError::Format { .. })));
        assert!(load_table(&m, Some(3), Domain::Target).is_err());
    }

    #[test]
    fn binary_classes_must_agree() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![PatchRecord { patch_id: "a".into(), group_id: "g".into(), label: Some(1), features: vec![1.0] }];
        let t = FeatureTable::new(recs, 1, 2, Domain::Target).unwrap();
        let m = dir.path().join("t.json");
        write_table(&t, &m, TableFormat::Binary).unwrap();
        assert!(load_table(&m, Some(3), Domain::Target).is_err());
        assert_eq!(load_table(&m, Some(2), Domain::Target).unwrap(), t);
    }
}
