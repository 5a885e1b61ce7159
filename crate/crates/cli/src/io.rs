//! Dataset, draws, truth and report files.
//!
//! Every number is written with 17 significant digits so that reading a
//! file back and writing it again reproduces it byte for byte. Writes go
//! to a temporary file in the target directory which is then renamed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use msprobit::metrics::Standardizer;
use msprobit::model::{validate_dataset, Dataset, ParamDraw, RawDataset, ScaleSpec, ValidationOptions};
use msprobit::sampler::DrawSet;
use msprobit::simulate::SimTruth;

use crate::error::{CliError, CliResult};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `bytes` to `path` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// CSV text from a header and string rows.
pub fn csv_bytes<I>(header: &[String], rows: I) -> Vec<u8>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    w.into_inner().expect("flushing to memory")
}

pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    write_atomic(path, &csv_bytes(header, rows))
}

fn open_csv(path: &Path) -> CliResult<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if let csv::ErrorKind::Io(_) = e.kind() {
        CliError::io(path, e)
    } else {
        CliError::Validation(format!("{}: {e}", path.display()))
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, column: &str, text: &str) -> CliResult<T> {
    text.trim().parse().map_err(|_| {
        CliError::Validation(format!(
            "{}, line {line}, column {column}: cannot parse {text:?}",
            path.display()
        ))
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaleFile {
    scales: Vec<ScaleEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaleEntry {
    id: i64,
    num_classes: usize,
}

/// `data/name.csv` -> `data/name.scales.toml`.
pub fn sidecar_path(dataset: &Path) -> PathBuf {
    let stem = dataset.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    dataset.with_file_name(format!("{stem}.scales.toml"))
}

fn read_scales(path: &Path) -> CliResult<Vec<ScaleSpec>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: ScaleFile =
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    let mut scales: Vec<Option<ScaleSpec>> = vec![None; file.scales.len()];
    for entry in &file.scales {
        let slot = usize::try_from(entry.id - 1).ok().filter(|&s| s < scales.len()).ok_or_else(|| {
            CliError::Validation(format!(
                "{}: scale ids must be 1..={}, found {}",
                path.display(),
                scales.len(),
                entry.id
            ))
        })?;
        if scales[slot].is_some() {
            return Err(CliError::Validation(format!("{}: scale {} declared twice", path.display(), entry.id)));
        }
        scales[slot] = Some(
            ScaleSpec::new(entry.num_classes)
                .map_err(|e| CliError::Validation(format!("{}: scale {}: {e}", path.display(), entry.id)))?,
        );
    }
    Ok(scales.into_iter().map(|s| s.expect("every slot filled")).collect())
}

fn scales_toml(scales: &[ScaleSpec]) -> String {
    let file = ScaleFile {
        scales: scales
            .iter()
            .enumerate()
            .map(|(s, spec)| ScaleEntry { id: s as i64 + 1, num_classes: spec.num_classes() })
            .collect(),
    };
    toml::to_string(&file).expect("scale table serialises")
}

/// Reads a dataset CSV (`scale_id,label,f1..fp`) and its scale sidecar.
pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let mut reader = open_csv(path)?;
    let scales = read_scales(&sidecar_path(path))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 3 || &header[0] != "scale_id" || &header[1] != "label" {
        return Err(CliError::Validation(format!(
            "{}: header must start with scale_id,label and name at least one feature column",
            path.display()
        )));
    }
    let mut raw = RawDataset { scales, ..RawDataset::default() };
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        raw.scale_ids.push(parse_field(path, line, "scale_id", &record[0])?);
        raw.labels.push(parse_field(path, line, "label", &record[1])?);
        let row = (2..record.len())
            .map(|j| parse_field(path, line, &header[j], &record[j]))
            .collect::<CliResult<Vec<f64>>>()?;
        raw.rows.push(row);
    }
    validate_dataset(raw, ValidationOptions::default())
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn write_dataset(path: &Path, data: &Dataset) -> CliResult<()> {
    let mut header = vec!["scale_id".to_string(), "label".to_string()];
    header.extend((1..=data.p()).map(|j| format!("f{j}")));
    let x = data.features();
    let rows = (0..data.n()).map(|i| {
        let mut row = vec![data.scale_id(i).to_string(), data.label(i).to_string()];
        row.extend(x.row(i).iter().map(|&v| fmt_f64(v)));
        row
    });
    write_csv(path, &header, rows)?;
    write_atomic(&sidecar_path(path), scales_toml(data.scales()).as_bytes())
}

pub fn draws_header(p: usize, thresholds: &[usize]) -> Vec<String> {
    let mut header = vec!["chain_id".to_string(), "iteration".to_string()];
    header.extend((1..=p).map(|k| format!("beta_{k}")));
    for (s, &k) in thresholds.iter().enumerate() {
        header.extend((1..=k).map(|c| format!("gamma_{}_{c}", s + 1)));
    }
    header
}

/// Chain ids are written 1-based.
pub fn draws_bytes(draws: &DrawSet) -> CliResult<Vec<u8>> {
    let first = draws.draws.first().ok_or_else(|| CliError::Validation("no draws to write".into()))?;
    let thresholds: Vec<usize> = first.gammas.iter().map(Vec::len).collect();
    let header = draws_header(first.beta.len(), &thresholds);
    let rows = draws.draws.iter().enumerate().map(|(i, d)| {
        let mut row = vec![(draws.chain_ids[i] + 1).to_string(), draws.iterations[i].to_string()];
        row.extend(d.beta.iter().map(|&v| fmt_f64(v)));
        row.extend(d.gammas.iter().flatten().map(|&v| fmt_f64(v)));
        row
    });
    Ok(csv_bytes(&header, rows))
}

pub fn write_draws(path: &Path, draws: &DrawSet) -> CliResult<()> {
    write_atomic(path, &draws_bytes(draws)?)
}

/// Reads a draws file. Acceptance counts are not stored and come back as zero.
pub fn read_draws(path: &Path) -> CliResult<DrawSet> {
    let mut reader = open_csv(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let bad_header = |msg: String| CliError::Validation(format!("{}: {msg}", path.display()));
    if header.len() < 3 || &header[0] != "chain_id" || &header[1] != "iteration" {
        return Err(bad_header("header must start with chain_id,iteration".into()));
    }
    let mut p = 0;
    let mut thresholds: Vec<usize> = Vec::new();
    for (j, name) in header.iter().enumerate().skip(2) {
        if let Some(k) = name.strip_prefix("beta_") {
            if !thresholds.is_empty() || k != (p + 1).to_string() {
                return Err(bad_header(format!("unexpected column {name:?} at position {}", j + 1)));
            }
            p += 1;
        } else if let Some((s, c)) = name.strip_prefix("gamma_").and_then(|r| r.split_once('_')) {
            let (s, c): (usize, usize) = match (s.parse(), c.parse()) {
                (Ok(s), Ok(c)) => (s, c),
                _ => return Err(bad_header(format!("cannot parse column {name:?}"))),
            };
            if s == thresholds.len() + 1 && c == 1 {
                thresholds.push(1);
            } else if s == thresholds.len() && c == thresholds[s - 1] + 1 {
                thresholds[s - 1] += 1;
            } else {
                return Err(bad_header(format!("column {name:?} out of (scale, threshold) order")));
            }
        } else {
            return Err(bad_header(format!("unexpected column {name:?}")));
        }
    }
    if p == 0 || thresholds.is_empty() {
        return Err(bad_header("need at least one beta and one gamma column".into()));
    }

    let mut set = DrawSet::empty(thresholds.len());
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let chain: usize = parse_field(path, line, "chain_id", &record[0])?;
        if chain == 0 {
            return Err(CliError::Validation(format!("{}, line {line}: chain ids start at 1", path.display())));
        }
        let iteration: usize = parse_field(path, line, "iteration", &record[1])?;
        let values = (2..record.len())
            .map(|j| parse_field(path, line, &header[j], &record[j]))
            .collect::<CliResult<Vec<f64>>>()?;
        let beta = DVector::from_column_slice(&values[..p]);
        let mut gammas = Vec::with_capacity(thresholds.len());
        let mut at = p;
        for &k in &thresholds {
            gammas.push(values[at..at + k].to_vec());
            at += k;
        }
        let draw = ParamDraw::new(beta, gammas)
            .map_err(|e| CliError::Validation(format!("{}, line {line}: {e}", path.display())))?;
        set.draws.push(draw);
        set.chain_ids.push(chain - 1);
        set.iterations.push(iteration);
    }
    if set.is_empty() {
        return Err(CliError::Validation(format!("{}: no draws", path.display())));
    }
    Ok(set)
}

/// Long format: `parameter,scale_id,index,value`; `scale_id` is empty for β.
pub fn write_truth(path: &Path, truth: &SimTruth) -> CliResult<()> {
    let header: Vec<String> = ["parameter", "scale_id", "index", "value"].map(String::from).to_vec();
    let beta = truth
        .beta
        .iter()
        .enumerate()
        .map(|(k, &v)| vec!["beta".into(), String::new(), (k + 1).to_string(), fmt_f64(v)]);
    let gamma = truth.gammas.iter().enumerate().flat_map(|(s, g)| {
        g.iter()
            .enumerate()
            .map(move |(c, &v)| vec!["gamma".into(), (s + 1).to_string(), (c + 1).to_string(), fmt_f64(v)])
    });
    write_csv(path, &header, beta.chain(gamma).collect::<Vec<_>>())
}

pub fn write_standardizer(path: &Path, t: &Standardizer) -> CliResult<()> {
    let header: Vec<String> = ["feature", "mean", "sd"].map(String::from).to_vec();
    let rows = (0..t.means.len()).map(|j| vec![format!("f{}", j + 1), fmt_f64(t.means[j]), fmt_f64(t.sds[j])]);
    write_csv(path, &header, rows)
}

pub fn read_standardizer(path: &Path) -> CliResult<Standardizer> {
    let mut reader = open_csv(path)?;
    let (mut means, mut sds) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 3 {
            return Err(CliError::Validation(format!("{}, line {line}: expected 3 columns", path.display())));
        }
        means.push(parse_field(path, line, "mean", &record[1])?);
        let sd: f64 = parse_field(path, line, "sd", &record[2])?;
        if !(sd > 0.0) {
            return Err(CliError::Validation(format!("{}, line {line}: sd must be positive", path.display())));
        }
        sds.push(sd);
    }
    Ok(Standardizer { means: DVector::from_vec(means), sds: DVector::from_vec(sds) })
}

/// Applies `t` to the dataset's features after checking the width.
pub fn standardize(data: &Dataset, t: &Standardizer) -> CliResult<Dataset> {
    if t.means.len() != data.p() {
        return Err(CliError::Validation(format!(
            "transform covers {} features, dataset has {}",
            t.means.len(),
            data.p()
        )));
    }
    let x: DMatrix<f64> = t.apply(data.features());
    Ok(data.with_features(x)?)
}
