//! Persistent dataset formats.
//!
//! A dataset on disk is a data file plus a JSON sidecar at `<path>.json`
//! holding the header: format version, grid, normalization state, provenance,
//! and optional per-row normalization parameters. The data file is either
//! CSV (decimal floats, one profile per row, lossless shortest-round-trip
//! formatting) or, for large sets, packed little-endian doubles when the
//! path ends in `.f64`. Writes go to a temporary file in the target
//! directory and are renamed into place. Loads re-validate every invariant;
//! corrupt files are rejected, never repaired.
//!
//! Transfer-function measurements import from per-channel CSV files of
//! `re,im` rows, each with a JSON sidecar naming the start frequency and
//! spacing.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{ctf_to_pdp, minmax_normalize, ChannelTransferFunction, DelayGrid, NormParams, Pdp};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// Free-form provenance carried with a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DatasetMeta {
    /// How the data came to be (generator family, import source).
    pub provenance: String,
    /// Human-chosen name for the data.
    pub label: String,
    /// Seed that produced the data, when it was generated.
    pub seed: Option<u64>,
    /// Fingerprint of the generating parameters, when applicable.
    pub params_fingerprint: Option<String>,
}

/// In-memory dataset: one PDP per row, all on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpDataset {
    pub grid: DelayGrid,
    pub rows: Vec<Vec<f64>>,
    pub normalized: bool,
    /// Per-row normalization parameters, parallel to `rows`.
    pub norm_params: Option<Vec<NormParams>>,
    pub meta: DatasetMeta,
}

impl PdpDataset {
    pub fn validate(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.grid.num_points() {
                return Err(Error::ShapeMismatch {
                    context: "dataset row",
                    left: format!("grid {}", self.grid.num_points()),
                    right: format!("row {i} length {}", row.len()),
                });
            }
        }
        if let Some(np) = &self.norm_params {
            if np.len() != self.rows.len() {
                return Err(Error::ShapeMismatch {
                    context: "dataset norm params",
                    left: format!("{} rows", self.rows.len()),
                    right: format!("{} norm params", np.len()),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn pdp(&self, index: usize) -> Result<Pdp> {
        let row = self.rows.get(index).ok_or_else(|| {
            Error::InvalidInput(format!(
                "row {index} out of range ({} rows)",
                self.rows.len()
            ))
        })?;
        Pdp::new(row.clone(), self.grid, self.normalized)
    }

    pub fn pdps(&self) -> Result<Vec<Pdp>> {
        (0..self.rows.len()).map(|i| self.pdp(i)).collect()
    }

    /// Rows stacked into a `len x num_points` matrix.
    pub fn to_tensor(&self) -> Result<Tensor> {
        self.validate()?;
        Tensor::from_rows(&self.rows)
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    format_version: u32,
    /// "csv" or "f64le".
    body: String,
    rows: usize,
    num_points: usize,
    spacing_s: f64,
    normalized: bool,
    provenance: String,
    label: String,
    seed: Option<u64>,
    params_fingerprint: Option<String>,
    norm_params: Option<Vec<NormParams>>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn is_binary_body(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "f64")
}

/// Writes bytes to `path` via a temporary file in the same directory,
/// renamed into place once complete.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Persists a dataset as data file + sidecar header.
pub fn save_dataset(dataset: &PdpDataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    let binary = is_binary_body(path);
    let header = DatasetHeader {
        format_version: DATASET_FORMAT_VERSION,
        body: if binary { "f64le" } else { "csv" }.to_string(),
        rows: dataset.rows.len(),
        num_points: dataset.grid.num_points(),
        spacing_s: dataset.grid.spacing_s(),
        normalized: dataset.normalized,
        provenance: dataset.meta.provenance.clone(),
        label: dataset.meta.label.clone(),
        seed: dataset.meta.seed,
        params_fingerprint: dataset.meta.params_fingerprint.clone(),
        norm_params: dataset.norm_params.clone(),
    };

    let body: Vec<u8> = if binary {
        let mut bytes = Vec::with_capacity(dataset.rows.len() * dataset.grid.num_points() * 8);
        for row in &dataset.rows {
            for v in row {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes
    } else {
        let mut text = String::new();
        for row in &dataset.rows {
            let mut first = true;
            for v in row {
                if !first {
                    text.push(',');
                }
                first = false;
                // Shortest round-trip formatting: parses back bit-exactly.
                text.push_str(&format!("{v}"));
            }
            text.push('\n');
        }
        text.into_bytes()
    };

    write_atomic(path, &body)?;
    write_atomic(&sidecar_path(path), &serde_json::to_vec_pretty(&header)?)?;
    Ok(())
}

/// Loads a dataset written by [`save_dataset`], re-validating every header
/// and row invariant.
pub fn load_dataset(path: &Path) -> Result<PdpDataset> {
    let path_str = path.display().to_string();
    let sidecar = sidecar_path(path);
    if !sidecar.exists() {
        return Err(Error::MissingFile(sidecar.display().to_string()));
    }
    if !path.exists() {
        return Err(Error::MissingFile(path_str));
    }
    let header_bytes = fs::read(&sidecar)?;
    let header: DatasetHeader =
        serde_json::from_slice(&header_bytes).map_err(|e| Error::FileFormat {
            path: sidecar.display().to_string(),
            row: None,
            message: format!("malformed header: {e}"),
        })?;
    if header.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path_str,
            found: header.format_version,
            supported: DATASET_FORMAT_VERSION,
        });
    }
    let grid = DelayGrid::new(header.num_points, header.spacing_s)?;

    let rows = match header.body.as_str() {
        "csv" => {
            let text = fs::read_to_string(path)?;
            let mut rows = Vec::with_capacity(header.rows);
            for (i, line) in text.lines().enumerate() {
                let row: Vec<f64> = line
                    .split(',')
                    .map(|field| {
                        field.trim().parse::<f64>().map_err(|_| Error::FileFormat {
                            path: path_str.clone(),
                            row: Some(i),
                            message: format!("unparseable value {field:?}"),
                        })
                    })
                    .collect::<Result<_>>()?;
                if row.len() != header.num_points {
                    return Err(Error::FileFormat {
                        path: path_str.clone(),
                        row: Some(i),
                        message: format!(
                            "{} values in a {}-point dataset",
                            row.len(),
                            header.num_points
                        ),
                    });
                }
                rows.push(row);
            }
            rows
        }
        "f64le" => {
            let bytes = fs::read(path)?;
            let expected = header.rows * header.num_points * 8;
            if bytes.len() != expected {
                return Err(Error::FileFormat {
                    path: path_str.clone(),
                    row: None,
                    message: format!("{} bytes, expected {expected}", bytes.len()),
                });
            }
            bytes
                .chunks_exact(header.num_points * 8)
                .map(|row| {
                    row.chunks_exact(8)
                        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                        .collect()
                })
                .collect()
        }
        other => {
            return Err(Error::FileFormat {
                path: path_str.clone(),
                row: None,
                message: format!("unknown body format {other:?}"),
            })
        }
    };

    if rows.len() != header.rows {
        return Err(Error::FileFormat {
            path: path_str,
            row: None,
            message: format!("{} rows, header declares {}", rows.len(), header.rows),
        });
    }

    let dataset = PdpDataset {
        grid,
        rows,
        normalized: header.normalized,
        norm_params: header.norm_params,
        meta: DatasetMeta {
            provenance: header.provenance,
            label: header.label,
            seed: header.seed,
            params_fingerprint: header.params_fingerprint,
        },
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Sidecar header of one measured transfer-function channel file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtfHeader {
    pub start_frequency_hz: f64,
    pub frequency_spacing_hz: f64,
    pub channel_id: String,
}

/// Writes one channel's transfer function in the import format: CSV rows of
/// `re,im` plus the JSON sidecar.
pub fn save_ctf_channel(path: &Path, header: &CtfHeader, samples: &[(f64, f64)]) -> Result<()> {
    let mut text = String::new();
    for (re, im) in samples {
        text.push_str(&format!("{re},{im}\n"));
    }
    write_atomic(path, text.as_bytes())?;
    write_atomic(&sidecar_path(path), &serde_json::to_vec_pretty(header)?)?;
    Ok(())
}

fn load_ctf_channel(path: &Path) -> Result<ChannelTransferFunction> {
    let path_str = path.display().to_string();
    let sidecar = sidecar_path(path);
    if !sidecar.exists() {
        return Err(Error::MissingFile(sidecar.display().to_string()));
    }
    let header: CtfHeader =
        serde_json::from_slice(&fs::read(&sidecar)?).map_err(|e| Error::FileFormat {
            path: sidecar.display().to_string(),
            row: None,
            message: format!("malformed header: {e}"),
        })?;
    let text = fs::read_to_string(path)?;
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split(',');
        let mut parse = |name: &str| -> Result<f64> {
            fields
                .next()
                .ok_or(())
                .and_then(|f| f.trim().parse::<f64>().map_err(|_| ()))
                .map_err(|_| Error::FileFormat {
                    path: path_str.clone(),
                    row: Some(i),
                    message: format!("expected {name} in {line:?}"),
                })
        };
        let re = parse("re")?;
        let im = parse("im")?;
        if fields.next().is_some() {
            return Err(Error::FileFormat {
                path: path_str.clone(),
                row: Some(i),
                message: format!("more than two fields in {line:?}"),
            });
        }
        samples.push((re, im));
    }
    ChannelTransferFunction::new(header.start_frequency_hz, header.frequency_spacing_hz, samples)
}

/// Imports measured transfer functions as a normalized PDP dataset.
///
/// `path` is one channel file or a directory of them (`*.csv`, processed in
/// name order). Each channel converts over the requested band and is min-max
/// normalized; all channels must land on the same delay grid.
pub fn import_ctf(path: &Path, band_start_hz: f64, band_width_hz: f64) -> Result<PdpDataset> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no .csv channel files in {}",
                path.display()
            )));
        }
        files
    } else {
        if !path.exists() {
            return Err(Error::MissingFile(path.display().to_string()));
        }
        vec![path.to_path_buf()]
    };

    let mut grid: Option<DelayGrid> = None;
    let mut rows = Vec::with_capacity(files.len());
    let mut norm_params = Vec::with_capacity(files.len());
    for file in &files {
        let ctf = load_ctf_channel(file)?;
        let pdp = ctf_to_pdp(&ctf, band_start_hz, band_width_hz)?;
        match grid {
            None => grid = Some(pdp.grid()),
            Some(g) if g == pdp.grid() => {}
            Some(g) => {
                return Err(Error::ShapeMismatch {
                    context: "imported channel grids",
                    left: format!("{g:?}"),
                    right: format!("{:?} from {}", pdp.grid(), file.display()),
                })
            }
        }
        let (normed, np) = minmax_normalize(&pdp)?;
        rows.push(normed.powers().to_vec());
        norm_params.push(np);
    }

    Ok(PdpDataset {
        grid: grid.expect("at least one file"),
        rows,
        normalized: true,
        norm_params: Some(norm_params),
        meta: DatasetMeta {
            provenance: "imported channel transfer functions".to_string(),
            label: format!("band {band_start_hz} Hz + {band_width_hz} Hz"),
            seed: None,
            params_fingerprint: None,
        },
    })
}
