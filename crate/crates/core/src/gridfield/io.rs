//! Field files: a one-line JSON header `{"n", "L", "components"}` followed by
//! row-major samples, either as CSV (one line per grid node, one column per
//! component) or as raw little-endian `f64` (component-major).

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GridError, MatrixField2, PeriodicGrid, Result, ScalarField, VectorField2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub n: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub components: usize,
}

/// Raw samples of a field with any number of components.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldData {
    pub grid: PeriodicGrid,
    pub components: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    Csv,
    Binary,
}

impl Encoding {
    /// `.bin` selects binary, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => Encoding::Binary,
            _ => Encoding::Csv,
        }
    }
}

impl FieldData {
    pub fn header(&self) -> FieldHeader {
        FieldHeader {
            n: self.grid.n(),
            length: self.grid.length(),
            components: self.components.len(),
        }
    }

    pub fn into_scalar(self) -> Result<ScalarField> {
        match <[Vec<f64>; 1]>::try_from(self.components) {
            Ok([v]) => ScalarField::new(self.grid, v),
            Err(c) => Err(GridError::Format(format!("expected 1 component, found {}", c.len()))),
        }
    }

    pub fn into_vector(self) -> Result<VectorField2> {
        match <[Vec<f64>; 2]>::try_from(self.components) {
            Ok([a, b]) => VectorField2::new(self.grid, a, b),
            Err(c) => Err(GridError::Format(format!("expected 2 components, found {}", c.len()))),
        }
    }

    pub fn into_matrix(self) -> Result<MatrixField2> {
        match <[Vec<f64>; 4]>::try_from(self.components) {
            Ok(c) => MatrixField2::new(self.grid, c),
            Err(c) => Err(GridError::Format(format!("expected 4 components, found {}", c.len()))),
        }
    }
}

impl From<&ScalarField> for FieldData {
    fn from(f: &ScalarField) -> Self {
        Self {
            grid: f.grid,
            components: vec![f.values.clone()],
        }
    }
}

impl From<&VectorField2> for FieldData {
    fn from(f: &VectorField2) -> Self {
        Self {
            grid: f.grid,
            components: f.comps.to_vec(),
        }
    }
}

impl From<&MatrixField2> for FieldData {
    fn from(f: &MatrixField2) -> Self {
        Self {
            grid: f.grid,
            components: f.comps.to_vec(),
        }
    }
}

pub fn write<W: Write>(data: &FieldData, enc: Encoding, mut out: W) -> Result<()> {
    let header = serde_json::to_string(&data.header()).map_err(|e| GridError::Format(e.to_string()))?;
    writeln!(out, "{header}")?;
    match enc {
        Encoding::Csv => {
            for i in 0..data.grid.len() {
                let row: Vec<String> = data.components.iter().map(|c| format!("{:e}", c[i])).collect();
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Encoding::Binary => {
            for c in &data.components {
                for v in c {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

pub fn read<R: Read>(input: R, enc: Encoding) -> Result<FieldData> {
    let mut reader = BufReader::new(input);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: FieldHeader =
        serde_json::from_str(line.trim()).map_err(|e| GridError::Format(format!("bad header: {e}")))?;
    if header.components == 0 {
        return Err(GridError::Format("header declares zero components".into()));
    }
    let grid = PeriodicGrid::new(header.n, header.length)?;
    let len = grid.len();
    let mut components = vec![Vec::with_capacity(len); header.components];
    match enc {
        Encoding::Csv => {
            for (row_no, row) in reader.lines().enumerate() {
                let row = row?;
                if row.trim().is_empty() {
                    continue;
                }
                let vals: Vec<&str> = row.split(',').collect();
                if vals.len() != header.components {
                    return Err(GridError::Format(format!(
                        "row {} has {} values, expected {}",
                        row_no + 2,
                        vals.len(),
                        header.components
                    )));
                }
                for (c, v) in components.iter_mut().zip(vals) {
                    let x: f64 = v
                        .trim()
                        .parse()
                        .map_err(|_| GridError::Format(format!("row {}: bad number {v:?}", row_no + 2)))?;
                    c.push(x);
                }
            }
        }
        Encoding::Binary => {
            let mut buf = [0u8; 8];
            for c in components.iter_mut() {
                for _ in 0..len {
                    reader
                        .read_exact(&mut buf)
                        .map_err(|_| GridError::Format("binary payload truncated".into()))?;
                    c.push(f64::from_le_bytes(buf));
                }
            }
        }
    }
    for c in &components {
        grid.check_len(c)?;
    }
    Ok(FieldData { grid, components })
}

pub fn save(data: &FieldData, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    write(data, Encoding::from_path(path), std::io::BufWriter::new(file))
}

pub fn load(path: &Path) -> Result<FieldData> {
    read(fs::File::open(path)?, Encoding::from_path(path))
}
