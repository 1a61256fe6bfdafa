//! Block-level observation table and its CSV form.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{
    validate_composition, Composition, TextureClass, NUM_BANDS, WAVELENGTHS_NM,
};

/// Side of the block grid laid over the ROI.
pub const GRID_SIDE: usize = 10;
pub const BLOCKS_PER_SPECIMEN: usize = GRID_SIDE * GRID_SIDE;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub specimen_id: String,
    /// 1-based block row in the 10x10 grid.
    pub block_row: u8,
    /// 1-based block column in the 10x10 grid.
    pub block_col: u8,
    pub features: [f64; NUM_BANDS],
    pub composition: Composition,
    pub texture: TextureClass,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationTable {
    pub rows: Vec<Observation>,
}

impl ObservationTable {
    pub fn new(rows: Vec<Observation>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> ObservationTable {
        ObservationTable {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn features(&self) -> impl Iterator<Item = &[f64; NUM_BANDS]> + '_ {
        self.rows.iter().map(|r| &r.features)
    }

    /// Distinct specimen ids in first-appearance order.
    pub fn specimen_ids(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.rows
            .iter()
            .map(|r| r.specimen_id.as_str())
            .filter(|id| seen.insert(*id))
            .collect()
    }
}

pub fn feature_column_names() -> Vec<String> {
    WAVELENGTHS_NM.iter().map(|w| format!("f{w}")).collect()
}

fn header() -> Vec<String> {
    let mut h = vec![
        "specimen_id".to_string(),
        "block_row".into(),
        "block_col".into(),
    ];
    h.extend(feature_column_names());
    h.extend(["clay", "silt", "sand", "texture"].map(String::from));
    h
}

pub fn write_observations<W: Write>(table: &ObservationTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header())?;
    let mut record = Vec::with_capacity(NUM_BANDS + 7);
    for row in &table.rows {
        record.clear();
        record.push(row.specimen_id.clone());
        record.push(row.block_row.to_string());
        record.push(row.block_col.to_string());
        record.extend(row.features.iter().map(|v| v.to_string()));
        record.extend(row.composition.as_array().iter().map(|v| v.to_string()));
        record.push(row.texture.name().to_string());
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<observation csv>", e))?;
    Ok(())
}

fn parse_f64(field: &str, what: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad {what} value {field:?}")))
}

pub fn read_observations<R: Read>(reader: R) -> Result<ObservationTable> {
    let mut r = csv::Reader::from_reader(reader);
    let expected = header();
    let got: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if got != expected {
        return Err(Error::Parse(format!(
            "unexpected observation header {got:?}"
        )));
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let block = |i: usize| -> Result<u8> {
            let v: u8 = record[i]
                .parse()
                .map_err(|_| Error::Parse(format!("bad block index {:?}", &record[i])))?;
            if !(1..=GRID_SIDE as u8).contains(&v) {
                return Err(Error::Parse(format!("block index {v} outside 1..=10")));
            }
            Ok(v)
        };
        let mut features = [0.0; NUM_BANDS];
        for (b, f) in features.iter_mut().enumerate() {
            *f = parse_f64(&record[3 + b], "feature")?;
        }
        let c = 3 + NUM_BANDS;
        let composition = validate_composition(
            parse_f64(&record[c], "clay")?,
            parse_f64(&record[c + 1], "silt")?,
            parse_f64(&record[c + 2], "sand")?,
        )?;
        rows.push(Observation {
            specimen_id: record[0].to_string(),
            block_row: block(1)?,
            block_col: block(2)?,
            features,
            composition,
            texture: record[c + 3].parse()?,
        });
    }
    Ok(ObservationTable { rows })
}

pub fn write_observations_file(table: &ObservationTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_observations(table, std::io::BufWriter::new(f))
}

pub fn read_observations_file(path: impl AsRef<Path>) -> Result<ObservationTable> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_observations(std::io::BufReader::new(f))
}
