//! Block-mean features, per-band min-max scaling and spectral signatures.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::preprocess::PreprocessedRoi;
use crate::spectral::{Composition, TextureClass, NUM_BANDS, ROI_SIDE};
use crate::table::{feature_column_names, Observation, ObservationTable, BLOCKS_PER_SPECIMEN, GRID_SIDE};

const BLOCK_SIDE: usize = ROI_SIDE / GRID_SIDE;

/// 100 x 13 block means; row `(u-1)*10 + (v-1)` holds block `(u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: Vec<[f64; NUM_BANDS]>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> &[[f64; NUM_BANDS]] {
        &self.rows
    }

    /// Entry for 1-based block `(u, v)` and band index `band`.
    pub fn get(&self, u: usize, v: usize, band: usize) -> f64 {
        self.rows[(u - 1) * GRID_SIDE + (v - 1)][band]
    }
}

pub fn block_means(roi: &PreprocessedRoi) -> Result<FeatureMatrix> {
    if roi.planes.len() != NUM_BANDS || roi.planes.iter().any(|p| p.len() != ROI_SIDE * ROI_SIDE) {
        return Err(Error::DimensionMismatch(
            "block means need a 13 x 100 x 100 ROI".into(),
        ));
    }
    let mut rows = vec![[0.0; NUM_BANDS]; BLOCKS_PER_SPECIMEN];
    for (band, plane) in roi.planes.iter().enumerate() {
        for (k, row) in rows.iter_mut().enumerate() {
            let (bu, bv) = (k / GRID_SIDE, k % GRID_SIDE);
            let mut sum = 0.0;
            for r in bu * BLOCK_SIDE..(bu + 1) * BLOCK_SIDE {
                let start = r * ROI_SIDE + bv * BLOCK_SIDE;
                sum += plane[start..start + BLOCK_SIDE].iter().sum::<f64>();
            }
            row[band] = sum / (BLOCK_SIDE * BLOCK_SIDE) as f64;
        }
    }
    Ok(FeatureMatrix { rows })
}

/// One specimen's contribution to the learning table.
#[derive(Debug, Clone)]
pub struct SpecimenFeatures {
    pub specimen_id: String,
    pub matrix: FeatureMatrix,
    pub composition: Composition,
    pub texture: TextureClass,
}

/// Stacks per-specimen matrices into block-level observations.
pub fn flatten_observations(specimens: &[SpecimenFeatures]) -> ObservationTable {
    let mut rows = Vec::with_capacity(specimens.len() * BLOCKS_PER_SPECIMEN);
    for s in specimens {
        for (k, features) in s.matrix.rows.iter().enumerate() {
            rows.push(Observation {
                specimen_id: s.specimen_id.clone(),
                block_row: (k / GRID_SIDE + 1) as u8,
                block_col: (k % GRID_SIDE + 1) as u8,
                features: *features,
                composition: s.composition,
                texture: s.texture,
            });
        }
    }
    ObservationTable::new(rows)
}

/// Per-band min-max scaler.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinMaxScaler {
    bounds: Option<[(f64, f64); NUM_BANDS]>,
}

impl MinMaxScaler {
    pub fn bounds(&self) -> Option<&[(f64, f64); NUM_BANDS]> {
        self.bounds.as_ref()
    }

    pub fn is_fitted(&self) -> bool {
        self.bounds.is_some()
    }

    pub fn transform_row(&self, row: &[f64; NUM_BANDS]) -> Result<[f64; NUM_BANDS]> {
        let bounds = self.bounds.as_ref().ok_or(Error::NotFitted)?;
        Ok(std::array::from_fn(|b| {
            let (lo, hi) = bounds[b];
            (row[b] - lo) / (hi - lo)
        }))
    }
}

pub fn fit_scaler<'a>(rows: impl IntoIterator<Item = &'a [f64; NUM_BANDS]>) -> Result<MinMaxScaler> {
    let mut bounds = [(f64::INFINITY, f64::NEG_INFINITY); NUM_BANDS];
    for row in rows {
        for (b, &v) in row.iter().enumerate() {
            bounds[b].0 = bounds[b].0.min(v);
            bounds[b].1 = bounds[b].1.max(v);
        }
    }
    if let Some(band) = bounds.iter().position(|&(lo, hi)| !(hi > lo)) {
        return Err(Error::DegenerateBand { band });
    }
    Ok(MinMaxScaler {
        bounds: Some(bounds),
    })
}

/// Scales every row; values outside the fitted range are not clamped.
pub fn apply_scaler(scaler: &MinMaxScaler, table: &ObservationTable) -> Result<ObservationTable> {
    let rows = table
        .rows
        .iter()
        .map(|r| {
            Ok(Observation {
                features: scaler.transform_row(&r.features)?,
                ..r.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ObservationTable::new(rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignatureGrouping {
    TextureClass,
    CompositionLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    pub group: String,
    pub means: [f64; NUM_BANDS],
    pub count: usize,
}

/// Per-group band means. Texture groups follow class index order,
/// composition groups ascending (clay, silt, sand).
pub fn signatures(table: &ObservationTable, grouping: SignatureGrouping) -> Result<Vec<Signature>> {
    if table.is_empty() {
        return Err(Error::EmptyGroup("<all>".into()));
    }
    let mut groups: Vec<(String, Vec<&[f64; NUM_BANDS]>)> = match grouping {
        SignatureGrouping::TextureClass => {
            let mut by: BTreeMap<usize, Vec<&[f64; NUM_BANDS]>> = BTreeMap::new();
            for r in &table.rows {
                by.entry(r.texture.index()).or_default().push(&r.features);
            }
            by.into_iter()
                .map(|(i, v)| (TextureClass::ALL[i].name().to_string(), v))
                .collect()
        }
        SignatureGrouping::CompositionLevel => {
            let mut keys: Vec<Composition> = Vec::new();
            let mut members: Vec<Vec<&[f64; NUM_BANDS]>> = Vec::new();
            for r in &table.rows {
                match keys.iter().position(|k| k.same_components(&r.composition)) {
                    Some(i) => members[i].push(&r.features),
                    None => {
                        keys.push(r.composition);
                        members.push(vec![&r.features]);
                    }
                }
            }
            let mut paired: Vec<_> = keys.into_iter().zip(members).collect();
            paired.sort_by(|a, b| a.0.cmp_components(&b.0));
            paired.into_iter().map(|(k, v)| (k.label(), v)).collect()
        }
    };
    groups
        .iter_mut()
        .map(|(name, rows)| {
            if rows.is_empty() {
                return Err(Error::EmptyGroup(name.clone()));
            }
            let mut means = [0.0; NUM_BANDS];
            for r in rows.iter() {
                for b in 0..NUM_BANDS {
                    means[b] += r[b];
                }
            }
            means.iter_mut().for_each(|m| *m /= rows.len() as f64);
            Ok(Signature {
                group: name.clone(),
                means,
                count: rows.len(),
            })
        })
        .collect()
}

pub fn write_signatures<W: Write>(sigs: &[Signature], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["group".to_string()];
    header.extend(feature_column_names());
    w.write_record(&header)?;
    for s in sigs {
        let mut rec = vec![s.group.clone()];
        rec.extend(s.means.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<signature csv>", e))?;
    Ok(())
}

/// Computes signatures and writes them as CSV to `path`.
pub fn emit_signatures(
    table: &ObservationTable,
    grouping: SignatureGrouping,
    path: impl AsRef<std::path::Path>,
) -> Result<Vec<Signature>> {
    let sigs = signatures(table, grouping)?;
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_signatures(&sigs, std::io::BufWriter::new(f))?;
    Ok(sigs)
}
