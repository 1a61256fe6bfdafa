//! Domain types: wavelength bands, image planes, cubes, regions of interest,
//! compositions and texture classes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_BANDS: usize = 13;

/// Band centres of the LED illuminator, ascending.
pub const WAVELENGTHS_NM: [u16; NUM_BANDS] =
    [365, 405, 473, 530, 575, 621, 660, 735, 770, 830, 850, 890, 940];

/// Largest value a 10-bit ADC can produce.
pub const MAX_INTENSITY: u16 = 1023;

/// Side length of the square region of interest, in pixels.
pub const ROI_SIDE: usize = 100;

/// Tolerance on the 100 % sum of a measured composition.
pub const COMPOSITION_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WavelengthBand(u16);

impl WavelengthBand {
    pub fn new(center_nm: u16) -> Result<Self> {
        if WAVELENGTHS_NM.contains(&center_nm) {
            Ok(Self(center_nm))
        } else {
            Err(Error::MalformedHeader(format!(
                "unknown band centre {center_nm} nm"
            )))
        }
    }

    pub fn center_nm(self) -> u16 {
        self.0
    }

    /// Position of this band in ascending storage order.
    pub fn index(self) -> usize {
        WAVELENGTHS_NM
            .iter()
            .position(|&w| w == self.0)
            .expect("validated at construction")
    }

    pub fn all() -> [WavelengthBand; NUM_BANDS] {
        WAVELENGTHS_NM.map(WavelengthBand)
    }
}

/// Row-major image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Plane<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::DimensionMismatch(format!(
                "plane {height}x{width} needs {} cells, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Plane<U> {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().copied().map(f).collect(),
        }
    }

    /// Copies the `rows x cols` window whose top-left corner is `(y, x)`.
    pub fn window(&self, y: usize, x: usize, rows: usize, cols: usize) -> Plane<T> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in y..y + rows {
            let start = r * self.width + x;
            data.extend_from_slice(&self.data[start..start + cols]);
        }
        Plane {
            height: rows,
            width: cols,
            data,
        }
    }
}

fn check_intensities(plane: &Plane<u16>) -> Result<()> {
    match plane.data().iter().find(|&&v| v > MAX_INTENSITY) {
        Some(&value) => Err(Error::IntensityOverflow { value }),
        None => Ok(()),
    }
}

/// Thirteen co-registered monochrome planes, one per LED band.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    bands: Vec<WavelengthBand>,
    planes: Vec<Plane<u16>>,
    height: usize,
    width: usize,
}

impl SpectralCube {
    /// Builds a cube from planes in ascending wavelength order.
    pub fn new(planes: Vec<Plane<u16>>) -> Result<Self> {
        Self::with_bands(WavelengthBand::all().to_vec(), planes)
    }

    pub fn with_bands(bands: Vec<WavelengthBand>, planes: Vec<Plane<u16>>) -> Result<Self> {
        if bands.len() != NUM_BANDS || planes.len() != NUM_BANDS {
            return Err(Error::BandCountMismatch {
                expected: NUM_BANDS,
                found: planes.len().min(bands.len()),
            });
        }
        if bands.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::MalformedHeader(
                "bands must be strictly increasing".into(),
            ));
        }
        let (height, width) = (planes[0].height(), planes[0].width());
        for p in &planes {
            if p.height() != height || p.width() != width {
                return Err(Error::DimensionMismatch(
                    "all band planes must share dimensions".into(),
                ));
            }
            check_intensities(p)?;
        }
        Ok(Self {
            bands,
            planes,
            height,
            width,
        })
    }

    pub fn bands(&self) -> &[WavelengthBand] {
        &self.bands
    }

    pub fn planes(&self) -> &[Plane<u16>] {
        &self.planes
    }

    pub fn plane(&self, band: usize) -> &Plane<u16> {
        &self.planes[band]
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }
}

/// Exposure taken with the illumination off.
#[derive(Debug, Clone, PartialEq)]
pub struct DarkFrame {
    plane: Plane<u16>,
}

impl DarkFrame {
    pub fn new(plane: Plane<u16>) -> Result<Self> {
        check_intensities(&plane)?;
        Ok(Self { plane })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            plane: Plane::filled(height, width, 0),
        }
    }

    pub fn plane(&self) -> &Plane<u16> {
        &self.plane
    }

    pub fn height(&self) -> usize {
        self.plane.height()
    }

    pub fn width(&self) -> usize {
        self.plane.width()
    }
}

/// Top-left corner of the fixed 100x100 crop window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x1: usize,
    pub y1: usize,
}

impl Roi {
    pub const SIDE: usize = ROI_SIDE;

    pub fn new(x1: usize, y1: usize) -> Self {
        Self { x1, y1 }
    }

    pub fn check_fits(&self, height: usize, width: usize) -> Result<()> {
        if self.x1 + Self::SIDE > width || self.y1 + Self::SIDE > height {
            Err(Error::RoiOutOfBounds {
                x1: self.x1,
                y1: self.y1,
                width,
                height,
            })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    /// Laboratory ground truth; sums to 100.
    Measured,
    /// Model output; the sum may drift.
    Predicted,
}

/// Clay / silt / sand percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub clay: f64,
    pub silt: f64,
    pub sand: f64,
    pub provenance: Provenance,
}

impl Composition {
    /// Unchecked model output.
    pub fn predicted(clay: f64, silt: f64, sand: f64) -> Self {
        Self {
            clay,
            silt,
            sand,
            provenance: Provenance::Predicted,
        }
    }

    pub fn sum(&self) -> f64 {
        self.clay + self.silt + self.sand
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.clay, self.silt, self.sand]
    }

    pub fn is_measured(&self) -> bool {
        self.provenance == Provenance::Measured
    }

    /// Total order on (clay, silt, sand), used to enumerate composition groups.
    pub fn cmp_components(&self, other: &Self) -> std::cmp::Ordering {
        self.clay
            .total_cmp(&other.clay)
            .then(self.silt.total_cmp(&other.silt))
            .then(self.sand.total_cmp(&other.sand))
    }

    pub fn same_components(&self, other: &Self) -> bool {
        self.cmp_components(other).is_eq()
    }

    /// Short legend label, e.g. `Cl39.315-M10.685-S50`.
    pub fn label(&self) -> String {
        format!("Cl{}-M{}-S{}", self.clay, self.silt, self.sand)
    }
}

/// Accepts a measured composition on the 100 % simplex.
pub fn validate_composition(clay: f64, silt: f64, sand: f64) -> Result<Composition> {
    for v in [clay, silt, sand] {
        if !v.is_finite() {
            return Err(Error::SumViolation(v));
        }
        if v < 0.0 {
            return Err(Error::NegativeComponent(v));
        }
    }
    let sum = clay + silt + sand;
    if (sum - 100.0).abs() > COMPOSITION_SUM_TOL {
        return Err(Error::SumViolation(sum));
    }
    Ok(Composition {
        clay,
        silt,
        sand,
        provenance: Provenance::Measured,
    })
}

/// The twelve USDA texture classes, in canonical index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TextureClass {
    Sand,
    LoamySand,
    SandyLoam,
    Loam,
    SiltLoam,
    Silt,
    SandyClayLoam,
    ClayLoam,
    SiltyClayLoam,
    SandyClay,
    SiltyClay,
    Clay,
}

impl TextureClass {
    pub const COUNT: usize = 12;

    pub const ALL: [TextureClass; 12] = [
        TextureClass::Sand,
        TextureClass::LoamySand,
        TextureClass::SandyLoam,
        TextureClass::Loam,
        TextureClass::SiltLoam,
        TextureClass::Silt,
        TextureClass::SandyClayLoam,
        TextureClass::ClayLoam,
        TextureClass::SiltyClayLoam,
        TextureClass::SandyClay,
        TextureClass::SiltyClay,
        TextureClass::Clay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TextureClass::Sand => "Sand",
            TextureClass::LoamySand => "LoamySand",
            TextureClass::SandyLoam => "SandyLoam",
            TextureClass::Loam => "Loam",
            TextureClass::SiltLoam => "SiltLoam",
            TextureClass::Silt => "Silt",
            TextureClass::SandyClayLoam => "SandyClayLoam",
            TextureClass::ClayLoam => "ClayLoam",
            TextureClass::SiltyClayLoam => "SiltyClayLoam",
            TextureClass::SandyClay => "SandyClay",
            TextureClass::SiltyClay => "SiltyClay",
            TextureClass::Clay => "Clay",
        }
    }
}

impl fmt::Display for TextureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TextureClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown texture class {s:?}")))
    }
}
