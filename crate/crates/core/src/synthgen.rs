//! Synthetic acquisitions standing in for the physical specimen set.
//!
//! Each specimen is a linear mix of three endmember spectra. On top of the
//! mixed level come a per-specimen band offset (replicate-to-replicate
//! variation), a per-block band offset (surface texture), signal-proportional
//! pixel noise, and a fixed-pattern dark frame shared by every acquisition.
//! Results obtained on this data validate the pipeline, not soil physics.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::features::{block_means, flatten_observations, SpecimenFeatures};
use crate::msc1;
use crate::par;
use crate::preprocess::{preprocess_cube, NormalizationParams};
use crate::seed::derive_seed;
use crate::spectral::{
    Composition, DarkFrame, Plane, Roi, SpectralCube, TextureClass, MAX_INTENSITY, NUM_BANDS, WAVELENGTHS_NM,
};
use crate::table::ObservationTable;
use crate::triangle::{classify_composition, endmember_compositions, mixture_composition};

/// Synthetic frames are slightly larger than the ROI so the crop is exercised.
pub const CUBE_SIDE: usize = 108;
pub const DEFAULT_ROI: Roi = Roi { x1: 4, y1: 4 };
const TILE: usize = 10;

/// Version tag of [`EndmemberSpectra::default`]; bump when the table changes.
pub const ENDMEMBER_TABLE_VERSION: u32 = 1;

/// Mean reflectance levels (0..1023 counts) of the three source soils.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberSpectra {
    pub clay_rich: [f64; NUM_BANDS],
    pub silt_rich: [f64; NUM_BANDS],
    pub sand_rich: [f64; NUM_BANDS],
}

impl Default for EndmemberSpectra {
    // Rising curves that flatten towards the NIR; the sand-rich soil is
    // brightest everywhere and the gaps between soils shrink with wavelength.
    fn default() -> Self {
        Self {
            clay_rich: [
                140.0, 170.0, 215.0, 255.0, 285.0, 320.0, 350.0, 420.0, 440.0, 470.0, 478.0, 490.0, 500.0,
            ],
            silt_rich: [
                180.0, 230.0, 325.0, 395.0, 435.0, 465.0, 485.0, 520.0, 530.0, 545.0, 550.0, 558.0, 565.0,
            ],
            sand_rich: [
                440.0, 460.0, 495.0, 515.0, 525.0, 535.0, 545.0, 565.0, 570.0, 580.0, 583.0, 589.0, 595.0,
            ],
        }
    }
}

impl EndmemberSpectra {
    pub fn mix(&self, weights: [f64; 3]) -> [f64; NUM_BANDS] {
        std::array::from_fn(|b| {
            weights[0] * self.clay_rich[b] + weights[1] * self.silt_rich[b] + weights[2] * self.sand_rich[b]
        })
    }

    fn check(&self) -> Result<()> {
        for v in self.clay_rich.iter().chain(&self.silt_rich).chain(&self.sand_rich) {
            if !(*v > 0.0 && *v < f64::from(MAX_INTENSITY)) {
                return Err(Error::InvalidParameter(format!("endmember level {v} outside (0, 1023)")));
            }
        }
        Ok(())
    }

    /// Reads `band_nm,clayrich,siltrich,sandrich` with one row per band.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != ["band_nm", "clayrich", "siltrich", "sandrich"] {
            return Err(Error::MalformedHeader(header.join(",")));
        }
        let mut out = Self {
            clay_rich: [0.0; NUM_BANDS],
            silt_rich: [0.0; NUM_BANDS],
            sand_rich: [0.0; NUM_BANDS],
        };
        let mut seen = [false; NUM_BANDS];
        for rec in r.records() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number {:?}", &rec[i])))
            };
            let nm: u16 = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad band {:?}", &rec[0])))?;
            let b = WAVELENGTHS_NM
                .iter()
                .position(|&w| w == nm)
                .ok_or_else(|| Error::Parse(format!("unknown band {nm} nm")))?;
            out.clay_rich[b] = parse(1)?;
            out.silt_rich[b] = parse(2)?;
            out.sand_rich[b] = parse(3)?;
            seen[b] = true;
        }
        let found = seen.iter().filter(|s| **s).count();
        if found != NUM_BANDS {
            return Err(Error::BandCountMismatch {
                expected: NUM_BANDS,
                found,
            });
        }
        out.check()?;
        Ok(out)
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::read_csv(std::fs::File::open(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["band_nm", "clayrich", "siltrich", "sandrich"])?;
        for (b, nm) in WAVELENGTHS_NM.iter().enumerate() {
            w.write_record([
                nm.to_string(),
                self.clay_rich[b].to_string(),
                self.silt_rich[b].to_string(),
                self.sand_rich[b].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<endmember csv>", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Train,
    Validation,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Validation => "validation",
        }
    }
}

impl FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Role::Train),
            "validation" => Ok(Role::Validation),
            _ => Err(Error::Parse(format!("unknown role {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureSpec {
    /// Mass fractions of the clay-rich, silt-rich and sand-rich soils.
    pub weights: [f64; 3],
    pub replicates: usize,
    pub role: Role,
}

impl MixtureSpec {
    pub fn composition(&self) -> Result<Composition> {
        mixture_composition(&self.weights, &endmember_compositions())
    }

    pub fn texture(&self) -> Result<TextureClass> {
        classify_composition(&self.composition()?)
    }
}

/// Training ratios: every texture class is reached, and each ratio sits at
/// least 2 percentage points inside its class region.
pub const TRAIN_MIXTURES: [[f64; 3]; 22] = [
    [0.00, 0.00, 1.00],
    [0.00, 0.20, 0.80],
    [0.10, 0.30, 0.60],
    [0.00, 0.40, 0.60],
    [0.20, 0.40, 0.40],
    [0.10, 0.65, 0.25],
    [0.00, 0.70, 0.30],
    [0.00, 1.00, 0.00],
    [0.00, 0.90, 0.10],
    [0.35, 0.00, 0.65],
    [0.30, 0.10, 0.60],
    [0.40, 0.60, 0.00],
    [0.40, 0.30, 0.30],
    [0.50, 0.00, 0.50],
    [0.60, 0.40, 0.00],
    [1.00, 0.00, 0.00],
    [0.70, 0.10, 0.20],
    [0.80, 0.20, 0.00],
    [0.60, 0.15, 0.25],
    [0.20, 0.80, 0.00],
    [0.15, 0.15, 0.70],
    [0.25, 0.45, 0.30],
];

/// Validation ratios. Each sits a few composition points away from the
/// nearest training ratio, never on one.
pub const VALIDATION_MIXTURES: [[f64; 3]; 7] = [
    [0.03, 0.20, 0.77],
    [0.12, 0.62, 0.26],
    [0.02, 0.91, 0.07],
    [0.36, 0.34, 0.30],
    [0.44, 0.56, 0.00],
    [0.46, 0.04, 0.50],
    [0.73, 0.10, 0.17],
];

pub const TRAIN_REPLICATES: usize = 20;
pub const VALIDATION_REPLICATES: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub mixtures: Vec<MixtureSpec>,
}

/// One specimen to synthesize.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecimenPlan {
    pub index: usize,
    pub specimen_id: String,
    pub mixture: MixtureSpec,
    pub replicate: usize,
}

impl Benchmark {
    /// Specimens in mixture order; ids are `T07-13` style (role, mixture
    /// number within the role, replicate), all 1-based.
    pub fn specimens(&self) -> Vec<SpecimenPlan> {
        let mut out = Vec::new();
        let (mut n_train, mut n_val) = (0, 0);
        for m in &self.mixtures {
            let (prefix, number) = match m.role {
                Role::Train => {
                    n_train += 1;
                    ('T', n_train)
                }
                Role::Validation => {
                    n_val += 1;
                    ('V', n_val)
                }
            };
            for r in 0..m.replicates {
                out.push(SpecimenPlan {
                    index: out.len(),
                    specimen_id: format!("{prefix}{number:02}-{:02}", r + 1),
                    mixture: *m,
                    replicate: r,
                });
            }
        }
        out
    }

    pub fn count(&self, role: Role) -> usize {
        self.mixtures.iter().filter(|m| m.role == role).map(|m| m.replicates).sum()
    }
}

pub fn default_benchmark() -> Benchmark {
    let train = TRAIN_MIXTURES.iter().map(|&weights| MixtureSpec {
        weights,
        replicates: TRAIN_REPLICATES,
        role: Role::Train,
    });
    let val = VALIDATION_MIXTURES.iter().map(|&weights| MixtureSpec {
        weights,
        replicates: VALIDATION_REPLICATES,
        role: Role::Validation,
    });
    Benchmark {
        mixtures: train.chain(val).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub dark_mean: f64,
    pub dark_std: f64,
    /// Pixel noise standard deviation per count of signal.
    pub shot_scale: f64,
    /// Per-block, per-band offset standard deviation.
    pub block_texture_std: f64,
    /// Per-specimen, per-band offset standard deviation.
    pub specimen_std: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub const PRESETS: [&'static str; 3] = ["clean", "bench", "stress"];

    /// No randomness apart from a constant dark level.
    pub fn clean(seed: u64) -> Self {
        Self {
            dark_mean: 32.0,
            dark_std: 0.0,
            shot_scale: 0.0,
            block_texture_std: 0.0,
            specimen_std: 0.0,
            seed,
        }
    }

    pub fn bench(seed: u64) -> Self {
        Self {
            dark_mean: 32.0,
            dark_std: 3.0,
            shot_scale: 0.02,
            block_texture_std: 20.0,
            specimen_std: 4.0,
            seed,
        }
    }

    pub fn stress(seed: u64) -> Self {
        Self {
            dark_mean: 32.0,
            dark_std: 6.0,
            shot_scale: 0.05,
            block_texture_std: 40.0,
            specimen_std: 12.0,
            seed,
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "clean" => Ok(Self::clean(seed)),
            "bench" => Ok(Self::bench(seed)),
            "stress" => Ok(Self::stress(seed)),
            _ => Err(Error::InvalidParameter(format!(
                "unknown noise preset {name:?} (expected clean, bench or stress)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let stds = [self.dark_std, self.shot_scale, self.block_texture_std, self.specimen_std];
        if stds.iter().any(|s| !(*s >= 0.0 && s.is_finite())) || !self.dark_mean.is_finite() {
            return Err(Error::InvalidParameter(format!("invalid noise model {self:?}")));
        }
        Ok(())
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn to_count(v: f64) -> u16 {
    v.round().clamp(0.0, f64::from(MAX_INTENSITY)) as u16
}

/// The fixed-pattern dark frame shared by all acquisitions.
pub fn synthesize_dark(noise: &NoiseModel) -> DarkFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(noise.seed, u64::MAX));
    let plane = Plane::from_fn(CUBE_SIDE, CUBE_SIDE, |_, _| {
        to_count(noise.dark_mean + noise.dark_std * normal(&mut rng))
    });
    DarkFrame::new(plane).expect("dark frame has positive size")
}

/// Raw cube for one specimen. Texture tiles are aligned with the default ROI
/// block grid.
pub fn synthesize_cube(
    spec: &MixtureSpec,
    endmembers: &EndmemberSpectra,
    noise: &NoiseModel,
    dark: &DarkFrame,
    specimen_seed: u64,
) -> Result<(SpectralCube, Composition, TextureClass)> {
    noise.validate()?;
    let composition = spec.composition()?;
    let texture = classify_composition(&composition)?;
    if dark.height() != CUBE_SIDE || dark.width() != CUBE_SIDE {
        return Err(Error::DimensionMismatch(format!(
            "dark frame must be {CUBE_SIDE}x{CUBE_SIDE}"
        )));
    }
    let base = endmembers.mix(spec.weights);
    let mut rng = ChaCha8Rng::seed_from_u64(specimen_seed);
    let specimen_offset: [f64; NUM_BANDS] = std::array::from_fn(|_| noise.specimen_std * normal(&mut rng));
    // tiles cover the frame; index 0 starts at the ROI origin minus one tile
    let origin = TILE - DEFAULT_ROI.y1;
    let tiles = (CUBE_SIDE + origin).div_ceil(TILE);
    let texture_field: Vec<f64> = (0..tiles * tiles * NUM_BANDS)
        .map(|_| noise.block_texture_std * normal(&mut rng))
        .collect();
    let dark_data = dark.plane().data();
    let planes = (0..NUM_BANDS)
        .map(|b| {
            let level = base[b] + specimen_offset[b];
            let mut data = Vec::with_capacity(CUBE_SIDE * CUBE_SIDE);
            for r in 0..CUBE_SIDE {
                let tr = (r + origin) / TILE;
                for c in 0..CUBE_SIDE {
                    let tc = (c + origin) / TILE;
                    let signal = level + texture_field[(tr * tiles + tc) * NUM_BANDS + b];
                    let shot = noise.shot_scale * signal.max(0.0) * normal(&mut rng);
                    data.push(to_count(signal + shot + f64::from(dark_data[r * CUBE_SIDE + c])));
                }
            }
            Plane::new(CUBE_SIDE, CUBE_SIDE, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((SpectralCube::new(planes)?, composition, texture))
}

fn specimen_seed(noise: &NoiseModel, plan: &SpecimenPlan) -> u64 {
    derive_seed(noise.seed, plan.index as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub specimen_id: String,
    pub role: Role,
    pub weights: [f64; 3],
    pub composition: Composition,
    pub texture: TextureClass,
    /// Relative to the manifest's directory.
    pub cube_path: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const DARK_FILE: &str = "dark.msc1";
pub const CUBE_DIR: &str = "cubes";
const MANIFEST_HEADER: [&str; 10] = [
    "specimen_id",
    "role",
    "w_clayrich",
    "w_siltrich",
    "w_sandrich",
    "clay",
    "silt",
    "sand",
    "texture",
    "cube_path",
];

pub fn write_manifest<W: Write>(rows: &[ManifestRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MANIFEST_HEADER)?;
    for r in rows {
        let mut rec = vec![r.specimen_id.clone(), r.role.name().to_string()];
        rec.extend(r.weights.iter().map(|v| v.to_string()));
        rec.extend(r.composition.as_array().iter().map(|v| v.to_string()));
        rec.push(r.texture.name().to_string());
        rec.push(r.cube_path.to_string_lossy().replace('\\', "/"));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<manifest>", e))
}

pub fn read_manifest<R: Read>(reader: R) -> Result<Vec<ManifestRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != MANIFEST_HEADER {
        return Err(Error::MalformedHeader(header.join(",")));
    }
    let num = |s: &str| -> Result<f64> { s.trim().parse().map_err(|_| Error::Parse(format!("bad number {s:?}"))) };
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ManifestRow {
                specimen_id: rec[0].to_string(),
                role: rec[1].parse()?,
                weights: [num(&rec[2])?, num(&rec[3])?, num(&rec[4])?],
                composition: crate::spectral::validate_composition(num(&rec[5])?, num(&rec[6])?, num(&rec[7])?)?,
                texture: rec[8].parse()?,
                cube_path: PathBuf::from(&rec[9]),
            })
        })
        .collect()
}

pub fn read_manifest_file(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    read_manifest(std::fs::File::open(path).map_err(|e| Error::io(path, e))?)
}

/// Writes every cube, the dark frame and the manifest under `out_dir`.
pub fn generate_dataset(
    benchmark: &Benchmark,
    endmembers: &EndmemberSpectra,
    noise: &NoiseModel,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<ManifestRow>> {
    endmembers.check()?;
    noise.validate()?;
    let out_dir = out_dir.as_ref();
    let cube_dir = out_dir.join(CUBE_DIR);
    std::fs::create_dir_all(&cube_dir).map_err(|e| Error::io(&cube_dir, e))?;
    let dark = synthesize_dark(noise);
    msc1::write_dark(&dark, out_dir.join(DARK_FILE))?;
    let plans = benchmark.specimens();
    let rows = par::try_map_range(plans.len(), |i| {
        let plan = &plans[i];
        let (cube, composition, texture) =
            synthesize_cube(&plan.mixture, endmembers, noise, &dark, specimen_seed(noise, plan))?;
        let rel = Path::new(CUBE_DIR).join(format!("{}.msc1", plan.specimen_id));
        msc1::write_cube(&cube, out_dir.join(&rel))?;
        Ok::<_, Error>(ManifestRow {
            specimen_id: plan.specimen_id.clone(),
            role: plan.mixture.role,
            weights: plan.mixture.weights,
            composition,
            texture,
            cube_path: rel,
        })
    })?;
    let path = out_dir.join(MANIFEST_FILE);
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_manifest(&rows, std::io::BufWriter::new(f))?;
    Ok(rows)
}

/// Preprocesses one cube into its block features.
pub fn extract_specimen(
    cube: &SpectralCube,
    dark: &DarkFrame,
    roi: Roi,
    params: NormalizationParams,
    specimen_id: &str,
    composition: Composition,
    texture: TextureClass,
) -> Result<SpecimenFeatures> {
    let pre = preprocess_cube(cube, dark, roi, params).map_err(|e| e.for_specimen(specimen_id))?;
    Ok(SpecimenFeatures {
        specimen_id: specimen_id.to_string(),
        matrix: block_means(&pre).map_err(|e| e.for_specimen(specimen_id))?,
        composition,
        texture,
    })
}

/// Reads a directory written by [`generate_dataset`] and extracts block
/// features for every specimen. Failures name the specimen they came from.
pub fn extract_dataset(
    data_dir: impl AsRef<Path>,
    roi: Roi,
    params: NormalizationParams,
) -> Result<(ObservationTable, ObservationTable)> {
    let data_dir = data_dir.as_ref();
    let manifest = read_manifest_file(data_dir.join(MANIFEST_FILE))?;
    let dark = msc1::read_dark(data_dir.join(DARK_FILE))?;
    let specimens = par::try_map_range(manifest.len(), |i| {
        let row = &manifest[i];
        let cube = msc1::read_cube(data_dir.join(&row.cube_path)).map_err(|e| e.for_specimen(&row.specimen_id))?;
        let feats = extract_specimen(&cube, &dark, roi, params, &row.specimen_id, row.composition, row.texture)?;
        Ok::<_, Error>((row.role, feats))
    })?;
    let (train, val): (Vec<_>, Vec<_>) = specimens.into_iter().partition(|(role, _)| *role == Role::Train);
    let strip = |v: Vec<(Role, SpecimenFeatures)>| v.into_iter().map(|(_, s)| s).collect::<Vec<_>>();
    Ok((flatten_observations(&strip(train)), flatten_observations(&strip(val))))
}

/// Observation tables for the training and validation roles, built in
/// memory with the same cubes [`generate_dataset`] would write.
pub fn synthesize_tables(
    benchmark: &Benchmark,
    endmembers: &EndmemberSpectra,
    noise: &NoiseModel,
    roi: Roi,
    params: NormalizationParams,
) -> Result<(ObservationTable, ObservationTable)> {
    endmembers.check()?;
    let dark = synthesize_dark(noise);
    let plans = benchmark.specimens();
    let specimens = par::try_map_range(plans.len(), |i| {
        let plan = &plans[i];
        let (cube, comp, tex) = synthesize_cube(&plan.mixture, endmembers, noise, &dark, specimen_seed(noise, plan))?;
        Ok::<_, Error>((plan.mixture.role, extract_specimen(&cube, &dark, roi, params, &plan.specimen_id, comp, tex)?))
    })?;
    let (train, val): (Vec<_>, Vec<_>) = specimens.into_iter().partition(|(role, _)| *role == Role::Train);
    let strip = |v: Vec<(Role, SpecimenFeatures)>| v.into_iter().map(|(_, s)| s).collect::<Vec<_>>();
    Ok((flatten_observations(&strip(train)), flatten_observations(&strip(val))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::dark_correct;

    #[test]
    fn benchmark_counts_and_coverage() {
        let b = default_benchmark();
        assert_eq!(b.count(Role::Train), 440);
        assert_eq!(b.count(Role::Validation), 84);
        let mut covered = [false; TextureClass::COUNT];
        for m in b.mixtures.iter().filter(|m| m.role == Role::Train) {
            covered[m.texture().unwrap().index()] = true;
        }
        assert!(covered.iter().all(|c| *c));
        let ids: std::collections::HashSet<_> = b.specimens().into_iter().map(|s| s.specimen_id).collect();
        assert_eq!(ids.len(), 524);
    }

    #[test]
    fn clean_pure_sand_is_flat() {
        let noise = NoiseModel::clean(1);
        let dark = synthesize_dark(&noise);
        let em = EndmemberSpectra::default();
        let spec = MixtureSpec {
            weights: [0.0, 0.0, 1.0],
            replicates: 1,
            role: Role::Train,
        };
        let (cube, comp, tex) = synthesize_cube(&spec, &em, &noise, &dark, 5).unwrap();
        assert_eq!(tex, TextureClass::Sand);
        assert_eq!(comp.sand, 100.0);
        for (b, p) in cube.planes().iter().enumerate() {
            let expect = (em.sand_rich[b] + 32.0).round() as u16;
            assert!(p.data().iter().all(|&v| v == expect));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let noise = NoiseModel::bench(3);
        let dark = synthesize_dark(&noise);
        assert_eq!(dark, synthesize_dark(&noise));
        let em = EndmemberSpectra::default();
        let spec = MixtureSpec {
            weights: [0.2, 0.3, 0.5],
            replicates: 1,
            role: Role::Train,
        };
        let a = synthesize_cube(&spec, &em, &noise, &dark, 77).unwrap();
        assert_eq!(a, synthesize_cube(&spec, &em, &noise, &dark, 77).unwrap());
        assert_ne!(a.0, synthesize_cube(&spec, &em, &noise, &dark, 78).unwrap().0);
    }

    #[test]
    fn roi_mean_tracks_mixed_level() {
        // pixel noise only: the ROI mean of the corrected cube estimates the
        // mixed level with standard error sigma / 100
        let noise = NoiseModel {
            dark_std: 0.0,
            block_texture_std: 0.0,
            specimen_std: 0.0,
            shot_scale: 0.02,
            ..NoiseModel::bench(11)
        };
        let dark = synthesize_dark(&noise);
        let em = EndmemberSpectra::default();
        let spec = MixtureSpec {
            weights: [0.3, 0.3, 0.4],
            replicates: 1,
            role: Role::Train,
        };
        let (cube, _, _) = synthesize_cube(&spec, &em, &noise, &dark, 2).unwrap();
        let corrected = dark_correct(&cube, &dark).unwrap();
        let cropped = crate::preprocess::crop_roi(&corrected, DEFAULT_ROI).unwrap();
        let level = em.mix(spec.weights);
        for (b, p) in cropped.planes().iter().enumerate() {
            let mean = p.data().iter().map(|&v| f64::from(v)).sum::<f64>() / 10_000.0;
            // rounding adds a uniform error of variance 1/12
            let sigma = ((noise.shot_scale * level[b]).powi(2) + 1.0 / 12.0).sqrt();
            assert!((mean - level[b]).abs() <= 3.0 * sigma / 100.0, "band {b}: {mean} vs {}", level[b]);
        }
    }

    #[test]
    fn sand_raises_every_band() {
        let em = EndmemberSpectra::default();
        let mut prev = em.mix([0.5, 0.5, 0.0]);
        for step in 1..=10 {
            let s = step as f64 / 10.0;
            let cur = em.mix([0.5 * (1.0 - s), 0.5 * (1.0 - s), s]);
            assert!(cur.iter().zip(&prev).all(|(c, p)| c > p));
            prev = cur;
        }
    }

    #[test]
    fn endmember_csv_round_trip() {
        let em = EndmemberSpectra::default();
        let mut buf = Vec::new();
        em.write_csv(&mut buf).unwrap();
        assert_eq!(EndmemberSpectra::read_csv(&buf[..]).unwrap(), em);
        let bad = "band_nm,clayrich,siltrich,sandrich\n365,1,2,3\n";
        assert!(matches!(
            EndmemberSpectra::read_csv(bad.as_bytes()),
            Err(Error::BandCountMismatch { found: 1, .. })
        ));
    }
}
