//! Dark-current correction, ROI cropping and bounded tanh contrast normalization.

use crate::error::{Error, Result};
use crate::spectral::{DarkFrame, Plane, Roi, SpectralCube, NUM_BANDS, ROI_SIDE};

pub const ROI_PIXELS: usize = ROI_SIDE * ROI_SIDE;

/// Population mean and standard deviation of one ROI plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationParams {
    /// Steepness of the tanh mapping.
    pub kappa: f64,
}

impl NormalizationParams {
    pub const DEFAULT_KAPPA: f64 = 0.03;

    pub fn new(kappa: f64) -> Result<Self> {
        if kappa > 0.0 && kappa.is_finite() {
            Ok(Self { kappa })
        } else {
            Err(Error::InvalidParameter(format!(
                "kappa must be positive, got {kappa}"
            )))
        }
    }
}

impl Default for NormalizationParams {
    fn default() -> Self {
        Self {
            kappa: Self::DEFAULT_KAPPA,
        }
    }
}

/// Normalized 13 x 100 x 100 ROI with the statistics used to map each band.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedRoi {
    pub planes: Vec<Vec<f64>>,
    pub stats: Vec<BandStats>,
}

/// `|X(λ) - D|` per pixel and band.
pub fn dark_correct(cube: &SpectralCube, dark: &DarkFrame) -> Result<SpectralCube> {
    if cube.height() != dark.height() || cube.width() != dark.width() {
        return Err(Error::DimensionMismatch(format!(
            "cube is {}x{}, dark frame is {}x{}",
            cube.height(),
            cube.width(),
            dark.height(),
            dark.width()
        )));
    }
    let d = dark.plane().data();
    let planes = cube
        .planes()
        .iter()
        .map(|p| {
            let data = p.data().iter().zip(d).map(|(&x, &y)| x.abs_diff(y)).collect();
            Plane::new(p.height(), p.width(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    SpectralCube::with_bands(cube.bands().to_vec(), planes)
}

/// Crops the same 100x100 window from every band.
pub fn crop_roi(cube: &SpectralCube, roi: Roi) -> Result<SpectralCube> {
    roi.check_fits(cube.height(), cube.width())?;
    let planes = cube
        .planes()
        .iter()
        .map(|p| p.window(roi.y1, roi.x1, ROI_SIDE, ROI_SIDE))
        .collect();
    SpectralCube::with_bands(cube.bands().to_vec(), planes)
}

pub fn roi_stats(plane: &[f64]) -> Result<BandStats> {
    if plane.len() != ROI_PIXELS {
        return Err(Error::DimensionMismatch(format!(
            "ROI plane has {} pixels, expected {ROI_PIXELS}",
            plane.len()
        )));
    }
    let n = plane.len() as f64;
    let mean = plane.iter().sum::<f64>() / n;
    let var = plane.iter().map(|&p| (p - mean) * (p - mean)).sum::<f64>() / n;
    Ok(BandStats {
        mean,
        std: var.sqrt(),
    })
}

/// Maps one intensity into `[μ-σ, μ+σ]`.
///
/// `(μ-σ) + 2σ(tanh(κ(x-μ)) + 1)/2` is evaluated in the equivalent form
/// `μ + σ·tanh(κ(x-μ))`, which keeps `x = μ` an exact fixed point and the
/// output inside the band bounds under rounding.
#[inline]
pub fn normalize_value(value: f64, stats: BandStats, params: NormalizationParams) -> f64 {
    let BandStats { mean, std } = stats;
    if std == 0.0 {
        return mean;
    }
    mean + std * (params.kappa * (value - mean)).tanh()
}

pub fn normalize_contrast(plane: &[f64], stats: BandStats, params: NormalizationParams) -> Vec<f64> {
    plane
        .iter()
        .map(|&v| normalize_value(v, stats, params))
        .collect()
}

/// Dark correction, cropping, then per-band statistics and normalization.
pub fn preprocess_cube(
    cube: &SpectralCube,
    dark: &DarkFrame,
    roi: Roi,
    params: NormalizationParams,
) -> Result<PreprocessedRoi> {
    let corrected = dark_correct(cube, dark)?;
    let cropped = crop_roi(&corrected, roi)?;
    let mut planes = Vec::with_capacity(NUM_BANDS);
    let mut stats = Vec::with_capacity(NUM_BANDS);
    for p in cropped.planes() {
        let values: Vec<f64> = p.data().iter().map(|&v| f64::from(v)).collect();
        let s = roi_stats(&values)?;
        planes.push(normalize_contrast(&values, s, params));
        stats.push(s);
    }
    Ok(PreprocessedRoi { planes, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::NUM_BANDS;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube_from(f: impl Fn(usize, usize, usize) -> u16, h: usize, w: usize) -> SpectralCube {
        SpectralCube::new((0..NUM_BANDS).map(|b| Plane::from_fn(h, w, |r, c| f(b, r, c))).collect())
            .unwrap()
    }

    #[test]
    fn dark_correction_cases() {
        let cube = cube_from(|_, _, _| 5, 3, 3);
        let dark = DarkFrame::new(Plane::filled(3, 3, 9)).unwrap();
        let out = dark_correct(&cube, &dark).unwrap();
        assert!(out.planes().iter().all(|p| p.data().iter().all(|&v| v == 4)));

        let same = DarkFrame::new(Plane::filled(3, 3, 5)).unwrap();
        let out = dark_correct(&cube, &same).unwrap();
        assert!(out.planes().iter().all(|p| p.data().iter().all(|&v| v == 0)));

        let varied = cube_from(|b, r, c| (b * 50 + r * 3 + c) as u16, 3, 3);
        assert_eq!(dark_correct(&varied, &DarkFrame::zeros(3, 3)).unwrap(), varied);

        assert!(matches!(
            dark_correct(&cube, &DarkFrame::zeros(3, 4)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn crop_cases() {
        let cube = cube_from(|b, r, c| ((b + r * 7 + c * 3) % 1024) as u16, 100, 100);
        assert_eq!(crop_roi(&cube, Roi::new(0, 0)).unwrap(), cube);
        assert!(matches!(
            crop_roi(&cube, Roi::new(50, 50)),
            Err(Error::RoiOutOfBounds { .. })
        ));

        let big = cube_from(|b, r, c| ((b * 13 + r * 17 + c) % 1024) as u16, 130, 120);
        let roi = Roi::new(11, 23);
        let out = crop_roi(&big, roi).unwrap();
        assert_eq!((out.height(), out.width()), (100, 100));
        for b in 0..NUM_BANDS {
            assert_eq!(out.plane(b).get(3, 7), big.plane(b).get(roi.y1 + 3, roi.x1 + 7));
            assert_eq!(out.plane(b).get(99, 99), big.plane(b).get(roi.y1 + 99, roi.x1 + 99));
        }
    }

    #[test]
    fn stats_cases() {
        let s = roi_stats(&vec![7.0; ROI_PIXELS]).unwrap();
        assert_eq!((s.mean, s.std), (7.0, 0.0));

        let two: Vec<f64> = (0..ROI_PIXELS).map(|i| if i % 2 == 0 { 0.0 } else { 2.0 }).collect();
        let s = roi_stats(&two).unwrap();
        assert_eq!((s.mean, s.std), (1.0, 1.0));

        assert!(roi_stats(&[1.0; 10]).is_err());
    }

    #[test]
    fn uniform_plane_mean_within_sampling_error() {
        // Discrete uniform on 0..=1023: σ² = (1024² - 1) / 12.
        let sigma = ((1024.0f64 * 1024.0 - 1.0) / 12.0).sqrt();
        let tol = 3.0 * sigma / (ROI_PIXELS as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let plane: Vec<f64> = (0..ROI_PIXELS).map(|_| rng.random_range(0..=1023u16) as f64).collect();
            let s = roi_stats(&plane).unwrap();
            assert!((s.mean - 511.5).abs() < tol, "{} vs 511.5 ± {tol}", s.mean);
        }
    }

    #[test]
    fn normalization_scalar_cases() {
        let p = NormalizationParams::default();
        let stats = BandStats { mean: 100.0, std: 20.0 };
        assert_eq!(normalize_value(100.0, stats, p), 100.0);
        // 80 + 20 * (tanh(0.6) + 1)
        let expected = 80.0 + 20.0 * (0.537_049_566_998_035_3 + 1.0);
        assert!((normalize_value(120.0, stats, p) - expected).abs() < 1e-9);
        assert!((normalize_value(120.0, stats, p) - 110.741).abs() < 1e-3);
        assert_eq!(normalize_value(1e12, stats, p), 120.0);
        assert_eq!(normalize_value(-1e12, stats, p), 80.0);
        let flat = BandStats { mean: 42.0, std: 0.0 };
        assert_eq!(normalize_value(1000.0, flat, p), 42.0);
        assert!(NormalizationParams::new(0.0).is_err());
    }

    #[test]
    fn constant_cube_stays_constant() {
        let cube = cube_from(|b, _, _| (100 + b) as u16, 100, 100);
        let out = preprocess_cube(&cube, &DarkFrame::zeros(100, 100), Roi::new(0, 0), Default::default())
            .unwrap();
        for (b, plane) in out.planes.iter().enumerate() {
            assert!(plane.iter().all(|&v| v == (100 + b) as f64));
            assert_eq!(out.stats[b].std, 0.0);
        }
    }

    #[test]
    fn stage_order_is_dark_first() {
        // Dark frame larger than signal on half the pixels: |X - D| changes μ and σ,
        // so normalizing the raw plane and correcting afterwards gives something else.
        let cube = cube_from(|_, r, c| if (r + c) % 2 == 0 { 10 } else { 200 }, 100, 100);
        let dark = DarkFrame::new(Plane::from_fn(100, 100, |r, _| if r < 50 { 60 } else { 0 })).unwrap();
        let params = NormalizationParams::default();
        let canonical = preprocess_cube(&cube, &dark, Roi::new(0, 0), params).unwrap();

        let raw: Vec<f64> = cube.plane(0).data().iter().map(|&v| v as f64).collect();
        let s = roi_stats(&raw).unwrap();
        let normalized_first: Vec<f64> = normalize_contrast(&raw, s, params)
            .iter()
            .zip(dark.plane().data())
            .map(|(&v, &d)| (v - d as f64).abs())
            .collect();
        assert_ne!(canonical.planes[0], normalized_first);
        assert_ne!(canonical.stats[0], s);
        // Pin the canonical statistics: values {50, 140} top half, {10, 200} bottom half.
        assert_eq!(canonical.stats[0].mean, 100.0);
    }

    #[test]
    fn histogram_compaction_on_random_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..25 {
            let centre = rng.random_range(50.0..900.0);
            let spread = rng.random_range(1.0..120.0);
            let plane: Vec<f64> = (0..ROI_PIXELS)
                .map(|_| (centre + spread * (rng.random::<f64>() - 0.5) * 3.4).clamp(0.0, 1023.0))
                .collect();
            let before = roi_stats(&plane).unwrap();
            let after = roi_stats(&normalize_contrast(&plane, before, Default::default())).unwrap();
            assert!(after.std <= before.std, "{} > {}", after.std, before.std);
        }
    }

    proptest! {
        #[test]
        fn bounded_monotone_and_fixed_point(
            mean in 0.0f64..1023.0,
            std in 0.0f64..400.0,
            kappa in 1e-4f64..1.0,
            a in -2000.0f64..3000.0,
            b in -2000.0f64..3000.0,
        ) {
            let stats = BandStats { mean, std };
            let p = NormalizationParams::new(kappa).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (ol, oh) = (normalize_value(lo, stats, p), normalize_value(hi, stats, p));
            prop_assert!(ol >= mean - std && oh <= mean + std);
            prop_assert!(ol <= oh);
            prop_assert_eq!(normalize_value(mean, stats, p), mean);
        }

        #[test]
        fn dark_corrected_values_are_non_negative_and_exact(x in 0u16..=1023, d in 0u16..=1023) {
            let cube = SpectralCube::new(vec![Plane::filled(1, 1, x); NUM_BANDS]).unwrap();
            let dark = DarkFrame::new(Plane::filled(1, 1, d)).unwrap();
            let out = dark_correct(&cube, &dark).unwrap();
            prop_assert_eq!(out.plane(0).get(0, 0) as i32, (x as i32 - d as i32).abs());
        }
    }
}
