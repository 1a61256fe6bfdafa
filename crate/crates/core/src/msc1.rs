//! MSC1 cube container.
//!
//! Little-endian layout:
//!
//! ```text
//! "MSC1" | band_count u16 | width u16 | height u16
//!        | band_count x wavelength_nm u16
//!        | band_count x (height*width x intensity u16, row-major)
//! ```
//!
//! Dark frames use the same layout with a single band at wavelength 0.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::{DarkFrame, Plane, SpectralCube, WavelengthBand, MAX_INTENSITY, NUM_BANDS};

pub const MAGIC: &[u8; 4] = b"MSC1";
const HEADER_LEN: usize = 10;

struct Container {
    wavelengths: Vec<u16>,
    height: usize,
    width: usize,
    planes: Vec<Plane<u16>>,
}

fn encode(wavelengths: &[u16], planes: &[&Plane<u16>]) -> Result<Vec<u8>> {
    let (height, width) = (planes[0].height(), planes[0].width());
    let to_u16 = |v: usize, what: &str| {
        u16::try_from(v).map_err(|_| Error::MalformedHeader(format!("{what} {v} exceeds u16")))
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 2 * wavelengths.len() * (1 + height * width));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&to_u16(wavelengths.len(), "band count")?.to_le_bytes());
    out.extend_from_slice(&to_u16(width, "width")?.to_le_bytes());
    out.extend_from_slice(&to_u16(height, "height")?.to_le_bytes());
    for w in wavelengths {
        out.extend_from_slice(&w.to_le_bytes());
    }
    for p in planes {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn decode(bytes: &[u8]) -> Result<Container> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::MalformedHeader("missing MSC1 magic".into()));
    }
    let u16_at = |off: usize| u16::from_le_bytes([bytes[off], bytes[off + 1]]);
    let band_count = u16_at(4) as usize;
    let width = u16_at(6) as usize;
    let height = u16_at(8) as usize;
    let wl_end = HEADER_LEN + 2 * band_count;
    if bytes.len() < wl_end {
        return Err(Error::TruncatedPayload {
            expected: wl_end,
            found: bytes.len(),
        });
    }
    let wavelengths = (0..band_count).map(|i| u16_at(HEADER_LEN + 2 * i)).collect();
    let plane_len = height * width;
    let expected = wl_end + 2 * band_count * plane_len;
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::MalformedHeader(format!(
            "{} trailing bytes after payload",
            bytes.len() - expected
        )));
    }
    let mut planes = Vec::with_capacity(band_count);
    for b in 0..band_count {
        let start = wl_end + 2 * b * plane_len;
        let mut data = Vec::with_capacity(plane_len);
        for i in 0..plane_len {
            let v = u16_at(start + 2 * i);
            if v > MAX_INTENSITY {
                return Err(Error::IntensityOverflow { value: v });
            }
            data.push(v);
        }
        planes.push(Plane::new(height, width, data)?);
    }
    Ok(Container {
        wavelengths,
        height,
        width,
        planes,
    })
}

/// Serializes a cube. Equal cubes produce identical bytes.
pub fn encode_cube(cube: &SpectralCube) -> Result<Vec<u8>> {
    let wl: Vec<u16> = cube.bands().iter().map(|b| b.center_nm()).collect();
    let planes: Vec<&Plane<u16>> = cube.planes().iter().collect();
    encode(&wl, &planes)
}

pub fn decode_cube(bytes: &[u8]) -> Result<SpectralCube> {
    let c = decode(bytes)?;
    if c.wavelengths.len() != NUM_BANDS {
        return Err(Error::BandCountMismatch {
            expected: NUM_BANDS,
            found: c.wavelengths.len(),
        });
    }
    let mut bands = c
        .wavelengths
        .iter()
        .map(|&w| WavelengthBand::new(w))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .zip(c.planes)
        .collect::<Vec<_>>();
    bands.sort_by_key(|(b, _)| *b);
    if bands.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::MalformedHeader("duplicate wavelength".into()));
    }
    debug_assert!(bands.iter().all(|(_, p)| p.height() == c.height && p.width() == c.width));
    let (bands, planes) = bands.into_iter().unzip();
    SpectralCube::with_bands(bands, planes)
}

pub fn encode_dark(dark: &DarkFrame) -> Result<Vec<u8>> {
    encode(&[0], &[dark.plane()])
}

pub fn decode_dark(bytes: &[u8]) -> Result<DarkFrame> {
    let mut c = decode(bytes)?;
    if c.wavelengths.len() != 1 {
        return Err(Error::BandCountMismatch {
            expected: 1,
            found: c.wavelengths.len(),
        });
    }
    if c.wavelengths[0] != 0 {
        return Err(Error::MalformedHeader(
            "dark frame wavelength must be 0".into(),
        ));
    }
    DarkFrame::new(c.planes.remove(0))
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<SpectralCube> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cube(&bytes)
}

pub fn write_cube(cube: &SpectralCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_cube(cube)?).map_err(|e| Error::io(path, e))
}

pub fn read_dark(path: impl AsRef<Path>) -> Result<DarkFrame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dark(&bytes)
}

pub fn write_dark(dark: &DarkFrame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_dark(dark)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use crate::spectral::WAVELENGTHS_NM;

    fn zero_cube(h: usize, w: usize) -> SpectralCube {
        SpectralCube::new(vec![Plane::filled(h, w, 0); NUM_BANDS]).unwrap()
    }

    #[test]
    fn zero_cube_round_trips() {
        let cube = zero_cube(4, 4);
        let back = decode_cube(&encode_cube(&cube).unwrap()).unwrap();
        assert_eq!(back, cube);
        assert!(back.planes().iter().all(|p| p.data().iter().all(|&v| v == 0)));
    }

    #[test]
    fn header_layout() {
        let bytes = encode_cube(&zero_cube(2, 3)).unwrap();
        assert_eq!(&bytes[..4], b"MSC1");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 13);
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 3);
        assert_eq!(u16::from_le_bytes([bytes[8], bytes[9]]), 2);
        assert_eq!(u16::from_le_bytes([bytes[10], bytes[11]]), 365);
        assert_eq!(bytes.len(), 10 + 26 + 13 * 6 * 2);
    }

    #[test]
    fn twelve_band_header_is_rejected() {
        let planes: Vec<Plane<u16>> = vec![Plane::filled(2, 2, 0); 12];
        let refs: Vec<&Plane<u16>> = planes.iter().collect();
        let bytes = encode(&WAVELENGTHS_12, &refs).unwrap();
        assert!(matches!(
            decode_cube(&bytes),
            Err(Error::BandCountMismatch {
                expected: 13,
                found: 12
            })
        ));
    }

    const WAVELENGTHS_12: [u16; 12] = [365, 405, 473, 530, 575, 621, 660, 735, 770, 830, 850, 890];

    #[test]
    fn truncation_and_overflow() {
        let bytes = encode_cube(&zero_cube(3, 3)).unwrap();
        assert!(matches!(
            decode_cube(&bytes[..bytes.len() - 1]),
            Err(Error::TruncatedPayload { .. })
        ));
        assert!(matches!(
            decode_cube(b"MSC0\x0d\x00"),
            Err(Error::MalformedHeader(_))
        ));
        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 2..].copy_from_slice(&1024u16.to_le_bytes());
        assert!(matches!(
            decode_cube(&bad),
            Err(Error::IntensityOverflow { value: 1024 })
        ));
    }

    #[test]
    fn bands_are_sorted_on_read() {
        let cube = SpectralCube::new(
            (0..NUM_BANDS as u16)
                .map(|b| Plane::filled(2, 2, b))
                .collect(),
        )
        .unwrap();
        let mut wl = WAVELENGTHS_NM.to_vec();
        let mut planes: Vec<&Plane<u16>> = cube.planes().iter().collect();
        wl.reverse();
        planes.reverse();
        let back = decode_cube(&encode(&wl, &planes).unwrap()).unwrap();
        assert_eq!(back, cube);
    }

    #[test]
    fn dark_frame_round_trip() {
        let dark = DarkFrame::new(Plane::from_fn(3, 5, |r, c| (r * 5 + c) as u16)).unwrap();
        let bytes = encode_dark(&dark).unwrap();
        assert_eq!(decode_dark(&bytes).unwrap(), dark);
        assert!(decode_cube(&bytes).is_err());
    }

    #[test]
    fn file_round_trip_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cube = SpectralCube::new(
            (0..NUM_BANDS)
                .map(|b| Plane::from_fn(7, 9, |r, c| ((r * 31 + c * 7 + b) % 1024) as u16))
                .collect(),
        )
        .unwrap();
        let (a, b) = (dir.path().join("a.msc"), dir.path().join("b.msc"));
        write_cube(&cube, &a).unwrap();
        write_cube(&cube, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(read_cube(&a).unwrap(), cube);
        assert!(matches!(
            read_cube(dir.path().join("missing.msc")),
            Err(Error::IoFailure { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn random_cubes_round_trip(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
            let mut state = seed;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 33) % 1024) as u16
            };
            let planes = (0..NUM_BANDS).map(|_| Plane::from_fn(h, w, |_, _| next())).collect();
            let cube = SpectralCube::new(planes).unwrap();
            let bytes = encode_cube(&cube).unwrap();
            prop_assert_eq!(&decode_cube(&bytes).unwrap(), &cube);
            prop_assert_eq!(encode_cube(&cube).unwrap(), bytes);
        }
    }
}
