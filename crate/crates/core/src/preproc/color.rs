use crate::hsi::{CubeKind, HyperCube};
use crate::{Error, Result};

/// Default pseudo-RGB wavelengths (red, green, blue) in nm.
pub const DEFAULT_PSEUDO_RGB_NM: [f64; 3] = [640.0, 550.0, 460.0];

// Linear sRGB -> XYZ (D65, 2 degree observer).
const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub lines: usize,
    pub samples: usize,
    pub pixels: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    pub lines: usize,
    pub samples: usize,
    pub pixels: Vec<[f64; 3]>,
}

/// Pseudo-RGB from the bands nearest to the requested wavelengths, clamped to `[0, 1]`.
pub fn pseudo_rgb(cube: &HyperCube, r_nm: f64, g_nm: f64, b_nm: f64) -> Result<RgbImage> {
    if cube.kind() != CubeKind::Reflectance {
        return Err(Error::Invalid(format!("pseudo-RGB needs reflectance, got {}", cube.kind())));
    }
    let axis = cube.axis();
    let idx = [
        axis.band_index_for_wavelength(r_nm)?,
        axis.band_index_for_wavelength(g_nm)?,
        axis.band_index_for_wavelength(b_nm)?,
    ];
    let pixels = (0..cube.pixels())
        .map(|p| {
            let s = cube.pixel(p);
            idx.map(|b| s[b].clamp(0.0, 1.0))
        })
        .collect();
    Ok(RgbImage {
        lines: cube.lines(),
        samples: cube.samples(),
        pixels,
    })
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// sRGB triplet in `[0, 1]` to CIE L*a*b* (D65). The reference white is the
/// XYZ image of sRGB white, so `(1, 1, 1)` maps to `(100, 0, 0)`.
pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(|c| srgb_to_linear(c.clamp(0.0, 1.0)));
    let xyz = SRGB_TO_XYZ.map(|row| row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]);
    let white = SRGB_TO_XYZ.map(|row| row[0] + row[1] + row[2]);
    let fx = lab_f(xyz[0] / white[0]);
    let fy = lab_f(xyz[1] / white[1]);
    let fz = lab_f(xyz[2] / white[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

pub fn lab_image(rgb: &RgbImage) -> LabImage {
    LabImage {
        lines: rgb.lines,
        samples: rgb.samples,
        pixels: rgb.pixels.iter().map(|&p| rgb_to_lab(p)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hsi::BandAxis;

    #[test]
    fn reference_points() {
        let w = rgb_to_lab([1.0, 1.0, 1.0]);
        assert!((w[0] - 100.0).abs() < 1e-9);
        assert!(w[1].abs() < 0.01 && w[2].abs() < 0.01);
        assert_eq!(rgb_to_lab([0.0, 0.0, 0.0]), [0.0, 0.0, 0.0]);
        let g = rgb_to_lab([0.5, 0.5, 0.5]);
        assert!(g[1].abs() < 1e-9 && g[2].abs() < 1e-9);
        // sRGB mid gray is L* ~ 53.39
        assert!((g[0] - 53.389).abs() < 0.01);
        let red = rgb_to_lab([1.0, 0.0, 0.0]);
        assert!((red[0] - 53.24).abs() < 0.05 && (red[1] - 80.09).abs() < 0.1 && (red[2] - 67.20).abs() < 0.1);
    }

    #[test]
    fn gray_axis_is_monotone() {
        let mut prev = -1.0;
        for i in 0..=1000 {
            let g = i as f64 / 1000.0;
            let l = rgb_to_lab([g; 3])[0];
            assert!(l > prev, "g={g}");
            prev = l;
        }
    }

    #[test]
    fn pseudo_rgb_selects_band_planes() {
        let axis = BandAxis::linspace(400.0, 700.0, 31).unwrap();
        let data: Vec<f64> = (0..2 * 3 * 31).map(|i| (i % 97) as f64 / 100.0).collect();
        let cube = HyperCube::new(2, 3, axis.clone(), data, CubeKind::Reflectance).unwrap();
        let img = pseudo_rgb(&cube, 640.0, 550.0, 460.0).unwrap();
        let planes = [640.0, 550.0, 460.0].map(|w| cube.band_plane(axis.band_index_for_wavelength(w).unwrap()));
        for (p, px) in img.pixels.iter().enumerate() {
            for c in 0..3 {
                assert_eq!(px[c], planes[c][p]);
            }
        }
        let gray = pseudo_rgb(&cube, 550.0, 550.0, 550.0).unwrap();
        assert!(gray.pixels.iter().all(|p| p[0] == p[1] && p[1] == p[2]));
        assert!(pseudo_rgb(&cube, 900.0, 550.0, 460.0).is_err());
        let raw = HyperCube::new(1, 1, axis, vec![0.5; 31], CubeKind::Raw).unwrap();
        assert!(pseudo_rgb(&raw, 640.0, 550.0, 460.0).is_err());
    }

    #[test]
    fn uniform_cube_is_uniform_gray() {
        let axis = BandAxis::linspace(400.0, 700.0, 4).unwrap();
        let cube = HyperCube::new(2, 2, axis, vec![0.5; 16], CubeKind::Reflectance).unwrap();
        let img = pseudo_rgb(&cube, 640.0, 550.0, 460.0).unwrap();
        assert!(img.pixels.iter().all(|p| *p == [0.5; 3]));
    }
}
