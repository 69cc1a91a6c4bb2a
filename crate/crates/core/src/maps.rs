//! Per-pixel class and hardness maps, their PNG renderings and pixel
//! percentage summaries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::png_io::{self, PixelFormat};
use crate::preproc::Severity;
use crate::{Error, Result};

/// Upper (closed) edges of the first three hardness bins, in N.
pub const HARDNESS_BIN_EDGES: [f64; 3] = [3.5, 7.1, 10.8];
pub const HARDNESS_BIN_LABELS: [&str; 4] = ["0-3.5 N", "3.5-7.1 N", "7.1-10.8 N", ">10.8 N"];

pub const NB_GREEN: [u8; 3] = [0, 200, 0];
pub const MWB_YELLOW: [u8; 3] = [230, 200, 0];
pub const SWB_RED: [u8; 3] = [220, 0, 0];
pub const BACKGROUND: [u8; 3] = [0, 0, 0];
/// Hardness bins, light to dark.
pub const HARDNESS_PALETTE: [[u8; 3]; 4] = [[255, 237, 160], [254, 178, 76], [240, 59, 32], [128, 0, 38]];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    pub lines: usize,
    pub samples: usize,
    pub cells: Vec<Option<Severity>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardnessMap {
    pub lines: usize,
    pub samples: usize,
    /// Predicted force in N; `None` outside the mask.
    pub cells: Vec<Option<f64>>,
}

impl ClassMap {
    pub fn new(lines: usize, samples: usize, cells: Vec<Option<Severity>>) -> Result<Self> {
        if cells.len() != lines * samples {
            return Err(Error::Shape(format!("{} cells for a {lines}x{samples} map", cells.len())));
        }
        Ok(Self { lines, samples, cells })
    }
}

impl HardnessMap {
    pub fn new(lines: usize, samples: usize, cells: Vec<Option<f64>>) -> Result<Self> {
        if cells.len() != lines * samples {
            return Err(Error::Shape(format!("{} cells for a {lines}x{samples} map", cells.len())));
        }
        if let Some(f) = cells.iter().flatten().find(|f| !(**f >= 0.0)) {
            return Err(Error::OutOfRange(format!("force {f} N is negative or NaN")));
        }
        Ok(Self { lines, samples, cells })
    }
}

/// Share of non-absent pixels per category, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiePercentages {
    pub categories: Vec<String>,
    pub percent: Vec<f64>,
    pub pixels: usize,
}

fn percentages(counts: &[usize], labels: &[&str]) -> Result<PiePercentages> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(PiePercentages {
        categories: labels.iter().map(|s| s.to_string()).collect(),
        percent: counts.iter().map(|&c| 100.0 * c as f64 / total as f64).collect(),
        pixels: total,
    })
}

pub fn class_percentages(map: &ClassMap) -> Result<PiePercentages> {
    let mut counts = [0usize; 3];
    for s in map.cells.iter().flatten() {
        counts[s.index()] += 1;
    }
    percentages(&counts, &Severity::ALL.map(Severity::code))
}

/// Bin index of a force: `[0, 3.5] -> 0`, `(3.5, 7.1] -> 1`, `(7.1, 10.8] -> 2`, above -> 3.
pub fn bin_hardness(force_n: f64) -> Result<usize> {
    if !(force_n >= 0.0) {
        return Err(Error::OutOfRange(format!("force {force_n} N")));
    }
    Ok(HARDNESS_BIN_EDGES.iter().position(|&edge| force_n <= edge).unwrap_or(3))
}

pub fn hardness_percentages(map: &HardnessMap) -> Result<PiePercentages> {
    let mut counts = [0usize; 4];
    for &f in map.cells.iter().flatten() {
        counts[bin_hardness(f)?] += 1;
    }
    percentages(&counts, &HARDNESS_BIN_LABELS)
}

pub fn encode_class_map(map: &ClassMap) -> Result<Vec<u8>> {
    let rgb: Vec<u8> = map
        .cells
        .iter()
        .flat_map(|c| match c {
            None => BACKGROUND,
            Some(Severity::Normal) => NB_GREEN,
            Some(Severity::Mild) => MWB_YELLOW,
            Some(Severity::Severe) => SWB_RED,
        })
        .collect();
    png_io::encode(map.samples, map.lines, PixelFormat::Rgb8, &rgb)
}

pub fn render_class_map(map: &ClassMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_class_map(map)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// PNG bytes and bin percentages of a hardness map.
pub fn encode_hardness_map(map: &HardnessMap) -> Result<(Vec<u8>, PiePercentages)> {
    let pie = hardness_percentages(map)?;
    let mut rgb = Vec::with_capacity(map.cells.len() * 3);
    for c in &map.cells {
        rgb.extend(match c {
            None => BACKGROUND,
            Some(f) => HARDNESS_PALETTE[bin_hardness(*f)?],
        });
    }
    Ok((png_io::encode(map.samples, map.lines, PixelFormat::Rgb8, &rgb)?, pie))
}

pub fn render_hardness_map(map: &HardnessMap, path: impl AsRef<Path>) -> Result<PiePercentages> {
    let path = path.as_ref();
    let (bytes, pie) = encode_hardness_map(map)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(pie)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn class_percentage_examples() {
        let all_nb = ClassMap::new(1, 3, vec![Some(Severity::Normal); 3]).unwrap();
        assert_eq!(class_percentages(&all_nb).unwrap().percent, vec![100.0, 0.0, 0.0]);
        let thirds = ClassMap::new(1, 4, vec![Some(Severity::Normal), Some(Severity::Mild), Some(Severity::Severe), None]).unwrap();
        for p in class_percentages(&thirds).unwrap().percent {
            assert!((p - 33.333_333).abs() < 1e-4);
        }
        let mut cells = vec![Some(Severity::Normal); 7];
        cells.extend([Some(Severity::Mild), Some(Severity::Mild), Some(Severity::Severe), None, None]);
        let m = ClassMap::new(3, 4, cells).unwrap();
        let p = class_percentages(&m).unwrap();
        assert_eq!(p.percent, vec![70.0, 20.0, 10.0]);
        assert_eq!(p.pixels, 10);
        assert!(class_percentages(&ClassMap::new(1, 1, vec![None]).unwrap()).is_err());
    }

    #[test]
    fn bin_edges() {
        assert_eq!(bin_hardness(0.0).unwrap(), 0);
        assert_eq!(bin_hardness(3.5).unwrap(), 0);
        assert_eq!(bin_hardness(3.55).unwrap(), 1);
        assert_eq!(bin_hardness(7.1).unwrap(), 1);
        assert_eq!(bin_hardness(7.11).unwrap(), 2);
        assert_eq!(bin_hardness(10.8).unwrap(), 2);
        assert_eq!(bin_hardness(10.81).unwrap(), 3);
        assert!(bin_hardness(-0.1).is_err());
        assert!(bin_hardness(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn binning_is_monotone(a in 0.0f64..60.0, b in 0.0f64..60.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(bin_hardness(lo).unwrap() <= bin_hardness(hi).unwrap());
        }

        #[test]
        fn hardness_percentages_sum_to_100(forces in prop::collection::vec(prop::option::of(0.0f64..40.0), 1..60)) {
            prop_assume!(forces.iter().any(Option::is_some));
            let m = HardnessMap::new(1, forces.len(), forces).unwrap();
            let p = hardness_percentages(&m).unwrap();
            prop_assert!((p.percent.iter().sum::<f64>() - 100.0).abs() < 0.01);
        }
    }

    #[test]
    fn class_map_rendering() {
        let one = ClassMap::new(1, 1, vec![Some(Severity::Normal)]).unwrap();
        let (w, h, _, px) = png_io::decode(&encode_class_map(&one).unwrap()).unwrap();
        assert_eq!((w, h, px), (1, 1, NB_GREEN.to_vec()));

        let cells = (0..4 * 5)
            .map(|i| Some(if (i / 5 + i % 5) % 2 == 0 { Severity::Normal } else { Severity::Severe }))
            .collect();
        let board = ClassMap::new(4, 5, cells).unwrap();
        let a = encode_class_map(&board).unwrap();
        assert_eq!(a, encode_class_map(&board.clone()).unwrap());
        let (w, h, _, px) = png_io::decode(&a).unwrap();
        assert_eq!((w, h), (5, 4));
        for l in 0..4 {
            for s in 0..5 {
                let want = if (l + s) % 2 == 0 { NB_GREEN } else { SWB_RED };
                let i = (l * 5 + s) * 3;
                assert_eq!(&px[i..i + 3], &want);
            }
        }
    }

    #[test]
    fn hardness_map_rendering() {
        let flat = HardnessMap::new(2, 2, vec![Some(2.0); 4]).unwrap();
        let (_, pie) = encode_hardness_map(&flat).unwrap();
        assert_eq!(pie.percent, vec![100.0, 0.0, 0.0, 0.0]);
        let centers = HardnessMap::new(2, 4, [1.75, 5.3, 8.95, 15.0, 1.75, 5.3, 8.95, 15.0].map(Some).to_vec()).unwrap();
        let (bytes, pie) = encode_hardness_map(&centers).unwrap();
        assert_eq!(pie.percent, vec![25.0; 4]);
        let (_, _, _, px) = png_io::decode(&bytes).unwrap();
        assert_eq!(&px[9..12], &HARDNESS_PALETTE[3]);
        let empty = HardnessMap::new(1, 2, vec![None, None]).unwrap();
        assert!(matches!(encode_hardness_map(&empty), Err(Error::EmptyMask)));
        assert!(HardnessMap::new(1, 1, vec![Some(-1.0)]).is_err());
    }
}
