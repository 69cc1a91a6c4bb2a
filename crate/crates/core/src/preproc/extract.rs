use serde::{Deserialize, Serialize};

use super::color::{lab_image, pseudo_rgb, DEFAULT_PSEUDO_RGB_NM};
use super::mask::{threshold_mask, Mask, ThresholdRules};
use super::regions::{partition_regions, CranialEnd, RegionPartition};
use super::spectra::{mean_spectrum, Region, Spectrum};
use crate::hsi::HyperCube;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub rules: ThresholdRules,
    pub rgb_nm: [f64; 3],
    pub cranial_end: CranialEnd,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            rules: ThresholdRules::default(),
            rgb_nm: DEFAULT_PSEUDO_RGB_NM,
            cranial_end: CranialEnd::default(),
        }
    }
}

/// Fillet mask of a reflectance cube.
pub fn fillet_mask(cube: &HyperCube, config: &ExtractConfig) -> Result<Mask> {
    let [r, g, b] = config.rgb_nm;
    threshold_mask(&lab_image(&pseudo_rgb(cube, r, g, b)?), &config.rules)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub mask: Mask,
    pub regions: RegionPartition,
    /// Whole, cranial, medial and caudal mean spectra, in that order.
    pub spectra: Vec<(Region, Spectrum)>,
}

/// Mask, region partition and raw region mean spectra of one cube.
pub fn extract_regions(cube: &HyperCube, config: &ExtractConfig) -> Result<Extracted> {
    let mask = fillet_mask(cube, config)?;
    let regions = partition_regions(&mask, config.cranial_end)?;
    let spectra = vec![
        (Region::Whole, mean_spectrum(cube, &mask.indices())?),
        (Region::Cranial, mean_spectrum(cube, &regions.cranial)?),
        (Region::Medial, mean_spectrum(cube, &regions.medial)?),
        (Region::Caudal, mean_spectrum(cube, &regions.caudal)?),
    ];
    Ok(Extracted { mask, regions, spectra })
}
