//! From a reflectance cube to a table of labelled spectra: pseudo-RGB rendering,
//! L*a*b* thresholding into a fillet mask, cranial/medial/caudal partitioning
//! and region mean spectra.

mod color;
mod extract;
mod mask;
mod regions;
mod spectra;

pub use color::{lab_image, pseudo_rgb, rgb_to_lab, LabImage, RgbImage, DEFAULT_PSEUDO_RGB_NM};
pub use extract::{extract_regions, fillet_mask, ExtractConfig, Extracted};
pub use mask::{threshold_mask, Interval, Mask, ThresholdRules};
pub use regions::{partition_regions, CranialEnd, RegionPartition};
pub use spectra::{
    mean_spectrum, normalize_spectrum, Normalization, Region, Severity, SpectraTable, Spectrum,
    SpectrumRow, ZScoreStats,
};
