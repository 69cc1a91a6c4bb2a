//! Seeded synthetic fillets standing in for the private imaging data.
//!
//! Each sample is an elliptical fillet on a dark belt. Pixel reflectance is
//! a class archetype (a smooth meat baseline plus class-specific Gaussian
//! bumps), scaled per sample, shifted in a 550-650 nm window in proportion to
//! the local compression force, plus pixel noise. Forces per region follow
//! normal laws with the published class means and deviations, truncated at 0.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hsi::{calibrate_reflectance, write_cube, BandAxis, CubeKind, DataType, HyperCube, DEFAULT_BANDS, DEFAULT_RANGE_NM};
use crate::preproc::{extract_regions, partition_regions, CranialEnd, ExtractConfig, Extracted, Mask, Region, Severity, SpectraTable, SpectrumRow};
use crate::rng::{self, Rng};
use crate::{Error, Result};

/// Mean and standard deviation of compression force (N), indexed
/// `[class][region]` with regions whole, cranial, medial, caudal.
#[allow(clippy::approx_constant)]
pub const FORCE_TABLE_N: [[(f64, f64); 4]; 3] = [
    [(4.89, 2.47), (7.02, 2.23), (3.14, 1.21), (5.33, 2.70)],
    [(5.47, 2.78), (8.23, 2.50), (4.06, 1.54), (4.78, 3.02)],
    [(11.12, 7.21), (21.03, 6.75), (11.16, 6.42), (13.59, 6.26)],
];

pub const DEFAULT_OUTLIER_CEILING_N: f64 = 10.8;
/// Force at which the coupling window is unshifted.
pub const COUPLING_REFERENCE_N: f64 = 8.0;
pub const COUPLING_WINDOW_NM: (f64, f64) = (550.0, 650.0);
const BACKGROUND_REFLECTANCE: f64 = 0.03;
const DARK_LEVEL: f64 = 110.0;
const WHITE_LEVEL: f64 = 3600.0;

fn region_index(region: Region) -> usize {
    match region {
        Region::Whole => 0,
        Region::Cranial => 1,
        Region::Medial => 2,
        Region::Caudal => 3,
    }
}

/// A Gaussian bump over wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center_nm: f64,
    pub width_nm: f64,
    pub amplitude: f64,
}

impl Bump {
    fn at(&self, nm: f64) -> f64 {
        self.amplitude * (-0.5 * ((nm - self.center_nm) / self.width_nm).powi(2)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Samples per class (normal, mild, severe).
    pub n_per_class: [usize; 3],
    pub bands: usize,
    pub lines: usize,
    pub samples: usize,
    /// Class-specific bumps added to the shared baseline.
    pub archetypes: [Vec<Bump>; 3],
    /// Reflectance shift per newton inside the coupling window.
    pub coupling: f64,
    /// Per-pixel Gaussian noise (reflectance units).
    pub noise_sd: f64,
    /// Per-band Gaussian noise shared by the pixels of one region.
    pub region_noise_sd: f64,
    /// Relative per-sample variation of the class bump amplitudes; also
    /// scales a per-sample illumination gain.
    pub sample_jitter: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_per_class: [78, 82, 90],
            bands: DEFAULT_BANDS,
            lines: 24,
            samples: 16,
            archetypes: default_archetypes(),
            coupling: 0.004,
            noise_sd: 0.02,
            region_noise_sd: 0.015,
            sample_jitter: 0.5,
            seed: 0,
        }
    }
}

fn default_archetypes() -> [Vec<Bump>; 3] {
    let b = |c, w, a| Bump {
        center_nm: c,
        width_nm: w,
        amplitude: a,
    };
    [
        vec![b(760.0, 30.0, 0.02)],
        vec![b(700.0, 40.0, 0.025), b(975.0, 30.0, -0.02)],
        vec![b(700.0, 40.0, 0.05), b(975.0, 30.0, -0.045), b(850.0, 50.0, 0.02)],
    ]
}

/// Fillet baseline shared by all classes: rising red edge, hemoglobin and
/// myoglobin dips, low blue and a water trough.
pub fn baseline_reflectance(nm: f64) -> f64 {
    let logistic = |z: f64| 1.0 / (1.0 + (-z).exp());
    let g = |c: f64, w: f64| (-0.5 * ((nm - c) / w).powi(2)).exp();
    0.50 + 0.18 * logistic((nm - 590.0) / 25.0) - 0.12 * logistic((500.0 - nm) / 30.0) - 0.10 * g(545.0, 18.0) - 0.09 * g(577.0, 12.0)
        - 0.12 * g(975.0, 35.0)
}

fn in_window(nm: f64) -> bool {
    nm >= COUPLING_WINDOW_NM.0 && nm <= COUPLING_WINDOW_NM.1
}

/// Compression forces of one sample, indexed whole, cranial, medial, caudal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionForces(pub [f64; 4]);

impl RegionForces {
    pub fn get(&self, region: Region) -> f64 {
        self.0[region_index(region)]
    }
}

/// One force draw for a class and region, truncated at 0.
pub fn draw_force(class: Severity, region: Region, rng: &mut Rng) -> f64 {
    let (mu, sd) = FORCE_TABLE_N[class.index()][region_index(region)];
    Normal::new(mu, sd).expect("positive sd").sample(rng).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub id: String,
    pub label: Severity,
    pub forces: RegionForces,
    pub raw: HyperCube,
    /// Ground-truth fillet pixels.
    pub mask: Mask,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class.contains(&0) {
            return Err(Error::OutOfRange("each class needs at least one sample".into()));
        }
        if self.bands < 2 || self.lines < 6 || self.samples < 6 {
            return Err(Error::OutOfRange("need at least 2 bands and a 6x6 frame".into()));
        }
        if !(self.noise_sd >= 0.0) || !(self.region_noise_sd >= 0.0) || !(self.sample_jitter >= 0.0) || !self.coupling.is_finite() {
            return Err(Error::OutOfRange("noise, jitter and coupling must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn axis(&self) -> Result<BandAxis> {
        BandAxis::linspace(DEFAULT_RANGE_NM.0, DEFAULT_RANGE_NM.1, self.bands)
    }

    pub fn total(&self) -> usize {
        self.n_per_class.iter().sum()
    }

    /// Class of the `i`-th sample; samples are ordered by class.
    pub fn class_of(&self, i: usize) -> Severity {
        let [a, b, _] = self.n_per_class;
        Severity::ALL[usize::from(i >= a) + usize::from(i >= a + b)]
    }

    /// Single-line dark and white references shared by every sample.
    pub fn references(&self) -> Result<(HyperCube, HyperCube)> {
        let axis = self.axis()?;
        let mut rng = rng::stream(self.seed, "references");
        let n = self.samples * self.bands;
        let mut dark = Vec::with_capacity(n);
        let mut white = Vec::with_capacity(n);
        for _ in 0..self.samples {
            for &nm in axis.wavelengths() {
                // sensor response falls off toward both ends of the range
                let response = 0.55 + 0.45 * (-0.5 * ((nm - 700.0) / 220.0).powi(2)).exp();
                let d = (DARK_LEVEL + rng.random_range(-6.0..6.0)).round();
                dark.push(d);
                white.push((d + WHITE_LEVEL * response * (1.0 + rng.random_range(-0.02..0.02))).round());
            }
        }
        Ok((
            HyperCube::new(1, self.samples, axis.clone(), dark, CubeKind::Dark)?.with_storage(DataType::U16),
            HyperCube::new(1, self.samples, axis, white, CubeKind::White)?.with_storage(DataType::U16),
        ))
    }

    /// Noise-free reflectance of class `class` at force `force_n` with bump scale `scale`.
    pub fn archetype(&self, class: Severity, force_n: f64, scale: f64) -> Result<Vec<f64>> {
        let axis = self.axis()?;
        Ok(axis
            .wavelengths()
            .iter()
            .map(|&nm| {
                let bumps: f64 = self.archetypes[class.index()].iter().map(|b| b.at(nm)).sum();
                let shift = if in_window(nm) { self.coupling * (force_n - COUPLING_REFERENCE_N) } else { 0.0 };
                baseline_reflectance(nm) + scale * bumps + shift
            })
            .collect())
    }

    /// Region forces of sample `i`, drawn on their own stream so they do not
    /// depend on the frame size or band count.
    pub fn forces(&self, i: usize) -> RegionForces {
        let label = self.class_of(i);
        let mut rng = rng::stream_indexed(self.seed, "forces", i as u64);
        RegionForces([Region::Whole, Region::Cranial, Region::Medial, Region::Caudal].map(|r| draw_force(label, r, &mut rng)))
    }

    /// Generate sample `i` with its raw counts against [`Self::references`].
    pub fn sample(&self, i: usize, dark: &HyperCube, white: &HyperCube) -> Result<SyntheticSample> {
        if i >= self.total() {
            return Err(Error::OutOfRange(format!("sample {i} of {}", self.total())));
        }
        let label = self.class_of(i);
        let forces = self.forces(i);
        let mut rng = rng::stream_indexed(self.seed, "sample", i as u64);

        let (lines, samples) = (self.lines as f64, self.samples as f64);
        let cl = lines / 2.0 - 0.5 + rng.random_range(-0.5..0.5);
        let cs = samples / 2.0 - 0.5 + rng.random_range(-0.5..0.5);
        let ra = 0.42 * lines * rng.random_range(0.95..1.05);
        let rb = 0.38 * samples * rng.random_range(0.95..1.05);
        let bits: Vec<bool> = (0..self.lines * self.samples)
            .map(|p| {
                let (l, s) = ((p / self.samples) as f64, (p % self.samples) as f64);
                ((l - cl) / ra).powi(2) + ((s - cs) / rb).powi(2) <= 1.0
            })
            .collect();
        let mask = Mask::new(self.lines, self.samples, bits)?;
        let parts = partition_regions(&mask, CranialEnd::Low)?;
        let mut region_of = vec![None; mask.bits.len()];
        for (region, idx) in [(Region::Cranial, &parts.cranial), (Region::Medial, &parts.medial), (Region::Caudal, &parts.caudal)] {
            for &p in idx {
                region_of[p] = Some(region);
            }
        }

        let scale = (1.0 + self.sample_jitter * Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng)).max(0.0);
        let gain = 1.0 + 0.15 * self.sample_jitter * rng.random_range(-1.0..1.0);
        let region_spectra: Vec<Vec<f64>> = [Region::Cranial, Region::Medial, Region::Caudal]
            .iter()
            .map(|&r| {
                let mut a = self.archetype(label, forces.get(r), scale)?;
                if self.region_noise_sd > 0.0 {
                    let n = Normal::new(0.0, self.region_noise_sd).expect("finite sd");
                    a.iter_mut().for_each(|v| *v += n.sample(&mut rng));
                }
                Ok(a)
            })
            .collect::<Result<_>>()?;
        let noise = Normal::new(0.0, self.noise_sd.max(f64::MIN_POSITIVE)).expect("finite sd");
        let bands = self.bands;
        let mut data = Vec::with_capacity(self.lines * self.samples * bands);
        for (p, region) in region_of.iter().enumerate() {
            let s = p % self.samples;
            for b in 0..bands {
                let base = match region {
                    Some(r) => gain * region_spectra[region_index(*r) - 1][b],
                    None => BACKGROUND_REFLECTANCE,
                };
                let n = if self.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                let refl = (base + n).clamp(0.0, 1.0);
                let d = dark.data()[s * bands + b];
                let w = white.data()[s * bands + b];
                data.push((d + refl * (w - d)).round());
            }
        }
        let raw = HyperCube::new(self.lines, self.samples, self.axis()?, data, CubeKind::Raw)?.with_storage(DataType::U16);
        Ok(SyntheticSample {
            id: format!("S{i:03}"),
            label,
            forces,
            raw,
            mask,
        })
    }
}

/// Per-sample labels and forces as written to `labels.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub sample_id: String,
    pub label: String,
    pub force_whole: f64,
    pub force_cranial: f64,
    pub force_medial: f64,
    pub force_caudal: f64,
}

impl LabelRecord {
    pub fn severity(&self) -> Result<Severity> {
        self.label.parse()
    }

    pub fn force(&self, region: Region) -> f64 {
        match region {
            Region::Whole => self.force_whole,
            Region::Cranial => self.force_cranial,
            Region::Medial => self.force_medial,
            Region::Caudal => self.force_caudal,
        }
    }
}

pub fn write_labels(path: &Path, records: &[LabelRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}

/// Files written by [`write_dataset`], relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dark: PathBuf,
    pub white: PathBuf,
    pub labels: PathBuf,
    pub spec: PathBuf,
    pub cubes: Vec<PathBuf>,
}

/// Write raw cubes, shared references, `labels.csv` and the generating spec.
pub fn write_dataset(spec: &SyntheticSpec, out: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let cube_dir = out.join("cubes");
    fs::create_dir_all(&cube_dir).map_err(|e| Error::io(&cube_dir, e))?;
    let (dark, white) = spec.references()?;
    write_cube(&dark, out.join("dark.hdr"))?;
    write_cube(&white, out.join("white.hdr"))?;
    let mut records = Vec::with_capacity(spec.total());
    let mut cubes = Vec::with_capacity(spec.total());
    for i in 0..spec.total() {
        let s = spec.sample(i, &dark, &white)?;
        let rel = PathBuf::from("cubes").join(format!("{}.hdr", s.id));
        write_cube(&s.raw, out.join(&rel))?;
        cubes.push(rel);
        let f = s.forces.0;
        records.push(LabelRecord {
            sample_id: s.id,
            label: s.label.code().to_string(),
            force_whole: f[0],
            force_cranial: f[1],
            force_medial: f[2],
            force_caudal: f[3],
        });
    }
    write_labels(&out.join("labels.csv"), &records)?;
    let spec_path = out.join("synth_spec.json");
    let mut file = fs::File::create(&spec_path).map_err(|e| Error::io(&spec_path, e))?;
    file.write_all((serde_json::to_string_pretty(spec)? + "\n").as_bytes())
        .map_err(|e| Error::io(&spec_path, e))?;
    Ok(DatasetManifest {
        dark: "dark.hdr".into(),
        white: "white.hdr".into(),
        labels: "labels.csv".into(),
        spec: "synth_spec.json".into(),
        cubes,
    })
}

/// One row per region of an extracted sample, each carrying that region's force.
pub fn sample_rows(id: &str, label: Severity, forces: impl Fn(Region) -> f64, extracted: &Extracted) -> Vec<SpectrumRow> {
    extracted
        .spectra
        .iter()
        .map(|(region, spectrum)| SpectrumRow {
            sample_id: id.to_string(),
            region: *region,
            label,
            force_n: Some(forces(*region)),
            spectrum: spectrum.clone(),
        })
        .collect()
}

/// Generate, calibrate and extract every sample in memory, returning the
/// four-region spectra table. Samples are processed in parallel.
pub fn synth_table(spec: &SyntheticSpec, config: &ExtractConfig) -> Result<SpectraTable> {
    spec.validate()?;
    let (dark, white) = spec.references()?;
    let per_sample: Vec<Vec<SpectrumRow>> = (0..spec.total())
        .into_par_iter()
        .map(|i| {
            let s = spec.sample(i, &dark, &white)?;
            let refl = calibrate_reflectance(&s.raw, &dark, &white)?.cube;
            let ex = extract_regions(&refl, config)?;
            Ok(sample_rows(&s.id, s.label, |r| s.forces.get(r), &ex))
        })
        .collect::<Result<_>>()?;
    SpectraTable::new(per_sample.into_iter().flatten().collect())
}

/// Drop rows whose compression force exceeds `ceiling_n` (strictly).
/// Returns the kept table and the number removed.
pub fn apply_outlier_filter(table: &SpectraTable, ceiling_n: f64) -> Result<(SpectraTable, usize)> {
    if !(ceiling_n > 0.0) {
        return Err(Error::OutOfRange(format!("ceiling {ceiling_n} must be positive")));
    }
    let mut kept: Vec<SpectrumRow> = Vec::with_capacity(table.len());
    for r in table.rows() {
        let f = r
            .force_n
            .ok_or_else(|| Error::Invalid(format!("row `{}` has no compression force", r.sample_id)))?;
        if f <= ceiling_n {
            kept.push(r.clone());
        }
    }
    if kept.is_empty() {
        return Err(Error::Degenerate(format!("every row exceeds {ceiling_n} N")));
    }
    let removed = table.len() - kept.len();
    Ok((SpectraTable::new(kept)?, removed))
}
