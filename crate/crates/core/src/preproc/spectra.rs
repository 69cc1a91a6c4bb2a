use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::hsi::{CubeKind, HyperCube};
use crate::{Error, Result};

/// Woody-breast severity grade; the discriminant is the class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    #[serde(rename = "NB")]
    Normal = 0,
    #[serde(rename = "MWB")]
    Mild = 1,
    #[serde(rename = "SWB")]
    Severe = 2,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Normal, Severity::Mild, Severity::Severe];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::OutOfRange(format!("class index {i}")))
    }

    pub fn code(self) -> &'static str {
        match self {
            Severity::Normal => "NB",
            Severity::Mild => "MWB",
            Severity::Severe => "SWB",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Severity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "NB" => Ok(Severity::Normal),
            "MWB" => Ok(Severity::Mild),
            "SWB" => Ok(Severity::Severe),
            other => Err(Error::Format(format!("unknown severity label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Whole,
    Cranial,
    Medial,
    Caudal,
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Whole => "whole",
            Region::Cranial => "cranial",
            Region::Medial => "medial",
            Region::Caudal => "caudal",
        }
    }
}

impl FromStr for Region {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "whole" => Ok(Region::Whole),
            "cranial" => Ok(Region::Cranial),
            "medial" => Ok(Region::Medial),
            "caudal" => Ok(Region::Caudal),
            other => Err(Error::Format(format!("unknown region `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    None,
    #[default]
    Snv,
    Zscore,
}

impl FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Normalization::None),
            "snv" => Ok(Normalization::Snv),
            "zscore" => Ok(Normalization::Zscore),
            other => Err(Error::Invalid(format!("unknown normalization `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub normalization: Normalization,
}

impl Spectrum {
    pub fn raw(values: Vec<f64>) -> Self {
        Self {
            values,
            normalization: Normalization::None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-band statistics fitted on a training set for z-scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScoreStats {
    pub mean: Vec<f64>,
    /// Population standard deviation; bands with `sd <= 1e-12` store 1.0.
    pub sd: Vec<f64>,
}

impl ZScoreStats {
    pub fn fit<'a>(spectra: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let rows: Vec<&[f64]> = spectra.into_iter().collect();
        let Some(first) = rows.first() else {
            return Err(Error::Invalid("z-score fit needs at least one spectrum".into()));
        };
        let bands = first.len();
        if rows.iter().any(|r| r.len() != bands) {
            return Err(Error::Shape("spectra lengths differ".into()));
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..bands).map(|b| rows.iter().map(|r| r[b]).sum::<f64>() / n).collect();
        let sd = (0..bands)
            .map(|b| {
                let var = rows.iter().map(|r| (r[b] - mean[b]).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, sd })
    }
}

/// Per-band arithmetic mean over `pixels` (flat indices) of a reflectance cube.
pub fn mean_spectrum(cube: &HyperCube, pixels: &[usize]) -> Result<Spectrum> {
    if pixels.is_empty() {
        return Err(Error::Invalid("mean spectrum of an empty pixel set".into()));
    }
    if cube.kind() != CubeKind::Reflectance {
        return Err(Error::Invalid(format!("mean spectrum needs reflectance, got {}", cube.kind())));
    }
    let mut acc = vec![0.0; cube.bands()];
    for &p in pixels {
        if p >= cube.pixels() {
            return Err(Error::OutOfRange(format!("pixel {p} outside a {}-pixel cube", cube.pixels())));
        }
        for (a, v) in acc.iter_mut().zip(cube.pixel(p)) {
            *a += v;
        }
    }
    let n = pixels.len() as f64;
    Ok(Spectrum::raw(acc.into_iter().map(|a| a / n).collect()))
}

fn snv(values: &[f64]) -> Result<Vec<f64>> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > 1e-12) {
        return Err(Error::ZeroVariance("spectrum is constant; SNV undefined".into()));
    }
    Ok(values.iter().map(|v| (v - mean) / sd).collect())
}

/// Normalize a raw spectrum. SNV uses the population standard deviation of
/// the spectrum itself; z-score needs per-band statistics from the training set.
pub fn normalize_spectrum(s: &Spectrum, method: Normalization, stats: Option<&ZScoreStats>) -> Result<Spectrum> {
    let values = match method {
        Normalization::None => s.values.clone(),
        Normalization::Snv => snv(&s.values)?,
        Normalization::Zscore => {
            let stats = stats.ok_or_else(|| Error::Invalid("z-score needs fitted training statistics".into()))?;
            if stats.mean.len() != s.len() {
                return Err(Error::Shape(format!(
                    "z-score stats have {} bands, spectrum has {}",
                    stats.mean.len(),
                    s.len()
                )));
            }
            s.values
                .iter()
                .zip(stats.mean.iter().zip(&stats.sd))
                .map(|(v, (m, sd))| (v - m) / sd)
                .collect()
        }
    };
    Ok(Spectrum {
        values,
        normalization: method,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub sample_id: String,
    pub region: Region,
    pub label: Severity,
    pub force_n: Option<f64>,
    pub spectrum: Spectrum,
}

/// Labelled spectra with a uniform band count.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectraTable {
    rows: Vec<SpectrumRow>,
}

impl SpectraTable {
    pub fn new(rows: Vec<SpectrumRow>) -> Result<Self> {
        if let Some(first) = rows.first() {
            let bands = first.spectrum.len();
            if let Some(bad) = rows.iter().find(|r| r.spectrum.len() != bands) {
                return Err(Error::Shape(format!(
                    "row `{}` has {} bands, expected {bands}",
                    bad.sample_id,
                    bad.spectrum.len()
                )));
            }
        }
        for r in &rows {
            if r.sample_id.contains([',', '\n', '"']) {
                return Err(Error::Invalid(format!("sample id `{}` contains a delimiter", r.sample_id)));
            }
            if let Some(f) = r.force_n {
                if !f.is_finite() {
                    return Err(Error::NonFinite(format!("force of `{}`", r.sample_id)));
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[SpectrumRow] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<SpectrumRow> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn bands(&self) -> usize {
        self.rows.first().map_or(0, |r| r.spectrum.len())
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> SpectraTable {
        SpectraTable {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn filter_region(&self, region: Region) -> SpectraTable {
        SpectraTable {
            rows: self.rows.iter().filter(|r| r.region == region).cloned().collect(),
        }
    }

    pub fn labels(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.label.index()).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["sample_id".to_string(), "region".into(), "label".into(), "force_n".into()];
        header.extend((0..self.bands()).map(|b| format!("b{b}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.sample_id.clone(),
                r.region.as_str().to_string(),
                r.label.code().to_string(),
                r.force_n.map(|f| format!("{f:?}")).unwrap_or_default(),
            ];
            rec.extend(r.spectrum.values.iter().map(|v| format!("{v:?}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }

    /// Read a spectra CSV; spectra come back with `normalization = none`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let fixed = ["sample_id", "region", "label", "force_n"];
        if header.len() < 4 || header.iter().take(4).ne(fixed.iter().copied()) {
            return Err(Error::Format("spectra CSV must start with sample_id,region,label,force_n".into()));
        }
        for (b, name) in header.iter().skip(4).enumerate() {
            if name != format!("b{b}") {
                return Err(Error::Format(format!("expected column b{b}, found `{name}`")));
            }
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let num = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|_| Error::Format(format!("bad number `{s}`")))
            };
            let force_n = match rec[3].trim() {
                "" => None,
                s => Some(num(s)?),
            };
            let values = rec.iter().skip(4).map(num).collect::<Result<Vec<_>>>()?;
            rows.push(SpectrumRow {
                sample_id: rec[0].to_string(),
                region: rec[1].parse()?,
                label: rec[2].parse()?,
                force_n,
                spectrum: Spectrum::raw(values),
            });
        }
        Self::new(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hsi::BandAxis;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn mean_spectrum_examples() {
        let axis = BandAxis::new(vec![400.0, 500.0, 600.0]).unwrap();
        let s = [0.2, 0.5, 0.9];
        let c = 0.6;
        let mut data = s.to_vec();
        data.extend(s.iter().map(|v| 2.0 * c - v));
        let cube = HyperCube::new(1, 2, axis.clone(), data, CubeKind::Reflectance).unwrap();
        assert_eq!(mean_spectrum(&cube, &[0]).unwrap().values, s.to_vec());
        let m = mean_spectrum(&cube, &[0, 1]).unwrap();
        assert!(m.values.iter().all(|v| (v - c).abs() < 1e-15));
        assert!(mean_spectrum(&cube, &[]).is_err());
    }

    #[test]
    fn mean_spectrum_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let axis = BandAxis::linspace(400.0, 900.0, 11).unwrap();
        let data: Vec<f64> = (0..5 * 4 * 11).map(|_| rng.random::<f64>()).collect();
        let cube = HyperCube::new(5, 4, axis, data.clone(), CubeKind::Reflectance).unwrap();
        let pixels = [1, 6, 7, 13, 19];
        let m = mean_spectrum(&cube, &pixels).unwrap();
        for b in 0..11 {
            let mut sum = 0.0;
            for &p in &pixels {
                sum += data[p * 11 + b];
            }
            assert!((m.values[b] - sum / 5.0).abs() < 1e-15);
        }
    }

    #[test]
    fn snv_rejects_constant() {
        let s = Spectrum::raw(vec![0.3; 8]);
        assert!(matches!(normalize_spectrum(&s, Normalization::Snv, None), Err(Error::ZeroVariance(_))));
        assert!(normalize_spectrum(&s, Normalization::Zscore, None).is_err());
    }

    #[test]
    fn zscore_on_training_set_is_standard() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let spectra: Vec<Vec<f64>> = (0..20).map(|_| (0..6).map(|b| rng.random::<f64>() * (b + 1) as f64).collect()).collect();
        let stats = ZScoreStats::fit(spectra.iter().map(|v| v.as_slice())).unwrap();
        let z: Vec<Vec<f64>> = spectra
            .iter()
            .map(|v| normalize_spectrum(&Spectrum::raw(v.clone()), Normalization::Zscore, Some(&stats)).unwrap().values)
            .collect();
        // recompute the statistics independently
        for b in 0..6 {
            let col: Vec<f64> = z.iter().map(|r| r[b]).collect();
            let mean = col.iter().sum::<f64>() / 20.0;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 20.0).sqrt();
            assert!(mean.abs() < 1e-12 && (sd - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn snv_is_standard_and_affine_invariant(
            values in prop::collection::vec(-5.0f64..5.0, 4..40),
            scale in 0.01f64..100.0,
            offset in -50.0f64..50.0,
        ) {
            let s = Spectrum::raw(values.clone());
            prop_assume!(normalize_spectrum(&s, Normalization::Snv, None).is_ok());
            let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - values.iter().cloned().fold(f64::INFINITY, f64::min);
            prop_assume!(spread > 1e-3);
            let a = normalize_spectrum(&s, Normalization::Snv, None).unwrap().values;
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            let sd = (a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!(mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
            let moved = Spectrum::raw(values.iter().map(|v| scale * v + offset).collect());
            let b = normalize_spectrum(&moved, Normalization::Snv, None).unwrap().values;
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn csv_round_trip_and_header() {
        let rows = vec![
            SpectrumRow {
                sample_id: "s1".into(),
                region: Region::Cranial,
                label: Severity::Severe,
                force_n: Some(21.5),
                spectrum: Spectrum::raw(vec![0.1, 0.123456789012345, 1.0 / 3.0]),
            },
            SpectrumRow {
                sample_id: "s2".into(),
                region: Region::Whole,
                label: Severity::Normal,
                force_n: None,
                spectrum: Spectrum::raw(vec![0.2, 0.3, 0.4]),
            },
        ];
        let t = SpectraTable::new(rows).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sample_id,region,label,force_n,b0,b1,b2\n"));
        assert_eq!(SpectraTable::read_csv(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn table_rejects_ragged_rows() {
        let mk = |n: usize| SpectrumRow {
            sample_id: "x".into(),
            region: Region::Whole,
            label: Severity::Mild,
            force_n: None,
            spectrum: Spectrum::raw(vec![0.0; n]),
        };
        assert!(SpectraTable::new(vec![mk(3), mk(4)]).is_err());
        assert!(SpectraTable::read_csv("sample_id,region,label,force,b0\n".as_bytes()).is_err());
    }
}
