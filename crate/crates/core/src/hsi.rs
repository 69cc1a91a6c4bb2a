//! Hyperspectral cubes: an ENVI-compatible subset (ASCII `.hdr` + little-endian
//! `.raw`) and dark/white reflectance calibration.
//!
//! In memory a cube is stored band-interleaved-by-pixel: element
//! `(line, sample, band)` lives at `(line * samples + sample) * bands + band`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lowest and highest admissible wavelength on a band axis, in nm.
pub const WAVELENGTH_BOUNDS_NM: (f64, f64) = (300.0, 1200.0);
/// Ceiling applied to calibrated reflectance; tolerates specular highlights.
pub const REFLECTANCE_CEILING: f64 = 1.05;
/// `W - D` at or below this is a dead detector element.
pub const DEAD_PIXEL_THRESHOLD: f64 = 1e-6;
/// Default spectral range and band count of synthetic cubes.
pub const DEFAULT_RANGE_NM: (f64, f64) = (397.0, 1005.0);
pub const DEFAULT_BANDS: usize = 224;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandAxis {
    wavelengths_nm: Vec<f64>,
}

impl BandAxis {
    pub fn new(wavelengths_nm: Vec<f64>) -> Result<Self> {
        if wavelengths_nm.is_empty() {
            return Err(Error::Invalid("band axis is empty".into()));
        }
        let (lo, hi) = WAVELENGTH_BOUNDS_NM;
        if let Some(w) = wavelengths_nm.iter().find(|w| !(lo..=hi).contains(*w)) {
            return Err(Error::OutOfRange(format!("wavelength {w} nm outside [{lo}, {hi}]")));
        }
        if wavelengths_nm.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::Invalid("wavelengths must be strictly increasing".into()));
        }
        Ok(Self { wavelengths_nm })
    }

    /// `bands` evenly spaced wavelengths from `start_nm` to `end_nm` inclusive.
    pub fn linspace(start_nm: f64, end_nm: f64, bands: usize) -> Result<Self> {
        if bands == 1 {
            return Self::new(vec![start_nm]);
        }
        let step = (end_nm - start_nm) / (bands - 1) as f64;
        Self::new((0..bands).map(|i| start_nm + step * i as f64).collect())
    }

    pub fn default_axis() -> Self {
        Self::linspace(DEFAULT_RANGE_NM.0, DEFAULT_RANGE_NM.1, DEFAULT_BANDS)
            .expect("default axis is valid")
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths_nm
    }

    pub fn len(&self) -> usize {
        self.wavelengths_nm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths_nm.is_empty()
    }

    /// Index of the band nearest to `target_nm`; ties go to the lower index.
    /// Targets more than 5 nm outside the axis are rejected.
    pub fn band_index_for_wavelength(&self, target_nm: f64) -> Result<usize> {
        let w = &self.wavelengths_nm;
        let (min, max) = (w[0], w[w.len() - 1]);
        if !(target_nm >= min - 5.0 && target_nm <= max + 5.0) {
            return Err(Error::OutOfRange(format!(
                "{target_nm} nm outside axis [{min}, {max}] +/- 5 nm"
            )));
        }
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, &wl) in w.iter().enumerate() {
            let d = (wl - target_nm).abs();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        Ok(best)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CubeKind {
    Raw,
    Dark,
    White,
    Reflectance,
}

impl CubeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CubeKind::Raw => "raw",
            CubeKind::Dark => "dark",
            CubeKind::White => "white",
            CubeKind::Reflectance => "reflectance",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(CubeKind::Raw),
            "dark" => Ok(CubeKind::Dark),
            "white" => Ok(CubeKind::White),
            "reflectance" => Ok(CubeKind::Reflectance),
            other => Err(Error::Header(format!("unknown cube kind `{other}`"))),
        }
    }
}

impl fmt::Display for CubeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interleave {
    Bsq,
    Bil,
    Bip,
}

impl Interleave {
    fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bsq" => Ok(Interleave::Bsq),
            "bil" => Ok(Interleave::Bil),
            "bip" => Ok(Interleave::Bip),
            other => Err(Error::Unsupported(format!("interleave `{other}`"))),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Interleave::Bsq => "bsq",
            Interleave::Bil => "bil",
            Interleave::Bip => "bip",
        }
    }

    /// File position of element `(line, sample, band)`.
    fn file_index(self, line: usize, sample: usize, band: usize, dims: (usize, usize, usize)) -> usize {
        let (lines, samples, bands) = dims;
        match self {
            Interleave::Bsq => (band * lines + line) * samples + sample,
            Interleave::Bil => (line * bands + band) * samples + sample,
            Interleave::Bip => (line * samples + sample) * bands + band,
        }
    }
}

/// Binary payload type. ENVI codes: 4 = f32, 5 = f64, 12 = u16.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    F32,
    F64,
    U16,
}

impl DataType {
    fn code(self) -> u32 {
        match self {
            DataType::F32 => 4,
            DataType::F64 => 5,
            DataType::U16 => 12,
        }
    }

    fn from_code(code: u32) -> Result<Self> {
        match code {
            4 => Ok(DataType::F32),
            5 => Ok(DataType::F64),
            12 => Ok(DataType::U16),
            other => Err(Error::Unsupported(format!("ENVI data type {other}"))),
        }
    }

    fn size(self) -> usize {
        match self {
            DataType::F32 => 4,
            DataType::F64 => 8,
            DataType::U16 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnviHeader {
    pub samples: usize,
    pub lines: usize,
    pub bands: usize,
    pub interleave: Interleave,
    pub data_type: DataType,
    pub wavelengths: Vec<f64>,
    pub kind: CubeKind,
}

impl EnviHeader {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines_iter = text.lines();
        match lines_iter.next() {
            Some(first) if first.trim() == "ENVI" => {}
            _ => return Err(Error::Header("missing `ENVI` magic line".into())),
        }
        let mut entries: Vec<(String, String)> = Vec::new();
        let mut pending: Option<(String, String)> = None;
        for line in lines_iter {
            if let Some((key, mut value)) = pending.take() {
                value.push(' ');
                value.push_str(line.trim());
                if line.contains('}') {
                    entries.push((key, value));
                } else {
                    pending = Some((key, value));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Header(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim().to_string();
            if value.starts_with('{') && !value.contains('}') {
                pending = Some((key, value));
            } else {
                entries.push((key, value));
            }
        }
        if pending.is_some() {
            return Err(Error::Header("unterminated `{` block".into()));
        }
        let get = |k: &str| entries.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let count = |k: &str| -> Result<usize> {
            let v = get(k).ok_or_else(|| Error::Header(format!("missing `{k}`")))?;
            let n: usize = v
                .parse()
                .map_err(|_| Error::Header(format!("`{k}` is not a count: `{v}`")))?;
            if n == 0 {
                return Err(Error::Header(format!("`{k}` must be positive")));
            }
            Ok(n)
        };
        let samples = count("samples")?;
        let lines = count("lines")?;
        let bands = count("bands")?;
        let interleave = Interleave::parse(get("interleave").unwrap_or("bsq"))?;
        let code: u32 = get("data type")
            .ok_or_else(|| Error::Header("missing `data type`".into()))?
            .parse()
            .map_err(|_| Error::Header("`data type` is not an integer".into()))?;
        let data_type = DataType::from_code(code)?;
        if let Some(bo) = get("byte order") {
            if bo.trim() != "0" {
                return Err(Error::Unsupported("big-endian byte order".into()));
            }
        }
        if let Some(off) = get("header offset") {
            if off.trim() != "0" {
                return Err(Error::Unsupported("non-zero header offset".into()));
            }
        }
        let wavelengths = match get("wavelength") {
            Some(v) => {
                let inner = v
                    .trim()
                    .strip_prefix('{')
                    .and_then(|s| s.strip_suffix('}'))
                    .ok_or_else(|| Error::Header("wavelength list must be in braces".into()))?;
                inner
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::Header(format!("bad wavelength `{}`", s.trim())))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            None => return Err(Error::Header("missing `wavelength` list".into())),
        };
        if wavelengths.len() != bands {
            return Err(Error::Header(format!(
                "{} wavelengths listed for {bands} bands",
                wavelengths.len()
            )));
        }
        let kind = match get("cube kind") {
            Some(v) => CubeKind::parse(v)?,
            None => CubeKind::Raw,
        };
        Ok(Self {
            samples,
            lines,
            bands,
            interleave,
            data_type,
            wavelengths,
            kind,
        })
    }

    pub fn render(&self) -> String {
        let wl: Vec<String> = self.wavelengths.iter().map(|w| format!("{w:?}")).collect();
        format!(
            "ENVI\n\
             description = {{naswd hyperspectral cube}}\n\
             samples = {}\n\
             lines = {}\n\
             bands = {}\n\
             header offset = 0\n\
             file type = ENVI Standard\n\
             data type = {}\n\
             interleave = {}\n\
             byte order = 0\n\
             wavelength units = Nanometers\n\
             wavelength = {{{}}}\n\
             cube kind = {}\n",
            self.samples,
            self.lines,
            self.bands,
            self.data_type.code(),
            self.interleave.as_str(),
            wl.join(", "),
            self.kind,
        )
    }
}

/// A hyperspectral cube: raw counts, a dark or white reference, or reflectance.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    lines: usize,
    samples: usize,
    bands: usize,
    data: Vec<f64>,
    axis: BandAxis,
    kind: CubeKind,
    storage: DataType,
}

impl HyperCube {
    /// `data` is in line-major, band-interleaved-by-pixel order.
    pub fn new(
        lines: usize,
        samples: usize,
        axis: BandAxis,
        data: Vec<f64>,
        kind: CubeKind,
    ) -> Result<Self> {
        let bands = axis.len();
        if lines == 0 || samples == 0 {
            return Err(Error::Shape("cube dimensions must be positive".into()));
        }
        let expected = lines * samples * bands;
        if data.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                found: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("cube element {i}")));
        }
        if kind == CubeKind::Reflectance
            && data.iter().any(|&v| !(0.0..=REFLECTANCE_CEILING).contains(&v))
        {
            return Err(Error::OutOfRange(format!(
                "reflectance values must lie in [0, {REFLECTANCE_CEILING}]"
            )));
        }
        Ok(Self {
            lines,
            samples,
            bands,
            data,
            axis,
            kind,
            storage: DataType::F32,
        })
    }

    /// Payload type used by [`write_cube`].
    pub fn with_storage(mut self, storage: DataType) -> Self {
        self.storage = storage;
        self
    }

    pub fn lines(&self) -> usize {
        self.lines
    }
    pub fn samples(&self) -> usize {
        self.samples
    }
    pub fn bands(&self) -> usize {
        self.bands
    }
    pub fn pixels(&self) -> usize {
        self.lines * self.samples
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn axis(&self) -> &BandAxis {
        &self.axis
    }
    pub fn kind(&self) -> CubeKind {
        self.kind
    }
    pub fn storage(&self) -> DataType {
        self.storage
    }

    pub fn get(&self, line: usize, sample: usize, band: usize) -> f64 {
        self.data[(line * self.samples + sample) * self.bands + band]
    }

    /// Spectrum of the pixel with flat index `line * samples + sample`.
    pub fn pixel(&self, index: usize) -> &[f64] {
        &self.data[index * self.bands..(index + 1) * self.bands]
    }

    /// One band as a `lines x samples` plane.
    pub fn band_plane(&self, band: usize) -> Vec<f64> {
        self.data.iter().skip(band).step_by(self.bands).copied().collect()
    }

    fn header(&self, interleave: Interleave) -> EnviHeader {
        EnviHeader {
            samples: self.samples,
            lines: self.lines,
            bands: self.bands,
            interleave,
            data_type: self.storage,
            wavelengths: self.axis.wavelengths().to_vec(),
            kind: self.kind,
        }
    }
}

/// Companion binary path for a header: same stem, `.raw` extension.
pub fn data_path_for(header_path: &Path) -> PathBuf {
    header_path.with_extension("raw")
}

pub fn read_cube(header_path: impl AsRef<Path>) -> Result<HyperCube> {
    let header_path = header_path.as_ref();
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header = EnviHeader::parse(&text)?;
    let data_path = data_path_for(header_path);
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let size = header.data_type.size();
    let expected = header.samples * header.lines * header.bands;
    if bytes.len() % size != 0 || bytes.len() / size != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: bytes.len() / size,
        });
    }
    let values: Vec<f64> = match header.data_type {
        DataType::F32 => bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect(),
        DataType::F64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
        DataType::U16 => bytes
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_le_bytes([c[0], c[1]])))
            .collect(),
    };
    let dims = (header.lines, header.samples, header.bands);
    let data = if header.interleave == Interleave::Bip {
        values
    } else {
        let mut data = vec![0.0; expected];
        for line in 0..header.lines {
            for sample in 0..header.samples {
                for band in 0..header.bands {
                    data[(line * header.samples + sample) * header.bands + band] =
                        values[header.interleave.file_index(line, sample, band, dims)];
                }
            }
        }
        data
    };
    let axis = BandAxis::new(header.wavelengths)?;
    Ok(HyperCube::new(header.lines, header.samples, axis, data, header.kind)?.with_storage(header.data_type))
}

/// Write `cube` as band-sequential data next to its header.
pub fn write_cube(cube: &HyperCube, header_path: impl AsRef<Path>) -> Result<()> {
    write_cube_with(cube, header_path, Interleave::Bsq)
}

pub fn write_cube_with(cube: &HyperCube, header_path: impl AsRef<Path>, interleave: Interleave) -> Result<()> {
    let header_path = header_path.as_ref();
    let header = cube.header(interleave);
    let dims = (cube.lines, cube.samples, cube.bands);
    let n = cube.data.len();
    let mut ordered = vec![0.0; n];
    for line in 0..cube.lines {
        for sample in 0..cube.samples {
            for band in 0..cube.bands {
                ordered[interleave.file_index(line, sample, band, dims)] = cube.get(line, sample, band);
            }
        }
    }
    let mut bytes = Vec::with_capacity(n * cube.storage.size());
    match cube.storage {
        DataType::F32 => ordered.iter().for_each(|&v| bytes.extend_from_slice(&(v as f32).to_le_bytes())),
        DataType::F64 => ordered.iter().for_each(|&v| bytes.extend_from_slice(&v.to_le_bytes())),
        DataType::U16 => ordered
            .iter()
            .for_each(|&v| bytes.extend_from_slice(&(v.round().clamp(0.0, 65535.0) as u16).to_le_bytes())),
    }
    if let Some(parent) = header_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(header_path, header.render()).map_err(|e| Error::io(header_path, e))?;
    let data_path = data_path_for(header_path);
    fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))?;
    Ok(())
}

/// Result of [`calibrate_reflectance`].
#[derive(Debug, Clone)]
pub struct Calibrated {
    pub cube: HyperCube,
    /// Elements whose white-minus-dark difference was at or below the dead threshold.
    pub dead_pixels: usize,
}

/// Unclamped relative reflectance `(raw - dark) / (white - dark)`, or `None`
/// for a dead element.
pub fn reflectance_ratio(raw: f64, dark: f64, white: f64) -> Option<f64> {
    let span = white - dark;
    if span <= DEAD_PIXEL_THRESHOLD {
        None
    } else {
        Some((raw - dark) / span)
    }
}

/// Dark/white calibration. References may have the same number of lines as
/// `raw` or a single line that is replicated along the scan axis.
pub fn calibrate_reflectance(raw: &HyperCube, dark: &HyperCube, white: &HyperCube) -> Result<Calibrated> {
    for (cube, want) in [(raw, CubeKind::Raw), (dark, CubeKind::Dark), (white, CubeKind::White)] {
        if cube.kind != want {
            return Err(Error::Invalid(format!("expected a {want} cube, got {}", cube.kind)));
        }
    }
    for (name, r) in [("dark", dark), ("white", white)] {
        if r.samples != raw.samples || r.bands != raw.bands {
            return Err(Error::Shape(format!(
                "{name} reference is {}x{}x{}, raw is {}x{}x{}",
                r.lines, r.samples, r.bands, raw.lines, raw.samples, raw.bands
            )));
        }
        if r.lines != 1 && r.lines != raw.lines {
            return Err(Error::Shape(format!(
                "{name} reference has {} lines; expected 1 or {}",
                r.lines, raw.lines
            )));
        }
    }
    let row = raw.samples * raw.bands;
    let ref_row = |r: &HyperCube, line: usize| -> std::ops::Range<usize> {
        let l = if r.lines == 1 { 0 } else { line };
        l * row..(l + 1) * row
    };
    let mut out = vec![0.0; raw.data.len()];
    let dead: usize = out
        .par_chunks_mut(row)
        .enumerate()
        .map(|(line, out_row)| {
            let raw_row = &raw.data[line * row..(line + 1) * row];
            let d = &dark.data[ref_row(dark, line)];
            let w = &white.data[ref_row(white, line)];
            let mut dead = 0;
            for i in 0..row {
                out_row[i] = match reflectance_ratio(raw_row[i], d[i], w[i]) {
                    Some(v) => v.clamp(0.0, REFLECTANCE_CEILING),
                    None => {
                        dead += 1;
                        0.0
                    }
                };
            }
            dead
        })
        .sum();
    if dead == out.len() {
        return Err(Error::DeadReference);
    }
    // integer payloads cannot hold reflectance
    let storage = if raw.storage == DataType::F64 { DataType::F64 } else { DataType::F32 };
    let cube = HyperCube::new(raw.lines, raw.samples, raw.axis.clone(), out, CubeKind::Reflectance)?.with_storage(storage);
    Ok(Calibrated { cube, dead_pixels: dead })
}
