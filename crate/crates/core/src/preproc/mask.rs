use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::color::LabImage;
use crate::{Error, Result};

/// Boolean fillet mask over a `lines x samples` frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub lines: usize,
    pub samples: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(lines: usize, samples: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != lines * samples {
            return Err(Error::Shape(format!(
                "mask has {} bits for a {lines}x{samples} frame",
                bits.len()
            )));
        }
        Ok(Self { lines, samples, bits })
    }

    pub fn full(lines: usize, samples: usize) -> Self {
        Self {
            lines,
            samples,
            bits: vec![true; lines * samples],
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Flat indices of the true pixels, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    /// Inclusive `(line0, sample0, line1, sample1)` of the true pixels.
    pub fn bounding_box(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bb: Option<(usize, usize, usize, usize)> = None;
        for i in self.indices() {
            let (l, s) = (i / self.samples, i % self.samples);
            bb = Some(match bb {
                None => (l, s, l, s),
                Some((l0, s0, l1, s1)) => (l0.min(l), s0.min(s), l1.max(l), s1.max(s)),
            });
        }
        bb
    }

    /// Mask as 8-bit grayscale, 255 for true and 0 for false.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Closed per-channel intervals on L*, a* and b*.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRules {
    pub l: Interval,
    pub a: Interval,
    pub b: Interval,
}

impl Default for ThresholdRules {
    fn default() -> Self {
        Self {
            l: Interval::new(35.0, 100.0),
            a: Interval::new(-10.0, 45.0),
            b: Interval::new(-5.0, 50.0),
        }
    }
}

impl ThresholdRules {
    fn validate(&self) -> Result<()> {
        for (name, iv) in [("L*", self.l), ("a*", self.a), ("b*", self.b)] {
            if !(iv.lo <= iv.hi) {
                return Err(Error::Invalid(format!("{name} interval [{}, {}] is not ordered", iv.lo, iv.hi)));
            }
        }
        Ok(())
    }

    fn accepts(&self, lab: [f64; 3]) -> bool {
        self.l.contains(lab[0]) && self.a.contains(lab[1]) && self.b.contains(lab[2])
    }
}

/// Label 4-connected components of `bits`; returns per-pixel component id
/// (`usize::MAX` for false pixels) and component sizes in raster discovery order.
fn components(bits: &[bool], lines: usize, samples: usize) -> (Vec<usize>, Vec<usize>) {
    let mut label = vec![usize::MAX; bits.len()];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..bits.len() {
        if !bits[start] || label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        label[start] = id;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (l, s) = (p / samples, p % samples);
            let mut visit = |q: usize| {
                if bits[q] && label[q] == usize::MAX {
                    label[q] = id;
                    queue.push_back(q);
                }
            };
            if l > 0 {
                visit(p - samples);
            }
            if l + 1 < lines {
                visit(p + samples);
            }
            if s > 0 {
                visit(p - 1);
            }
            if s + 1 < samples {
                visit(p + 1);
            }
        }
        sizes.push(size);
    }
    (label, sizes)
}

/// Threshold in L*a*b*, keep the largest 4-connected component (earliest in
/// raster order on ties), then fill holes: background components that do not
/// touch the frame border become foreground.
pub fn threshold_mask(lab: &LabImage, rules: &ThresholdRules) -> Result<Mask> {
    rules.validate()?;
    let (lines, samples) = (lab.lines, lab.samples);
    let raw: Vec<bool> = lab.pixels.iter().map(|&p| rules.accepts(p)).collect();
    let (label, sizes) = components(&raw, lines, samples);
    let Some(largest) = sizes.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).map(|(i, _)| i)
    else {
        return Err(Error::EmptyMask);
    };
    let kept: Vec<bool> = label.iter().map(|&id| id == largest).collect();

    let background: Vec<bool> = kept.iter().map(|&b| !b).collect();
    let (bg_label, bg_sizes) = components(&background, lines, samples);
    let mut touches_border = vec![false; bg_sizes.len()];
    for (p, &id) in bg_label.iter().enumerate() {
        if id == usize::MAX {
            continue;
        }
        let (l, s) = (p / samples, p % samples);
        if l == 0 || s == 0 || l + 1 == lines || s + 1 == samples {
            touches_border[id] = true;
        }
    }
    let bits = kept
        .iter()
        .zip(&bg_label)
        .map(|(&k, &id)| k || (id != usize::MAX && !touches_border[id]))
        .collect();
    Mask::new(lines, samples, bits)
}
