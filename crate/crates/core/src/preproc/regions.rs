use serde::{Deserialize, Serialize};

use super::mask::Mask;
use crate::{Error, Result};

/// Which end of the principal axis is the cranial end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CranialEnd {
    #[default]
    Low,
    High,
}

/// Disjoint pixel index sets (flat `line * samples + sample` indices, ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionPartition {
    pub cranial: Vec<usize>,
    pub medial: Vec<usize>,
    pub caudal: Vec<usize>,
}

/// Unit eigenvector of the larger eigenvalue of `[[a, b], [b, c]]`, sign fixed
/// so its dominant component is positive. Isotropic spreads pick the line axis.
fn major_axis(a: f64, b: f64, c: f64) -> (f64, f64) {
    let scale = a.abs().max(c.abs()).max(b.abs()).max(f64::MIN_POSITIVE);
    if b.abs() <= 1e-12 * scale {
        return if a >= c { (1.0, 0.0) } else { (0.0, 1.0) };
    }
    let lambda = 0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let v1 = (b, lambda - a);
    let v2 = (lambda - c, b);
    let v = if v1.0.hypot(v1.1) >= v2.0.hypot(v2.1) { v1 } else { v2 };
    let n = v.0.hypot(v.1);
    let (x, y) = (v.0 / n, v.1 / n);
    if x.abs() >= y.abs() {
        if x < 0.0 {
            (-x, -y)
        } else {
            (x, y)
        }
    } else if y < 0.0 {
        (-x, -y)
    } else {
        (x, y)
    }
}

/// Split the mask into equal-count thirds along its major principal axis.
///
/// Pixels are ranked by their projection on the axis (ties by flat index);
/// rank `r` of `n` goes to third `3r / n`. With [`CranialEnd::Low`] the
/// lowest projections form the cranial region.
pub fn partition_regions(mask: &Mask, cranial_end: CranialEnd) -> Result<RegionPartition> {
    let idx = mask.indices();
    let n = idx.len();
    if n < 3 {
        return Err(Error::Invalid(format!("mask has {n} pixels; at least 3 are needed")));
    }
    let coords: Vec<(f64, f64)> = idx
        .iter()
        .map(|&p| ((p / mask.samples) as f64, (p % mask.samples) as f64))
        .collect();
    let nf = n as f64;
    let (ml, ms) = coords.iter().fold((0.0, 0.0), |acc, c| (acc.0 + c.0, acc.1 + c.1));
    let (ml, ms) = (ml / nf, ms / nf);
    let (mut sll, mut sls, mut sss) = (0.0, 0.0, 0.0);
    for &(l, s) in &coords {
        sll += (l - ml) * (l - ml);
        sls += (l - ml) * (s - ms);
        sss += (s - ms) * (s - ms);
    }
    let (ax, ay) = major_axis(sll / nf, sls / nf, sss / nf);
    let mut order: Vec<(f64, usize)> = coords
        .iter()
        .zip(&idx)
        .map(|(&(l, s), &p)| ((l - ml) * ax + (s - ms) * ay, p))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    if cranial_end == CranialEnd::High {
        order.reverse();
    }
    let mut thirds: [Vec<usize>; 3] = Default::default();
    for (rank, &(_, p)) in order.iter().enumerate() {
        thirds[rank * 3 / n].push(p);
    }
    for t in &mut thirds {
        t.sort_unstable();
    }
    let [cranial, medial, caudal] = thirds;
    Ok(RegionPartition { cranial, medial, caudal })
}
