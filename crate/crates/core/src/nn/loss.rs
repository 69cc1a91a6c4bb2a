use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Softmax cross-entropy against an integer class index.
    SparseCce,
    /// Mean squared error over the output components.
    Mse,
}

#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Class(usize),
    Values(&'a [f64]),
}

/// Batch targets: one class index per row, or an `n x k` value matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Array2<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(rows.iter().map(|&i| c[i]).collect()),
            Targets::Values(v) => Targets::Values(v.select(ndarray::Axis(0), rows)),
        }
    }

    fn row(&self, i: usize) -> Target<'_> {
        match self {
            Targets::Classes(c) => Target::Class(c[i]),
            Targets::Values(v) => Target::Values(v.row(i).to_slice().expect("standard layout")),
        }
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Loss for one output vector and its gradient with respect to that output.
pub fn loss_and_grad(output: &[f64], target: Target<'_>, kind: LossKind) -> Result<(f64, Vec<f64>)> {
    match (kind, target) {
        (LossKind::SparseCce, Target::Class(t)) => {
            if t >= output.len() {
                return Err(Error::OutOfRange(format!("class {t} with {} logits", output.len())));
            }
            let max = output.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + output.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
            let mut grad = softmax(output);
            grad[t] -= 1.0;
            Ok((lse - output[t], grad))
        }
        (LossKind::Mse, Target::Values(t)) => {
            if t.len() != output.len() {
                return Err(Error::Shape(format!("{} outputs vs {} targets", output.len(), t.len())));
            }
            let n = output.len() as f64;
            let loss = output.iter().zip(t).map(|(o, y)| (o - y) * (o - y)).sum::<f64>() / n;
            let grad = output.iter().zip(t).map(|(o, y)| 2.0 * (o - y) / n).collect();
            Ok((loss, grad))
        }
        (LossKind::SparseCce, Target::Values(_)) => Err(Error::Invalid("cross-entropy needs class targets".into())),
        (LossKind::Mse, Target::Class(_)) => Err(Error::Invalid("mse needs value targets".into())),
    }
}

/// Mean loss over the batch and its gradient (already divided by the batch size).
pub fn batch_loss_and_grad(outputs: ArrayView2<f64>, targets: &Targets, kind: LossKind) -> Result<(f64, Array2<f64>)> {
    let n = outputs.nrows();
    if n != targets.len() || n == 0 {
        return Err(Error::Shape(format!("{n} outputs vs {} targets", targets.len())));
    }
    let mut grad = Array2::zeros(outputs.raw_dim());
    let mut total = 0.0;
    for i in 0..n {
        let row = outputs.row(i);
        let row = row.as_slice().map(<[f64]>::to_vec).unwrap_or_else(|| row.to_vec());
        let (l, g) = loss_and_grad(&row, targets.row(i), kind)?;
        total += l;
        for (dst, v) in grad.row_mut(i).iter_mut().zip(g) {
            *dst = v / n as f64;
        }
    }
    Ok((total / n as f64, grad))
}
