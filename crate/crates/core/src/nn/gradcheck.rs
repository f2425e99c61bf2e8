//! Central finite-difference verification of analytic gradients.

use std::fmt;

use super::{Differentiable, Parameters};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
const NORM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    pub name: String,
    pub params: usize,
    /// `None` when the block is empty and was skipped.
    pub rel_error: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.blocks
            .iter()
            .filter_map(|b| b.rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| !b.flagged)
    }

    pub fn flagged(&self) -> Vec<&str> {
        self.blocks
            .iter()
            .filter(|b| b.flagged)
            .map(|b| b.name.as_str())
            .collect()
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.blocks {
            match b.rel_error {
                Some(e) => writeln!(
                    f,
                    "{:<16} {:>7} params  rel_err {:.3e}{}",
                    b.name,
                    b.params,
                    e,
                    if b.flagged { "  FLAGGED" } else { "" }
                )?,
                None => writeln!(f, "{:<16} {:>7} params  skipped (empty)", b.name, b.params)?,
            }
        }
        Ok(())
    }
}

/// Compares `model`'s analytic gradient on `batch` with central differences
/// of its loss. The error of a block is `|a - n| / max(|a|, |n|, 1e-8)` with
/// `|.|` the Euclidean norm over the block.
pub fn grad_check<M: Differentiable>(
    model: &M,
    batch: &M::Batch,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = model.loss_and_gradient(batch)?;
    compare_with_finite_differences(model, &analytic, tolerance, |m| m.loss(batch))
}

/// Checks a supplied gradient against central differences of `loss`.
pub fn compare_with_finite_differences<P: Parameters>(
    params: &P,
    analytic: &P,
    tolerance: f64,
    loss: impl Fn(&P) -> Result<f64>,
) -> Result<GradCheckReport> {
    let names: Vec<String> = params.blocks().into_iter().map(|(n, _)| n).collect();
    let analytic_blocks: Vec<Vec<f64>> = analytic
        .blocks()
        .into_iter()
        .map(|(_, b)| b.iter().copied().collect())
        .collect();
    let mut probe = params.clone();
    let mut blocks = Vec::with_capacity(names.len());

    for (bi, name) in names.into_iter().enumerate() {
        let len = analytic_blocks[bi].len();
        if len == 0 {
            blocks.push(BlockCheck {
                name,
                params: 0,
                rel_error: None,
                flagged: false,
            });
            continue;
        }
        let mut numeric = Vec::with_capacity(len);
        for idx in 0..len {
            let original = nth(&mut probe, bi, idx);
            set_nth(&mut probe, bi, idx, original + FD_STEP);
            let plus = loss(&probe)?;
            set_nth(&mut probe, bi, idx, original - FD_STEP);
            let minus = loss(&probe)?;
            set_nth(&mut probe, bi, idx, original);
            numeric.push((plus - minus) / (2.0 * FD_STEP));
        }
        let a = &analytic_blocks[bi];
        let diff = norm(a.iter().zip(&numeric).map(|(x, y)| x - y));
        let scale = norm(a.iter().copied())
            .max(norm(numeric.iter().copied()))
            .max(NORM_FLOOR);
        let rel = diff / scale;
        blocks.push(BlockCheck {
            name,
            params: len,
            rel_error: Some(rel),
            flagged: !(rel < tolerance),
        });
    }
    Ok(GradCheckReport { blocks, tolerance })
}

fn norm(values: impl Iterator<Item = f64>) -> f64 {
    values.map(|v| v * v).sum::<f64>().sqrt()
}

fn nth<P: Parameters>(p: &mut P, block: usize, idx: usize) -> f64 {
    let blocks = p.blocks_mut();
    let cols = blocks[block].ncols();
    blocks[block][[idx / cols, idx % cols]]
}

fn set_nth<P: Parameters>(p: &mut P, block: usize, idx: usize, value: f64) {
    let mut blocks = p.blocks_mut();
    let cols = blocks[block].ncols();
    blocks[block][[idx / cols, idx % cols]] = value;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use ndarray::{array, Array2};

    /// Quadratic loss `sum(w^2) + 3 sum(b)` on a bare dense layer.
    fn quadratic(p: &Dense) -> Result<f64> {
        Ok(p.w.iter().map(|v| v * v).sum::<f64>() + 3.0 * p.b.sum())
    }

    fn quadratic_grad(p: &Dense) -> Dense {
        Dense {
            w: &p.w * 2.0,
            b: Array2::from_elem(p.b.dim(), 3.0),
        }
    }

    #[test]
    fn exact_gradient_passes() {
        let p = Dense::from_parts(array![[0.3, -1.2], [2.0, 0.1]], vec![0.5, -0.5]).unwrap();
        let report =
            compare_with_finite_differences(&p, &quadratic_grad(&p), 1e-4, quadratic).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.max_error() < 1e-8);
    }

    #[test]
    fn doubled_block_is_flagged() {
        let p = Dense::from_parts(array![[0.3, -1.2], [2.0, 0.1]], vec![0.5, -0.5]).unwrap();
        let mut g = quadratic_grad(&p);
        g.w *= 2.0;
        let report = compare_with_finite_differences(&p, &g, 1e-4, quadratic).unwrap();
        assert_eq!(report.flagged(), vec!["w"]);
    }

    #[test]
    fn empty_block_is_skipped() {
        let p = Dense::zeros(0, 2);
        let report =
            compare_with_finite_differences(&p, &quadratic_grad(&p), 1e-4, quadratic).unwrap();
        assert_eq!(report.blocks[0].rel_error, None);
        assert!(report.passed());
        assert!(report.to_string().contains("skipped"));
    }
}
