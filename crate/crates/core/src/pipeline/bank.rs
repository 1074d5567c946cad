use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;

use super::PipelineError;
use crate::qtree::{Xenovert, XenovertConfig};

/// One independent tree per feature column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    trees: Vec<Xenovert>,
}

impl FeatureBank {
    /// Freshly grown trees, one per feature.
    pub fn new(config: XenovertConfig, features: usize) -> Result<Self, PipelineError> {
        let trees = (0..features)
            .map(|_| Xenovert::grow(config))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { trees })
    }

    pub fn trees(&self) -> &[Xenovert] {
        &self.trees
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn interval_count(&self) -> usize {
        self.trees.first().map_or(0, Xenovert::interval_count)
    }

    fn check_width(&self, x: &ArrayView2<f64>) -> Result<(), PipelineError> {
        if x.ncols() != self.trees.len() {
            return Err(PipelineError::Dimension {
                expected: self.trees.len(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Streams every column through its tree `passes` times, in a fresh row
    /// order for each pass.
    pub fn adapt<R: Rng + ?Sized>(
        &mut self,
        x: ArrayView2<f64>,
        passes: usize,
        rng: &mut R,
    ) -> Result<(), PipelineError> {
        self.check_width(&x)?;
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(PipelineError::NonFinite(*v));
        }
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        for _ in 0..passes {
            order.shuffle(rng);
            for (tree, column) in self.trees.iter_mut().zip(x.columns()) {
                for &r in &order {
                    tree.update(column[r])?;
                }
            }
        }
        Ok(())
    }

    /// Interval index of every cell, rows in order. With `adapt`, each value
    /// first updates its tree (online regime); without, the bank is read-only.
    pub fn transform(&mut self, x: ArrayView2<f64>, adapt: bool) -> Result<Array2<usize>, PipelineError> {
        if !adapt {
            return self.convert(x);
        }
        self.check_width(&x)?;
        let mut out = Array2::zeros(x.dim());
        for (r, row) in x.rows().into_iter().enumerate() {
            for (c, (tree, &v)) in self.trees.iter_mut().zip(row).enumerate() {
                out[[r, c]] = tree.update_convert(v)?;
            }
        }
        Ok(out)
    }

    /// Frozen conversion.
    pub fn convert(&self, x: ArrayView2<f64>) -> Result<Array2<usize>, PipelineError> {
        self.check_width(&x)?;
        let mut out = Array2::zeros(x.dim());
        for (r, row) in x.rows().into_iter().enumerate() {
            for (c, (tree, &v)) in self.trees.iter().zip(row).enumerate() {
                out[[r, c]] = tree.convert(v)?;
            }
        }
        Ok(out)
    }
}

/// Fits a bank on training data with `passes` shuffled passes.
pub fn fit_bank<R: Rng + ?Sized>(
    x_train: ArrayView2<f64>,
    config: XenovertConfig,
    passes: usize,
    rng: &mut R,
) -> Result<FeatureBank, PipelineError> {
    if x_train.nrows() == 0 {
        return Err(PipelineError::EmptySplit { side: "train" });
    }
    let mut bank = FeatureBank::new(config, x_train.ncols())?;
    bank.adapt(x_train, passes, rng)?;
    Ok(bank)
}
