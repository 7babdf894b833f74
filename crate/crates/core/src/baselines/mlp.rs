use super::features::FeatureMatrix;
use crate::error::{Error, Result};
use crate::nn::{self, History, Sequential, Tensor, TrainConfig};

/// Rows as 32-bit feature tensors paired with their labels.
pub fn to_tensors(x: &FeatureMatrix) -> Vec<(Tensor<f32>, usize)> {
    (0..x.n_samples())
        .map(|i| {
            let row: Vec<f32> = x.row(i).iter().map(|&v| v as f32).collect();
            (
                Tensor::new(vec![row.len()], row).expect("length matches"),
                x.labels()[i],
            )
        })
        .collect()
}

/// One hidden ReLU layer trained with the network training loop.
/// `n_classes` fixes the output width even when a class is missing from `x`.
pub fn train_mlp(
    x: &FeatureMatrix,
    val: Option<&FeatureMatrix>,
    hidden_units: usize,
    n_classes: usize,
    cfg: &TrainConfig,
) -> Result<(Sequential<f32>, History)> {
    if hidden_units == 0 {
        return Err(Error::Config("mlp needs at least one hidden unit".into()));
    }
    if x.n_samples() == 0 {
        return Err(Error::EmptyData);
    }
    let mut model = Sequential::mlp(x.n_features(), hidden_units, n_classes, cfg.seed)?;
    let val = val.map(to_tensors).unwrap_or_default();
    let h = nn::train(&mut model, &to_tensors(x), &val, cfg)?;
    Ok((model, h))
}

pub fn predict_all(model: &Sequential<f32>, x: &FeatureMatrix) -> Result<Vec<usize>> {
    to_tensors(x)
        .iter()
        .map(|(t, _)| model.predict(t).map(|p| p.0))
        .collect()
}
