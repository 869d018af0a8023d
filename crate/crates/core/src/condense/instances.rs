use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Splits a segment of `length` frames into `min(k, length)` near-equal
/// instances; the first `length mod k'` instances carry one extra frame.
pub fn split_instances(length: usize, k: usize) -> Result<Vec<usize>> {
    if length == 0 || k == 0 {
        return Err(Error::Domain(format!(
            "cannot split {length} frames into {k} instances"
        )));
    }
    let k = k.min(length);
    let (base, extra) = (length / k, length % k);
    Ok((0..k).map(|i| base + usize::from(i < extra)).collect())
}

/// Repeats code `i` for `lengths[i]` consecutive frames.
pub fn inflate_codes(codes: &Matrix, lengths: &[usize]) -> Result<Matrix> {
    if codes.rows() != lengths.len() {
        return Err(Error::Shape(format!(
            "{} codes for {} instances",
            codes.rows(),
            lengths.len()
        )));
    }
    let total: usize = lengths.iter().sum();
    let mut out = Matrix::zeros(total, codes.cols());
    let mut t = 0;
    for (k, &len) in lengths.iter().enumerate() {
        for _ in 0..len {
            out.row_mut(t).copy_from_slice(codes.row(k));
            t += 1;
        }
    }
    Ok(out)
}

/// Instance index of every frame.
pub(crate) fn instance_of_frame(lengths: &[usize]) -> Vec<usize> {
    lengths
        .iter()
        .enumerate()
        .flat_map(|(k, &len)| std::iter::repeat(k).take(len))
        .collect()
}

/// Per-segment storage reduction `ℓ·D / (K·d)`.
pub fn condensation_factor(length: usize, feature_dim: usize, k: usize, latent_dim: usize) -> Result<f64> {
    if length == 0 || feature_dim == 0 || k == 0 || latent_dim == 0 {
        return Err(Error::Domain("condensation factor needs positive arguments".into()));
    }
    Ok((length * feature_dim) as f64 / (k * latent_dim) as f64)
}
