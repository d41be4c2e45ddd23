use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor4};

/// Mirrors batch item `n` along W, in every channel and in its label plane.
pub fn hflip_sample<T: Real>(batch: &mut Tensor4<T>, labels: &mut [u8], n: usize) {
    let [_, c, h, w] = batch.shape();
    let s = batch.sample_mut(n);
    for row in s.chunks_exact_mut(w).take(c * h) {
        row.reverse();
    }
    for row in labels[n * h * w..(n + 1) * h * w].chunks_exact_mut(w) {
        row.reverse();
    }
}

/// Flips each batch item with probability 0.5. Labels are `N·H·W` in
/// `(n, h, w)` order and move with their pixels.
pub fn augment_hflip<T: Real>(
    mut batch: Tensor4<T>,
    mut labels: Vec<u8>,
    rng: &mut impl Rng,
) -> Result<(Tensor4<T>, Vec<u8>)> {
    let [n, _, h, w] = batch.shape();
    if labels.len() != n * h * w {
        return Err(Error::Shape(format!(
            "{} labels for a {n}x{h}x{w} batch",
            labels.len()
        )));
    }
    for i in 0..n {
        if rng.random_bool(0.5) {
            hflip_sample(&mut batch, &mut labels, i);
        }
    }
    Ok((batch, labels))
}
