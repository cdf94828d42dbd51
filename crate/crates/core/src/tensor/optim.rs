use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::model::{BlockName, FreezeMask, ParameterBlocks};
use crate::real::Real;
use crate::tensor::Matrix;

/// L2 norm of all gradients taken together.
pub fn global_norm<'a, T: Real>(grads: impl IntoIterator<Item = &'a Matrix<T>>) -> T {
    grads.into_iter().map(|g| g.norm_sq()).sum::<T>().sqrt()
}

/// Rescales every gradient by `threshold / norm` when the global norm
/// exceeds `threshold`. Returns the norm before clipping.
pub fn clip_gradients<T: Real>(grads: &mut [&mut Matrix<T>], threshold: T) -> Result<T> {
    if threshold <= T::zero() {
        return Err(Error::InvalidConfig("clip threshold must be positive".into()));
    }
    let norm = global_norm(grads.iter().map(|g| &**g));
    if norm > threshold {
        let k = threshold / norm;
        for g in grads.iter_mut() {
            g.scale(k);
        }
    }
    Ok(norm)
}

/// `θ ← θ − lr·∇θ` for every block the mask leaves trainable.
pub fn sgd_step<T: Real>(
    params: &mut ParameterBlocks<T>,
    grads: &ParameterBlocks<T>,
    lr: T,
    mask: &FreezeMask,
) -> Result<()> {
    params.check_same_shape(grads, "sgd_step")?;
    for block in BlockName::ALL {
        if mask.is_frozen(block) {
            continue;
        }
        for (p, (_, g)) in params.block_mut(block).into_iter().zip(grads.block(block)) {
            p.axpy(-lr, g);
        }
    }
    Ok(())
}

/// Inverted-dropout factors: each entry is `0` with probability `p`,
/// otherwise `1 / (1 - p)`.
pub fn dropout_mask<T: Real>(n: usize, p: f64, rng: &mut crate::Rng) -> Result<Vec<T>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidProbability {
            what: "dropout probability",
            value: p,
        });
    }
    let keep = T::of(1.0 / (1.0 - p));
    Ok((0..n)
        .map(|_| if p > 0.0 && rng.gen::<f64>() < p { T::zero() } else { keep })
        .collect())
}

/// Inverted dropout. Identity in eval mode or when `p == 0`.
pub fn dropout<T: Real>(x: &Matrix<T>, p: f64, rng: &mut crate::Rng, train: bool) -> Result<Matrix<T>> {
    if !train || p == 0.0 {
        dropout_mask::<T>(0, p, rng)?;
        return Ok(x.clone());
    }
    let mask = dropout_mask::<T>(x.len(), p, rng)?;
    let mut out = x.clone();
    for (v, m) in out.as_mut_slice().iter_mut().zip(mask) {
        *v *= m;
    }
    Ok(out)
}
