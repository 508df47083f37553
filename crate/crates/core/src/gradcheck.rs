//! Finite-difference verification of analytic gradients.

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Compare the analytic gradient of a scalar-valued function against central
/// finite differences, elementwise over every input, and return the worst
/// relative error (|analytic| + |numeric| + 1e-12 in the denominator).
pub fn grad_check<F>(f: F, inputs: &[Tensor], step: f64) -> Result<f64>
where
    F: Fn(&[Var]) -> Result<Var>,
{
    grad_check_sampled(f, inputs, step, None, 0)
}

/// Like [`grad_check`], but optionally checking at most `max_per_input`
/// randomly chosen elements of each input. Used for composites whose full
/// elementwise sweep would be too slow.
pub fn grad_check_sampled<F>(
    f: F,
    inputs: &[Tensor],
    step: f64,
    max_per_input: Option<usize>,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&[Var]) -> Result<Var>,
{
    let leaves: Vec<Var> = inputs.iter().map(|t| Var::leaf(t.clone())).collect();
    let out = f(&leaves)?;
    if out.data().len() != 1 {
        return Err(Error::shape(
            "grad_check",
            format!("function must produce a scalar, got {:?}", out.shape()),
        ));
    }
    if !out.data().all_finite() {
        return Err(Error::NonFinite("grad_check forward output".to_string()));
    }
    out.backward()?;
    let analytic: Vec<Tensor> = leaves
        .iter()
        .map(|l| l.grad().unwrap_or_else(|| Tensor::zeros(l.shape())))
        .collect();

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let vars: Vec<Var> = xs.iter().map(|t| Var::constant(t.clone())).collect();
        let v = f(&vars)?;
        let y = v.data().data()[0];
        if !y.is_finite() {
            return Err(Error::NonFinite("grad_check perturbed forward".to_string()));
        }
        Ok(y)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let mut indices: Vec<usize> = (0..input.len()).collect();
        if let Some(cap) = max_per_input {
            if indices.len() > cap {
                indices.shuffle(&mut rng);
                indices.truncate(cap);
            }
        }
        for j in indices {
            let orig = input.data()[j];
            work[i].data_mut()[j] = orig + step;
            let plus = eval(&work)?;
            work[i].data_mut()[j] = orig - step;
            let minus = eval(&work)?;
            work[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[i].data()[j];
            // Below the central-difference noise floor the relative measure is
            // meaningless; agreement at absolute scale is accepted there.
            if a.abs() < 1e-8 && numeric.abs() < 1e-8 {
                continue;
            }
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs() + 1e-12);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{scale, sum_all};

    #[test]
    fn linear_map_is_exact() {
        let x = Tensor::from_vec(&[4], vec![0.5, -1.0, 2.0, 3.0]).unwrap();
        let err = grad_check(|vs| Ok(sum_all(&scale(&vs[0], 3.0))), &[x], 1e-5).unwrap();
        assert!(err < 1e-10, "err = {err}");
    }
}
