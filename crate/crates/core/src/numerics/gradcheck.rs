//! Central finite-difference checks for tape gradients.

use crate::error::Result;
use crate::numerics::{Graph, Tensor, Var};

/// Gradients whose norms are both below this are treated as agreeing zeros.
pub const ZERO_FLOOR: f64 = 1e-9;

/// `|a - n| / max(|a|, |n|)` over whole tensors, with a zero floor.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale < ZERO_FLOOR {
        0.0
    } else {
        diff / scale
    }
}

/// Compares analytic gradients of the scalar built by `build` against central
/// differences with step `eps`, returning one relative error per input.
pub fn check_gradients<B>(inputs: &[Tensor<f64>], eps: f64, build: B) -> Result<Vec<f64>>
where
    B: Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.leaf(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        Ok(g.value(out).data()[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut errors = Vec::with_capacity(inputs.len());
    let mut probe = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic: Vec<f64> = match grads.get(*v) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; inputs[i].len()],
        };
        let mut numeric = Vec::with_capacity(inputs[i].len());
        for j in 0..inputs[i].len() {
            let base = inputs[i].data()[j];
            probe[i].data_mut()[j] = base + eps;
            let plus = eval(&probe)?;
            probe[i].data_mut()[j] = base - eps;
            let minus = eval(&probe)?;
            probe[i].data_mut()[j] = base;
            numeric.push((plus - minus) / (2.0 * eps));
        }
        errors.push(relative_error(&analytic, &numeric));
    }
    Ok(errors)
}
