use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::check_gradients;
use super::*;
use crate::error::Result;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    Tensor::from_fn(&[rows, cols], |_| rng.random_range(-1.0..1.0))
}

/// Projects a node onto a fixed random direction so every output element
/// contributes to the scalar.
fn project(g: &mut Graph<'_, f64>, x: Var, seed: u64) -> Result<Var> {
    let shape = g.value(x).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = g.leaf(Tensor::from_fn(&shape, |_| rng.random_range(-1.0..1.0)));
    let p = g.mul(x, w)?;
    Ok(g.sum(p))
}

fn assert_grads(name: &str, inputs: &[Tensor<f64>], build: impl Fn(&mut Graph<'_, f64>, &[Var]) -> Result<Var>) {
    let errs = check_gradients(inputs, EPS, build).unwrap();
    for (i, e) in errs.iter().enumerate() {
        assert!(*e < TOL, "{name}: input {i} rel err {e}");
    }
}

#[test]
fn op_gradients_match_central_differences() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&mut rng, 3, 3);
        let b = random(&mut rng, 3, 3);
        let row = random(&mut rng, 1, 3);
        let pos = a.map(|v| v.abs() + 0.5);

        assert_grads("matmul", &[a.clone(), b.clone()], |g, v| {
            let y = g.matmul(v[0], v[1])?;
            project(g, y, seed)
        });
        assert_grads("matmul_nt", &[a.clone(), b.clone()], |g, v| {
            let y = g.matmul_nt(v[0], v[1])?;
            project(g, y, seed)
        });
        assert_grads("add", &[a.clone(), b.clone()], |g, v| {
            let y = g.add(v[0], v[1])?;
            project(g, y, seed)
        });
        assert_grads("add_row", &[a.clone(), row.clone()], |g, v| {
            let y = g.add_row(v[0], v[1])?;
            project(g, y, seed)
        });
        assert_grads("mul", &[a.clone(), b.clone()], |g, v| {
            let y = g.mul(v[0], v[1])?;
            project(g, y, seed)
        });
        assert_grads("scale", &[a.clone()], |g, v| {
            let y = g.scale(v[0], -1.7);
            project(g, y, seed)
        });
        assert_grads("concat_cols", &[a.clone(), b.clone()], |g, v| {
            let y = g.concat_cols(&[v[0], v[1]])?;
            project(g, y, seed)
        });
        assert_grads("concat_rows", &[a.clone(), row.clone()], |g, v| {
            let y = g.concat_rows(&[v[0], v[1]])?;
            project(g, y, seed)
        });
        assert_grads("slice_cols", &[a.clone()], |g, v| {
            let y = g.slice_cols(v[0], 1, 2)?;
            project(g, y, seed)
        });
        assert_grads("gather_rows", &[a.clone()], |g, v| {
            let y = g.gather_rows(v[0], &[2, 0, 2, 1])?;
            project(g, y, seed)
        });
        let mask: AllowMask = Arc::from(vec![true, false, true, false, true, false, true, true, true]);
        assert_grads("masked_softmax", &[a.clone()], |g, v| {
            let y = g.masked_softmax(v[0], Some(&mask))?;
            project(g, y, seed)
        });
        assert_grads("softmax", &[a.clone()], |g, v| {
            let y = g.masked_softmax(v[0], None)?;
            project(g, y, seed)
        });
        assert_grads("layer_norm", &[a.clone(), row.clone(), random(&mut rng, 1, 3)], |g, v| {
            let y = g.layer_norm(v[0], v[1], v[2])?;
            project(g, y, seed)
        });
        assert_grads("gelu", &[a.clone()], |g, v| {
            let y = g.gelu(v[0]);
            project(g, y, seed)
        });
        assert_grads("exp", &[a.clone()], |g, v| {
            let y = g.exp(v[0]);
            project(g, y, seed)
        });
        assert_grads("ln", &[pos.clone()], |g, v| {
            let y = g.ln(v[0]);
            project(g, y, seed)
        });
        assert_grads("cross_entropy", &[a.clone()], |g, v| g.cross_entropy(v[0], &[0, 2, 1]));
    }
}

#[test]
fn masked_softmax_single_allowed_is_one() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::matrix(1, 4, vec![3.0, -1.0, 7.5, 0.0]).unwrap());
    let mask: AllowMask = Arc::from(vec![false, true, false, false]);
    let y = g.masked_softmax(x, Some(&mask)).unwrap();
    assert_eq!(g.value(y).data(), &[0.0, 1.0, 0.0, 0.0]);
}

#[test]
fn masked_softmax_rows_are_distributions_with_zero_masked_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.random_range(1..8);
        let allow: Vec<bool> = (0..n * n)
            .map(|k| k % (n + 1) == 0 || rng.random_bool(0.5))
            .collect();
        let mask: AllowMask = Arc::from(allow.clone());
        let mut g = Graph::<f64>::new();
        let x = g.leaf(random(&mut rng, n, n));
        let y = g.masked_softmax(x, Some(&mask)).unwrap();
        let loss = project(&mut g, y, 3).unwrap();
        let yv = g.value(y).clone();
        for r in 0..n {
            let s: f64 = yv.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            for c in 0..n {
                if !allow[r * n + c] {
                    assert_eq!(yv.get(r, c), 0.0);
                }
            }
        }
        let grads = g.backward(loss).unwrap();
        let gx = grads.get(x).unwrap();
        for (k, &ok) in allow.iter().enumerate() {
            if !ok {
                assert_eq!(gx.data()[k], 0.0);
            }
        }
    }
}

#[test]
fn masked_softmax_rejects_empty_rows() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::matrix(2, 2, vec![0.0; 4]).unwrap());
    let mask: AllowMask = Arc::from(vec![true, false, false, false]);
    assert!(g.masked_softmax(x, Some(&mask)).is_err());
}

#[test]
fn shape_mismatches_are_errors() {
    let mut g = Graph::<f64>::new();
    let a = g.leaf(Tensor::zeros(&[2, 3]));
    let b = g.leaf(Tensor::zeros(&[2, 3]));
    assert!(g.matmul(a, b).is_err());
    assert!(g.matmul_nt(a, b).is_ok());
    let r = g.leaf(Tensor::zeros(&[1, 2]));
    assert!(g.add_row(a, r).is_err());
    assert!(g.cross_entropy(a, &[0]).is_err());
    assert!(g.cross_entropy(a, &[0, 3]).is_err());
}

#[test]
fn cross_entropy_matches_naive_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let logits: Vec<f64> = (0..6).map(|_| rng.random_range(-4.0..4.0)).collect();
        let gold = rng.random_range(0..6);
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        let naive = -(logits[gold].exp() / z).ln();
        let mut g = Graph::<f64>::new();
        let x = g.leaf(Tensor::row_vector(logits));
        let l = g.cross_entropy(x, &[gold]).unwrap();
        assert!((g.value(l).data()[0] - naive).abs() < 1e-12);
    }
}

#[test]
fn cross_entropy_uniform_is_log_classes() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::row_vector(vec![0.25; 4]));
    let l = g.cross_entropy(x, &[2]).unwrap();
    assert!((g.value(l).data()[0] - 4f64.ln()).abs() < 1e-15);
}
