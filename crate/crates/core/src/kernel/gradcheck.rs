use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::param::Parameterized;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Compares tape gradients with central differences.
///
/// `forward` records a scalar loss for `model` on a fresh tape. Up to
/// `coords` parameter coordinates are drawn with `seed` (all of them when
/// there are fewer), and the largest
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)` is returned. The
/// floor keeps coordinates whose gradient is below what central differences
/// can resolve from dominating the result.
/// Gradients in `model` are overwritten with the analytic values.
pub fn finite_difference_check<M, F>(model: &mut M, forward: F, eps: f64, coords: usize, seed: u64) -> Result<f64>
where
    M: Parameterized,
    F: Fn(&M, &mut Tape) -> Result<Var>,
{
    let eval = |m: &M| -> Result<f64> {
        let mut tape = Tape::new();
        let v = forward(m, &mut tape)?;
        tape.value(v).item().ok_or_else(|| Error::Usage("forward closure must return a scalar".into()))
    };

    model.zero_grad();
    let mut tape = Tape::new();
    let loss = forward(model, &mut tape)?;
    tape.backward_into(loss, model)?;

    let sizes: Vec<usize> = model.parameters().iter().map(|p| p.values().len()).collect();
    let total: usize = sizes.iter().sum();
    let chosen: Vec<usize> = if coords >= total {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, total, coords).into_vec();
        picked.sort_unstable();
        picked
    };

    let mut worst: f64 = 0.0;
    for flat in chosen {
        let (mut p_idx, mut offset) = (0, flat);
        while offset >= sizes[p_idx] {
            offset -= sizes[p_idx];
            p_idx += 1;
        }
        let analytic = model.parameters()[p_idx].grad().data()[offset];
        let original = model.parameters()[p_idx].values().data()[offset];

        model.parameters_mut()[p_idx].values_mut().data_mut()[offset] = original + eps;
        let plus = eval(model)?;
        model.parameters_mut()[p_idx].values_mut().data_mut()[offset] = original - eps;
        let minus = eval(model)?;
        model.parameters_mut()[p_idx].values_mut().data_mut()[offset] = original;

        let numeric = (plus - minus) / (2.0 * eps);
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{Parameter, Tensor};
    use rand::Rng;

    /// y = x·W + b over a fixed batch.
    fn linear_model(seed: u64) -> (Vec<Parameter>, Tensor, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Parameter::uniform_fan_in("w", 3, 2, 3, &mut rng);
        let b = Parameter::uniform_fan_in("b", 1, 2, 3, &mut rng);
        let x = Tensor::from_vec(4, 3, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let y = Tensor::from_vec(4, 2, (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
        (vec![w, b], x, y)
    }

    #[test]
    fn quadratic_loss_on_linear_map() {
        let (mut params, x, y) = linear_model(11);
        let forward = |m: &Vec<Parameter>, tape: &mut Tape| {
            let xin = tape.constant(x.clone());
            let w = tape.param(&m[0]);
            let b = tape.param(&m[1]);
            let xw = tape.matmul(xin, w);
            let pred = tape.add_row(xw, b);
            tape.mse(pred, &y)
        };
        let err = finite_difference_check(&mut params, forward, 1e-5, usize::MAX, 0).unwrap();
        assert!(err < 1e-6, "{err}");

        // Closed form: dL/dW = 2/N · xᵀ(xW + b - y).
        let resid = {
            let mut r = x.matmul(params[0].values());
            for i in 0..r.rows() {
                for j in 0..2 {
                    r.set(i, j, r.get(i, j) + params[1].values().get(0, j) - y.get(i, j));
                }
            }
            r
        };
        for a in 0..3 {
            for j in 0..2 {
                let g: f64 = (0..4).map(|i| x.get(i, a) * resid.get(i, j)).sum::<f64>() * 2.0 / 8.0;
                assert!((params[0].grad().get(a, j) - g).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_function_reports_zero() {
        let mut params = vec![Parameter::new("w", Tensor::row_vector(vec![1.0, 2.0]))];
        let forward = |_: &Vec<Parameter>, tape: &mut Tape| Ok(tape.constant(Tensor::scalar(0.0)));
        assert_eq!(finite_difference_check(&mut params, forward, 1e-5, 10, 0).unwrap(), 0.0);
    }

    #[test]
    fn elementwise_ops_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = vec![Parameter::uniform_fan_in("a", 3, 4, 1, &mut rng), Parameter::uniform_fan_in("t", 5, 4, 1, &mut rng)];
        let forward = |m: &Vec<Parameter>, tape: &mut Tape| {
            let a = tape.param(&m[0]);
            let table = tape.param(&m[1]);
            let rows = tape.gather_rows(table, &[4, 1, 4])?;
            let s = tape.sigmoid(a);
            let t = tape.tanh(rows);
            let om = tape.one_minus(s);
            let p = tape.mul(om, t);
            let q = tape.scale(p, 1.7);
            let sl = tape.slice_cols(q, 1, 4);
            tape.cross_entropy(sl, &[0, 2, 1])
        };
        let err = finite_difference_check(&mut params, forward, 1e-5, usize::MAX, 0).unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
