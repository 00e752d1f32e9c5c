use super::{Result, Tape, Tensor, TensorError, Var};

/// Compares reverse-mode gradients against central finite differences.
///
/// `f` receives a fresh tape with `params` registered as leaves (in order)
/// and must return a scalar loss. The result is the maximum over every
/// parameter entry of `|analytic − numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(f: F, params: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(TensorError::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let eval = |ps: &[Tensor]| -> Result<(Tape, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        if tape.value(loss).len() != 1 {
            return Err(TensorError::NotScalar(tape.shape(loss).to_vec()));
        }
        Ok((tape, vars, loss))
    };

    let (mut tape, vars, loss) = eval(params)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| tape.grad(v).map_or_else(|| vec![0.0; p.len()], <[f64]>::to_vec))
        .collect();

    let scalar_at = |ps: &[Tensor]| -> Result<f64> {
        let (tape, _, loss) = eval(ps)?;
        let v = tape.value(loss).data()[0];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TensorError::NonFinite { op: "grad_check" })
        }
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, grads) in analytic.iter().enumerate() {
        for k in 0..grads.len() {
            let orig = work[pi].data()[k];
            work[pi].data_mut()[k] = orig + eps;
            let up = scalar_at(&work)?;
            work[pi].data_mut()[k] = orig - eps;
            let down = scalar_at(&work)?;
            work[pi].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = grads[k];
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn sum_of_squares_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = grad_check(|t, v| t.sum_squares(v[0]), &[random(&[3, 4], &mut rng)], 1e-5).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let err = grad_check(
            |t, _| Ok(t.constant(Tensor::scalar(3.0))),
            &[Tensor::vector(vec![1.0, -2.0])],
            1e-5,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn rejects_non_positive_eps() {
        assert!(grad_check(|t, v| t.sum(v[0]), &[Tensor::scalar(1.0)], 0.0).is_err());
    }

    #[test]
    fn every_primitive_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&[3, 3, 2], &mut rng);
        let b = random(&[3, 3, 2], &mut rng);
        let k = random(&[3, 3, 2, 3], &mut rng);
        let bias = random(&[3], &mut rng);
        let w = random(&[4, 5], &mut rng);
        let x = random(&[5], &mut rng);
        let wb = random(&[4], &mut rng);
        let s = random(&[1], &mut rng);

        let cases: Vec<(&str, Vec<Tensor>, Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>)> = vec![
            ("add", vec![a.clone(), b.clone()], Box::new(|t, v| {
                let y = t.add(v[0], v[1])?;
                t.sum_squares(y)
            })),
            ("sub", vec![a.clone(), b.clone()], Box::new(|t, v| {
                let y = t.sub(v[0], v[1])?;
                t.sum_squares(y)
            })),
            ("hadamard", vec![a.clone(), b.clone()], Box::new(|t, v| {
                let y = t.hadamard(v[0], v[1])?;
                t.sum_squares(y)
            })),
            ("scale", vec![a.clone()], Box::new(|t, v| {
                let y = t.scale(v[0], -1.7)?;
                t.sum_squares(y)
            })),
            ("affine", vec![w.clone(), x.clone(), wb.clone()], Box::new(|t, v| {
                let y = t.affine(v[0], v[1], v[2])?;
                let y = t.tanh(y)?;
                t.sum(y)
            })),
            ("conv2d", vec![a.clone(), k.clone(), bias.clone()], Box::new(|t, v| {
                let y = t.conv2d(v[0], v[1], Some(v[2]))?;
                t.sum_squares(y)
            })),
            ("sigmoid", vec![a.clone()], Box::new(|t, v| {
                let y = t.sigmoid(v[0])?;
                t.sum_squares(y)
            })),
            ("tanh", vec![a.clone()], Box::new(|t, v| {
                let y = t.tanh(v[0])?;
                t.sum_squares(y)
            })),
            ("repeat", vec![s.clone()], Box::new(|t, v| {
                let y = t.repeat_scalar(v[0], 3, 2)?;
                let y = t.sigmoid(y)?;
                t.sum_squares(y)
            })),
            ("reshape", vec![a.clone()], Box::new(|t, v| {
                let y = t.reshape(v[0], &[9, 2])?;
                let y = t.tanh(y)?;
                t.sum(y)
            })),
        ];
        for (name, params, f) in cases {
            let err = grad_check(|t, v| f(t, v), &params, 1e-5).unwrap();
            assert!(err < 1e-4, "{name}: {err}");
        }
    }
}
