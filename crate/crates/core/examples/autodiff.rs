//! Reverse-mode gradients on a tape, checked against central differences.
//!
//! cargo run --release --example autodiff

use fclnet::layers::{lstm_forward, Binder, LstmCellParams, Parameterized};
use fclnet::tensor::{grad_check, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // loss = sum(sigmoid(W x + b)^2)
    let mut tape = Tape::new();
    let w = tape.leaf(Tensor::matrix(2, 3, vec![0.1, -0.2, 0.3, 0.5, 0.0, -0.4])?);
    let x = tape.constant(Tensor::vector(vec![1.0, 2.0, -1.0]));
    let b = tape.leaf(Tensor::vector(vec![0.05, -0.05]));
    let z = tape.affine(w, x, b)?;
    let s = tape.sigmoid(z)?;
    let loss = tape.sum_squares(s)?;
    tape.backward(loss)?;
    println!("loss {:.6}", tape.value(loss).data()[0]);
    println!("dL/dW {:?}", tape.grad(w).unwrap());
    println!("dL/db {:?}", tape.grad(b).unwrap());

    // the same check the test suite runs on every layer
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cell = LstmCellParams::init(2, 3, &mut rng);
    let mut params = Vec::new();
    cell.visit("", &mut |_, _, t| params.push(t.clone()));
    let inputs: Vec<Tensor> = (0..4).map(|_| Tensor::uniform(&[2], 1.0, &mut rng)).collect();
    let err = grad_check(
        |tape, vars| {
            let v = cell.bind(&mut Binder::with_leaves(tape, vars));
            let xs: Vec<_> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
            let hs = lstm_forward(tape, &xs, &v)?;
            tape.sum_squares(*hs.last().unwrap())
        },
        &params,
        1e-5,
    )?;
    println!("lstm over 4 steps: {} parameters, max relative gradient error {err:.2e}", cell.parameter_count());
    Ok(())
}
