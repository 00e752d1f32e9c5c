//! A conv-LSTM over a short grid sequence, and its collapse to a plain
//! LSTM on a 1x1 grid with 1x1 kernels.
//!
//! cargo run --release --example layers

use fclnet::layers::{convlstm_forward, convlstm_step, lstm_step, Binder, ConvLstmCellParams, LstmCellParams};
use fclnet::tensor::{Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let cell = ConvLstmCellParams::init(5, 5, (3, 3), 1, 4, &mut rng)?;
    let mut tape = Tape::new();
    let v = cell.bind(&mut Binder::new(&mut tape));
    let xs: Vec<_> = (0..6).map(|_| tape.constant(Tensor::uniform(&[5, 5, 1], 1.0, &mut rng))).collect();
    let hs = convlstm_forward(&mut tape, &xs, &v)?;
    let last = tape.value(*hs.last().unwrap());
    println!("6 steps on a 5x5 grid: hidden state {:?}, |h| {:.4}", last.shape(), last.sum_squares().sqrt());

    // copy LSTM weights into a 1x1 conv-LSTM and compare one step
    let lstm = LstmCellParams::init(1, 1, &mut rng);
    let mut conv = ConvLstmCellParams::zeros(1, 1, (1, 1), 1, 1)?;
    let copy = |t: &Tensor, shape: &[usize]| t.reshape(shape);
    conv.w_xi = copy(&lstm.w_xi, &[1, 1, 1, 1])?;
    conv.w_hi = copy(&lstm.w_hi, &[1, 1, 1, 1])?;
    conv.w_xf = copy(&lstm.w_xf, &[1, 1, 1, 1])?;
    conv.w_hf = copy(&lstm.w_hf, &[1, 1, 1, 1])?;
    conv.w_xc = copy(&lstm.w_xc, &[1, 1, 1, 1])?;
    conv.w_hc = copy(&lstm.w_hc, &[1, 1, 1, 1])?;
    conv.w_xo = copy(&lstm.w_xo, &[1, 1, 1, 1])?;
    conv.w_ho = copy(&lstm.w_ho, &[1, 1, 1, 1])?;
    conv.w_ci = copy(&lstm.w_ci, &[1, 1, 1])?;
    conv.w_cf = copy(&lstm.w_cf, &[1, 1, 1])?;
    conv.w_co = copy(&lstm.w_co, &[1, 1, 1])?;
    conv.b_i = lstm.b_i.clone();
    conv.b_f = lstm.b_f.clone();
    conv.b_c = lstm.b_c.clone();
    conv.b_o = lstm.b_o.clone();

    let mut tape = Tape::new();
    let lv = lstm.bind(&mut Binder::new(&mut tape));
    let cv = conv.bind(&mut Binder::new(&mut tape));
    let x = tape.constant(Tensor::vector(vec![0.7]));
    let h = tape.constant(Tensor::vector(vec![-0.2]));
    let c = tape.constant(Tensor::vector(vec![0.4]));
    let xg = tape.constant(Tensor::new(vec![1, 1, 1], vec![0.7])?);
    let hg = tape.constant(Tensor::new(vec![1, 1, 1], vec![-0.2])?);
    let cg = tape.constant(Tensor::new(vec![1, 1, 1], vec![0.4])?);
    let (h1, c1) = lstm_step(&mut tape, x, h, c, &lv)?;
    let (h2, c2) = convlstm_step(&mut tape, xg, hg, cg, &cv)?;
    println!("lstm      h {:.15} c {:.15}", tape.value(h1).data()[0], tape.value(c1).data()[0]);
    println!("conv-lstm h {:.15} c {:.15}", tape.value(h2).data()[0], tape.value(c2).data()[0]);
    Ok(())
}
