use rand::Rng;

use super::{add_all, glorot, join, Binder, ParamKind, Parameterized};
use crate::tensor::{Result, Tape, Tensor, TensorError, Var};

/// Weights of a convolutional LSTM cell over an `rows×cols` grid.
///
/// Input and hidden paths are same-size convolutions; the cell-state
/// peepholes are full `[rows, cols, out_channels]` Hadamard tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmCellParams {
    pub rows: usize,
    pub cols: usize,
    pub kernel: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
    pub w_xi: Tensor,
    pub w_hi: Tensor,
    pub w_xf: Tensor,
    pub w_hf: Tensor,
    pub w_xc: Tensor,
    pub w_hc: Tensor,
    pub w_xo: Tensor,
    pub w_ho: Tensor,
    pub w_ci: Tensor,
    pub w_cf: Tensor,
    pub w_co: Tensor,
    pub b_i: Tensor,
    pub b_f: Tensor,
    pub b_c: Tensor,
    pub b_o: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvLstmCellVars {
    pub w_xi: Var,
    pub w_hi: Var,
    pub w_xf: Var,
    pub w_hf: Var,
    pub w_xc: Var,
    pub w_hc: Var,
    pub w_xo: Var,
    pub w_ho: Var,
    pub w_ci: Var,
    pub w_cf: Var,
    pub w_co: Var,
    pub b_i: Var,
    pub b_f: Var,
    pub b_c: Var,
    pub b_o: Var,
    pub state_shape: [usize; 3],
}

impl ConvLstmCellParams {
    pub fn zeros(rows: usize, cols: usize, kernel: (usize, usize), in_channels: usize, out_channels: usize) -> Result<Self> {
        let (kh, kw) = kernel;
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(TensorError::EvenKernel { kh, kw });
        }
        let x = || Tensor::zeros(&[kh, kw, in_channels, out_channels]);
        let h = || Tensor::zeros(&[kh, kw, out_channels, out_channels]);
        let peep = || Tensor::zeros(&[rows, cols, out_channels]);
        let v = || Tensor::zeros(&[out_channels]);
        Ok(Self {
            rows,
            cols,
            kernel,
            in_channels,
            out_channels,
            w_xi: x(),
            w_hi: h(),
            w_xf: x(),
            w_hf: h(),
            w_xc: x(),
            w_hc: h(),
            w_xo: x(),
            w_ho: h(),
            w_ci: peep(),
            w_cf: peep(),
            w_co: peep(),
            b_i: v(),
            b_f: v(),
            b_c: v(),
            b_o: v(),
        })
    }

    pub fn init<R: Rng + ?Sized>(
        rows: usize,
        cols: usize,
        kernel: (usize, usize),
        in_channels: usize,
        out_channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(rows, cols, kernel, in_channels, out_channels)?;
        let taps = kernel.0 * kernel.1;
        let lx = glorot(taps * in_channels, taps * out_channels);
        let lh = glorot(taps * out_channels, taps * out_channels);
        let xs = [kernel.0, kernel.1, in_channels, out_channels];
        let hs = [kernel.0, kernel.1, out_channels, out_channels];
        for w in [&mut p.w_xi, &mut p.w_xf, &mut p.w_xc, &mut p.w_xo] {
            *w = Tensor::uniform(&xs, lx, rng);
        }
        for w in [&mut p.w_hi, &mut p.w_hf, &mut p.w_hc, &mut p.w_ho] {
            *w = Tensor::uniform(&hs, lh, rng);
        }
        p.b_f = Tensor::ones(&[out_channels]);
        Ok(p)
    }

    pub fn state_shape(&self) -> [usize; 3] {
        [self.rows, self.cols, self.out_channels]
    }

    pub fn bind(&self, b: &mut Binder<'_>) -> ConvLstmCellVars {
        use ParamKind::{Bias, Weight};
        ConvLstmCellVars {
            w_xi: b.bind(&self.w_xi, Weight),
            w_hi: b.bind(&self.w_hi, Weight),
            w_xf: b.bind(&self.w_xf, Weight),
            w_hf: b.bind(&self.w_hf, Weight),
            w_xc: b.bind(&self.w_xc, Weight),
            w_hc: b.bind(&self.w_hc, Weight),
            w_xo: b.bind(&self.w_xo, Weight),
            w_ho: b.bind(&self.w_ho, Weight),
            w_ci: b.bind(&self.w_ci, Weight),
            w_cf: b.bind(&self.w_cf, Weight),
            w_co: b.bind(&self.w_co, Weight),
            b_i: b.bind(&self.b_i, Bias),
            b_f: b.bind(&self.b_f, Bias),
            b_c: b.bind(&self.b_c, Bias),
            b_o: b.bind(&self.b_o, Bias),
            state_shape: self.state_shape(),
        }
    }
}

macro_rules! visit_fields {
    ($self:ident, $prefix:ident, $f:ident, $($ref:tt)*) => {{
        use ParamKind::{Bias, Weight};
        let names: [(&str, ParamKind); 15] = [
            ("w_xi", Weight), ("w_hi", Weight), ("w_xf", Weight), ("w_hf", Weight),
            ("w_xc", Weight), ("w_hc", Weight), ("w_xo", Weight), ("w_ho", Weight),
            ("w_ci", Weight), ("w_cf", Weight), ("w_co", Weight),
            ("b_i", Bias), ("b_f", Bias), ("b_c", Bias), ("b_o", Bias),
        ];
        let tensors = [
            $($ref)* $self.w_xi, $($ref)* $self.w_hi, $($ref)* $self.w_xf, $($ref)* $self.w_hf,
            $($ref)* $self.w_xc, $($ref)* $self.w_hc, $($ref)* $self.w_xo, $($ref)* $self.w_ho,
            $($ref)* $self.w_ci, $($ref)* $self.w_cf, $($ref)* $self.w_co,
            $($ref)* $self.b_i, $($ref)* $self.b_f, $($ref)* $self.b_c, $($ref)* $self.b_o,
        ];
        for ((name, kind), t) in names.into_iter().zip(tensors) {
            $f(&join($prefix, name), kind, t);
        }
    }};
}

impl Parameterized for ConvLstmCellParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor)) {
        visit_fields!(self, prefix, f, &);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor)) {
        visit_fields!(self, prefix, f, &mut);
    }
}

/// One conv-LSTM step; returns `(H_t, C_t)`, each `[rows, cols, out_channels]`.
pub fn convlstm_step(tape: &mut Tape, x: Var, h_prev: Var, c_prev: Var, p: &ConvLstmCellVars) -> Result<(Var, Var)> {
    for v in [h_prev, c_prev] {
        if tape.shape(v) != p.state_shape {
            return Err(TensorError::ShapeMismatch {
                op: "convlstm_step",
                left: p.state_shape.to_vec(),
                right: tape.shape(v).to_vec(),
            });
        }
    }
    let xs = tape.shape(x);
    if xs.len() != 3 || xs[..2] != p.state_shape[..2] {
        return Err(TensorError::ShapeMismatch { op: "convlstm_step", left: p.state_shape.to_vec(), right: xs.to_vec() });
    }
    let gate = |tape: &mut Tape, wx: Var, wh: Var, wc: Var, b: Var, c: Var| -> Result<Var> {
        let xs = tape.conv2d(x, wx, Some(b))?;
        let hs = tape.conv2d(h_prev, wh, None)?;
        let cs = tape.hadamard(wc, c)?;
        let pre = add_all(tape, &[xs, hs, cs])?;
        tape.sigmoid(pre)
    };
    let i = gate(tape, p.w_xi, p.w_hi, p.w_ci, p.b_i, c_prev)?;
    let f = gate(tape, p.w_xf, p.w_hf, p.w_cf, p.b_f, c_prev)?;
    let xs = tape.conv2d(x, p.w_xc, Some(p.b_c))?;
    let hs = tape.conv2d(h_prev, p.w_hc, None)?;
    let cand = tape.add(xs, hs)?;
    let cand = tape.tanh(cand)?;
    let keep = tape.hadamard(f, c_prev)?;
    let write = tape.hadamard(i, cand)?;
    let c = tape.add(keep, write)?;
    let o = gate(tape, p.w_xo, p.w_ho, p.w_co, p.b_o, c)?;
    let tc = tape.tanh(c)?;
    let h = tape.hadamard(o, tc)?;
    Ok((h, c))
}

/// Runs a conv-LSTM cell over a sequence from zero initial states.
pub fn convlstm_forward(tape: &mut Tape, xs: &[Var], p: &ConvLstmCellVars) -> Result<Vec<Var>> {
    if xs.is_empty() {
        return Err(TensorError::InvalidArgument("convlstm_forward needs a non-empty sequence".into()));
    }
    let mut h = tape.constant(Tensor::zeros(&p.state_shape));
    let mut c = tape.constant(Tensor::zeros(&p.state_shape));
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        (h, c) = convlstm_step(tape, x, h, c, p)?;
        out.push(h);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bind(p: &ConvLstmCellParams, tape: &mut Tape) -> ConvLstmCellVars {
        p.bind(&mut Binder::new(tape))
    }

    #[test]
    fn zero_params_give_zero_state() {
        let p = ConvLstmCellParams::zeros(4, 3, (3, 3), 1, 2).unwrap();
        let mut tape = Tape::new();
        let v = bind(&p, &mut tape);
        let x = tape.constant(Tensor::filled(&[4, 3, 1], 0.8));
        let h0 = tape.constant(Tensor::zeros(&[4, 3, 2]));
        let c0 = tape.constant(Tensor::zeros(&[4, 3, 2]));
        let (h, c) = convlstm_step(&mut tape, x, h0, c0, &v).unwrap();
        assert!(tape.value(h).data().iter().all(|&z| z == 0.0));
        assert!(tape.value(c).data().iter().all(|&z| z == 0.0));
    }

    #[test]
    fn saturated_forget_gate_preserves_memory() {
        let mut p = ConvLstmCellParams::zeros(3, 3, (3, 3), 1, 2).unwrap();
        p.b_f = Tensor::filled(&[2], 20.0);
        let mut tape = Tape::new();
        let v = bind(&p, &mut tape);
        let x = tape.constant(Tensor::filled(&[3, 3, 1], 0.5));
        let h0 = tape.constant(Tensor::zeros(&[3, 3, 2]));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let prev = Tensor::uniform(&[3, 3, 2], 2.0, &mut rng);
        let c0 = tape.constant(prev.clone());
        let (_, c) = convlstm_step(&mut tape, x, h0, c0, &v).unwrap();
        for (a, b) in tape.value(c).data().iter().zip(prev.data()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn shape_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ConvLstmCellParams::init(7, 7, (3, 3), 1, 8, &mut rng).unwrap();
        let mut tape = Tape::new();
        let v = bind(&p, &mut tape);
        let x = tape.constant(Tensor::filled(&[7, 7, 1], 0.1));
        let h0 = tape.constant(Tensor::zeros(&[7, 7, 8]));
        let c0 = tape.constant(Tensor::zeros(&[7, 7, 8]));
        let (h, c) = convlstm_step(&mut tape, x, h0, c0, &v).unwrap();
        assert_eq!(tape.shape(h), &[7, 7, 8]);
        assert_eq!(tape.shape(c), &[7, 7, 8]);

        let p4 = ConvLstmCellParams::init(7, 7, (3, 3), 1, 4, &mut rng).unwrap();
        let v4 = bind(&p4, &mut tape);
        let xs: Vec<Var> = (0..8).map(|k| tape.constant(Tensor::filled(&[7, 7, 1], k as f64 / 8.0))).collect();
        let hs = convlstm_forward(&mut tape, &xs, &v4).unwrap();
        assert_eq!(hs.len(), 8);
        assert!(hs.iter().all(|&h| tape.shape(h) == [7, 7, 4]));
        assert!(convlstm_forward(&mut tape, &[], &v4).is_err());
    }

    #[test]
    fn even_kernel_rejected() {
        assert!(ConvLstmCellParams::zeros(3, 3, (2, 3), 1, 1).is_err());
    }

    #[test]
    fn zero_params_forward_is_zero() {
        let p = ConvLstmCellParams::zeros(3, 3, (3, 3), 1, 2).unwrap();
        let mut tape = Tape::new();
        let v = bind(&p, &mut tape);
        let xs: Vec<Var> = (0..3).map(|k| tape.constant(Tensor::filled(&[3, 3, 1], k as f64))).collect();
        for h in convlstm_forward(&mut tape, &xs, &v).unwrap() {
            assert!(tape.value(h).data().iter().all(|&z| z == 0.0));
        }
    }

    #[test]
    fn gradients_through_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = ConvLstmCellParams::init(3, 3, (3, 3), 1, 2, &mut rng).unwrap();
        p.w_ci = Tensor::uniform(&[3, 3, 2], 0.5, &mut rng);
        p.w_cf = Tensor::uniform(&[3, 3, 2], 0.5, &mut rng);
        p.w_co = Tensor::uniform(&[3, 3, 2], 0.5, &mut rng);
        let mut tensors = Vec::new();
        p.visit("", &mut |_, _, t| tensors.push(t.clone()));
        let inputs: Vec<Tensor> = (0..3).map(|_| Tensor::uniform(&[3, 3, 1], 1.0, &mut rng)).collect();
        let err = grad_check(
            |tape, vars| {
                let cell = ConvLstmCellVars {
                    w_xi: vars[0], w_hi: vars[1], w_xf: vars[2], w_hf: vars[3], w_xc: vars[4],
                    w_hc: vars[5], w_xo: vars[6], w_ho: vars[7], w_ci: vars[8], w_cf: vars[9],
                    w_co: vars[10], b_i: vars[11], b_f: vars[12], b_c: vars[13], b_o: vars[14],
                    state_shape: [3, 3, 2],
                };
                let xs: Vec<Var> = inputs.iter().map(|x| tape.constant(x.clone())).collect();
                let hs = convlstm_forward(tape, &xs, &cell)?;
                tape.sum_squares(*hs.last().unwrap())
            },
            &tensors,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
