use rand::Rng;

use super::{add_all, glorot, join, Binder, ParamKind, Parameterized};
use crate::tensor::{Result, Tape, Tensor, TensorError, Var};

/// Weights of a peephole LSTM cell mapping length-`input_len` inputs to
/// length-`hidden_len` hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub input_len: usize,
    pub hidden_len: usize,
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
pub struct LstmCellVars {
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
    pub hidden_len: usize,
}

impl LstmCellParams {
    pub fn zeros(input_len: usize, hidden_len: usize) -> Self {
        let x = || Tensor::zeros(&[hidden_len, input_len]);
        let h = || Tensor::zeros(&[hidden_len, hidden_len]);
        let v = || Tensor::zeros(&[hidden_len]);
        Self {
            input_len,
            hidden_len,
            w_xi: x(),
            w_hi: h(),
            w_xf: x(),
            w_hf: h(),
            w_xc: x(),
            w_hc: h(),
            w_xo: x(),
            w_ho: h(),
            w_ci: v(),
            w_cf: v(),
            w_co: v(),
            b_i: v(),
            b_f: v(),
            b_c: v(),
            b_o: v(),
        }
    }

    /// Glorot-uniform matrices, zero peepholes, zero biases except a forget
    /// bias of +1.
    pub fn init<R: Rng + ?Sized>(input_len: usize, hidden_len: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_len, hidden_len);
        let (lx, lh) = (glorot(input_len, hidden_len), glorot(hidden_len, hidden_len));
        for w in [&mut p.w_xi, &mut p.w_xf, &mut p.w_xc, &mut p.w_xo] {
            *w = Tensor::uniform(&[hidden_len, input_len], lx, rng);
        }
        for w in [&mut p.w_hi, &mut p.w_hf, &mut p.w_hc, &mut p.w_ho] {
            *w = Tensor::uniform(&[hidden_len, hidden_len], lh, rng);
        }
        p.b_f = Tensor::ones(&[hidden_len]);
        p
    }

    pub fn bind(&self, b: &mut Binder<'_>) -> LstmCellVars {
        use ParamKind::{Bias, Weight};
        LstmCellVars {
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
            hidden_len: self.hidden_len,
        }
    }
}

macro_rules! lstm_fields {
    ($self:ident, $prefix:ident, $f:ident, $($name:ident: $kind:ident),* $(,)?) => {
        $( $f(&join($prefix, stringify!($name)), ParamKind::$kind, &$self.$name); )*
    };
}

macro_rules! lstm_fields_mut {
    ($self:ident, $prefix:ident, $f:ident, $($name:ident: $kind:ident),* $(,)?) => {
        $( $f(&join($prefix, stringify!($name)), ParamKind::$kind, &mut $self.$name); )*
    };
}

impl Parameterized for LstmCellParams {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor)) {
        lstm_fields!(self, prefix, f,
            w_xi: Weight, w_hi: Weight, w_xf: Weight, w_hf: Weight,
            w_xc: Weight, w_hc: Weight, w_xo: Weight, w_ho: Weight,
            w_ci: Weight, w_cf: Weight, w_co: Weight,
            b_i: Bias, b_f: Bias, b_c: Bias, b_o: Bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor)) {
        lstm_fields_mut!(self, prefix, f,
            w_xi: Weight, w_hi: Weight, w_xf: Weight, w_hf: Weight,
            w_xc: Weight, w_hc: Weight, w_xo: Weight, w_ho: Weight,
            w_ci: Weight, w_cf: Weight, w_co: Weight,
            b_i: Bias, b_f: Bias, b_c: Bias, b_o: Bias);
    }
}

/// One peephole LSTM step; returns `(h_t, c_t)`.
pub fn lstm_step(tape: &mut Tape, x: Var, h_prev: Var, c_prev: Var, p: &LstmCellVars) -> Result<(Var, Var)> {
    let hl = p.hidden_len;
    for v in [h_prev, c_prev] {
        if tape.shape(v) != [hl] {
            return Err(TensorError::ShapeMismatch { op: "lstm_step", left: vec![hl], right: tape.shape(v).to_vec() });
        }
    }
    let gate = |tape: &mut Tape, wx: Var, wh: Var, wc: Var, b: Var, c: Var| -> Result<Var> {
        let xs = tape.affine(wx, x, b)?;
        let hs = tape.matvec(wh, h_prev)?;
        let cs = tape.hadamard(wc, c)?;
        let pre = add_all(tape, &[xs, hs, cs])?;
        tape.sigmoid(pre)
    };
    let i = gate(tape, p.w_xi, p.w_hi, p.w_ci, p.b_i, c_prev)?;
    let f = gate(tape, p.w_xf, p.w_hf, p.w_cf, p.b_f, c_prev)?;
    let xs = tape.affine(p.w_xc, x, p.b_c)?;
    let hs = tape.matvec(p.w_hc, h_prev)?;
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

/// Runs a cell over a sequence from zero initial states; returns every
/// hidden state.
pub fn lstm_forward(tape: &mut Tape, xs: &[Var], p: &LstmCellVars) -> Result<Vec<Var>> {
    if xs.is_empty() {
        return Err(TensorError::InvalidArgument("lstm_forward needs a non-empty sequence".into()));
    }
    let mut h = tape.constant(Tensor::zeros(&[p.hidden_len]));
    let mut c = tape.constant(Tensor::zeros(&[p.hidden_len]));
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        (h, c) = lstm_step(tape, x, h, c, p)?;
        out.push(h);
    }
    Ok(out)
}
