//! Recurrent cells built on the differentiation tape.

mod convlstm;
mod lstm;

pub use convlstm::{convlstm_forward, convlstm_step, ConvLstmCellParams, ConvLstmCellVars};
pub use lstm::{lstm_forward, lstm_step, LstmCellParams, LstmCellVars};

use crate::tensor::{Result, Tape, Tensor, Var};

/// Whether a parameter enters the L2 penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// Uniform visiting of named parameter tensors.
///
/// Visiting order is stable and is the order in which [`Bind`] registers
/// leaves on a tape, so the two can be zipped.
pub trait Parameterized {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &Tensor));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ParamKind, &mut Tensor));

    fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, _, t| n += t.len());
        n
    }

    /// Sum of squares of every [`ParamKind::Weight`] tensor.
    fn weight_norm_sq(&self) -> f64 {
        let mut s = 0.0;
        self.visit("", &mut |_, kind, t| {
            if kind == ParamKind::Weight {
                s += t.sum_squares();
            }
        });
        s
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Glorot-uniform bound.
pub(crate) fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Registers a parameter as a tape leaf and records its handle and kind.
pub struct Binder<'t> {
    pub tape: &'t mut Tape,
    pub vars: Vec<(Var, ParamKind)>,
    preset: std::vec::IntoIter<Var>,
}

impl<'t> Binder<'t> {
    pub fn new(tape: &'t mut Tape) -> Self {
        Self { tape, vars: Vec::new(), preset: Vec::new().into_iter() }
    }

    /// Hands out already registered leaves, in order, instead of creating
    /// new ones. Useful when the caller (e.g. a gradient check) owns the
    /// leaves.
    pub fn with_leaves(tape: &'t mut Tape, leaves: &[Var]) -> Self {
        Self { tape, vars: Vec::new(), preset: leaves.to_vec().into_iter() }
    }

    pub fn bind(&mut self, t: &Tensor, kind: ParamKind) -> Var {
        let v = match self.preset.next() {
            Some(v) => {
                debug_assert_eq!(self.tape.shape(v), t.shape());
                v
            }
            None => self.tape.leaf(t.clone()),
        };
        self.vars.push((v, kind));
        v
    }
}

/// Sum of squares of every weight variable, as a tape scalar.
pub fn weight_penalty(tape: &mut Tape, vars: &[(Var, ParamKind)]) -> Result<Option<Var>> {
    let mut acc: Option<Var> = None;
    for &(v, kind) in vars {
        if kind != ParamKind::Weight {
            continue;
        }
        let sq = tape.sum_squares(v)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, sq)?,
            None => sq,
        });
    }
    Ok(acc)
}

/// Element-wise sum of several same-shaped terms.
pub(crate) fn add_all(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = tape.add(acc, t)?;
    }
    Ok(acc)
}
