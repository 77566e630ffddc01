#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s2fin_core::autodiff::{Tape, Var};
use s2fin_core::gradcheck::{grad_check_with, GradCheckConfig, GradCheckReport};
use s2fin_core::params::{Bound, ParamBuilder};
use s2fin_core::{ModelParams, Result, Tensor};

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Builds a module under `scope` with a fixed initialization seed.
pub fn build<T>(scope: &str, f: impl FnOnce(&mut ParamBuilder<'_>) -> Result<T>) -> (T, ModelParams) {
    let mut params = ModelParams::new();
    let mut init = rng(17);
    let module = {
        let mut b = ParamBuilder::new(&mut params, &mut init);
        let mut s = b.scope(scope);
        f(&mut s).unwrap()
    };
    (module, params)
}

/// Evaluates `f` on a fresh tape and returns the output value.
pub fn eval(params: &ModelParams, f: impl Fn(&Tape<'_>, &Bound) -> Var) -> Tensor {
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let out = f(&tape, &bound);
    tape.value(out)
}

/// Finite-difference check of every parameter leaf against the loss
/// `Σ r ⊙ f(params)` for a fixed random `r`.
pub fn check_module(
    params: &mut ModelParams,
    config: &GradCheckConfig,
    f: impl Fn(&Tape<'_>, &Bound) -> Var,
) -> GradCheckReport {
    let loss = |p: &ModelParams, grad: bool| -> (f64, Vec<Vec<f64>>) {
        let tape = Tape::new();
        let bound = p.bind(&tape);
        let out = f(&tape, &bound);
        let n = tape.shape(out).iter().product::<usize>();
        let mut r = rng(123);
        let w = Tensor::from_vec(&[n], (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let flat = tape.reshape(out, &[n]);
        let l = tape.sum(tape.mul(flat, tape.constant(w)));
        if grad {
            tape.backward(l);
            (tape.scalar(l), bound.gradients(&tape))
        } else {
            (tape.scalar(l), Vec::new())
        }
    };
    let (_, grads) = loss(params, true);
    grad_check_with(params, &grads, |p| Ok(loss(p, false).0), config).unwrap()
}

pub fn assert_report(report: &GradCheckReport) {
    for leaf in &report.leaves {
        assert!(leaf.passed, "{} rel error {:.3e}", leaf.path, leaf.max_rel_error);
    }
}
