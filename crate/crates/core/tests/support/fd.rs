//! Central finite-difference gradient checking against the tape.

#![allow(dead_code)]

use bitype::nn::{Matrix, Tape, Var};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;

pub fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both are negligible.
pub fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
    let norm = |m: &Matrix| m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale < 1e-10 {
        return 0.0;
    }
    norm(&(a - b)) / scale
}

/// Largest relative error between analytic and central-difference gradients
/// of the scalar `f` with respect to each input.
pub fn max_rel_err<F>(inputs: &[Matrix], f: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = Tape::new().with_finite_checks(true);
    let vars: Vec<Var> = inputs.iter().map(|m| tape.param(m.clone())).collect();
    let loss = f(&mut tape, &vars);
    tape.backward(loss).expect("backward");
    let analytic: Vec<Matrix> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, m)| tape.grad(v).cloned().unwrap_or_else(|| Matrix::zeros(m.raw_dim())))
        .collect();

    let eval = |xs: &[Matrix]| -> f64 {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|m| t.constant(m.clone())).collect();
        let l = f(&mut t, &vs);
        t.scalar(l)
    };

    let mut worst: f64 = 0.0;
    for k in 0..inputs.len() {
        let mut numeric = Matrix::zeros(inputs[k].raw_dim());
        let mut xs = inputs.to_vec();
        for idx in 0..inputs[k].len() {
            let (r, c) = (idx / inputs[k].ncols(), idx % inputs[k].ncols());
            let x0 = inputs[k][[r, c]];
            xs[k][[r, c]] = x0 + STEP;
            let up = eval(&xs);
            xs[k][[r, c]] = x0 - STEP;
            let down = eval(&xs);
            xs[k][[r, c]] = x0;
            numeric[[r, c]] = (up - down) / (2.0 * STEP);
        }
        worst = worst.max(rel_err(&analytic[k], &numeric));
    }
    worst
}
