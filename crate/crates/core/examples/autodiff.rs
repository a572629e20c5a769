//! Reverse-mode gradients of a small MLP loss, checked against central
//! differences.
//!
//!     cargo run --release --example autodiff

use armtune::neural::{Activation, Matrix, MlpParams, MlpSpec, Tape};
use armtune::rng;

fn loss(params: &MlpParams, spec: &MlpSpec, x: &Matrix, y: &Matrix) -> f64 {
    let out = params.forward_batch(spec, x).unwrap();
    out.as_slice()
        .iter()
        .zip(y.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / y.rows() as f64
}

fn main() -> armtune::Result<()> {
    let spec = MlpSpec::new(3, &[16, 16], 2, Activation::Tanh);
    let mut r = rng::seeded(5);
    let params = MlpParams::init_orthogonal(&spec, 1.0, &mut r)?;
    let x = Matrix::from_vec(8, 3, armtune::neural::standard_normal(&mut r, 24));
    let y = Matrix::from_vec(8, 2, armtune::neural::standard_normal(&mut r, 16));

    let mut tape = Tape::new();
    let input = tape.constant(x.clone());
    let net = params.on_tape(&mut tape, &spec, input, true);
    let target = tape.constant(y.clone());
    let diff = tape.sub(net.output, target);
    let sq = tape.square(diff);
    let total = tape.sum(sq);
    let mse = tape.scale(total, 1.0 / 8.0);
    let grads = tape.backward(mse)?;
    let g = net.grad(&grads, &params);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut p = params.clone();
        p.flat[i] += h;
        let up = loss(&p, &spec, &x, &y);
        p.flat[i] -= 2.0 * h;
        let down = loss(&p, &spec, &x, &y);
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - g.flat[i]).abs() / fd.abs().max(g.flat[i].abs()).max(1e-8));
    }
    println!(
        "loss {:.6}, {} parameters, max relative gradient error {worst:.2e}",
        tape.value(mse).item(),
        params.len()
    );
    Ok(())
}
