//! Checks analytic gradients against central differences, then trains a small
//! network with plain SGD.

use lattice_cl::learners::{sgd_step, Activation, DenseNet};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(net: &DenseNet, x: &Array2<f64>, y: &[usize]) -> f64 {
    net.backward_ce(x.view(), y, None).unwrap().0
}

fn main() -> lattice_cl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = DenseNet::new(&[4, 8, 3], Activation::Tanh, &mut rng)?;
    let x = Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0));
    let y: Vec<usize> = (0..6).map(|i| i % 3).collect();

    let (_, grads) = net.backward_ce(x.view(), &y, None)?;
    let analytic = grads.flat();
    let theta = net.params_flat();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        let mut t = theta.clone();
        t[i] += 1e-5;
        probe.set_params_flat(&t)?;
        let up = loss(&probe, &x, &y);
        t[i] -= 2e-5;
        probe.set_params_flat(&t)?;
        let numeric = (up - loss(&probe, &x, &y)) / 2e-5;
        worst = worst.max((analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-6));
    }
    println!("{} parameters, max relative error {worst:.2e}", theta.len());

    let mut net = net;
    for epoch in 0..=200 {
        let (l, g) = net.backward_ce(x.view(), &y, None)?;
        if epoch % 50 == 0 {
            println!("epoch {epoch:>3} loss {l:.4}");
        }
        sgd_step(&mut net, &g, 0.1)?;
    }
    Ok(())
}
