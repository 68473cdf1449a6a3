//! Compares the analytic gradients of a small copy of the inference network
//! with central finite differences.
//!
//! ```text
//! cargo run --example gradient_check
//! ```

use actbench::nn::{LayerSpec, Network, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> actbench::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let layers = vec![
        LayerSpec::conv(6, 4, 3, 2),
        LayerSpec::Relu,
        LayerSpec::conv(4, 8, 3, 2),
        LayerSpec::Relu,
        LayerSpec::GlobalAvgPool,
        LayerSpec::dense(8, 2),
    ];
    let mut net = Network::new(vec![6, 16, 16], layers, &mut rng)?;
    let x = Tensor::new(
        vec![2, 6, 16, 16],
        (0..2 * 6 * 256).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?;
    let upstream = Tensor::new(vec![2, 2], vec![1.0, -0.5, 0.3, 2.0])?;
    let grads = net.backward(&x, &upstream)?;
    let objective = |n: &Network| -> f64 {
        n.forward(&x)
            .unwrap()
            .data()
            .iter()
            .zip(upstream.data())
            .map(|(a, b)| a * b)
            .sum()
    };

    let h = 1e-5;
    println!(
        "{} parameters in {} tensors",
        net.num_parameters(),
        net.params().len()
    );
    for p in 0..net.params().len() {
        let mut worst: f64 = 0.0;
        for k in 0..net.params()[p].len() {
            let orig = net.params()[p].data()[k];
            net.params_mut()[p].data_mut()[k] = orig + h;
            let plus = objective(&net);
            net.params_mut()[p].data_mut()[k] = orig - h;
            let minus = objective(&net);
            net.params_mut()[p].data_mut()[k] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let an = grads.params[p][k];
            worst = worst.max((fd - an).abs() / (fd.abs() + an.abs()).max(1e-4));
        }
        println!(
            "tensor {p} {:?}: worst relative error {worst:.2e}",
            net.params()[p].shape()
        );
    }
    Ok(())
}
