//! Measures training-step and inference throughput for a few network widths.
//!
//! `cargo run --release -p versnet --example throughput`

use std::time::Instant;

use versnet::nn::{sgd_momentum_step, MomentumState};
use versnet::{LabelImage, NetworkParams, Prng, SarImage, VersNetConfig};

fn main() -> versnet::Result<()> {
    let widths: [([usize; 4], usize); 3] = [([8, 16, 32, 64], 64), ([16, 32, 64, 128], 128), ([32, 64, 128, 256], 512)];
    let mut rng = Prng::new(1);
    let img = SarImage::from_vec(64, 64, (0..4096).map(|_| rng.uniform() as f32).collect())?;
    let lbl = LabelImage::new(64, 64, (0..4096).map(|i| 1 + (i % 12) as u8).collect())?;
    for (blocks, fc) in widths {
        let config = VersNetConfig {
            block_channels: blocks,
            fc_channels: fc,
            ..Default::default()
        };
        let mut net = NetworkParams::build(&config, &mut Prng::new(0))?;
        let mut state = MomentumState::zeros_like(net.tensors());
        let steps = 20;
        let start = Instant::now();
        for _ in 0..steps {
            let (_, grads) = net.forward_backward(&img, &lbl, &mut rng)?;
            sgd_momentum_step(&mut net.tensors_mut(), &grads.tensors(), &mut state, 0.01, 0.9)?;
        }
        let per_step = start.elapsed().as_secs_f64() / steps as f64;
        let big = SarImage::from_vec(512, 512, vec![0.2; 512 * 512])?;
        let start = Instant::now();
        net.predict(&big)?;
        println!(
            "blocks {blocks:?} fc {fc}: {:.2} ms/step on 64×64, {:.0} ms inference on 512×512, {} params",
            per_step * 1e3,
            start.elapsed().as_secs_f64() * 1e3,
            net.parameter_count()
        );
    }
    Ok(())
}
