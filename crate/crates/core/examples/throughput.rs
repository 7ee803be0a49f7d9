//! Measures training-step and inference throughput of the default network.

use std::time::Instant;

use mcnet::netarch::{build_network, NetworkSpec};
use mcnet::neuralcore::{ConvMode, Phase};
use mcnet::Tensor;

fn main() -> mcnet::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let mode: ConvMode = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(ConvMode::Same);
    let batch: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(32);
    let spec = NetworkSpec::new(49, mode);
    let w = build_network(&spec, 1)?;
    let n = spec.patch_size;
    let x = Tensor::new(
        &[batch, 1, n, n],
        (0..batch * n * n).map(|i| ((i * 7919) % 255) as f64 / 255.0).collect(),
    )?;
    let labels: Vec<usize> = (0..batch).map(|i| i % 2).collect();

    let reps = 5;
    let t = Instant::now();
    for r in 0..reps {
        let (_, cache) = w.forward(&x, Phase::Train, r)?;
        w.backward(&cache, &labels)?;
    }
    let per_step = t.elapsed().as_secs_f64() / reps as f64;
    println!(
        "{mode}: train step (B={batch}) {:.1} ms, {:.0} patches/s",
        per_step * 1e3,
        batch as f64 / per_step
    );

    let t = Instant::now();
    for _ in 0..reps {
        w.predict(&x)?;
    }
    let per = t.elapsed().as_secs_f64() / reps as f64;
    println!("{mode}: inference {:.0} patches/s", batch as f64 / per);

    let fast = mcnet::netarch::InferenceNet::new(&w)?;
    let t = Instant::now();
    for _ in 0..reps {
        fast.predict_positive(&x)?;
    }
    let per = t.elapsed().as_secs_f64() / reps as f64;
    println!("{mode}: f32 inference {:.0} patches/s", batch as f64 / per);
    Ok(())
}
