//! Compares analytic gradients of the MLP and the weighted BCE loss with
//! central finite differences in f64.
//!
//! cargo run --example gradient_check

use infopursuit::nn::{weighted_bce, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(m: &Mlp<f64>, x: &[f64], y: u8, w: f64) -> f64 {
    weighted_bce(m.predict(x).unwrap()[0], y, w).0
}

fn nudge(m: &mut Mlp<f64>, layer: usize, is_bias: bool, i: usize, delta: f64) {
    let l = &mut m.layers_mut()[layer];
    if is_bias {
        l.bias[i] += delta;
    } else {
        l.weight[i] += delta;
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut m = Mlp::<f64>::five_layer(6, 5, 1, &mut rng)?;
    let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (y, w) = (1, 2.5);

    let (out, cache) = m.forward(&x)?;
    let (_, dlogit) = weighted_bce(out[0], y, w);
    let (grads, dinput) = m.backward(&cache, &[dlogit])?;

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (name, g) in grads.named() {
        let (layer, is_bias) = {
            let mut parts = name.trim_start_matches("layer").split('.');
            (parts.next().unwrap().parse::<usize>()?, parts.next() == Some("bias"))
        };
        for (i, &analytic) in g.iter().enumerate() {
            nudge(&mut m, layer, is_bias, i, h);
            let up = loss(&m, &x, y, w);
            nudge(&mut m, layer, is_bias, i, -2.0 * h);
            let down = loss(&m, &x, y, w);
            nudge(&mut m, layer, is_bias, i, h);
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    println!("{} parameters, worst relative error {worst:.2e}", m.n_params());

    let mut worst_in: f64 = 0.0;
    for i in 0..x.len() {
        let (mut up, mut down) = (x.clone(), x.clone());
        up[i] += h;
        down[i] -= h;
        let numeric = (loss(&m, &up, y, w) - loss(&m, &down, y, w)) / (2.0 * h);
        worst_in = worst_in.max((dinput[i] - numeric).abs() / numeric.abs().max(1e-8));
    }
    println!("input gradient worst relative error {worst_in:.2e}");
    Ok(())
}
