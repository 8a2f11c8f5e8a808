//! Finite-difference verification of the analytic gradients.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{LayerSpec, Net};
use crate::Result;

const FD_STEP: f64 = 1e-4;

/// Scalar probe loss: a fixed random linear functional of the output,
/// L = sum_i g_i * out_i. Its exact output gradient is g itself.
fn probe_loss(net: &Net<f64>, input: &[f64], probe: &[f64]) -> f64 {
    let out = net.infer(input).expect("shape checked by caller");
    out.iter().zip(probe).map(|(o, g)| o * g).sum()
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1.0);
    (analytic - numeric).abs() / denom
}

/// Compare analytic gradients against central finite differences on
/// `trials` random (params, input) instances and return the worst
/// relative error observed.
///
/// Inputs are drawn away from ReLU kinks as far as a random draw allows;
/// the central difference itself perturbs parameters, not inputs, so
/// kink crossings are rare but not impossible — callers compare against
/// a tolerance, not exactness.
pub fn grad_check(specs: &[LayerSpec], trials: usize, rng: &mut ChaCha8Rng) -> Result<f64> {
    assert!(trials >= 1, "trials must be >= 1");
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let mut net: Net<f64> = Net::he_init(specs.to_vec(), input_len_of(specs), rng)?;
        // Random biases too, so ReLU sees both signs.
        for layer in net.layers_mut() {
            for b in &mut layer.b {
                *b = rng.gen_range(-0.5..0.5);
            }
        }
        net.bump_version();
        let input: Vec<f64> = (0..net.input_len())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let probe: Vec<f64> = (0..net.output_len())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();

        let (_, tape) = net.forward(&input)?;
        let mut grads = net.zero_grads();
        net.backward(&tape, &probe, &mut grads)?;

        for li in 0..net.layers().len() {
            let n_w = net.layers()[li].w.len();
            let n_b = net.layers()[li].b.len();
            for (is_bias, count) in [(false, n_w), (true, n_b)] {
                for pi in 0..count {
                    let original = if is_bias {
                        net.layers()[li].b[pi]
                    } else {
                        net.layers()[li].w[pi]
                    };
                    let set = |net: &mut Net<f64>, v: f64| {
                        if is_bias {
                            net.layers_mut()[li].b[pi] = v;
                        } else {
                            net.layers_mut()[li].w[pi] = v;
                        }
                    };
                    set(&mut net, original + FD_STEP);
                    let plus = probe_loss(&net, &input, &probe);
                    set(&mut net, original - FD_STEP);
                    let minus = probe_loss(&net, &input, &probe);
                    set(&mut net, original);
                    let numeric = (plus - minus) / (2.0 * FD_STEP);
                    let analytic = if is_bias {
                        grads.layers[li].b[pi]
                    } else {
                        grads.layers[li].w[pi]
                    };
                    worst = worst.max(relative_error(analytic, numeric));
                }
            }
        }
    }
    Ok(worst)
}

fn input_len_of(specs: &[LayerSpec]) -> usize {
    match specs.first() {
        Some(LayerSpec::Conv1d { .. }) => 32,
        Some(LayerSpec::Dense { inputs, .. }) => *inputs,
        _ => 8,
    }
}
