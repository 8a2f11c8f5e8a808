//! Bias-corrected Adam over a network's parameter tensors.

use serde::{Deserialize, Serialize};

use super::{LayerTensors, Net, NetGrads, Scalar};
use crate::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            alpha: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_alpha(alpha: f64) -> Self {
        AdamHyper {
            alpha,
            ..AdamHyper::default()
        }
    }
}

/// First/second moment accumulators for one network, plus the shared step
/// counter used for bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<LayerTensors<F>>,
    pub v: Vec<LayerTensors<F>>,
    pub t: u64,
    pub hyper: AdamHyper,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(net: &Net<F>, hyper: AdamHyper) -> Self {
        let zeroed = || -> Vec<LayerTensors<F>> {
            net.layers()
                .iter()
                .map(|l| LayerTensors {
                    w: vec![F::zero(); l.w.len()],
                    b: vec![F::zero(); l.b.len()],
                })
                .collect()
        };
        AdamState {
            m: zeroed(),
            v: zeroed(),
            t: 0,
            hyper,
        }
    }
}

fn update_slice<F: Scalar>(
    params: &mut [F],
    grads: &[f64],
    m: &mut [F],
    v: &mut [F],
    hp: &AdamHyper,
    corr1: f64,
    corr2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        let m_new = hp.beta1 * m[i].to_f64() + (1.0 - hp.beta1) * g;
        let v_new = hp.beta2 * v[i].to_f64() + (1.0 - hp.beta2) * g * g;
        m[i] = F::from_f64(m_new);
        v[i] = F::from_f64(v_new);
        let m_hat = m_new / corr1;
        let v_hat = v_new / corr2;
        let delta = hp.alpha * m_hat / (v_hat.sqrt() + hp.epsilon);
        params[i] = F::from_f64(params[i].to_f64() - delta);
    }
}

/// One Adam update. Rejects non-finite gradients before touching any
/// parameter, advances the step counter, and bumps the network version.
pub fn adam_step<F: Scalar>(
    net: &mut Net<F>,
    grads: &NetGrads,
    state: &mut AdamState<F>,
) -> Result<()> {
    if grads.layers.len() != net.layers().len() {
        return Err(Error::Shape("gradient/parameter layer mismatch".into()));
    }
    if !grads.is_finite() {
        return Err(Error::Training(
            "non-finite gradient passed to adam_step".into(),
        ));
    }
    state.t += 1;
    let hp = state.hyper;
    let corr1 = 1.0 - hp.beta1.powi(state.t as i32);
    let corr2 = 1.0 - hp.beta2.powi(state.t as i32);
    for (i, layer) in net.layers_mut().iter_mut().enumerate() {
        let gl = &grads.layers[i];
        if gl.w.len() != layer.w.len() || gl.b.len() != layer.b.len() {
            return Err(Error::Shape(format!("gradient shape mismatch at layer {i}")));
        }
        let ml = &mut state.m[i];
        let vl = &mut state.v[i];
        update_slice(&mut layer.w, &gl.w, &mut ml.w, &mut vl.w, &hp, corr1, corr2);
        update_slice(&mut layer.b, &gl.b, &mut ml.b, &mut vl.b, &hp, corr1, corr2);
    }
    net.bump_version();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuro::LayerSpec;

    fn scalar_net(w: f64) -> Net<f64> {
        let mut net: Net<f64> = Net::zeros(
            vec![LayerSpec::Dense {
                inputs: 1,
                outputs: 1,
            }],
            1,
        )
        .unwrap();
        net.layers_mut()[0].w = vec![w];
        net
    }

    fn grad_of(net: &Net<f64>, g_w: f64, g_b: f64) -> NetGrads {
        let mut grads = net.zero_grads();
        grads.layers[0].w[0] = g_w;
        grads.layers[0].b[0] = g_b;
        grads
    }

    #[test]
    fn first_step_moves_by_alpha_times_sign() {
        let mut net = scalar_net(1.0);
        let mut st = AdamState::new(&net, AdamHyper::with_alpha(1e-3));
        let grads = grad_of(&net, 0.5, 0.0);
        adam_step(&mut net, &grads, &mut st).unwrap();
        let delta = net.layers()[0].w[0] - 1.0;
        assert!((delta + 1e-3).abs() < 1e-9, "delta {delta}");
    }

    #[test]
    fn zero_gradient_with_zero_moments_is_identity() {
        let mut net = scalar_net(0.75);
        let mut st = AdamState::new(&net, AdamHyper::with_alpha(1e-2));
        let grads = net.zero_grads();
        adam_step(&mut net, &grads, &mut st).unwrap();
        assert_eq!(net.layers()[0].w[0], 0.75);
        assert_eq!(net.layers()[0].b[0], 0.0);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn alpha_zero_is_identity_on_params() {
        let mut net = scalar_net(0.3);
        let mut st = AdamState::new(&net, AdamHyper::with_alpha(0.0));
        for k in 0..5 {
            let grads = grad_of(&net, 0.1 * (k as f64 + 1.0), -0.2);
            adam_step(&mut net, &grads, &mut st).unwrap();
        }
        assert_eq!(net.layers()[0].w[0], 0.3);
        assert_eq!(net.layers()[0].b[0], 0.0);
    }

    #[test]
    fn three_step_trace_matches_reference() {
        // Independent scalar Adam, written out long-hand.
        let hp = AdamHyper {
            alpha: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        };
        let gs = [0.4, -0.3, 0.25];
        let mut w_ref = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (i, &g) in gs.iter().enumerate() {
            let t = (i + 1) as i32;
            m = hp.beta1 * m + (1.0 - hp.beta1) * g;
            v = hp.beta2 * v + (1.0 - hp.beta2) * g * g;
            let m_hat = m / (1.0 - hp.beta1.powi(t));
            let v_hat = v / (1.0 - hp.beta2.powi(t));
            w_ref -= hp.alpha * m_hat / (v_hat.sqrt() + hp.epsilon);
        }

        let mut net = scalar_net(1.0);
        let mut st = AdamState::new(&net, hp);
        for &g in &gs {
            let grads = grad_of(&net, g, 0.0);
            adam_step(&mut net, &grads, &mut st).unwrap();
        }
        assert!(
            (net.layers()[0].w[0] - w_ref).abs() < 1e-12,
            "{} vs {}",
            net.layers()[0].w[0],
            w_ref
        );
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut net = scalar_net(1.0);
        let mut st = AdamState::new(&net, AdamHyper::default());
        let grads = grad_of(&net, f64::NAN, 0.0);
        let before = net.layers()[0].w[0];
        let err = adam_step(&mut net, &grads, &mut st).unwrap_err();
        assert!(matches!(err, Error::Training(_)), "{err}");
        assert_eq!(net.layers()[0].w[0], before);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn update_bumps_version() {
        let mut net = scalar_net(1.0);
        let v0 = net.version();
        let mut st = AdamState::new(&net, AdamHyper::default());
        let grads = grad_of(&net, 0.1, 0.1);
        adam_step(&mut net, &grads, &mut st).unwrap();
        assert_eq!(net.version(), v0 + 1);
    }
}
