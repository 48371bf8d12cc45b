use super::scalar::Real;
use super::{Activation, Family, ModelSpec};
use crate::data::Label;

#[derive(Debug, Clone, Copy)]
struct Layer {
    inp: usize,
    out: usize,
    w_off: usize,
    b_off: Option<usize>,
    hidden: bool,
}

/// Dense-layer view of a [`ModelSpec`]; forward and backward passes are
/// generic over [`Real`] so the same code yields gradients (`f64`) and
/// Hessian columns (`Dual`).
pub(crate) struct Network {
    layers: Vec<Layer>,
    activation: Activation,
    classifier: bool,
    p: usize,
}

impl Network {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut widths = vec![spec.d];
        if spec.family == Family::Mlp {
            widths.extend(&spec.hidden);
        }
        widths.push(spec.output_dim());
        let mut layers = Vec::with_capacity(widths.len() - 1);
        let mut off = 0;
        let last = widths.len() - 2;
        for (l, pair) in widths.windows(2).enumerate() {
            let (inp, out) = (pair[0], pair[1]);
            let w_off = off;
            off += inp * out;
            let b_off = if spec.bias {
                let b = off;
                off += out;
                Some(b)
            } else {
                None
            };
            layers.push(Layer {
                inp,
                out,
                w_off,
                b_off,
                hidden: l < last,
            });
        }
        Network {
            layers,
            activation: spec.activation,
            classifier: spec.is_classifier(),
            p: off,
        }
    }

    pub fn num_params(&self) -> usize {
        self.p
    }

    /// Fan-in/fan-out and weight offset of each layer (for initialization).
    pub fn weight_blocks(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.layers.iter().map(|l| (l.w_off, l.inp, l.out))
    }

    fn act<S: Real>(&self, z: S) -> S {
        match self.activation {
            Activation::Tanh => z.tanh(),
            Activation::Relu => {
                if z.value() > 0.0 {
                    z
                } else {
                    S::cst(0.0)
                }
            }
        }
    }

    /// Returns pre-activations and activations per layer; `acts[0]` is the input.
    fn run<S: Real>(&self, theta: &[S], x: &[f64]) -> (Vec<Vec<S>>, Vec<Vec<S>>) {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.iter().map(|&v| S::cst(v)).collect::<Vec<S>>());
        for layer in &self.layers {
            let a = acts.last().expect("input layer present");
            let mut z = Vec::with_capacity(layer.out);
            for o in 0..layer.out {
                let row = &theta[layer.w_off + o * layer.inp..layer.w_off + (o + 1) * layer.inp];
                let mut s = match layer.b_off {
                    Some(b) => theta[b + o],
                    None => S::cst(0.0),
                };
                for (w, ai) in row.iter().zip(a) {
                    s += *w * *ai;
                }
                z.push(s);
            }
            let next = if layer.hidden {
                z.iter().map(|&v| self.act(v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            acts.push(next);
        }
        (pre, acts)
    }

    /// Loss and its derivative with respect to the network outputs.
    fn head<S: Real>(&self, out: &[S], label: Label) -> (S, Vec<S>) {
        if self.classifier {
            let y = match label {
                Label::Class(c) => c,
                Label::Real(_) => unreachable!("label checked against head"),
            };
            let m = out.iter().map(|o| o.value()).fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<S> = out.iter().map(|&o| (o - S::cst(m)).exp()).collect();
            let mut total = S::cst(0.0);
            for &e in &exps {
                total += e;
            }
            let lse = S::cst(m) + total.ln();
            let loss = lse - out[y];
            let delta = exps
                .iter()
                .enumerate()
                .map(|(k, &e)| if k == y { e / total - S::cst(1.0) } else { e / total })
                .collect();
            (loss, delta)
        } else {
            let y = label.as_f64();
            let r = out[0] - S::cst(y);
            (r * r * S::cst(0.5), vec![r])
        }
    }

    pub fn forward(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let (_, mut acts) = self.run(theta, x);
        acts.pop().expect("output layer present")
    }

    pub fn last_hidden(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let (_, mut acts) = self.run(theta, x);
        acts.pop();
        acts.pop().expect("input layer present")
    }

    pub fn loss(&self, theta: &[f64], x: &[f64], label: Label) -> f64 {
        let out = self.forward(theta, x);
        self.head(&out, label).0
    }

    /// Adds `∇θ ℓ` into `grad` and returns `ℓ`.
    pub fn loss_and_grad<S: Real>(&self, theta: &[S], x: &[f64], label: Label, grad: &mut [S]) -> S {
        let (pre, acts) = self.run(theta, x);
        let (loss, mut delta) = self.head(acts.last().expect("output"), label);
        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            let a_in = &acts[l];
            for o in 0..layer.out {
                let d = delta[o];
                let base = layer.w_off + o * layer.inp;
                for i in 0..layer.inp {
                    grad[base + i] += d * a_in[i];
                }
                if let Some(b) = layer.b_off {
                    grad[b + o] += d;
                }
            }
            if l == 0 {
                break;
            }
            let mut back = vec![S::cst(0.0); layer.inp];
            for o in 0..layer.out {
                let d = delta[o];
                let row = &theta[layer.w_off + o * layer.inp..layer.w_off + (o + 1) * layer.inp];
                for (bi, w) in back.iter_mut().zip(row) {
                    *bi += *w * d;
                }
            }
            let z_prev = &pre[l - 1];
            let a_prev = &acts[l];
            delta = back
                .into_iter()
                .enumerate()
                .map(|(i, b)| match self.activation {
                    Activation::Tanh => b * (S::cst(1.0) - a_prev[i] * a_prev[i]),
                    Activation::Relu => {
                        if z_prev[i].value() > 0.0 {
                            b
                        } else {
                            S::cst(0.0)
                        }
                    }
                })
                .collect();
        }
        loss
    }
}
