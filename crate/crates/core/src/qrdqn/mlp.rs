use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense ReLU network whose linear output layer has `n_actions * n_quantiles`
/// units, read as `theta_j(x, a)` at index `a * n_quantiles + j`.
///
/// All parameters live in one flat buffer. Layer `l` stores its weights
/// input-major (`w[i * out + o]`) followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsDocument", into = "ParamsDocument")]
pub struct MlpParams {
    sizes: Vec<usize>,
    n_actions: usize,
    n_quantiles: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerDocument {
    /// `weights[o][i]`: output unit `o`, input `i`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsDocument {
    pub n_actions: usize,
    pub n_quantiles: usize,
    pub layers: Vec<LayerDocument>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl MlpParams {
    /// All-zero parameters for layer sizes `input, hidden..., n_actions * n_quantiles`.
    pub fn zeros(input_dim: usize, hidden: &[usize], n_actions: usize, n_quantiles: usize) -> Result<Self> {
        if input_dim == 0 || n_actions == 0 || n_quantiles == 0 || hidden.contains(&0) {
            return Err(Error::invalid("layer sizes must be positive"));
        }
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(n_actions * n_quantiles);
        let data = vec![0.0; param_count(&sizes)];
        Ok(Self { sizes, n_actions, n_quantiles, data })
    }

    /// He-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        n_actions: usize,
        n_quantiles: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut params = Self::zeros(input_dim, hidden, n_actions, n_quantiles)?;
        for l in 0..params.n_layers() {
            let fan_in = params.sizes[l];
            let limit = (6.0 / fan_in as f64).sqrt();
            let (w, _) = params.layer_mut(l);
            for v in w.iter_mut() {
                *v = rng.random_range(-limit..limit);
            }
        }
        Ok(params)
    }

    pub fn zeros_like(&self) -> Self {
        Self { data: vec![0.0; self.data.len()], ..self.clone() }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_quantiles(&self) -> usize {
        self.n_quantiles
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn offset(&self, l: usize) -> usize {
        param_count(&self.sizes[..=l])
    }

    /// `(weights, bias)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let start = self.offset(l);
        self.data[start..start + i * o + o].split_at(i * o)
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let start = self.offset(l);
        self.data[start..start + i * o + o].split_at_mut(i * o)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Forward pass keeping every layer's activations.
    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!("{} features", self.input_dim()), format!("{}", x.len())));
        }
        let mut activations = vec![x.to_vec()];
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let out_dim = self.sizes[l + 1];
            let mut out = b.to_vec();
            for (i, &xi) in activations[l].iter().enumerate() {
                if xi != 0.0 {
                    for (o, &wv) in out.iter_mut().zip(&w[i * out_dim..(i + 1) * out_dim]) {
                        *o += xi * wv;
                    }
                }
            }
            if l + 1 < self.n_layers() {
                for v in out.iter_mut() {
                    *v = v.max(0.0);
                }
            }
            activations.push(out);
        }
        Ok(ForwardTrace { activations })
    }

    /// Adds the gradient of `<output, out_grad>` for the traced input to `grads`.
    pub fn accumulate_gradient(&self, trace: &ForwardTrace, out_grad: &[f64], grads: &mut MlpParams) -> Result<()> {
        let out_dim = *self.sizes.last().unwrap();
        if out_grad.len() != out_dim {
            return Err(Error::shape(format!("{out_dim} output gradients"), format!("{}", out_grad.len())));
        }
        if grads.sizes != self.sizes {
            return Err(Error::shape(format!("{:?}", self.sizes), format!("{:?}", grads.sizes)));
        }
        let mut delta = out_grad.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (in_dim, o_dim) = (self.sizes[l], self.sizes[l + 1]);
            let input = &trace.activations[l];
            {
                let (gw, gb) = grads.layer_mut(l);
                for (g, d) in gb.iter_mut().zip(&delta) {
                    *g += d;
                }
                for (i, &xi) in input.iter().enumerate() {
                    if xi != 0.0 {
                        for (g, d) in gw[i * o_dim..(i + 1) * o_dim].iter_mut().zip(&delta) {
                            *g += xi * d;
                        }
                    }
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            let mut prev = vec![0.0; in_dim];
            for (i, p) in prev.iter_mut().enumerate() {
                if input[i] > 0.0 {
                    *p = w[i * o_dim..(i + 1) * o_dim].iter().zip(&delta).map(|(a, b)| a * b).sum();
                }
            }
            delta = prev;
        }
        Ok(())
    }
}

impl TryFrom<ParamsDocument> for MlpParams {
    type Error = Error;

    fn try_from(doc: ParamsDocument) -> Result<Self> {
        let first = doc.layers.first().ok_or_else(|| Error::invalid("network has no layers"))?;
        let mut sizes = vec![first.weights.first().map_or(0, Vec::len)];
        let mut data = Vec::new();
        for layer in &doc.layers {
            let (o_dim, i_dim) = (layer.weights.len(), *sizes.last().unwrap());
            if layer.bias.len() != o_dim || layer.weights.iter().any(|row| row.len() != i_dim) {
                return Err(Error::shape(format!("{o_dim}x{i_dim} layer"), "ragged layer".to_string()));
            }
            for i in 0..i_dim {
                data.extend(layer.weights.iter().map(|row| row[i]));
            }
            data.extend_from_slice(&layer.bias);
            sizes.push(o_dim);
        }
        if *sizes.last().unwrap() != doc.n_actions * doc.n_quantiles || sizes.contains(&0) {
            return Err(Error::shape(
                format!("{} outputs", doc.n_actions * doc.n_quantiles),
                format!("{sizes:?}"),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        Ok(Self { sizes, n_actions: doc.n_actions, n_quantiles: doc.n_quantiles, data })
    }
}

impl From<MlpParams> for ParamsDocument {
    fn from(p: MlpParams) -> Self {
        let layers = (0..p.n_layers())
            .map(|l| {
                let (w, b) = p.layer(l);
                let (i_dim, o_dim) = (p.sizes[l], p.sizes[l + 1]);
                LayerDocument {
                    weights: (0..o_dim).map(|o| (0..i_dim).map(|i| w[i * o_dim + o]).collect()).collect(),
                    bias: b.to_vec(),
                }
            })
            .collect();
        ParamsDocument { n_actions: p.n_actions, n_quantiles: p.n_quantiles, layers }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.activations.pop().unwrap()
    }
}

/// Network output reshaped to `n_actions x N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileMatrix {
    n_actions: usize,
    n: usize,
    values: Vec<f64>,
}

impl QuantileMatrix {
    pub fn new(n_actions: usize, n: usize, values: Vec<f64>) -> Result<Self> {
        if n_actions == 0 || n == 0 || values.len() != n_actions * n {
            return Err(Error::shape(format!("{n_actions}x{n}"), format!("{} values", values.len())));
        }
        Ok(Self { n_actions, n, values })
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, a: usize) -> &[f64] {
        &self.values[a * self.n..(a + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `Q(x, a) = mean_j theta_j(x, a)`.
    pub fn mean(&self, a: usize) -> f64 {
        self.row(a).iter().sum::<f64>() / self.n as f64
    }
}

pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> Result<QuantileMatrix> {
    let output = params.forward_trace(x)?.into_output();
    QuantileMatrix::new(params.n_actions, params.n_quantiles, output)
}

/// Gradient of `<mlp_forward(params, x), out_grad>` with respect to every parameter.
pub fn mlp_backward(params: &MlpParams, x: &[f64], out_grad: &QuantileMatrix) -> Result<MlpParams> {
    let trace = params.forward_trace(x)?;
    let mut grads = params.zeros_like();
    params.accumulate_gradient(&trace, out_grad.values(), &mut grads)?;
    Ok(grads)
}

pub fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn zero_weights_give_zero_output() {
        let p = MlpParams::zeros(3, &[4], 2, 2).unwrap();
        assert_eq!(mlp_forward(&p, &[1.0, -1.0, 0.5]).unwrap().values(), &[0.0; 4]);
        assert!(mlp_forward(&p, &[1.0]).is_err());
    }

    #[test]
    fn linear_layer_is_affine_and_gradient_is_outer_product() {
        let mut p = MlpParams::zeros(2, &[], 1, 2).unwrap();
        {
            let (w, b) = p.layer_mut(0);
            w.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
            b.copy_from_slice(&[0.5, -0.5]);
        }
        let x = [2.0, 3.0];
        assert_eq!(mlp_forward(&p, &x).unwrap().values(), &[2.5, 2.5]);
        let g = QuantileMatrix::new(1, 2, vec![1.0, -2.0]).unwrap();
        let grads = mlp_backward(&p, &x, &g).unwrap();
        let (gw, gb) = grads.layer(0);
        assert_eq!(gw, &[2.0, -4.0, 3.0, -6.0]);
        assert_eq!(gb, &[1.0, -2.0]);
    }

    #[test]
    fn zero_out_grad_gives_zero_gradients() {
        let p = MlpParams::init(4, &[5, 3], 2, 3, &mut seeded(1)).unwrap();
        let g = QuantileMatrix::new(2, 3, vec![0.0; 6]).unwrap();
        let grads = mlp_backward(&p, &[0.1, 0.2, 0.3, 0.4], &g).unwrap();
        assert!(grads.as_slice().iter().all(|&v| v == 0.0));
        let bad = QuantileMatrix::new(1, 3, vec![0.0; 3]).unwrap();
        assert!(mlp_backward(&p, &[0.1, 0.2, 0.3, 0.4], &bad).is_err());
    }

    #[test]
    fn random_outputs_are_finite() {
        let mut rng = seeded(4);
        let p = MlpParams::init(6, &[16, 16], 3, 4, &mut rng).unwrap();
        for _ in 0..1000 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..=1.0)).collect();
            assert!(mlp_forward(&p, &x).unwrap().values().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = seeded(12);
        let mut probes = 0;
        while probes < 20 {
            let p = MlpParams::init(5, &[7, 6], 2, 3, &mut rng).unwrap();
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let g = QuantileMatrix::new(2, 3, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let h = 1e-6;
            // Exclude probes where a hidden pre-activation sits near the ReLU kink.
            let trace = p.forward_trace(&x).unwrap();
            let near_kink = (1..trace.activations.len() - 1).any(|l| {
                let (w, b) = p.layer(l - 1);
                let out_dim = p.sizes[l];
                (0..out_dim).any(|o| {
                    let pre: f64 = b[o] + trace.activations[l - 1].iter().enumerate().map(|(i, xi)| xi * w[i * out_dim + o]).sum::<f64>();
                    pre.abs() < 1e-3
                })
            });
            if near_kink {
                continue;
            }
            probes += 1;
            let grads = mlp_backward(&p, &x, &g).unwrap();
            let objective = |q: &MlpParams| -> f64 {
                mlp_forward(q, &x).unwrap().values().iter().zip(g.values()).map(|(a, b)| a * b).sum()
            };
            for k in 0..p.as_slice().len() {
                let mut plus = p.clone();
                plus.as_mut_slice()[k] += h;
                let mut minus = p.clone();
                minus.as_mut_slice()[k] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let exact = grads.as_slice()[k];
                let rel = (fd - exact).abs() / fd.abs().max(exact.abs()).max(1e-3);
                assert!(rel < 1e-5, "param {k}: fd={fd} exact={exact}");
            }
        }
    }

    #[test]
    fn params_round_trip_as_layer_arrays() {
        let p = MlpParams::init(3, &[4], 2, 2, &mut seeded(9)).unwrap();
        let text = serde_json::to_string(&p).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["layers"][0]["weights"].as_array().unwrap().len(), 4);
        assert_eq!(doc["layers"][1]["bias"].as_array().unwrap().len(), 4);
        assert_eq!(serde_json::from_str::<MlpParams>(&text).unwrap(), p);
        let bad = r#"{"n_actions":2,"n_quantiles":3,"layers":[{"weights":[[1.0]],"bias":[0.0]}]}"#;
        assert!(serde_json::from_str::<MlpParams>(bad).is_err());
    }
}
