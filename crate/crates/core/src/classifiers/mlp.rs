use crate::engine::init::kaiming_uniform;
use crate::engine::{Adam, AdamConfig, Graph, Tensor, Var};
use crate::rng::seeded;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![64],
            epochs: 500,
            learning_rate: 1e-2,
            seed: 42,
        }
    }
}

/// Dense ReLU layers ending in a 2-logit dense layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    /// Alternating weight `[in, out]` and bias `[out]` per layer.
    params: Vec<Tensor<f64>>,
}

impl Mlp {
    fn forward(&self, g: &mut Graph<f64>, x: Var, params: &[Var]) -> Result<Var> {
        let layers = params.len() / 2;
        let mut h = x;
        for l in 0..layers {
            h = g.dense(h, params[2 * l], params[2 * l + 1])?;
            if l + 1 < layers {
                h = g.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Full-batch Adam on softmax cross-entropy.
    pub fn fit(rows: &[f64], dim: usize, labels: &[u8], config: &MlpConfig) -> Result<Self> {
        if config.hidden.is_empty() || config.hidden.contains(&0) {
            return Err(Error::InvalidArgument("MLP needs at least one nonempty hidden layer".into()));
        }
        let mut rng = seeded(config.seed);
        let mut widths = vec![dim];
        widths.extend(&config.hidden);
        widths.push(2);
        let mut params = Vec::new();
        for w in widths.windows(2) {
            params.push(kaiming_uniform(vec![w[0], w[1]], w[0], &mut rng));
            params.push(Tensor::zeros(vec![w[1]]));
        }
        let mut model = Mlp { params };
        let x = Tensor::new(vec![labels.len(), dim], rows.to_vec())?;
        let targets: Vec<usize> = labels.iter().map(|&l| usize::from(l)).collect();
        let mut adam = Adam::new(AdamConfig::with_learning_rate(config.learning_rate));
        for epoch in 1..=config.epochs {
            let mut g = Graph::new();
            let input = g.constant(x.clone());
            let vars: Vec<Var> = model.params.iter().map(|p| g.param(p.clone())).collect();
            let logits = model.forward(&mut g, input, &vars)?;
            let loss = g.softmax_cross_entropy(logits, &targets)?;
            if !g.value(loss).item().is_finite() {
                return Err(Error::Diverged { epoch });
            }
            let grads = g.backward(loss)?;
            let grads: Vec<Tensor<f64>> = vars
                .iter()
                .zip(&model.params)
                .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
                .collect();
            let grad_refs: Vec<&Tensor<f64>> = grads.iter().collect();
            let mut refs: Vec<&mut Tensor<f64>> = model.params.iter_mut().collect();
            adam.step(&mut refs, &grad_refs).map_err(|_| Error::Diverged { epoch })?;
        }
        Ok(model)
    }

    /// Predictions for row-major `rows`; equal logits go to class 0.
    pub fn predict(&self, rows: &[f64], dim: usize) -> Result<Vec<u8>> {
        let n = rows.len() / dim;
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut g = Graph::new();
        let input = g.constant(Tensor::new(vec![n, dim], rows.to_vec())?);
        let vars: Vec<Var> = self.params.iter().map(|p| g.constant(p.clone())).collect();
        let logits = self.forward(&mut g, input, &vars)?;
        Ok(g.value(logits).data().chunks_exact(2).map(|z| u8::from(z[1] > z[0])).collect())
    }
}
