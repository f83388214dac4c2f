//! Small models with hand-written gradients, used as training stand-ins.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, clap::ValueEnum)]
pub enum ModelKind {
    LinearRegression,
    LogisticRegression,
    Mlp1Hidden,
}

/// Row-major `n × dim` features with one target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
    pub dim: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub kind: ModelKind,
    /// Initial parameters; training starts from here.
    pub params: Vec<f64>,
    pub data: Dataset,
    pub hidden: usize,
    /// Coefficient of `l2/2·‖θ‖²` added to the mean loss.
    pub l2: f64,
    /// Minibatch size; anything `>= n` means full batch.
    pub batch_size: usize,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// `ln(1 + e^{-m})` without overflow.
fn softplus_neg(m: f64) -> f64 {
    (-m).max(0.0) + (-m.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn gaussian_features(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n * dim).map(|_| normal(rng)).collect()
}

impl ToyModel {
    /// `y = w*·x + 0.1·ε`, squared loss, zero start.
    pub fn linear_regression(n: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
        let features = gaussian_features(n, dim, &mut rng);
        let targets = features
            .chunks(dim)
            .map(|x| dot(&w, x) + 0.1 * normal(&mut rng))
            .collect();
        ToyModel {
            kind: ModelKind::LinearRegression,
            params: vec![0.0; dim + 1],
            data: Dataset { features, targets, dim },
            hidden: 0,
            l2: 0.0,
            batch_size: 64,
        }
    }

    /// Linearly separable labels in `{-1, 1}` with every point pushed at
    /// least `margin` away from the true hyperplane; zero start.
    pub fn logistic_regression(n: usize, dim: usize, margin: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w: Vec<f64> = (0..dim).map(|_| normal(&mut rng)).collect();
        let norm = dot(&w, &w).sqrt();
        w.iter_mut().for_each(|v| *v /= norm);
        let mut features = gaussian_features(n, dim, &mut rng);
        let mut targets = Vec::with_capacity(n);
        for x in features.chunks_mut(dim) {
            let s = dot(&w, x);
            let y = if s >= 0.0 { 1.0 } else { -1.0 };
            for (xi, wi) in x.iter_mut().zip(&w) {
                *xi += y * margin * wi;
            }
            targets.push(y);
        }
        ToyModel {
            kind: ModelKind::LogisticRegression,
            params: vec![0.0; dim + 1],
            data: Dataset { features, targets, dim },
            hidden: 0,
            l2: 1e-3,
            batch_size: 64,
        }
    }

    /// Regression onto a random tanh teacher of the same shape; the student
    /// starts from small random weights.
    pub fn mlp(n: usize, dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = hidden * dim + 2 * hidden + 1;
        let teacher: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
        let features = gaussian_features(n, dim, &mut rng);
        let mut model = ToyModel {
            kind: ModelKind::Mlp1Hidden,
            params: (0..p).map(|_| 0.1 * normal(&mut rng)).collect(),
            data: Dataset {
                features,
                targets: Vec::new(),
                dim,
            },
            hidden,
            l2: 0.0,
            batch_size: 64,
        };
        model.data.targets = (0..n)
            .map(|i| model.forward(&teacher, model.data.row(i)).0 + 0.05 * normal(&mut rng))
            .collect();
        model
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Output and, for the MLP, the hidden activations.
    fn forward(&self, params: &[f64], x: &[f64]) -> (f64, Vec<f64>) {
        let d = self.data.dim;
        match self.kind {
            ModelKind::LinearRegression | ModelKind::LogisticRegression => {
                (dot(&params[..d], x) + params[d], Vec::new())
            }
            ModelKind::Mlp1Hidden => {
                let h = self.hidden;
                let (w1, rest) = params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h);
                let act: Vec<f64> = (0..h)
                    .map(|j| (dot(&w1[j * d..(j + 1) * d], x) + b1[j]).tanh())
                    .collect();
                (dot(w2, &act) + b2[0], act)
            }
        }
    }

    /// Mean loss and its gradient over `batch` (all rows when `None`).
    pub fn loss_grad(&self, params: &[f64], batch: Option<&[usize]>) -> (f64, Vec<f64>) {
        let all: Vec<usize>;
        let idx = match batch {
            Some(b) => b,
            None => {
                all = (0..self.data.len()).collect();
                &all
            }
        };
        let d = self.data.dim;
        let mut loss = 0.0;
        let mut grad = vec![0.0; params.len()];
        for &i in idx {
            let x = self.data.row(i);
            let y = self.data.targets[i];
            let (f, act) = self.forward(params, x);
            // dl/df
            let df = match self.kind {
                ModelKind::LogisticRegression => {
                    loss += softplus_neg(y * f);
                    -y * sigmoid(-y * f)
                }
                _ => {
                    loss += 0.5 * (f - y) * (f - y);
                    f - y
                }
            };
            match self.kind {
                ModelKind::LinearRegression | ModelKind::LogisticRegression => {
                    for (g, xi) in grad[..d].iter_mut().zip(x) {
                        *g += df * xi;
                    }
                    grad[d] += df;
                }
                ModelKind::Mlp1Hidden => {
                    let h = self.hidden;
                    let w2 = &params[h * d + h..h * d + 2 * h];
                    for j in 0..h {
                        let da = df * w2[j] * (1.0 - act[j] * act[j]);
                        for (g, xi) in grad[j * d..(j + 1) * d].iter_mut().zip(x) {
                            *g += da * xi;
                        }
                        grad[h * d + j] += da;
                        grad[h * d + h + j] += df * act[j];
                    }
                    grad[h * d + 2 * h] += df;
                }
            }
        }
        let scale = 1.0 / idx.len().max(1) as f64;
        loss *= scale;
        grad.iter_mut().for_each(|g| *g *= scale);
        if self.l2 > 0.0 {
            loss += 0.5 * self.l2 * dot(params, params);
            for (g, p) in grad.iter_mut().zip(params) {
                *g += self.l2 * p;
            }
        }
        (loss, grad)
    }

    /// Mean loss over the whole dataset.
    pub fn loss(&self, params: &[f64]) -> f64 {
        self.loss_grad(params, None).0
    }
}

/// Largest componentwise relative gap between the analytic gradient and
/// central differences of the full-data loss, `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn finite_difference_check(model: &ToyModel, point: &[f64], epsilon: f64) -> f64 {
    let (_, analytic) = model.loss_grad(point, None);
    let mut p = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + epsilon;
        let up = model.loss(&p);
        p[i] = orig - epsilon;
        let down = model.loss(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
