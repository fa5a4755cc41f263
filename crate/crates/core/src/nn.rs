//! Parameter storage, initialization, and the Adam optimizer.
//!
//! Parameters are named matrices with stable dotted paths (`encoder.W1.0`,
//! `club.entity.mu.w1`, ...). Each training step binds the store onto a fresh
//! tape via [`ParamStore::bind`] and updates values from the resulting
//! gradients.

use std::collections::HashMap;
use std::rc::Rc;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{backward, leaf, Gradients, Matrix, Tape, Var};

/// Ordered collection of named parameter tensors.
#[derive(Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: HashMap<String, Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Matrix) {
        if !self.values.contains_key(name) {
            self.names.push(name.to_string());
        }
        self.values.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> &Matrix {
        self.values
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn set(&mut self, name: &str, value: Matrix) {
        assert!(self.values.contains_key(name), "unknown parameter {name}");
        self.values.insert(name.to_string(), value);
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(move |n| (n.as_str(), &self.values[n]))
    }

    /// Create tape leaves for every parameter.
    pub fn bind(&self, tape: &Rc<Tape>) -> ParamVars {
        let mut map = HashMap::new();
        for (name, value) in self.iter() {
            map.insert(name.to_string(), leaf(tape, value.clone()));
        }
        ParamVars { map }
    }

    /// Uniform(-bound, bound) init keyed by fan-in, biases zero.
    pub fn init_weight(&mut self, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) {
        let bound = 1.0 / (rows as f64).sqrt();
        let w = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound));
        self.insert(name, w);
    }

    pub fn init_bias(&mut self, name: &str, cols: usize) {
        self.insert(name, Array2::zeros((1, cols)));
    }
}

/// Parameters bound to a tape for one forward/backward pass.
pub struct ParamVars {
    map: HashMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> &Var {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter {name}"))
    }

    /// Gradients per parameter name, optionally filtered by a name predicate.
    pub fn grads(&self, grads: &Gradients, keep: impl Fn(&str) -> bool) -> HashMap<String, Matrix> {
        self.map
            .iter()
            .filter(|(n, _)| keep(n))
            .map(|(n, v)| (n.clone(), grads.get(v)))
            .collect()
    }
}

/// Run backward and collect gradients for every bound parameter.
pub fn param_grads(loss: &Var, pv: &ParamVars) -> HashMap<String, Matrix> {
    let g = backward(loss);
    pv.grads(&g, |_| true)
}

/// Adam with optional global gradient-norm clipping.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    t: u64,
    m: HashMap<String, Matrix>,
    v: HashMap<String, Matrix>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
            t: 0,
            m: HashMap::new(),
            v: HashMap::new(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &HashMap<String, Matrix>) {
        // Iterate in sorted name order so float accumulation (the global norm
        // in particular) is identical across runs and processes.
        let mut names: Vec<&String> = grads.keys().collect();
        names.sort();
        let mut grads: Vec<(String, Matrix)> = names
            .into_iter()
            .map(|n| (n.clone(), grads[n].clone()))
            .collect();
        if let Some(max_norm) = self.clip_norm {
            let norm: f64 = grads
                .iter()
                .map(|(_, g)| g.iter().map(|x| x * x).sum::<f64>())
                .sum::<f64>()
                .sqrt();
            if norm > max_norm {
                let s = max_norm / norm;
                for (_, g) in grads.iter_mut() {
                    *g *= s;
                }
            }
        }
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for (name, g) in &grads {
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(g.dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Array2::zeros(g.dim()));
            *m = &*m * self.beta1 + g * (1.0 - self.beta1);
            *v = &*v * self.beta2 + &(g * g) * (1.0 - self.beta2);
            let mhat = &*m / b1t;
            let vhat = &*v / b2t;
            let update = &mhat / &(vhat.mapv(f64::sqrt) + self.eps) * self.lr;
            let mut value = store.get(name).clone();
            value -= &update;
            store.set(name, value);
        }
    }
}

/// Standard GRU cell applied row-wise: reset/update gates with sigmoid, tanh
/// candidate over the reset-masked hidden state, `h' = (1-z)*h + z*n`.
pub fn gru_step(pv: &ParamVars, prefix: &str, hidden: &Var, input: &Var) -> Var {
    let p = |s: &str| pv.get(&format!("{prefix}.{s}"));
    let r = input
        .matmul(p("w_xr"))
        .add(&hidden.matmul(p("w_hr")))
        .add_row(p("b_r"))
        .sigmoid();
    let z = input
        .matmul(p("w_xz"))
        .add(&hidden.matmul(p("w_hz")))
        .add_row(p("b_z"))
        .sigmoid();
    let cand = input
        .matmul(p("w_xn"))
        .add(&r.mul(hidden).matmul(p("w_hn")))
        .add_row(p("b_n"))
        .tanh();
    let one_minus_z = z.neg().add_scalar(1.0);
    one_minus_z.mul(hidden).add(&z.mul(&cand))
}

/// Register GRU parameters under `prefix` for the given input/hidden widths.
pub fn init_gru(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) {
    for gate in ["r", "z", "n"] {
        store.init_weight(&format!("{prefix}.w_x{gate}"), input, hidden, rng);
        store.init_weight(&format!("{prefix}.w_h{gate}"), hidden, hidden, rng);
        store.init_bias(&format!("{prefix}.b_{gate}"), hidden);
    }
}

/// Two-layer MLP with leaky rectification on the hidden layer.
pub fn mlp2(pv: &ParamVars, prefix: &str, x: &Var, slope: f64) -> Var {
    let p = |s: &str| pv.get(&format!("{prefix}.{s}"));
    x.matmul(p("w1"))
        .add_row(p("b1"))
        .leaky_relu(slope)
        .matmul(p("w2"))
        .add_row(p("b2"))
}

pub fn init_mlp2(
    store: &mut ParamStore,
    prefix: &str,
    input: usize,
    hidden: usize,
    output: usize,
    rng: &mut ChaCha8Rng,
) {
    store.init_weight(&format!("{prefix}.w1"), input, hidden, rng);
    store.init_bias(&format!("{prefix}.b1"), hidden);
    store.init_weight(&format!("{prefix}.w2"), hidden, output, rng);
    store.init_bias(&format!("{prefix}.b2"), output);
}
