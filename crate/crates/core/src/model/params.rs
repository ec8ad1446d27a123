use std::cell::RefCell;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diffkernel::{Tape, Tensor, Var};
use crate::rng::Rng;

use super::config::ModelConfig;
use super::vocab::Vocab;

/// Named parameter tensors. Names are stable and define the checkpoint
/// layout: `embed.*`, `enc.{i}.*`, `dec.{i}.*`, `out.*`, `sel.*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet {
            tensors: BTreeMap::new(),
        }
    }

    pub fn get(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        self.tensors.insert(name.to_string(), t);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }
}

/// Generator parameters (embeddings, encoder, decoder, output head) plus the
/// selector parameters (FFN1..3 and the low-rank bilinear factors).
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub set: ParamSet,
}

fn xavier(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let std = (2.0 / (rows + cols) as f64).sqrt();
    Tensor::randn(rows, cols, std, rng)
}

fn linear(set: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize, rng: &mut Rng) {
    set.insert(&format!("{name}.w"), xavier(fan_in, fan_out, rng));
    set.insert(&format!("{name}.b"), Tensor::zeros(1, fan_out));
}

fn layer_norm(set: &mut ParamSet, name: &str, dim: usize) {
    set.insert(&format!("{name}.gain"), Tensor::full(1, dim, 1.0));
    set.insert(&format!("{name}.bias"), Tensor::zeros(1, dim));
}

fn attention(set: &mut ParamSet, name: &str, cfg: &ModelConfig, rng: &mut Rng) {
    let (d, dh) = (cfg.d_model, cfg.head_dim());
    for h in 0..cfg.attention_heads {
        set.insert(&format!("{name}.h{h}.wq"), xavier(d, dh, rng));
        set.insert(&format!("{name}.h{h}.wk"), xavier(d, dh, rng));
        set.insert(&format!("{name}.h{h}.wv"), xavier(d, dh, rng));
    }
    linear(set, &format!("{name}.out"), d, d, rng);
}

fn ffn(set: &mut ParamSet, name: &str, dim_in: usize, hidden: usize, dim_out: usize, rng: &mut Rng) {
    linear(set, &format!("{name}.l1"), dim_in, hidden, rng);
    linear(set, &format!("{name}.l2"), hidden, dim_out, rng);
}

impl ModelParams {
    /// Deterministic initialization from `config.seed`.
    pub fn init(mut config: ModelConfig, vocab: Vocab) -> crate::Result<ModelParams> {
        config.vocab_size = vocab.len();
        config.validate()?;
        let mut rng = Rng::new(config.seed ^ 0x6d6f_64656c);
        let mut set = ParamSet::new();
        let d = config.d_model;
        let v = config.vocab_size;

        set.insert("embed.tok", Tensor::randn(v, d, 0.05, &mut rng));
        set.insert("embed.pos", Tensor::randn(config.max_positions, d, 0.05, &mut rng));

        for i in 0..config.encoder_layers {
            let p = format!("enc.{i}");
            layer_norm(&mut set, &format!("{p}.ln1"), d);
            attention(&mut set, &format!("{p}.attn"), &config, &mut rng);
            layer_norm(&mut set, &format!("{p}.ln2"), d);
            ffn(&mut set, &format!("{p}.ffn"), d, config.ffn_hidden(), d, &mut rng);
        }
        layer_norm(&mut set, "enc.final_ln", d);

        for i in 0..config.decoder_layers {
            let p = format!("dec.{i}");
            layer_norm(&mut set, &format!("{p}.ln1"), d);
            attention(&mut set, &format!("{p}.self"), &config, &mut rng);
            layer_norm(&mut set, &format!("{p}.ln2"), d);
            attention(&mut set, &format!("{p}.cross"), &config, &mut rng);
            layer_norm(&mut set, &format!("{p}.ln3"), d);
            ffn(&mut set, &format!("{p}.ffn"), d, config.ffn_hidden(), d, &mut rng);
        }
        layer_norm(&mut set, "dec.final_ln", d);

        linear(&mut set, "out", d, v, &mut rng);

        // Selector heads: one hidden tanh layer each.
        ffn(&mut set, "sel.ffn1", d, d, 1, &mut rng);
        ffn(&mut set, "sel.ffn2", 2 * d, d, 1, &mut rng);
        ffn(&mut set, "sel.ffn3", 2 * d, d, 1, &mut rng);
        let r_std = 1.0 / (d as f64).sqrt();
        set.insert("sel.u", Tensor::randn(d, config.lowrank_r, r_std, &mut rng));
        set.insert("sel.v", Tensor::randn(d, config.lowrank_r, r_std, &mut rng));

        Ok(ModelParams { config, vocab, set })
    }

    pub fn is_finite(&self) -> bool {
        self.set.iter().all(|(_, t)| t.is_finite())
    }

    /// Name of the first non-finite tensor, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        self.set
            .iter()
            .find(|(_, t)| !t.is_finite())
            .map(|(n, _)| n.clone())
    }
}

/// Lazy binding of named parameters onto a tape. Trainable parameters are
/// recorded as gradient leaves, everything else as constants. Bindings are
/// created on first use and remembered so each tensor lands on the tape once.
pub struct BoundParams<'a> {
    tape: &'a Tape,
    params: &'a ModelParams,
    trainable: Box<dyn Fn(&str) -> bool + 'a>,
    vars: RefCell<BTreeMap<String, Var>>,
}

impl<'a> BoundParams<'a> {
    /// Bind with every parameter trainable.
    pub fn trainable(tape: &'a Tape, params: &'a ModelParams) -> BoundParams<'a> {
        BoundParams::with_predicate(tape, params, |_| true)
    }

    /// Bind with every parameter frozen (inference).
    pub fn frozen(tape: &'a Tape, params: &'a ModelParams) -> BoundParams<'a> {
        BoundParams::with_predicate(tape, params, |_| false)
    }

    /// Bind with a custom trainability predicate over parameter names.
    pub fn with_predicate(
        tape: &'a Tape,
        params: &'a ModelParams,
        pred: impl Fn(&str) -> bool + 'a,
    ) -> BoundParams<'a> {
        BoundParams {
            tape,
            params,
            trainable: Box::new(pred),
            vars: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn tape(&self) -> &'a Tape {
        self.tape
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn model(&self) -> &ModelParams {
        self.params
    }

    pub fn var(&self, name: &str) -> Var {
        if let Some(&v) = self.vars.borrow().get(name) {
            return v;
        }
        let tensor = self.params.set.get(name);
        let v = if (self.trainable)(name) {
            self.tape.leaf(tensor)
        } else {
            self.tape.constant(tensor)
        };
        self.vars.borrow_mut().insert(name.to_string(), v);
        v
    }

    /// Bound (name, var) pairs, for collecting gradients after backward.
    pub fn bound_vars(&self) -> Vec<(String, Var)> {
        self.vars
            .borrow()
            .iter()
            .map(|(n, &v)| (n.clone(), v))
            .collect()
    }
}
