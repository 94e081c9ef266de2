//! A small trainable autoregressive sequence model with exact log-likelihoods
//! and analytic gradients: token embeddings, two causal self-attention blocks
//! (width 64, 2 heads), and a tied output projection.
//!
//! Parameters live in one flat vector so gradients, finite-difference checks,
//! and optimizers all share a single layout. The scalar type is generic:
//! float64 for gradient tests, float32 for training runs.

mod transformer;

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::path::Path;

use rand::Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetSplit;
use crate::prompting::{render_prompt, IDK_RESPONSE, YES_RESPONSE};
use crate::rng::rng_from;

pub use transformer::Activations;

/// Scalar type for model parameters and math.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::iter::Sum
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + Debug
    + Default
    + 'static
{
    const DTYPE: &'static str;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
}
impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
}

/// Shorthand for lifting an f64 constant into the scalar type.
#[inline]
pub(crate) fn s<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("constant representable")
}

pub const PAD_TOKEN: &str = "<pad>";

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("context overflow: sequence of {len} tokens exceeds context length {max}")]
    ContextOverflow { len: usize, max: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("token {0:?} not in vocabulary")]
    UnknownToken(String),
    #[error("checkpoint dtype {found:?} does not match requested {requested:?}")]
    DtypeMismatch { found: String, requested: String },
    #[error("checkpoint version {0} unsupported")]
    BadVersion(u32),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Word inventory with a reserved padding token and the two canonical
/// response strings as atomic label tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, u32>,
}

const PUNCT: [char; 13] = [
    '[', ']', '(', ')', ':', ',', '.', '!', '?', '"', '“', '”', ';',
];

/// Splits text into word tokens: whitespace separation with leading/trailing
/// punctuation peeled into tokens of their own. Interior punctuation (as in
/// "don’t") stays attached.
pub fn tokenize_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for piece in text.split_whitespace() {
        let mut lead = Vec::new();
        let mut core = piece;
        loop {
            let mut chars = core.chars();
            match chars.next() {
                Some(c) if PUNCT.contains(&c) => {
                    lead.push(c.to_string());
                    core = chars.as_str();
                }
                _ => break,
            }
        }
        let mut trail = Vec::new();
        loop {
            let mut chars = core.chars();
            match chars.next_back() {
                Some(c) if PUNCT.contains(&c) => {
                    trail.push(c.to_string());
                    core = chars.as_str();
                }
                _ => break,
            }
        }
        out.extend(lead);
        if !core.is_empty() {
            out.push(core.to_string());
        }
        out.extend(trail.into_iter().rev());
    }
    out
}

impl Vocabulary {
    /// Builds the vocabulary from explicit word tokens. Padding and the two
    /// label tokens are always present, at indices 0, 1, 2.
    pub fn from_words<I: IntoIterator<Item = String>>(words: I) -> Self {
        let mut set: std::collections::BTreeSet<String> = words.into_iter().collect();
        set.remove(PAD_TOKEN);
        set.remove(YES_RESPONSE);
        set.remove(IDK_RESPONSE);
        let mut tokens = vec![
            PAD_TOKEN.to_string(),
            YES_RESPONSE.to_string(),
            IDK_RESPONSE.to_string(),
        ];
        tokens.extend(set);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Collects every word appearing in any rendered prompt of the split.
    pub fn from_split(split: &DatasetSplit) -> Self {
        let mut words = Vec::new();
        for group in split.train.iter().chain(&split.test) {
            for sample in group.members.values() {
                words.extend(tokenize_words(&render_prompt(sample).text));
            }
        }
        Self::from_words(words)
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn yes_id(&self) -> u32 {
        self.id(YES_RESPONSE).expect("label token always present")
    }

    pub fn idk_id(&self) -> u32 {
        self.id(IDK_RESPONSE).expect("label token always present")
    }

    /// Tokenizes and encodes a prompt text.
    pub fn encode_prompt(&self, text: &str) -> Result<Vec<u32>, PolicyError> {
        tokenize_words(text)
            .into_iter()
            .map(|w| self.id(&w).ok_or(PolicyError::UnknownToken(w)))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Architecture descriptor; serialized into checkpoints.
///
/// Initialization scales are per matrix family: wide embeddings keep token
/// content visible through mean pooling, small attention projections start
/// near-uniform attention, and zero output projections make each block an
/// identity at step 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub embed_dim: usize,
    pub n_heads: usize,
    pub n_blocks: usize,
    pub context_len: usize,
    pub embed_std: f64,
    pub attn_std: f64,
    pub value_std: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            embed_dim: 64,
            n_heads: 2,
            n_blocks: 2,
            context_len: 256,
            embed_std: 0.3,
            attn_std: 0.01,
            value_std: 0.05,
        }
    }
}

impl ArchConfig {
    pub fn head_dim(&self) -> usize {
        debug_assert_eq!(self.embed_dim % self.n_heads, 0);
        self.embed_dim / self.n_heads
    }

    pub fn param_count(&self, vocab_size: usize) -> usize {
        (vocab_size + self.context_len) * self.embed_dim
            + self.n_blocks * 4 * self.embed_dim * self.embed_dim
    }
}

/// Flat-parameter offsets for one layout.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub vocab_size: usize,
    pub dim: usize,
    pub context_len: usize,
}

impl Layout {
    #[inline]
    pub fn embedding(&self, token: usize) -> usize {
        token * self.dim
    }

    #[inline]
    pub fn position(&self, pos: usize) -> usize {
        (self.vocab_size + pos) * self.dim
    }

    #[inline]
    pub fn block(&self, b: usize) -> usize {
        (self.vocab_size + self.context_len) * self.dim + b * 4 * self.dim * self.dim
    }
}

/// The trainable policy: flat parameters plus architecture and vocabulary.
#[derive(Debug, Clone)]
pub struct PolicyModel<F: Scalar> {
    pub arch: ArchConfig,
    pub vocab: Vocabulary,
    pub params: Vec<F>,
}

/// An immutable snapshot of a policy, used as the DPO reference.
#[derive(Debug, Clone)]
pub struct FrozenReference<F: Scalar>(PolicyModel<F>);

impl<F: Scalar> FrozenReference<F> {
    pub fn model(&self) -> &PolicyModel<F> {
        &self.0
    }
}

/// Deep, immutable copy; later training steps cannot alter it.
pub fn snapshot_reference<F: Scalar>(model: &PolicyModel<F>) -> FrozenReference<F> {
    FrozenReference(model.clone())
}

/// Per-sequence scoring result.
#[derive(Debug, Clone)]
pub struct SequenceScore {
    pub total: f64,
    pub per_token: Vec<f64>,
}

/// Closure output for [`PolicyModel::loss_gradient`]: the loss value plus its
/// partial derivative with respect to each request's total log-probability.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub value: f64,
    pub dvalue_dtotal: Vec<f64>,
}

/// One (prompt, response) pair to score or differentiate through.
#[derive(Debug, Clone, Copy)]
pub struct GradRequest<'a> {
    pub prompt: &'a [u32],
    pub response: &'a [u32],
}

impl<F: Scalar> PolicyModel<F> {
    /// Random initialization: gaussian embeddings and Q/K/V projections,
    /// zero output projections.
    pub fn new(arch: ArchConfig, vocab: Vocabulary, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let mut gauss = move || -> f64 {
            // Box-Muller transform on uniform draws.
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let layout = Layout {
            vocab_size: vocab.len(),
            dim: arch.embed_dim,
            context_len: arch.context_len,
        };
        let total = arch.param_count(vocab.len());
        let mut params = vec![F::zero(); total];
        let d2 = arch.embed_dim * arch.embed_dim;
        for p in params.iter_mut().take(layout.position(arch.context_len)) {
            *p = s(gauss() * arch.embed_std);
        }
        for b in 0..arch.n_blocks {
            let base = layout.block(b);
            // Wq, Wk small (near-uniform attention), Wv moderate, Wo zero.
            for p in params[base..base + 2 * d2].iter_mut() {
                *p = s(gauss() * arch.attn_std);
            }
            for p in params[base + 2 * d2..base + 3 * d2].iter_mut() {
                *p = s(gauss() * arch.value_std);
            }
        }
        PolicyModel { arch, vocab, params }
    }

    /// All-zero parameters: the output distribution is exactly uniform.
    pub fn zeroed(arch: ArchConfig, vocab: Vocabulary) -> Self {
        let total = arch.param_count(vocab.len());
        PolicyModel {
            arch,
            vocab,
            params: vec![F::zero(); total],
        }
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout {
            vocab_size: self.vocab.len(),
            dim: self.arch.embed_dim,
            context_len: self.arch.context_len,
        }
    }

    fn check_context(&self, len: usize) -> Result<(), PolicyError> {
        if len > self.arch.context_len {
            return Err(PolicyError::ContextOverflow {
                len,
                max: self.arch.context_len,
            });
        }
        Ok(())
    }

    /// Exact autoregressive log-probability of `response` given `prompt`:
    /// total plus per-token values, each `log P(response_i | prompt, response_<i>)`.
    pub fn sequence_log_prob(
        &self,
        prompt: &[u32],
        response: &[u32],
    ) -> Result<SequenceScore, PolicyError> {
        self.check_context(prompt.len() + response.len())?;
        if response.is_empty() {
            return Ok(SequenceScore {
                total: 0.0,
                per_token: Vec::new(),
            });
        }
        if prompt.is_empty() {
            // The model conditions on at least one token; scoring an
            // unconditioned first token would need a BOS convention.
            return Err(PolicyError::ContextOverflow { len: 0, max: 0 });
        }
        let mut fed: Vec<u32> = Vec::with_capacity(prompt.len() + response.len() - 1);
        fed.extend_from_slice(prompt);
        fed.extend_from_slice(&response[..response.len() - 1]);
        let acts = transformer::forward(self, &fed);
        let mut per_token = Vec::with_capacity(response.len());
        for (i, &tok) in response.iter().enumerate() {
            let pos = prompt.len() - 1 + i;
            let logp = transformer::log_softmax_at(self, &acts, pos);
            per_token.push(logp[tok as usize].to_f64().expect("scalar convertible"));
        }
        Ok(SequenceScore {
            total: per_token.iter().sum(),
            per_token,
        })
    }

    /// Log-probabilities of several single-token responses after the same
    /// prompt, from one forward pass.
    pub fn label_log_probs(
        &self,
        prompt: &[u32],
        labels: &[u32],
    ) -> Result<Vec<f64>, PolicyError> {
        self.check_context(prompt.len() + 1)?;
        if prompt.is_empty() {
            return Err(PolicyError::ContextOverflow { len: 0, max: 0 });
        }
        let acts = transformer::forward(self, prompt);
        let logp = transformer::log_softmax_at(self, &acts, prompt.len() - 1);
        Ok(labels
            .iter()
            .map(|&t| logp[t as usize].to_f64().expect("scalar convertible"))
            .collect())
    }

    /// Full next-token log-distribution at every position of `tokens`.
    /// Exposed for normalization checks and perplexity probes.
    pub fn log_distributions(&self, tokens: &[u32]) -> Result<Vec<Vec<f64>>, PolicyError> {
        self.check_context(tokens.len())?;
        let acts = transformer::forward(self, tokens);
        Ok((0..tokens.len())
            .map(|pos| {
                transformer::log_softmax_at(self, &acts, pos)
                    .into_iter()
                    .map(|x| x.to_f64().expect("scalar convertible"))
                    .collect()
            })
            .collect())
    }

    /// Evaluates `loss` on the requests' log-probabilities and returns the
    /// loss value together with its analytic gradient with respect to every
    /// parameter. The closure reports d(loss)/d(total log-prob) per request;
    /// the chain rule through the network is handled here.
    pub fn loss_gradient<L>(
        &self,
        requests: &[GradRequest<'_>],
        loss: L,
    ) -> Result<(f64, Vec<F>), PolicyError>
    where
        L: FnOnce(&[SequenceScore]) -> LossEval,
    {
        let scores: Vec<SequenceScore> = requests
            .iter()
            .map(|r| self.sequence_log_prob(r.prompt, r.response))
            .collect::<Result<_, _>>()?;
        let eval = loss(&scores);
        assert_eq!(
            eval.dvalue_dtotal.len(),
            requests.len(),
            "loss closure must weight every request"
        );
        if !eval.value.is_finite() {
            return Err(PolicyError::NonFinite("loss value".into()));
        }

        let mut grad = vec![F::zero(); self.params.len()];
        let mut i = 0;
        while i < requests.len() {
            // Requests sharing a prompt with single-token responses reuse one
            // forward/backward pass.
            let mut j = i + 1;
            if requests[i].response.len() == 1 {
                while j < requests.len()
                    && requests[j].response.len() == 1
                    && requests[j].prompt == requests[i].prompt
                {
                    j += 1;
                }
            }
            let weighted: Vec<(u32, f64)> = (i..j)
                .map(|r| (requests[r].response[0], eval.dvalue_dtotal[r]))
                .collect();
            if requests[i].response.len() == 1 {
                transformer::accumulate_label_grad(
                    self,
                    requests[i].prompt,
                    &weighted,
                    &mut grad,
                );
            } else {
                transformer::accumulate_sequence_grad(
                    self,
                    requests[i].prompt,
                    requests[i].response,
                    eval.dvalue_dtotal[i],
                    &mut grad,
                );
            }
            i = j;
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(PolicyError::NonFinite("gradient".into()));
        }
        Ok((eval.value, grad))
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile<F> {
    version: u32,
    dtype: String,
    arch: ArchConfig,
    vocab: Vec<String>,
    params: Vec<F>,
}

pub fn save_checkpoint<F: Scalar>(model: &PolicyModel<F>, path: &Path) -> Result<(), PolicyError> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        dtype: F::DTYPE.to_string(),
        arch: model.arch.clone(),
        vocab: model.vocab.tokens.clone(),
        params: model.params.clone(),
    };
    let bytes = serde_json::to_vec(&file)?;
    crate::manifest::write_atomic(path, &bytes)?;
    Ok(())
}

pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<PolicyModel<F>, PolicyError> {
    let bytes = std::fs::read(path)?;
    let file: CheckpointFile<F> = serde_json::from_slice(&bytes)?;
    if file.version != CHECKPOINT_VERSION {
        return Err(PolicyError::BadVersion(file.version));
    }
    if file.dtype != F::DTYPE {
        return Err(PolicyError::DtypeMismatch {
            found: file.dtype,
            requested: F::DTYPE.to_string(),
        });
    }
    let mut vocab = Vocabulary {
        tokens: file.vocab,
        index: BTreeMap::new(),
    };
    vocab.rebuild_index();
    let expected = file.arch.param_count(vocab.len());
    if file.params.len() != expected {
        return Err(PolicyError::NonFinite(format!(
            "checkpoint has {} params, expected {expected}",
            file.params.len()
        )));
    }
    Ok(PolicyModel {
        arch: file.arch,
        vocab,
        params: file.params,
    })
}
