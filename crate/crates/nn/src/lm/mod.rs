//! Encoder-decoder transformer over the joint text + motion vocabulary.

pub mod data;
pub mod gumbel;
pub mod infer;
pub mod train;

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, D};
use handlm_core::codec::Vocabulary;
use handlm_core::text::EOS_ID;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{gelu, LayerNorm, Linear};
use crate::params::ParamStore;
use crate::NnError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub d_model: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub d_ff: usize,
    /// Longest source or target sequence, in tokens.
    pub max_len: usize,
    pub seed: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self::tiny()
    }
}

impl LmConfig {
    pub fn tiny() -> Self {
        Self { d_model: 128, heads: 4, enc_layers: 2, dec_layers: 2, d_ff: 256, max_len: 160, seed: 0 }
    }

    pub fn small() -> Self {
        Self { d_model: 256, heads: 8, enc_layers: 4, dec_layers: 4, d_ff: 1024, max_len: 256, seed: 0 }
    }

    pub fn preset(name: &str) -> Result<Self, NnError> {
        match name {
            "tiny" => Ok(Self::tiny()),
            "small" => Ok(Self::small()),
            other => Err(NnError::Config(format!("unknown model preset {other:?} (tiny, small)"))),
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(NnError::Config(format!("d_model {} must be a positive multiple of heads {}", self.d_model, self.heads)));
        }
        if self.enc_layers == 0 || self.dec_layers == 0 || self.d_ff == 0 || self.max_len < 4 {
            return Err(NnError::Config("layer counts, d_ff and max_len must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl Attention {
    fn new(store: &mut ParamStore, name: &str, d: usize, heads: usize, rng: &mut ChaCha8Rng) -> Result<Self, NnError> {
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), d, d, false, rng)?,
            k: Linear::new(store, &format!("{name}.k"), d, d, false, rng)?,
            v: Linear::new(store, &format!("{name}.v"), d, d, false, rng)?,
            o: Linear::new(store, &format!("{name}.o"), d, d, true, rng)?,
            heads,
        })
    }

    fn load(store: &ParamStore, name: &str, heads: usize) -> Result<Self, NnError> {
        Ok(Self {
            q: Linear::load(store, &format!("{name}.q"))?,
            k: Linear::load(store, &format!("{name}.k"))?,
            v: Linear::load(store, &format!("{name}.v"))?,
            o: Linear::load(store, &format!("{name}.o"))?,
            heads,
        })
    }

    /// `mask` is additive, broadcastable to `[B, H, Lq, Lk]`.
    fn forward(&self, x: &Tensor, memory: &Tensor, mask: &Tensor) -> Result<Tensor, NnError> {
        let (b, lq, d) = x.dims3()?;
        let lk = memory.dim(1)?;
        let dh = d / self.heads;
        let split = |t: Tensor, l: usize| -> Result<Tensor, NnError> {
            Ok(t.reshape((b, l, self.heads, dh))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split(self.q.forward(x)?, lq)?;
        let k = split(self.k.forward(memory)?, lk)?;
        let v = split(self.v.forward(memory)?, lk)?;
        let scores = (q.matmul(&k.t()?)? / (dh as f64).sqrt())?.broadcast_add(mask)?;
        let attn = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let out = attn.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((b, lq, d))?;
        self.o.forward(&out)
    }
}

#[derive(Debug, Clone)]
struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        self.down.forward(&gelu(&self.up.forward(x)?)?)
    }
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    ln1: LayerNorm,
    attn: Attention,
    ln2: LayerNorm,
    ff: FeedForward,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    ln1: LayerNorm,
    self_attn: Attention,
    ln2: LayerNorm,
    cross_attn: Attention,
    ln3: LayerNorm,
    ff: FeedForward,
}

/// Pre-norm encoder-decoder transformer with learned positions and an untied output head.
pub struct LanguageModel {
    pub config: LmConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    embed: Tensor,
    enc_pos: Tensor,
    dec_pos: Tensor,
    encoder: Vec<EncoderLayer>,
    enc_norm: LayerNorm,
    decoder: Vec<DecoderLayer>,
    dec_norm: LayerNorm,
    head: Linear,
}

/// Large negative used instead of −∞ so masked softmax rows stay finite.
const MASKED: f64 = -1e9;

/// Encoded source batch.
pub struct Memory {
    pub states: Tensor,
    /// Additive key mask `[B, 1, 1, Ls]`.
    pub mask: Tensor,
}

impl LanguageModel {
    pub fn new(config: LmConfig, vocab: Vocabulary, dtype: DType) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new(dtype);
        let (d, f, v) = (config.d_model, config.d_ff, vocab.len());
        store.normal("embed", &[v, d], 1.0 / (d as f64).sqrt(), &mut rng)?;
        store.normal("enc_pos", &[config.max_len, d], 0.02, &mut rng)?;
        store.normal("dec_pos", &[config.max_len, d], 0.02, &mut rng)?;
        for i in 0..config.enc_layers {
            let p = format!("enc{i}");
            LayerNorm::new(&mut store, &format!("{p}.ln1"), d)?;
            Attention::new(&mut store, &format!("{p}.attn"), d, config.heads, &mut rng)?;
            LayerNorm::new(&mut store, &format!("{p}.ln2"), d)?;
            Linear::new(&mut store, &format!("{p}.ff.up"), d, f, true, &mut rng)?;
            Linear::new(&mut store, &format!("{p}.ff.down"), f, d, true, &mut rng)?;
        }
        LayerNorm::new(&mut store, "enc_norm", d)?;
        for i in 0..config.dec_layers {
            let p = format!("dec{i}");
            LayerNorm::new(&mut store, &format!("{p}.ln1"), d)?;
            Attention::new(&mut store, &format!("{p}.self"), d, config.heads, &mut rng)?;
            LayerNorm::new(&mut store, &format!("{p}.ln2"), d)?;
            Attention::new(&mut store, &format!("{p}.cross"), d, config.heads, &mut rng)?;
            LayerNorm::new(&mut store, &format!("{p}.ln3"), d)?;
            Linear::new(&mut store, &format!("{p}.ff.up"), d, f, true, &mut rng)?;
            Linear::new(&mut store, &format!("{p}.ff.down"), f, d, true, &mut rng)?;
        }
        LayerNorm::new(&mut store, "dec_norm", d)?;
        Linear::new(&mut store, "head", d, v, true, &mut rng)?;
        Self::from_store(config, vocab, store)
    }

    fn from_store(config: LmConfig, vocab: Vocabulary, store: ParamStore) -> Result<Self, NnError> {
        let h = config.heads;
        let ff = |p: &str| -> Result<FeedForward, NnError> {
            Ok(FeedForward { up: Linear::load(&store, &format!("{p}.ff.up"))?, down: Linear::load(&store, &format!("{p}.ff.down"))? })
        };
        let encoder = (0..config.enc_layers)
            .map(|i| {
                let p = format!("enc{i}");
                Ok(EncoderLayer {
                    ln1: LayerNorm::load(&store, &format!("{p}.ln1"))?,
                    attn: Attention::load(&store, &format!("{p}.attn"), h)?,
                    ln2: LayerNorm::load(&store, &format!("{p}.ln2"))?,
                    ff: ff(&p)?,
                })
            })
            .collect::<Result<_, NnError>>()?;
        let decoder = (0..config.dec_layers)
            .map(|i| {
                let p = format!("dec{i}");
                Ok(DecoderLayer {
                    ln1: LayerNorm::load(&store, &format!("{p}.ln1"))?,
                    self_attn: Attention::load(&store, &format!("{p}.self"), h)?,
                    ln2: LayerNorm::load(&store, &format!("{p}.ln2"))?,
                    cross_attn: Attention::load(&store, &format!("{p}.cross"), h)?,
                    ln3: LayerNorm::load(&store, &format!("{p}.ln3"))?,
                    ff: ff(&p)?,
                })
            })
            .collect::<Result<_, NnError>>()?;
        let head = Linear::load(&store, "head")?;
        if head.weight.dim(0)? != vocab.len() {
            return Err(NnError::Checkpoint(format!("output width {} but vocabulary has {}", head.weight.dim(0)?, vocab.len())));
        }
        Ok(Self {
            embed: store.get("embed")?,
            enc_pos: store.get("enc_pos")?,
            dec_pos: store.get("dec_pos")?,
            enc_norm: LayerNorm::load(&store, "enc_norm")?,
            dec_norm: LayerNorm::load(&store, "dec_norm")?,
            encoder,
            decoder,
            head,
            config,
            vocab,
            store,
        })
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    fn check_ids(&self, rows: &[Vec<u32>]) -> Result<(), NnError> {
        let v = self.vocab.len() as u32;
        for r in rows {
            if let Some(&bad) = r.iter().find(|&&i| i >= v) {
                return Err(NnError::Vocabulary(format!("token id {bad} outside vocabulary of size {v}")));
            }
            if r.len() > self.config.max_len {
                return Err(NnError::Config(format!("sequence of {} tokens exceeds max_len {}", r.len(), self.config.max_len)));
            }
        }
        Ok(())
    }

    /// Right-pads rows with `<pad>` into a `[B, L]` id tensor.
    fn id_tensor(&self, rows: &[Vec<u32>]) -> Result<(Tensor, usize), NnError> {
        let l = rows.iter().map(Vec::len).max().unwrap_or(0).max(1);
        let pad = self.vocab.pad();
        let flat: Vec<u32> = rows.iter().flat_map(|r| r.iter().copied().chain(std::iter::repeat(pad)).take(l)).collect();
        Ok((Tensor::from_vec(flat, (rows.len(), l), &Device::Cpu)?, l))
    }

    fn embed_ids(&self, ids: &Tensor, pos: &Tensor) -> Result<Tensor, NnError> {
        let (b, l) = ids.dims2()?;
        let e = self.embed.index_select(&ids.flatten_all()?, 0)?.reshape((b, l, self.config.d_model))?;
        Ok(e.broadcast_add(&pos.narrow(0, 0, l)?)?)
    }

    pub fn encode(&self, sources: &[Vec<u32>]) -> Result<Memory, NnError> {
        self.check_ids(sources)?;
        let (ids, l) = self.id_tensor(sources)?;
        let pad = self.vocab.pad();
        let mask: Vec<f64> = sources
            .iter()
            .flat_map(|r| (0..l).map(move |j| if j < r.len() && r[j] != pad { 0.0 } else { MASKED }))
            .collect();
        let mask = Tensor::from_vec(mask, (sources.len(), 1, 1, l), &Device::Cpu)?.to_dtype(self.dtype())?;
        let mut x = self.embed_ids(&ids, &self.enc_pos)?;
        for layer in &self.encoder {
            let h = layer.ln1.forward(&x)?;
            x = (&x + layer.attn.forward(&h, &h, &mask)?)?;
            x = (&x + layer.ff.forward(&layer.ln2.forward(&x)?)?)?;
        }
        Ok(Memory { states: self.enc_norm.forward(&x)?, mask })
    }

    /// Logits `[B, L, |V|]` for decoder inputs `[B, L]` (start token first).
    pub fn decode(&self, memory: &Memory, inputs: &[Vec<u32>]) -> Result<Tensor, NnError> {
        self.check_ids(inputs)?;
        let (ids, l) = self.id_tensor(inputs)?;
        let causal: Vec<f64> = (0..l).flat_map(|i| (0..l).map(move |j| if j <= i { 0.0 } else { MASKED })).collect();
        let causal = Tensor::from_vec(causal, (1, 1, l, l), &Device::Cpu)?.to_dtype(self.dtype())?;
        let mut x = self.embed_ids(&ids, &self.dec_pos)?;
        for layer in &self.decoder {
            let h = layer.ln1.forward(&x)?;
            x = (&x + layer.self_attn.forward(&h, &h, &causal)?)?;
            let h = layer.ln2.forward(&x)?;
            x = (&x + layer.cross_attn.forward(&h, &memory.states, &memory.mask)?)?;
            x = (&x + layer.ff.forward(&layer.ln3.forward(&x)?)?)?;
        }
        self.head.forward(&self.dec_norm.forward(&x)?)
    }

    /// Decoder inputs for teacher forcing: the start token, then each target but the last.
    pub fn shift_right(&self, targets: &[Vec<u32>]) -> Vec<Vec<u32>> {
        targets
            .iter()
            .map(|t| std::iter::once(self.vocab.pad()).chain(t.iter().take(t.len().saturating_sub(1)).copied()).collect())
            .collect()
    }

    /// Teacher-forced logits `[B, Lt, |V|]`.
    pub fn forward(&self, sources: &[Vec<u32>], targets: &[Vec<u32>]) -> Result<Tensor, NnError> {
        let memory = self.encode(sources)?;
        self.decode(&memory, &self.shift_right(targets))
    }

    /// Mean negative log-likelihood of the targets; `<pad>` positions are ignored.
    pub fn lm_loss(&self, sources: &[Vec<u32>], targets: &[Vec<u32>]) -> Result<Tensor, NnError> {
        if targets.iter().any(Vec::is_empty) {
            return Err(NnError::Empty("empty target sequence".into()));
        }
        let logits = self.forward(sources, targets)?;
        nll(&logits, targets, self.vocab.pad())
    }

    /// Autoregressive decoding of every source in one batch.
    pub fn generate(&self, sources: &[Vec<u32>], sampling: &Sampling) -> Result<Vec<Generated>, NnError> {
        let memory = self.encode(sources)?;
        let max_new = sampling.max_len.min(self.config.max_len);
        let stop = [self.vocab.eom(), EOS_ID];
        let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
        let mut out: Vec<Vec<u32>> = vec![Vec::new(); sources.len()];
        let mut done = vec![false; sources.len()];
        for _ in 0..max_new {
            if done.iter().all(|&d| d) {
                break;
            }
            let inputs: Vec<Vec<u32>> = out.iter().map(|o| std::iter::once(self.vocab.pad()).chain(o.iter().copied()).collect()).collect();
            let logits = self.decode(&memory, &inputs)?;
            let (_, l, _) = logits.dims3()?;
            let last = logits.narrow(1, l - 1, 1)?.squeeze(1)?.to_dtype(DType::F64)?.to_vec2::<f64>()?;
            for (i, row) in last.into_iter().enumerate() {
                if done[i] {
                    continue;
                }
                let tok = sampling.pick(&row, &mut rng);
                out[i].push(tok);
                if stop.contains(&tok) {
                    done[i] = true;
                }
            }
        }
        Ok(out.into_iter().zip(done).map(|(ids, finished)| Generated { ids, truncated: !finished }).collect())
    }

    fn metadata(&self, extra: &BTreeMap<String, String>) -> Result<BTreeMap<String, String>, NnError> {
        let mut meta = extra.clone();
        meta.insert("kind".into(), "language-model".into());
        meta.insert("config".into(), serde_json::to_string(&self.config)?);
        meta.insert("vocabulary".into(), serde_json::to_string(&self.vocab)?);
        meta.insert("vocab_hash".into(), self.vocab.hash());
        Ok(meta)
    }

    pub fn save(&self, path: &Path, extra: &BTreeMap<String, String>) -> Result<(), NnError> {
        self.store.save(path, &self.metadata(extra)?)
    }

    /// Loads a checkpoint and checks its vocabulary against the stored hash.
    pub fn load(path: &Path) -> Result<(Self, BTreeMap<String, String>), NnError> {
        let (store, meta) = ParamStore::load(path, DType::F32)?;
        let field = |k: &str| meta.get(k).ok_or_else(|| NnError::Checkpoint(format!("{}: no {k} metadata", path.display())));
        if field("kind")? != "language-model" {
            return Err(NnError::Checkpoint(format!("{} is not a language-model checkpoint", path.display())));
        }
        let config: LmConfig = serde_json::from_str(field("config")?)?;
        config.validate()?;
        let vocab: Vocabulary = serde_json::from_str(field("vocabulary")?)?;
        vocab.validate()?;
        if &vocab.hash() != field("vocab_hash")? {
            return Err(NnError::Checkpoint(format!("{}: vocabulary hash mismatch", path.display())));
        }
        let model = Self::from_store(config, vocab, store)?;
        Ok((model, meta))
    }
}

/// Mean NLL over non-pad target positions of `[B, L, V]` logits.
pub fn nll(logits: &Tensor, targets: &[Vec<u32>], pad: u32) -> Result<Tensor, NnError> {
    let (b, l, v) = logits.dims3()?;
    let mut ids = Vec::with_capacity(b * l);
    let mut weights = Vec::with_capacity(b * l);
    for t in targets {
        for j in 0..l {
            let id = t.get(j).copied().unwrap_or(pad);
            ids.push(id.min(v as u32 - 1));
            weights.push(if j < t.len() && id != pad { 1.0 } else { 0.0 });
        }
    }
    let count: f64 = weights.iter().sum();
    if count == 0.0 {
        return Err(NnError::Empty("no target positions to score".into()));
    }
    let logp = candle_nn::ops::log_softmax(&logits.reshape((b * l, v))?, D::Minus1)?;
    let ids = Tensor::from_vec(ids, (b * l, 1), &Device::Cpu)?;
    let picked = logp.gather(&ids, 1)?.squeeze(1)?;
    let w = Tensor::from_vec(weights, b * l, &Device::Cpu)?.to_dtype(logits.dtype())?;
    Ok((picked.mul(&w)?.sum_all()?.neg()? / count)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sampling {
    /// 0 means greedy.
    pub temperature: f64,
    /// 0 disables the top-k filter.
    pub top_k: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self::greedy(64)
    }
}

impl Sampling {
    pub fn greedy(max_len: usize) -> Self {
        Self { temperature: 0.0, top_k: 0, max_len, seed: 0 }
    }

    pub fn sampled(temperature: f64, top_k: usize, max_len: usize, seed: u64) -> Self {
        Self { temperature, top_k, max_len, seed }
    }

    fn pick(&self, logits: &[f64], rng: &mut ChaCha8Rng) -> u32 {
        let argmax = || {
            let mut best = 0;
            for (i, &x) in logits.iter().enumerate() {
                if x > logits[best] {
                    best = i;
                }
            }
            best as u32
        };
        if self.temperature <= 0.0 {
            return argmax();
        }
        let mut order: Vec<usize> = (0..logits.len()).collect();
        order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
        if self.top_k > 0 {
            order.truncate(self.top_k);
        }
        let top = logits[order[0]];
        let weights: Vec<f64> = order.iter().map(|&i| ((logits[i] - top) / self.temperature).exp()).collect();
        match WeightedIndex::new(&weights) {
            Ok(dist) => order[dist.sample(rng)] as u32,
            Err(_) => argmax(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generated {
    pub ids: Vec<u32>,
    /// No stop token before the length limit.
    pub truncated: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use handlm_core::text::TextTokenizer;

    fn micro(dtype: DType) -> LanguageModel {
        let text = TextTokenizer::build(["a b c"]);
        let vocab = Vocabulary::new(text, 4).unwrap();
        let cfg = LmConfig { d_model: 8, heads: 2, enc_layers: 1, dec_layers: 1, d_ff: 16, max_len: 16, seed: 1 };
        LanguageModel::new(cfg, vocab, dtype).unwrap()
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let logits = Tensor::zeros((2, 3, 7), DType::F64, &Device::Cpu).unwrap();
        let l = nll(&logits, &[vec![1, 2, 3], vec![4, 0]], 6).unwrap().to_scalar::<f64>().unwrap();
        assert!((l - 7f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nll_matches_direct_softmax() {
        let raw = [[0.3f64, -1.2, 2.0], [1.5, 0.0, -0.5]];
        let logits = Tensor::new(&[raw], &Device::Cpu).unwrap();
        let targets = [2usize, 0];
        let oracle: f64 = raw
            .iter()
            .zip(targets)
            .map(|(row, t)| {
                let z: f64 = row.iter().map(|x| x.exp()).sum();
                -(row[t].exp() / z).ln()
            })
            .sum::<f64>()
            / 2.0;
        let got = nll(&logits, &[vec![2, 0]], 9).unwrap().to_scalar::<f64>().unwrap();
        assert!((got - oracle).abs() < 1e-12);
        let peaked = Tensor::new(&[[[60.0f64, 0.0, 0.0]]], &Device::Cpu).unwrap();
        assert!(nll(&peaked, &[vec![0]], 9).unwrap().to_scalar::<f64>().unwrap() < 1e-20);
    }

    #[test]
    fn logits_cover_vocabulary_and_greedy_is_deterministic() {
        let lm = micro(DType::F32);
        let v = lm.vocab.len();
        let logits = lm.forward(&[vec![2, 3]], &[vec![lm.vocab.som(), 1]]).unwrap();
        assert_eq!(logits.dims(), &[1, 2, v]);
        let s = Sampling::greedy(6);
        let a = lm.generate(&[vec![2, 3], vec![4]], &s).unwrap();
        assert_eq!(a, lm.generate(&[vec![2, 3], vec![4]], &s).unwrap());
        assert!(a.iter().all(|g| g.ids.len() <= 6));
        let zero_t = Sampling::sampled(0.0, 5, 6, 42);
        assert_eq!(lm.generate(&[vec![2, 3], vec![4]], &zero_t).unwrap(), a);
        assert!(lm.lm_loss(&[vec![v as u32]], &[vec![1]]).is_err());
        assert!(lm.lm_loss(&[vec![2]], &[vec![]]).is_err());
    }

    #[test]
    fn padding_does_not_change_logits() {
        let lm = micro(DType::F64);
        let alone = lm.forward(&[vec![2, 3]], &[vec![5, 6]]).unwrap();
        let batched = lm.forward(&[vec![2, 3], vec![2, 3, 4, 4]], &[vec![5, 6], vec![5, 6, 7]]).unwrap();
        let a = alone.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let b = batched.narrow(0, 0, 1).unwrap().narrow(1, 0, 2).unwrap().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let lm = micro(DType::F32);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lm.safetensors");
        lm.save(&p, &BTreeMap::from([("stage".to_string(), "pretrain".to_string())])).unwrap();
        let (back, meta) = LanguageModel::load(&p).unwrap();
        assert_eq!(meta["stage"], "pretrain");
        assert_eq!(back.store.hash().unwrap(), lm.store.hash().unwrap());
        assert_eq!(back.vocab, lm.vocab);
    }
}
