use indexmap::IndexSet;
use serde::{Deserialize, Serialize};

use super::config::StrongConfig;
use crate::error::{Error, Result};
use crate::nn::{BiLstm, BiLstmCache, Embedding, Layout, Linear, Slot};
use crate::seed::rng_for;

/// Phoneme symbol table; index order is insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    symbols: IndexSet<String>,
}

impl Vocabulary {
    pub fn from_sequences<'a, I, S>(seqs: I) -> Self
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        let mut symbols = IndexSet::new();
        for s in seqs {
            for sym in s.as_ref() {
                if !symbols.contains(sym) {
                    symbols.insert(sym.clone());
                }
            }
        }
        Self { symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.symbols.iter().map(String::as_str)
    }

    pub fn encode(&self, seq: &[String]) -> Result<Vec<usize>> {
        seq.iter()
            .map(|s| {
                self.symbols
                    .get_index_of(s)
                    .ok_or_else(|| Error::Vocabulary(s.clone()))
            })
            .collect()
    }
}

/// One model input: frame features plus conditioning indices.
#[derive(Debug, Clone, Copy)]
pub struct ModelInput<'a> {
    pub frames: &'a [Vec<f64>],
    pub listener: usize,
    pub domain: usize,
    /// Encoded phoneme ids of the utterance's transcript.
    pub phonemes: &'a [usize],
    /// Encoded phoneme ids of its reference sequence.
    pub reference: &'a [usize],
}

#[derive(Debug, Clone)]
struct PhonemeArch {
    emb: Embedding,
    enc: BiLstm,
    /// Learned stand-in for the context of an empty sequence.
    null: Slot,
}

#[derive(Debug, Clone)]
struct Arch {
    listener: Embedding,
    domain: Embedding,
    phoneme: Option<PhonemeArch>,
    head: BiLstm,
    out: Linear,
}

impl Arch {
    fn build(
        cfg: &StrongConfig,
        feature_dim: usize,
        n_listeners: usize,
        n_domains: usize,
        vocab: usize,
    ) -> (Self, Layout) {
        let mut layout = Layout::default();
        let listener = Embedding::new(
            &mut layout,
            "listener_emb",
            n_listeners,
            cfg.listener_emb_dim,
        );
        let domain = Embedding::new(&mut layout, "domain_emb", n_domains, cfg.domain_emb_dim);
        let pe = &cfg.phoneme_encoder;
        let phoneme = pe.enabled.then(|| {
            let emb = Embedding::new(&mut layout, "phoneme_emb", vocab, pe.emb_dim);
            let enc = BiLstm::with_directions(
                &mut layout,
                "phoneme_enc",
                pe.emb_dim,
                0,
                pe.hidden,
                pe.layers,
                pe.bidirectional,
            );
            let null = layout.alloc("phoneme_null", &[2 * pe.hidden]);
            PhonemeArch { emb, enc, null }
        });
        let static_dim = cfg.listener_emb_dim + cfg.domain_emb_dim + pe.context_dim();
        let head = BiLstm::new(
            &mut layout,
            "head",
            feature_dim,
            static_dim,
            cfg.head.hidden,
            cfg.head.layers,
        );
        let out = Linear::new(&mut layout, "out", head.output_dim(), 1);
        (
            Self {
                listener,
                domain,
                phoneme,
                head,
                out,
            },
            layout,
        )
    }
}

enum SeqCache {
    Null,
    Enc { ids: Vec<usize>, cache: BiLstmCache },
}

/// Activations kept from [`StrongModel::forward_cached`] for backprop.
pub struct ForwardCache {
    stat: Vec<f64>,
    seqs: Vec<SeqCache>,
    head: BiLstmCache,
}

/// Frame-level scorer: frame features with listener, domain and phoneme
/// context appended to every frame, a bidirectional recurrent head, and a
/// linear projection to one score per frame.
#[derive(Debug, Clone)]
pub struct StrongModel {
    pub config: StrongConfig,
    pub feature_dim: usize,
    pub n_listeners: usize,
    pub n_domains: usize,
    pub vocab: Vocabulary,
    pub layout: Layout,
    pub params: Vec<f64>,
    arch: Arch,
}

impl StrongModel {
    /// Freshly initialised model; identical arguments give identical weights.
    pub fn new(
        config: StrongConfig,
        feature_dim: usize,
        n_listeners: usize,
        n_domains: usize,
        vocab: Vocabulary,
        seed: u64,
    ) -> Result<Self> {
        let mut m = Self::zeros(config, feature_dim, n_listeners, n_domains, vocab)?;
        let mut rng = rng_for(seed, "strong/init");
        let a = &m.arch;
        let p = &mut m.params;
        a.listener.init(p, &mut rng);
        a.domain.init(p, &mut rng);
        if let Some(ph) = &a.phoneme {
            ph.emb.init(p, &mut rng);
            ph.enc.init(p, &mut rng);
            crate::nn::init_uniform(p, ph.null, 0.1, &mut rng);
        }
        a.head.init(p, &mut rng);
        a.out.init(p, &mut rng);
        Ok(m)
    }

    /// Model with every parameter set to zero.
    pub fn zeros(
        config: StrongConfig,
        feature_dim: usize,
        n_listeners: usize,
        n_domains: usize,
        vocab: Vocabulary,
    ) -> Result<Self> {
        config.validate()?;
        if feature_dim == 0 || n_listeners == 0 || n_domains == 0 {
            return Err(Error::Config(
                "model needs feature_dim, listeners and domains > 0".into(),
            ));
        }
        let (arch, layout) = Arch::build(&config, feature_dim, n_listeners, n_domains, vocab.len());
        let params = vec![0.0; layout.size];
        Ok(Self {
            config,
            feature_dim,
            n_listeners,
            n_domains,
            vocab,
            layout,
            params,
            arch,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Zero the output projection, making every frame score zero.
    pub fn zero_head(&mut self) {
        let out = self.arch.out;
        out.w.of_mut(&mut self.params).fill(0.0);
        out.b.of_mut(&mut self.params).fill(0.0);
    }

    /// Replace the embedding row of `listener` (used to probe conditioning).
    pub fn listener_embedding_mut(&mut self, listener: usize) -> &mut [f64] {
        let e = self.arch.listener;
        &mut e.table.of_mut(&mut self.params)[listener * e.dim..(listener + 1) * e.dim]
    }

    pub fn context_dim(&self) -> usize {
        self.config.phoneme_encoder.context_dim()
    }

    fn check(&self, x: &ModelInput) -> Result<()> {
        if x.frames.is_empty() {
            return Err(Error::Config("input has no frames".into()));
        }
        if let Some(f) = x.frames.iter().find(|f| f.len() != self.feature_dim) {
            return Err(Error::Config(format!(
                "frame dimension {} does not match model input {}",
                f.len(),
                self.feature_dim
            )));
        }
        if x.listener >= self.n_listeners || x.domain >= self.n_domains {
            return Err(Error::Config(format!(
                "listener {} or domain {} index out of range",
                x.listener, x.domain
            )));
        }
        let v = self.vocab.len();
        if x.phonemes.iter().chain(x.reference).any(|&i| i >= v) {
            return Err(Error::Config("phoneme id out of vocabulary range".into()));
        }
        Ok(())
    }

    fn encode_seq(&self, p: &[f64], ph: &PhonemeArch, ids: &[usize]) -> (Vec<f64>, SeqCache) {
        if ids.is_empty() {
            return (ph.null.of(p).to_vec(), SeqCache::Null);
        }
        let xs: Vec<Vec<f64>> = ids.iter().map(|&i| ph.emb.row(p, i).to_vec()).collect();
        let cache = ph.enc.forward(p, &xs, &[]);
        let last = ids.len() - 1;
        let v = match cache.backward_state(0) {
            Some(b) => [cache.forward_state(last), b].concat(),
            None => [cache.forward_state(0), cache.forward_state(last)].concat(),
        };
        (
            v,
            SeqCache::Enc {
                ids: ids.to_vec(),
                cache,
            },
        )
    }

    /// Phoneme context of a (transcript, reference) pair: for each sequence,
    /// the encoder state that has read the whole sequence in each direction
    /// (forward state at the last step, backward state at the first step;
    /// first and last states for a unidirectional encoder), then the two
    /// sequences concatenated. Empty sequences use a learned null vector.
    pub fn encode_phoneme_context(&self, phonemes: &[usize], reference: &[usize]) -> Vec<f64> {
        match &self.arch.phoneme {
            None => Vec::new(),
            Some(ph) => {
                let (a, _) = self.encode_seq(&self.params, ph, phonemes);
                let (b, _) = self.encode_seq(&self.params, ph, reference);
                [a, b].concat()
            }
        }
    }

    /// Frame scores in the normalized space.
    pub fn forward(&self, x: &ModelInput) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.forward_cached(&self.params, x).0)
    }

    pub(crate) fn forward_cached(&self, p: &[f64], x: &ModelInput) -> (Vec<f64>, ForwardCache) {
        let a = &self.arch;
        let mut stat = Vec::with_capacity(a.head.layers[0].0.static_input);
        stat.extend_from_slice(a.listener.row(p, x.listener));
        stat.extend_from_slice(a.domain.row(p, x.domain));
        let mut seqs = Vec::new();
        if let Some(ph) = &a.phoneme {
            for ids in [x.phonemes, x.reference] {
                let (v, c) = self.encode_seq(p, ph, ids);
                stat.extend_from_slice(&v);
                seqs.push(c);
            }
        }
        let head = a.head.forward(p, x.frames, &stat);
        let scores = head.output.iter().map(|h| a.out.forward(p, h)[0]).collect();
        (scores, ForwardCache { stat, seqs, head })
    }

    /// Accumulate into `g` the gradient of `sum_t dscores[t] * score[t]`.
    pub(crate) fn backward(
        &self,
        p: &[f64],
        x: &ModelInput,
        cache: &ForwardCache,
        dscores: &[f64],
        g: &mut [f64],
    ) {
        let a = &self.arch;
        let hd = a.head.output_dim();
        let mut d_out = Vec::with_capacity(dscores.len());
        for (h, &ds) in cache.head.output.iter().zip(dscores) {
            let mut dh = vec![0.0; hd];
            a.out.backward(p, h, &[ds], g, Some(&mut dh));
            d_out.push(dh);
        }
        let mut dstat = vec![0.0; cache.stat.len()];
        a.head.backward(
            p,
            &cache.stat,
            &cache.head,
            &d_out,
            g,
            false,
            Some(&mut dstat),
        );

        let (ld, dd) = (a.listener.dim, a.domain.dim);
        a.listener.backward(g, x.listener, &dstat[..ld]);
        a.domain.backward(g, x.domain, &dstat[ld..ld + dd]);
        if let Some(ph) = &a.phoneme {
            let h = ph.enc.hidden;
            let mut off = ld + dd;
            for sc in &cache.seqs {
                let dctx = &dstat[off..off + 2 * h];
                off += 2 * h;
                match sc {
                    SeqCache::Null => {
                        for (gv, d) in ph.null.of_mut(g).iter_mut().zip(dctx) {
                            *gv += d;
                        }
                    }
                    SeqCache::Enc { ids, cache } => {
                        let last = ids.len() - 1;
                        let od = ph.enc.output_dim();
                        let mut d_top = vec![vec![0.0; od]; ids.len()];
                        if ph.enc.bidirectional() {
                            add(&mut d_top[last][..h], &dctx[..h]);
                            add(&mut d_top[0][h..], &dctx[h..]);
                        } else {
                            add(&mut d_top[0], &dctx[..h]);
                            add(&mut d_top[last], &dctx[h..]);
                        }
                        let dx = ph
                            .enc
                            .backward(p, &[], cache, &d_top, g, true, None)
                            .expect("input gradient requested");
                        for (&i, d) in ids.iter().zip(&dx) {
                            ph.emb.backward(g, i, d);
                        }
                    }
                }
            }
        }
    }

    /// Gradient of `sum_t dscores[t] * score[t]` with respect to all parameters.
    pub fn gradient(&self, x: &ModelInput, dscores: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let (_, cache) = self.forward_cached(&self.params, x);
        let mut g = vec![0.0; self.params.len()];
        self.backward(&self.params, x, &cache, dscores, &mut g);
        Ok(g)
    }

    /// Rebuild a model from stored parameters, checking the layout.
    pub fn from_parts(
        config: StrongConfig,
        feature_dim: usize,
        n_listeners: usize,
        n_domains: usize,
        vocab: Vocabulary,
        params: Vec<f64>,
    ) -> Result<Self> {
        let mut m = Self::zeros(config, feature_dim, n_listeners, n_domains, vocab)?;
        if params.len() != m.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                m.params.len(),
                params.len()
            )));
        }
        m.params = params;
        Ok(m)
    }
}

fn add(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}
