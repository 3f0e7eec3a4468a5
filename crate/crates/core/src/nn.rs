//! Minimal f64 neural-network building blocks with hand-written backward
//! passes: linear layers, embeddings, (bidirectional) LSTMs and Adam.
//!
//! All parameters of a model live in one flat `Vec<f64>`; layers hold
//! [`Slot`]s into it. Gradients use a buffer with the same layout, which
//! makes per-example gradients cheap to sum in a fixed order.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// A contiguous block of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    #[inline]
    pub fn of<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset..self.offset + self.len]
    }

    #[inline]
    pub fn of_mut<'a>(&self, p: &'a mut [f64]) -> &'a mut [f64] {
        &mut p[self.offset..self.offset + self.len]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub slot: Slot,
}

/// Names and shapes of every parameter block, in allocation order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub tensors: Vec<TensorInfo>,
    pub size: usize,
}

impl Layout {
    pub fn alloc(&mut self, name: impl Into<String>, shape: &[usize]) -> Slot {
        let len = shape.iter().product();
        let slot = Slot {
            offset: self.size,
            len,
        };
        self.size += len;
        self.tensors.push(TensorInfo {
            name: name.into(),
            shape: shape.to_vec(),
            slot,
        });
        slot
    }
}

/// `out += W x` for row-major `W` of shape `rows x cols`.
#[inline]
pub fn gemv_acc(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(x.len(), cols);
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// `dx += W^T dy`.
#[inline]
pub fn gemv_t_acc(w: &[f64], cols: usize, dy: &[f64], dx: &mut [f64]) {
    for (d, row) in dy.iter().zip(w.chunks_exact(cols)) {
        if *d == 0.0 {
            continue;
        }
        for (a, b) in dx.iter_mut().zip(row) {
            *a += d * b;
        }
    }
}

/// `G += dy x^T`.
#[inline]
pub fn outer_acc(g: &mut [f64], cols: usize, dy: &[f64], x: &[f64]) {
    for (d, row) in dy.iter().zip(g.chunks_exact_mut(cols)) {
        if *d == 0.0 {
            continue;
        }
        for (a, b) in row.iter_mut().zip(x) {
            *a += d * b;
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn init_uniform<R: Rng + ?Sized>(p: &mut [f64], slot: Slot, bound: f64, rng: &mut R) {
    for v in slot.of_mut(p) {
        *v = if bound > 0.0 {
            rng.random_range(-bound..bound)
        } else {
            0.0
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Slot,
    pub b: Slot,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(layout: &mut Layout, name: &str, input: usize, output: usize) -> Self {
        let w = layout.alloc(format!("{name}.weight"), &[output, input]);
        let b = layout.alloc(format!("{name}.bias"), &[output]);
        Self {
            w,
            b,
            input,
            output,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, p: &mut [f64], rng: &mut R) {
        let bound = 1.0 / (self.input as f64).sqrt();
        init_uniform(p, self.w, bound, rng);
        init_uniform(p, self.b, bound, rng);
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = self.b.of(p).to_vec();
        gemv_acc(self.w.of(p), self.input, x, &mut y);
        y
    }

    /// Accumulate parameter gradients; add the input gradient to `dx` if given.
    pub fn backward(
        &self,
        p: &[f64],
        x: &[f64],
        dy: &[f64],
        g: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        outer_acc(self.w.of_mut(g), self.input, dy, x);
        for (a, b) in self.b.of_mut(g).iter_mut().zip(dy) {
            *a += b;
        }
        if let Some(dx) = dx {
            gemv_t_acc(self.w.of(p), self.input, dy, dx);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Embedding {
    pub table: Slot,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(layout: &mut Layout, name: &str, rows: usize, dim: usize) -> Self {
        Self {
            table: layout.alloc(format!("{name}.weight"), &[rows, dim]),
            rows,
            dim,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, p: &mut [f64], rng: &mut R) {
        for v in self.table.of_mut(p) {
            *v = rng.random_range(-1.0..1.0) * 0.5;
        }
    }

    pub fn row<'a>(&self, p: &'a [f64], i: usize) -> &'a [f64] {
        &self.table.of(p)[i * self.dim..(i + 1) * self.dim]
    }

    pub fn backward(&self, g: &mut [f64], i: usize, d: &[f64]) {
        let row = &mut self.table.of_mut(g)[i * self.dim..(i + 1) * self.dim];
        for (a, b) in row.iter_mut().zip(d) {
            *a += b;
        }
    }
}

/// One LSTM direction. Gate order is input, forget, cell, output.
///
/// Besides the per-step input, the cell may take a static input that is the
/// same at every step (equivalent to concatenating a replicated vector to
/// each step, at a fraction of the cost).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lstm {
    pub wx: Slot,
    pub ws: Option<Slot>,
    pub wh: Slot,
    pub b: Slot,
    pub input: usize,
    pub static_input: usize,
    pub hidden: usize,
    pub reverse: bool,
}

/// Activations of one LSTM pass, indexed by time step.
#[derive(Debug, Clone)]
pub struct LstmCache {
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    pub hidden: Vec<Vec<f64>>,
}

impl Lstm {
    pub fn new(
        layout: &mut Layout,
        name: &str,
        input: usize,
        static_input: usize,
        hidden: usize,
        reverse: bool,
    ) -> Self {
        let wx = layout.alloc(format!("{name}.weight_ih"), &[4 * hidden, input]);
        let ws = (static_input > 0)
            .then(|| layout.alloc(format!("{name}.weight_static"), &[4 * hidden, static_input]));
        let wh = layout.alloc(format!("{name}.weight_hh"), &[4 * hidden, hidden]);
        let b = layout.alloc(format!("{name}.bias"), &[4 * hidden]);
        Self {
            wx,
            ws,
            wh,
            b,
            input,
            static_input,
            hidden,
            reverse,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, p: &mut [f64], rng: &mut R) {
        let bound = 1.0 / (self.hidden as f64).sqrt();
        init_uniform(p, self.wx, bound, rng);
        if let Some(ws) = self.ws {
            init_uniform(p, ws, bound, rng);
        }
        init_uniform(p, self.wh, bound, rng);
        init_uniform(p, self.b, bound, rng);
        // forget-gate bias starts at 1
        let h = self.hidden;
        self.b.of_mut(p)[h..2 * h]
            .iter_mut()
            .for_each(|v| *v += 1.0);
    }

    fn order(&self, t: usize) -> Box<dyn Iterator<Item = usize>> {
        if self.reverse {
            Box::new((0..t).rev())
        } else {
            Box::new(0..t)
        }
    }

    fn prev_step(&self, t: usize, len: usize) -> Option<usize> {
        if self.reverse {
            (t + 1 < len).then_some(t + 1)
        } else {
            t.checked_sub(1)
        }
    }

    pub fn forward(&self, p: &[f64], xs: &[Vec<f64>], stat: &[f64]) -> LstmCache {
        let h = self.hidden;
        let len = xs.len();
        let mut base = self.b.of(p).to_vec();
        if let Some(ws) = self.ws {
            gemv_acc(ws.of(p), self.static_input, stat, &mut base);
        }
        let (wx, wh) = (self.wx.of(p), self.wh.of(p));
        let mut cache = LstmCache {
            gates: vec![Vec::new(); len],
            cells: vec![Vec::new(); len],
            hidden: vec![Vec::new(); len],
        };
        let zeros = vec![0.0; h];
        for t in self.order(len) {
            let (h_prev, c_prev) = match self.prev_step(t, len) {
                Some(s) => (&cache.hidden[s], &cache.cells[s]),
                None => (&zeros, &zeros),
            };
            let mut z = base.clone();
            gemv_acc(wx, self.input, &xs[t], &mut z);
            gemv_acc(wh, h, h_prev, &mut z);
            for k in 0..h {
                z[k] = sigmoid(z[k]);
                z[h + k] = sigmoid(z[h + k]);
                z[2 * h + k] = z[2 * h + k].tanh();
                z[3 * h + k] = sigmoid(z[3 * h + k]);
            }
            let mut c = vec![0.0; h];
            let mut hv = vec![0.0; h];
            for k in 0..h {
                c[k] = z[h + k] * c_prev[k] + z[k] * z[2 * h + k];
                hv[k] = z[3 * h + k] * c[k].tanh();
            }
            cache.gates[t] = z;
            cache.cells[t] = c;
            cache.hidden[t] = hv;
        }
        cache
    }

    /// Backpropagate `dh` (gradient w.r.t. every step's hidden output).
    /// Returns input gradients if `want_dx`, and adds the static-input
    /// gradient to `dstat`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        p: &[f64],
        xs: &[Vec<f64>],
        stat: &[f64],
        cache: &LstmCache,
        dh: &[Vec<f64>],
        g: &mut [f64],
        want_dx: bool,
        dstat: Option<&mut [f64]>,
    ) -> Option<Vec<Vec<f64>>> {
        let h = self.hidden;
        let len = xs.len();
        let zeros = vec![0.0; h];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz_sum = vec![0.0; 4 * h];
        let mut dxs = want_dx.then(|| vec![vec![0.0; self.input]; len]);
        let (wx, wh) = (self.wx.of(p), self.wh.of(p));
        let order: Vec<usize> = self.order(len).collect();
        let mut dz = vec![0.0; 4 * h];
        for &t in order.iter().rev() {
            let (h_prev, c_prev) = match self.prev_step(t, len) {
                Some(s) => (&cache.hidden[s], &cache.cells[s]),
                None => (&zeros, &zeros),
            };
            let z = &cache.gates[t];
            let c = &cache.cells[t];
            for k in 0..h {
                let (i, f, gg, o) = (z[k], z[h + k], z[2 * h + k], z[3 * h + k]);
                let dhk = dh[t][k] + dh_next[k];
                let tc = c[k].tanh();
                let dc = dc_next[k] + dhk * o * (1.0 - tc * tc);
                dz[k] = dc * gg * i * (1.0 - i);
                dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - gg * gg);
                dz[3 * h + k] = dhk * tc * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            outer_acc(self.wx.of_mut(g), self.input, &dz, &xs[t]);
            outer_acc(self.wh.of_mut(g), h, &dz, h_prev);
            for (a, b) in dz_sum.iter_mut().zip(&dz) {
                *a += b;
            }
            if let Some(dxs) = dxs.as_mut() {
                gemv_t_acc(wx, self.input, &dz, &mut dxs[t]);
            }
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            gemv_t_acc(wh, h, &dz, &mut dh_next);
        }
        for (a, b) in self.b.of_mut(g).iter_mut().zip(&dz_sum) {
            *a += b;
        }
        if let Some(ws) = self.ws {
            outer_acc(ws.of_mut(g), self.static_input, &dz_sum, stat);
            if let Some(ds) = dstat {
                gemv_t_acc(ws.of(p), self.static_input, &dz_sum, ds);
            }
        }
        dxs
    }
}

/// Stacked LSTM, bidirectional by default. Outputs at each step are
/// `[forward, backward]` (or just `forward` when unidirectional).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiLstm {
    pub layers: Vec<(Lstm, Option<Lstm>)>,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    /// Input to each layer (layer 0 input is the caller's sequence).
    inputs: Vec<Vec<Vec<f64>>>,
    caches: Vec<(LstmCache, Option<LstmCache>)>,
    pub output: Vec<Vec<f64>>,
}

impl BiLstmCache {
    /// Top-layer forward-direction hidden state at step `t`.
    pub fn forward_state(&self, t: usize) -> &[f64] {
        &self.caches.last().expect("at least one layer").0.hidden[t]
    }

    /// Top-layer backward-direction hidden state at step `t`, if any.
    pub fn backward_state(&self, t: usize) -> Option<&[f64]> {
        self.caches
            .last()
            .expect("at least one layer")
            .1
            .as_ref()
            .map(|c| c.hidden[t].as_slice())
    }
}

impl BiLstm {
    pub fn new(
        layout: &mut Layout,
        name: &str,
        input: usize,
        static_input: usize,
        hidden: usize,
        n_layers: usize,
    ) -> Self {
        Self::with_directions(layout, name, input, static_input, hidden, n_layers, true)
    }

    pub fn with_directions(
        layout: &mut Layout,
        name: &str,
        input: usize,
        static_input: usize,
        hidden: usize,
        n_layers: usize,
        bidirectional: bool,
    ) -> Self {
        let dirs = if bidirectional { 2 } else { 1 };
        let layers = (0..n_layers)
            .map(|l| {
                let (inp, st) = if l == 0 {
                    (input, static_input)
                } else {
                    (dirs * hidden, 0)
                };
                (
                    Lstm::new(layout, &format!("{name}.l{l}.fwd"), inp, st, hidden, false),
                    bidirectional.then(|| {
                        Lstm::new(layout, &format!("{name}.l{l}.bwd"), inp, st, hidden, true)
                    }),
                )
            })
            .collect();
        Self { layers, hidden }
    }

    pub fn bidirectional(&self) -> bool {
        self.layers.first().is_some_and(|l| l.1.is_some())
    }

    pub fn output_dim(&self) -> usize {
        if self.bidirectional() {
            2 * self.hidden
        } else {
            self.hidden
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, p: &mut [f64], rng: &mut R) {
        for (f, b) in &self.layers {
            f.init(p, rng);
            if let Some(b) = b {
                b.init(p, rng);
            }
        }
    }

    pub fn forward(&self, p: &[f64], xs: &[Vec<f64>], stat: &[f64]) -> BiLstmCache {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = xs.to_vec();
        for (l, (f, b)) in self.layers.iter().enumerate() {
            let s: &[f64] = if l == 0 { stat } else { &[] };
            let cf = f.forward(p, &cur, s);
            let cb = b.as_ref().map(|b| b.forward(p, &cur, s));
            let out: Vec<Vec<f64>> = match &cb {
                Some(cb) => cf
                    .hidden
                    .iter()
                    .zip(&cb.hidden)
                    .map(|(a, b)| [a.as_slice(), b.as_slice()].concat())
                    .collect(),
                None => cf.hidden.clone(),
            };
            inputs.push(std::mem::replace(&mut cur, out));
            caches.push((cf, cb));
        }
        BiLstmCache {
            inputs,
            caches,
            output: cur,
        }
    }

    /// Returns the gradient w.r.t. the layer-0 input sequence if requested.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        p: &[f64],
        stat: &[f64],
        cache: &BiLstmCache,
        d_out: &[Vec<f64>],
        g: &mut [f64],
        want_dx: bool,
        mut dstat: Option<&mut [f64]>,
    ) -> Option<Vec<Vec<f64>>> {
        let h = self.hidden;
        let mut d = d_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let (f, b) = &self.layers[l];
            let (cf, cb) = &cache.caches[l];
            let xs = &cache.inputs[l];
            let s: &[f64] = if l == 0 { stat } else { &[] };
            let need_dx = l > 0 || want_dx;
            let dhf: Vec<Vec<f64>> = d.iter().map(|v| v[..h].to_vec()).collect();
            let ds = if l == 0 { dstat.as_deref_mut() } else { None };
            let mut dx = f.backward(p, xs, s, cf, &dhf, g, need_dx, ds);
            if let (Some(b), Some(cb)) = (b, cb) {
                let dhb: Vec<Vec<f64>> = d.iter().map(|v| v[h..].to_vec()).collect();
                let ds = if l == 0 { dstat.as_deref_mut() } else { None };
                let dxb = b.backward(p, xs, s, cb, &dhb, g, need_dx, ds);
                if let (Some(a), Some(bb)) = (dx.as_mut(), dxb) {
                    for (x, y) in a.iter_mut().zip(bb) {
                        for (u, v) in x.iter_mut().zip(y) {
                            *u += v;
                        }
                    }
                }
            }
            d = dx?;
        }
        Some(d)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss_of(lstm: &BiLstm, p: &[f64], xs: &[Vec<f64>], s: &[f64], w: &[Vec<f64>]) -> f64 {
        let c = lstm.forward(p, xs, s);
        c.output
            .iter()
            .zip(w)
            .map(|(o, w)| o.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    }

    #[test]
    fn bilstm_gradients_match_finite_differences() {
        let mut layout = Layout::default();
        let net = BiLstm::new(&mut layout, "t", 3, 2, 4, 2);
        let mut rng = crate::seed::rng_for(11, "nn-test");
        let mut p = vec![0.0; layout.size];
        net.init(&mut p, &mut rng);
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let s: Vec<f64> = vec![0.3, -0.8];
        let w: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();

        let cache = net.forward(&p, &xs, &s);
        let mut g = vec![0.0; layout.size];
        let mut ds = vec![0.0; 2];
        let dx = net
            .backward(&p, &s, &cache, &w, &mut g, true, Some(&mut ds))
            .unwrap();

        let h = 1e-6;
        for k in (0..layout.size).step_by(7) {
            let mut pp = p.clone();
            pp[k] += h;
            let up = loss_of(&net, &pp, &xs, &s, &w);
            pp[k] -= 2.0 * h;
            let dn = loss_of(&net, &pp, &xs, &s, &w);
            let num = (up - dn) / (2.0 * h);
            assert!(
                (num - g[k]).abs() < 1e-6 * (1.0 + num.abs()),
                "param {k}: {num} vs {}",
                g[k]
            );
        }
        for t in 0..5 {
            for j in 0..3 {
                let mut xp = xs.clone();
                xp[t][j] += h;
                let up = loss_of(&net, &p, &xp, &s, &w);
                xp[t][j] -= 2.0 * h;
                let dn = loss_of(&net, &p, &xp, &s, &w);
                assert!(((up - dn) / (2.0 * h) - dx[t][j]).abs() < 1e-6);
            }
        }
        for j in 0..2 {
            let mut sp = s.clone();
            sp[j] += h;
            let up = loss_of(&net, &p, &xs, &sp, &w);
            sp[j] -= 2.0 * h;
            let dn = loss_of(&net, &p, &xs, &sp, &w);
            assert!(((up - dn) / (2.0 * h) - ds[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn unidirectional_stack_gradients() {
        let mut layout = Layout::default();
        let net = BiLstm::with_directions(&mut layout, "u", 2, 0, 3, 2, false);
        assert_eq!(net.output_dim(), 3);
        let mut rng = crate::seed::rng_for(5, "uni");
        let mut p = vec![0.0; layout.size];
        net.init(&mut p, &mut rng);
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let w: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let cache = net.forward(&p, &xs, &[]);
        let mut g = vec![0.0; layout.size];
        net.backward(&p, &[], &cache, &w, &mut g, false, None);
        let h = 1e-6;
        for k in 0..layout.size {
            let mut pp = p.clone();
            pp[k] += h;
            let up = loss_of(&net, &pp, &xs, &[], &w);
            pp[k] -= 2.0 * h;
            let dn = loss_of(&net, &pp, &xs, &[], &w);
            let num = (up - dn) / (2.0 * h);
            assert!((num - g[k]).abs() < 1e-6 * (1.0 + num.abs()), "param {k}");
        }
    }

    #[test]
    fn linear_gradients() {
        let mut layout = Layout::default();
        let lin = Linear::new(&mut layout, "l", 3, 2);
        let mut rng = crate::seed::rng_for(2, "lin");
        let mut p = vec![0.0; layout.size];
        lin.init(&mut p, &mut rng);
        let x = [0.5, -1.0, 2.0];
        let dy = [1.0, -2.0];
        let mut g = vec![0.0; layout.size];
        let mut dx = vec![0.0; 3];
        lin.backward(&p, &x, &dy, &mut g, Some(&mut dx));
        let w = lin.w.of(&p);
        assert!((dx[0] - (w[0] - 2.0 * w[3])).abs() < 1e-15);
        assert_eq!(lin.b.of(&g), &[1.0, -2.0]);
        assert_eq!(&lin.w.of(&g)[..3], &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut a = Adam::new(2, 0.9, 0.99);
        let mut p = vec![1.0, -1.0];
        a.step(&mut p, &[1.0, -1.0], 0.1);
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 0.9).abs() < 1e-6);
    }
}
