//! Fully connected ReLU network with reverse-mode gradients, Adam and a
//! sound infinity-norm Lipschitz bound.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &[u8; 8] = b"BTMLPNET";
pub const FORMAT_VERSION: u32 = 1;

/// Dense layer `y = W x + b` with `W` stored row-major (`rows = outputs`).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Real> Layer<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            w: vec![T::zero(); rows * cols],
            b: vec![T::zero(); rows],
        }
    }

    pub fn from_rows(w: Vec<Vec<T>>, b: Vec<T>) -> Result<Self> {
        let rows = w.len();
        let cols = w.first().map_or(0, |r| r.len());
        if rows == 0 || cols == 0 || w.iter().any(|r| r.len() != cols) || b.len() != rows {
            return Err(Error::InvalidNetwork("layer shape is inconsistent".into()));
        }
        Ok(Self {
            rows,
            cols,
            w: w.into_iter().flatten().collect(),
            b,
        })
    }

    #[inline]
    pub fn weight(&self, r: usize, c: usize) -> T {
        self.w[r * self.cols + c]
    }

    /// Infinity operator norm: largest absolute row sum.
    pub fn inf_norm(&self) -> T {
        self.w
            .chunks(self.cols)
            .map(|row| row.iter().map(|v| v.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    fn argmax_row(&self) -> usize {
        let mut best = 0;
        let mut best_v = T::neg_infinity();
        for (r, row) in self.w.chunks(self.cols).enumerate() {
            let v: T = row.iter().map(|v| v.abs()).sum();
            if v > best_v {
                best_v = v;
                best = r;
            }
        }
        best
    }

    fn apply(&self, x: &[T], out: &mut [T]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            *o = row.iter().zip(x).fold(self.b[r], |acc, (&w, &v)| acc + w * v);
        }
    }
}

/// ReLU on every hidden layer, identity on the output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Layer<T>>,
}

/// Parameter-shaped buffer, used for gradients and optimizer moments.
pub type Grads<T> = Vec<Layer<T>>;

/// Reusable activation buffers for allocation-free forward passes.
#[derive(Clone, Debug, Default)]
pub struct Workspace<T> {
    a: Vec<T>,
    b: Vec<T>,
}

impl<T: Real> Mlp<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        let net = Self { layers };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidNetwork("empty layer list".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.rows == 0 || l.cols == 0 || l.w.len() != l.rows * l.cols || l.b.len() != l.rows {
                return Err(Error::InvalidNetwork(format!("layer {i} has inconsistent shape")));
            }
            if i > 0 && self.layers[i - 1].rows != l.cols {
                return Err(Error::InvalidNetwork(format!(
                    "layer {i} expects {} inputs but layer {} yields {}",
                    l.cols,
                    i - 1,
                    self.layers[i - 1].rows
                )));
            }
            if !l.w.iter().chain(&l.b).all(|v| v.is_finite()) {
                return Err(Error::InvalidNetwork(format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(())
    }

    /// All-zero network with the given layer widths `[in, h1, ..., out]`.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidNetwork("need at least input and output sizes".into()));
        }
        Self::new(sizes.windows(2).map(|w| Layer::zeros(w[1], w[0])).collect())
    }

    /// He-style uniform initialization `U(±scale·sqrt(6/fan_in))`, zero biases.
    pub fn init_he(sizes: &[usize], seed: u64, scale: T) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in &mut net.layers {
            let bound = scale.as_f64() * (6.0 / l.cols as f64).sqrt();
            for w in &mut l.w {
                *w = T::lit(rng.gen_range(-bound..=bound));
            }
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.rows));
        s
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads<T> {
        self.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect()
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidNetwork("empty layer list".into()));
        }
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let mut ws = Workspace::default();
        let mut out = vec![T::zero(); self.output_dim()];
        self.forward_with(x, &mut ws, &mut out)?;
        Ok(out)
    }

    /// Forward pass into `out`, reusing `ws` between calls.
    pub fn forward_with(&self, x: &[T], ws: &mut Workspace<T>, out: &mut [T]) -> Result<()> {
        self.check_input(x)?;
        ws.a.clear();
        ws.a.extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            ws.b.clear();
            ws.b.resize(l.rows, T::zero());
            l.apply(&ws.a, &mut ws.b);
            if i < last {
                for v in &mut ws.b {
                    *v = v.max(T::zero());
                }
            }
            if !ws.b.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteActivation { layer: i });
            }
            std::mem::swap(&mut ws.a, &mut ws.b);
        }
        out.copy_from_slice(&ws.a);
        Ok(())
    }

    /// Gradient of `upstream · forward(x)` w.r.t. all parameters, accumulated into `grads`.
    /// Returns the gradient w.r.t. the input. ReLU subgradient at 0 is 0.
    pub fn backward_accumulate(&self, x: &[T], upstream: &[T], grads: &mut Grads<T>) -> Result<Vec<T>> {
        self.check_input(x)?;
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        // activations[i] is the input to layer i
        let last = self.layers.len() - 1;
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        acts.push(x.to_vec());
        for (i, l) in self.layers.iter().enumerate().take(last) {
            let mut z = vec![T::zero(); l.rows];
            l.apply(&acts[i], &mut z);
            for v in &mut z {
                *v = v.max(T::zero());
            }
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteActivation { layer: i });
            }
            acts.push(z);
        }
        let mut delta = upstream.to_vec();
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let g = &mut grads[i];
            let input = &acts[i];
            for r in 0..l.rows {
                let d = delta[r];
                if d == T::zero() {
                    continue;
                }
                g.b[r] = g.b[r] + d;
                let row = &mut g.w[r * l.cols..(r + 1) * l.cols];
                for (gw, &a) in row.iter_mut().zip(input) {
                    *gw = *gw + d * a;
                }
            }
            let mut prev = vec![T::zero(); l.cols];
            for r in 0..l.rows {
                let d = delta[r];
                if d == T::zero() {
                    continue;
                }
                for (p, &w) in prev.iter_mut().zip(&l.w[r * l.cols..(r + 1) * l.cols]) {
                    *p = *p + d * w;
                }
            }
            if i > 0 {
                // input to layer i is relu(z_{i-1}); gate by its positivity
                for (p, &a) in prev.iter_mut().zip(input) {
                    if a <= T::zero() {
                        *p = T::zero();
                    }
                }
            }
            if !prev.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteGradient { layer: i });
            }
            delta = prev;
        }
        Ok(delta)
    }

    pub fn backward(&self, x: &[T], upstream: &[T]) -> Result<Grads<T>> {
        let mut g = self.zero_grads();
        self.backward_accumulate(x, upstream, &mut g)?;
        for (i, l) in g.iter().enumerate() {
            if !l.w.iter().chain(&l.b).all(|v| v.is_finite()) {
                return Err(Error::NonFiniteGradient { layer: i });
            }
        }
        Ok(g)
    }

    /// Product of the per-layer infinity operator norms. Sound for ReLU nets
    /// since ReLU is 1-Lipschitz and non-expansive coordinate-wise.
    pub fn lipschitz_upper_bound(&self) -> T {
        self.layers.iter().fold(T::one(), |p, l| p * l.inf_norm())
    }

    /// A subgradient of [`Mlp::lipschitz_upper_bound`], scaled by `weight`, added into `grads`.
    pub fn add_lipschitz_subgradient(&self, weight: T, grads: &mut Grads<T>) {
        let norms: Vec<T> = self.layers.iter().map(|l| l.inf_norm()).collect();
        for (i, l) in self.layers.iter().enumerate() {
            let others = norms
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(T::one(), |p, (_, &n)| p * n);
            let r = l.argmax_row();
            let coef = weight * others;
            for c in 0..l.cols {
                let w = l.weight(r, c);
                let s = if w > T::zero() {
                    T::one()
                } else if w < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                let gw = &mut grads[i].w[r * l.cols + c];
                *gw = *gw + coef * s;
            }
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::with_capacity(32 + 8 * self.param_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for s in self.sizes() {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for l in &self.layers {
            for v in l.w.iter().chain(&l.b) {
                out.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic)
            .map_err(|_| Error::MalformedNetworkFile("missing header".into()))?;
        if &magic != MAGIC {
            return Err(Error::MalformedNetworkFile("bad magic".into()));
        }
        let version = read_u32(&mut cur)?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let n_layers = read_u32(&mut cur)? as usize;
        if n_layers == 0 || n_layers > 1024 {
            return Err(Error::MalformedNetworkFile(format!("layer count {n_layers}")));
        }
        let mut sizes = Vec::with_capacity(n_layers + 1);
        for _ in 0..=n_layers {
            let s = read_u32(&mut cur)? as usize;
            if s == 0 {
                return Err(Error::MalformedNetworkFile("zero layer width".into()));
            }
            sizes.push(s);
        }
        let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if cur.len() != expected * 8 {
            return Err(Error::MalformedNetworkFile(format!(
                "expected {} parameter bytes, found {}",
                expected * 8,
                cur.len()
            )));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for w in sizes.windows(2) {
            let mut l = Layer::zeros(w[1], w[0]);
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                let mut buf = [0u8; 8];
                cur.read_exact(&mut buf)?;
                *v = T::lit(f64::from_le_bytes(buf));
            }
            layers.push(l);
        }
        Self::new(layers).map_err(|e| Error::MalformedNetworkFile(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn read_u32(cur: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    cur.read_exact(&mut b)
        .map_err(|_| Error::MalformedNetworkFile("truncated header".into()))?;
    Ok(u32::from_le_bytes(b))
}

/// Adam optimizer state with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub first_moment: Grads<T>,
    pub second_moment: Grads<T>,
    pub step_count: u64,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub eps_stab: T,
}

impl<T: Real> AdamState<T> {
    pub fn new(net: &Mlp<T>, learning_rate: T) -> Self {
        Self {
            first_moment: net.zero_grads(),
            second_moment: net.zero_grads(),
            step_count: 0,
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps_stab: T::lit(1e-8),
        }
    }
}

pub fn adam_step<T: Real>(net: &mut Mlp<T>, grads: &Grads<T>, st: &mut AdamState<T>) {
    st.step_count += 1;
    let t = st.step_count as i32;
    let one = T::one();
    let c1 = one - st.beta1.powi(t);
    let c2 = one - st.beta2.powi(t);
    for (i, l) in net.layers.iter_mut().enumerate() {
        let g = &grads[i];
        let m = &mut st.first_moment[i];
        let v = &mut st.second_moment[i];
        let params = l.w.iter_mut().chain(l.b.iter_mut());
        let gs = g.w.iter().chain(&g.b);
        let ms = m.w.iter_mut().chain(m.b.iter_mut());
        let vs = v.w.iter_mut().chain(v.b.iter_mut());
        for (((p, &gi), mi), vi) in params.zip(gs).zip(ms).zip(vs) {
            *mi = st.beta1 * *mi + (one - st.beta1) * gi;
            *vi = st.beta2 * *vi + (one - st.beta2) * gi * gi;
            let mhat = *mi / c1;
            let vhat = *vi / c2;
            *p = *p - st.learning_rate * mhat / (vhat.sqrt() + st.eps_stab);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64, b: f64) -> Mlp<f64> {
        Mlp::new(vec![Layer::from_rows(vec![vec![w]], vec![b]).unwrap()]).unwrap()
    }

    #[test]
    fn forward_examples() {
        assert_eq!(single(2.0, 0.0).forward(&[3.0]).unwrap(), vec![6.0]);
        let net = Mlp::new(vec![
            Layer::from_rows(vec![vec![1.0]], vec![-1.0]).unwrap(),
            Layer::from_rows(vec![vec![1.0]], vec![0.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(net.forward(&[0.5]).unwrap(), vec![0.0]);
        let z = Mlp::<f64>::zeros(&[3, 5, 2]).unwrap();
        assert_eq!(z.forward(&[1.0, -2.0, 7.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_rejects_bad_input() {
        let net = single(1.0, 0.0);
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        let big = single(f64::MAX, 0.0);
        assert!(matches!(
            big.forward(&[10.0]),
            Err(Error::NonFiniteActivation { layer: 0 })
        ));
    }

    #[test]
    fn backward_linear() {
        let g = single(2.0, 0.0).backward(&[3.0], &[1.0]).unwrap();
        assert_eq!(g[0].w, vec![3.0]);
        assert_eq!(g[0].b, vec![1.0]);
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        let net = Mlp::new(vec![
            Layer::from_rows(vec![vec![1.0], vec![-1.0]], vec![-5.0, -5.0]).unwrap(),
            Layer::from_rows(vec![vec![1.0, 1.0]], vec![0.0]).unwrap(),
        ])
        .unwrap();
        let g = net.backward(&[1.0], &[1.0]).unwrap();
        assert!(g[0].w.iter().chain(&g[0].b).all(|&v| v == 0.0));
        assert!(g[1].w.iter().all(|&v| v == 0.0));
        assert_eq!(g[1].b, vec![1.0]);
    }

    #[test]
    fn adam_first_step() {
        let mut net = single(1.0, 0.0);
        let mut grads = net.zero_grads();
        grads[0].w[0] = 1.0;
        let mut st = AdamState::new(&net, 1e-3);
        adam_step(&mut net, &grads, &mut st);
        assert!((net.layers[0].w[0] - 0.999).abs() < 1e-10);
        assert_eq!(st.step_count, 1);
        assert_eq!(net.layers[0].b[0], 0.0);
    }

    #[test]
    fn adam_zero_gradient() {
        let mut net = Mlp::<f64>::init_he(&[2, 4, 1], 3, 1.0).unwrap();
        let before = net.clone();
        let grads = net.zero_grads();
        let mut st = AdamState::new(&net, 1e-2);
        adam_step(&mut net, &grads, &mut st);
        assert_eq!(net, before);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn bound_examples() {
        assert_eq!(single(2.0, 0.0).lipschitz_upper_bound(), 2.0);
        let net = Mlp::new(vec![
            Layer::from_rows(vec![vec![1.0, -1.0], vec![0.5, 0.5]], vec![0.0, 0.0]).unwrap(),
            Layer::from_rows(vec![vec![-3.0, 0.0]], vec![0.0]).unwrap(),
        ])
        .unwrap();
        assert_eq!(net.lipschitz_upper_bound(), 6.0);
    }

    #[test]
    fn serialization() {
        let net = Mlp::<f64>::init_he(&[4, 8, 1], 1, 1.0).unwrap();
        let bytes = net.to_bytes().unwrap();
        assert_eq!(Mlp::<f64>::from_bytes(&bytes).unwrap(), net);
        assert!(Mlp::<f64>::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(Mlp::<f64>::from_bytes(&bad), Err(Error::UnsupportedVersion(9))));
        let empty = Mlp::<f64> { layers: vec![] };
        assert!(matches!(empty.to_bytes(), Err(Error::InvalidNetwork(_))));
        // f32 networks survive the f64 file format exactly
        let n32 = Mlp::<f32>::init_he(&[2, 3, 1], 5, 1.0).unwrap();
        assert_eq!(Mlp::<f32>::from_bytes(&n32.to_bytes().unwrap()).unwrap(), n32);
    }
}
