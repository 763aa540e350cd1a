//! Bounded basis model: a two-layer ReLU network whose outputs are clamped to
//! `[-B, B]` by a scaled hard tanh.
//!
//! Parameters live in one flat vector with the layout
//! `W1 (h x d, row-major) | b1 (h) | W2 (m x h, row-major) | b2 (m)`,
//! so optimizers can treat a module (or a stack of modules) as a single
//! parameter vector.

use rand::Rng as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng;

/// Clamps each coordinate into `[-bound, bound]`.
pub fn hardtanh(y: &[f64], bound: f64) -> Vec<f64> {
    y.iter().map(|&v| clamp(v, bound)).collect()
}

#[inline]
fn clamp(v: f64, bound: f64) -> f64 {
    v.max(-bound).min(bound)
}

/// Network dimensions: input `d`, hidden `h`, output `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub d: usize,
    pub h: usize,
    pub m: usize,
}

impl Shape {
    pub fn new(d: usize, h: usize, m: usize) -> Self {
        Shape { d, h, m }
    }

    pub fn n_params(&self) -> usize {
        self.h * self.d + self.h + self.m * self.h + self.m
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.h * self.d;
        let w2 = b1 + self.h;
        let b2 = w2 + self.m * self.h;
        (b1, w2, b2)
    }

    /// Forward pass on a raw parameter slice. `hidden` receives the ReLU
    /// activations and `pre` the unclamped outputs; `out` the clamped ones.
    #[inline]
    pub fn forward_into(
        &self,
        params: &[f64],
        bound: f64,
        x: &[f64],
        hidden: &mut [f64],
        pre: &mut [f64],
        out: &mut [f64],
    ) {
        let (ob1, ow2, ob2) = self.offsets();
        let (w1, b1) = (&params[..ob1], &params[ob1..ow2]);
        let (w2, b2) = (&params[ow2..ob2], &params[ob2..]);
        for j in 0..self.h {
            let row = &w1[j * self.d..(j + 1) * self.d];
            let z = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b1[j];
            hidden[j] = z.max(0.0);
        }
        for k in 0..self.m {
            let row = &w2[k * self.h..(k + 1) * self.h];
            let z = row.iter().zip(hidden.iter()).map(|(w, a)| w * a).sum::<f64>() + b2[k];
            pre[k] = z;
            out[k] = clamp(z, bound);
        }
    }

    /// Adds `scale * d(upstream . forward(x)) / d(params)` into `grad`.
    ///
    /// Subgradient conventions: ReLU slope 0 at a pre-activation of exactly
    /// zero; clamp slope 1 at exactly `+-bound`, 0 strictly outside.
    pub fn accumulate_grad(
        &self,
        params: &[f64],
        bound: f64,
        x: &[f64],
        upstream: &[f64],
        scale: f64,
        scratch: &mut Scratch,
        grad: &mut [f64],
    ) {
        scratch.ensure(self);
        let Scratch { hidden, pre, out, dz } = scratch;
        self.forward_into(params, bound, x, hidden, pre, out);
        let (ob1, ow2, ob2) = self.offsets();
        let w2 = &params[ow2..ob2];

        let mut any = false;
        for k in 0..self.m {
            let g = if pre[k].abs() <= bound {
                upstream[k] * scale
            } else {
                0.0
            };
            dz[k] = g;
            any |= g != 0.0;
        }
        if !any {
            return;
        }
        for k in 0..self.m {
            grad[ob2 + k] += dz[k];
            let row = &mut grad[ow2 + k * self.h..ow2 + (k + 1) * self.h];
            for (g, a) in row.iter_mut().zip(hidden.iter()) {
                *g += dz[k] * a;
            }
        }
        for j in 0..self.h {
            if hidden[j] <= 0.0 {
                continue;
            }
            let dh: f64 = (0..self.m).map(|k| w2[k * self.h + j] * dz[k]).sum();
            grad[ob1 + j] += dh;
            let row = &mut grad[j * self.d..(j + 1) * self.d];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += dh * xi;
            }
        }
    }
}

/// Reusable buffers for forward/backward passes.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    hidden: Vec<f64>,
    pre: Vec<f64>,
    out: Vec<f64>,
    dz: Vec<f64>,
}

impl Scratch {
    pub fn for_shape(shape: &Shape) -> Self {
        let mut s = Scratch::default();
        s.ensure(shape);
        s
    }

    fn ensure(&mut self, shape: &Shape) {
        if self.hidden.len() != shape.h || self.out.len() != shape.m {
            self.hidden = vec![0.0; shape.h];
            self.pre = vec![0.0; shape.m];
            self.out = vec![0.0; shape.m];
            self.dz = vec![0.0; shape.m];
        }
    }

    /// Forward pass returning a view of the clamped output.
    pub fn forward<'a>(&'a mut self, shape: &Shape, params: &[f64], bound: f64, x: &[f64]) -> &'a [f64] {
        self.ensure(shape);
        shape.forward_into(params, bound, x, &mut self.hidden, &mut self.pre, &mut self.out);
        &self.out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisModule {
    shape: Shape,
    bound: f64,
    params: Vec<f64>,
}

impl BasisModule {
    pub fn zeros(shape: Shape, bound: f64) -> Result<Self> {
        Self::from_vector(shape, bound, vec![0.0; shape.n_params()])
    }

    pub fn from_vector(shape: Shape, bound: f64, params: Vec<f64>) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::invalid(format!("bound must be positive, got {bound}")));
        }
        if shape.d == 0 || shape.h == 0 || shape.m == 0 {
            return Err(Error::invalid(format!("degenerate module shape {shape:?}")));
        }
        Error::check_dim(shape.n_params(), params.len())?;
        Ok(BasisModule { shape, bound, params })
    }

    /// Uniform fan-in initialization: weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`,
    /// biases zero.
    pub fn init(seed: u64, shape: Shape, bound: f64) -> Result<Self> {
        let mut m = Self::zeros(shape, bound)?;
        let mut r = rng::rng_from(seed, "basis-init", 0);
        let (ob1, ow2, ob2) = shape.offsets();
        let a1 = 1.0 / (shape.d as f64).sqrt();
        let a2 = 1.0 / (shape.h as f64).sqrt();
        for w in &mut m.params[..ob1] {
            *w = r.gen_range(-a1..=a1);
        }
        for w in &mut m.params[ow2..ob2] {
            *w = r.gen_range(-a2..=a2);
        }
        Ok(m)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn input_dim(&self) -> usize {
        self.shape.d
    }

    pub fn output_dim(&self) -> usize {
        self.shape.m
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn to_vector(&self) -> Vec<f64> {
        self.params.clone()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        Error::check_dim(self.params.len(), params.len())?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.shape.d, x.len())?;
        let mut s = Scratch::for_shape(&self.shape);
        Ok(s.forward(&self.shape, &self.params, self.bound, x).to_vec())
    }

    /// Unchecked forward into a caller buffer; used on hot paths.
    pub fn forward_with(&self, scratch: &mut Scratch, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(scratch.forward(&self.shape, &self.params, self.bound, x));
    }

    /// Gradient of `upstream . forward(x)` with respect to the parameters.
    pub fn grad_params(&self, x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.shape.d, x.len())?;
        Error::check_dim(self.shape.m, upstream.len())?;
        let mut grad = vec![0.0; self.n_params()];
        let mut s = Scratch::for_shape(&self.shape);
        self.shape
            .accumulate_grad(&self.params, self.bound, x, upstream, 1.0, &mut s, &mut grad);
        Ok(grad)
    }

    /// Outputs on every row of a row-major `n x d` matrix, as `n x m`.
    pub fn outputs(&self, rows: &[f64]) -> Vec<f64> {
        let (d, m) = (self.shape.d, self.shape.m);
        let n = rows.len() / d;
        let mut s = Scratch::for_shape(&self.shape);
        let mut out = vec![0.0; n * m];
        for (x, o) in rows.chunks(d).zip(out.chunks_mut(m)) {
            self.forward_with(&mut s, x, o);
        }
        out
    }

    pub fn norm_sq(&self) -> f64 {
        self.params.iter().map(|p| p * p).sum()
    }
}

#[derive(Serialize, Deserialize)]
struct ModuleRepr {
    d: usize,
    h: usize,
    m: usize,
    #[serde(rename = "B")]
    bound: f64,
    #[serde(rename = "W1")]
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    #[serde(rename = "W2")]
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
}

impl Serialize for BasisModule {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let Shape { d, h, m } = self.shape;
        let (ob1, ow2, ob2) = self.shape.offsets();
        ModuleRepr {
            d,
            h,
            m,
            bound: self.bound,
            w1: self.params[..ob1].chunks(d).map(<[f64]>::to_vec).collect(),
            b1: self.params[ob1..ow2].to_vec(),
            w2: self.params[ow2..ob2].chunks(h).map(<[f64]>::to_vec).collect(),
            b2: self.params[ob2..].to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BasisModule {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = ModuleRepr::deserialize(de)?;
        let shape = Shape::new(r.d, r.h, r.m);
        let rows_ok = r.w1.len() == r.h
            && r.w1.iter().all(|row| row.len() == r.d)
            && r.w2.len() == r.m
            && r.w2.iter().all(|row| row.len() == r.h);
        if !rows_ok {
            return Err(D::Error::custom("weight matrix shape does not match d/h/m"));
        }
        let mut params = Vec::with_capacity(shape.n_params());
        params.extend(r.w1.into_iter().flatten());
        params.extend(r.b1);
        params.extend(r.w2.into_iter().flatten());
        params.extend(r.b2);
        BasisModule::from_vector(shape, r.bound, params).map_err(D::Error::custom)
    }
}
