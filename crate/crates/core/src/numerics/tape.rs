//! Reverse-mode differentiation over a fixed primitive set.
//!
//! Operations append nodes to a [`Tape`]; each node caches its forward value.
//! [`Tape::backward`] walks the nodes in reverse, applying the matching
//! adjoint rule. A tape and its vars are confined to one thread; concurrent
//! evaluation happens with one tape per sample.

use crate::error::{Error, Result};

use super::kernels as k;
use super::tensor::Real;

/// Handle to a node on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Conv2d { input: usize, weight: usize, bias: Option<usize>, stride: usize },
    Upsample2x { input: usize },
    Add { lhs: usize, rhs: usize },
    Mul { lhs: usize, rhs: usize },
    Silu { input: usize },
    Affine { input: usize, weight: usize, bias: usize },
    ConcatCh { lhs: usize, rhs: usize },
    SliceCh { input: usize, start: usize },
    Broadcast { input: usize },
    Mean { input: usize },
    SqErrMean { lhs: usize, rhs: usize },
}

struct Node<E> {
    op: Op,
    shape: Vec<usize>,
    value: Vec<E>,
    needs_grad: bool,
}

pub struct Tape<E> {
    nodes: Vec<Node<E>>,
    grad_enabled: bool,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients<E> {
    grads: Vec<Option<Vec<E>>>,
}

impl<E: Real> Gradients<E> {
    pub fn get(&self, v: Var) -> Option<&[E]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn chw(shape: &[usize]) -> Option<(usize, usize, usize)> {
    match shape {
        [c, h, w] => Some((*c, *h, *w)),
        _ => None,
    }
}

impl<E: Real> Tape<E> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grad_enabled: true }
    }

    /// A tape that records values but never tracks gradients (sampling mode).
    pub fn inference() -> Self {
        Tape { nodes: Vec::new(), grad_enabled: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[E] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar_value(&self, v: Var) -> E {
        debug_assert_eq!(self.nodes[v.0].value.len(), 1);
        self.nodes[v.0].value[0]
    }

    pub fn leaf(&mut self, shape: Vec<usize>, data: Vec<E>, requires_grad: bool) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::shape(
                "leaf",
                format!("shape {:?} wants {numel} elements, got {}", shape, data.len()),
            ));
        }
        Ok(self.push(Op::Leaf, shape, data, requires_grad))
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, value: Vec<E>, needs_grad: bool) -> Var {
        debug_assert!(
            value.iter().all(|v| v.is_finite()),
            "non-finite value produced by {op:?}"
        );
        let needs = needs_grad && self.grad_enabled;
        self.nodes.push(Node { op, shape, value, needs_grad: needs });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Same-padded 2-D convolution, stride 1 or 2. `weight: [Co,Ci,K,K]`,
    /// odd K. Bias is optional per call site (the zero-initialised output
    /// conv still carries one).
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize) -> Result<Var> {
        if stride != 1 && stride != 2 {
            return Err(Error::shape("conv2d", format!("stride must be 1 or 2, got {stride}")));
        }
        let (ci, h, w) = chw(self.shape(input))
            .ok_or_else(|| Error::shape("conv2d", format!("input must be [C,H,W], got {:?}", self.shape(input))))?;
        let wshape = self.shape(weight).to_vec();
        let (co, wci, kh, kw) = match wshape.as_slice() {
            [a, b, c, d] => (*a, *b, *c, *d),
            _ => return Err(Error::shape("conv2d", format!("weight must be [Co,Ci,K,K], got {wshape:?}"))),
        };
        if kh != kw || kh % 2 == 0 {
            return Err(Error::shape("conv2d", format!("kernel must be square and odd, got {kh}x{kw}")));
        }
        if wci != ci {
            return Err(Error::shape("conv2d", format!("input has {ci} channels, weight expects {wci}")));
        }
        if let Some(b) = bias {
            if self.shape(b) != [co] {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias shape {:?} does not match {co} output channels", self.shape(b)),
                ));
            }
        }
        let oh = k::conv_out_side(h, kh, stride);
        let ow = k::conv_out_side(w, kh, stride);
        let out = k::conv2d(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            ci,
            co,
            h,
            w,
            kh,
            stride,
        );
        let needs = self.needs(input) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(
            Op::Conv2d { input: input.0, weight: weight.0, bias: bias.map(|b| b.0), stride },
            vec![co, oh, ow],
            out,
            needs,
        ))
    }

    /// Nearest-neighbour 2x spatial upsample.
    pub fn upsample2x(&mut self, input: Var) -> Result<Var> {
        let (c, h, w) = chw(self.shape(input))
            .ok_or_else(|| Error::shape("upsample2x", format!("input must be [C,H,W], got {:?}", self.shape(input))))?;
        let out = k::upsample2x(self.value(input), c, h, w);
        let needs = self.needs(input);
        Ok(self.push(Op::Upsample2x { input: input.0 }, vec![c, 2 * h, 2 * w], out, needs))
    }

    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.binary_elementwise("add", lhs, rhs, |a, b| a + b, |l, r| Op::Add { lhs: l, rhs: r })
    }

    pub fn mul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        self.binary_elementwise("mul", lhs, rhs, |a, b| a * b, |l, r| Op::Mul { lhs: l, rhs: r })
    }

    fn binary_elementwise(
        &mut self,
        name: &'static str,
        lhs: Var,
        rhs: Var,
        f: impl Fn(E, E) -> E,
        op: impl Fn(usize, usize) -> Op,
    ) -> Result<Var> {
        if self.shape(lhs) != self.shape(rhs) {
            return Err(Error::shape(
                name,
                format!("{:?} vs {:?}", self.shape(lhs), self.shape(rhs)),
            ));
        }
        let out: Vec<E> = self.value(lhs).iter().zip(self.value(rhs)).map(|(&a, &b)| f(a, b)).collect();
        let shape = self.shape(lhs).to_vec();
        let needs = self.needs(lhs) || self.needs(rhs);
        Ok(self.push(op(lhs.0, rhs.0), shape, out, needs))
    }

    pub fn silu(&mut self, input: Var) -> Result<Var> {
        let out = k::silu(self.value(input));
        let shape = self.shape(input).to_vec();
        let needs = self.needs(input);
        Ok(self.push(Op::Silu { input: input.0 }, shape, out, needs))
    }

    /// Fully connected map on a rank-1 input: `y = W x + b`.
    pub fn affine(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let n_in = match self.shape(input) {
            [n] => *n,
            s => return Err(Error::shape("affine", format!("input must be rank 1, got {s:?}"))),
        };
        let (n_out, win) = match self.shape(weight) {
            [o, i] => (*o, *i),
            s => return Err(Error::shape("affine", format!("weight must be [Out,In], got {s:?}"))),
        };
        if win != n_in || self.shape(bias) != [n_out] {
            return Err(Error::shape(
                "affine",
                format!(
                    "input {n_in}, weight [{n_out},{win}], bias {:?} do not conform",
                    self.shape(bias)
                ),
            ));
        }
        let out = k::affine(self.value(input), self.value(weight), self.value(bias), n_in, n_out);
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            Op::Affine { input: input.0, weight: weight.0, bias: bias.0 },
            vec![n_out],
            out,
            needs,
        ))
    }

    /// Concatenate along the channel axis.
    pub fn concat_ch(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (c1, h1, w1) = chw(self.shape(lhs))
            .ok_or_else(|| Error::shape("concat_ch", format!("lhs must be [C,H,W], got {:?}", self.shape(lhs))))?;
        let (c2, h2, w2) = chw(self.shape(rhs))
            .ok_or_else(|| Error::shape("concat_ch", format!("rhs must be [C,H,W], got {:?}", self.shape(rhs))))?;
        if (h1, w1) != (h2, w2) {
            return Err(Error::shape("concat_ch", format!("spatial {h1}x{w1} vs {h2}x{w2}")));
        }
        let mut out = Vec::with_capacity((c1 + c2) * h1 * w1);
        out.extend_from_slice(self.value(lhs));
        out.extend_from_slice(self.value(rhs));
        let needs = self.needs(lhs) || self.needs(rhs);
        Ok(self.push(Op::ConcatCh { lhs: lhs.0, rhs: rhs.0 }, vec![c1 + c2, h1, w1], out, needs))
    }

    /// Take channels `[start, start+len)`.
    pub fn slice_ch(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let (c, h, w) = chw(self.shape(input))
            .ok_or_else(|| Error::shape("slice_ch", format!("input must be [C,H,W], got {:?}", self.shape(input))))?;
        if start + len > c {
            return Err(Error::shape("slice_ch", format!("channels [{start},{}) out of {c}", start + len)));
        }
        let out = self.value(input)[start * h * w..(start + len) * h * w].to_vec();
        let needs = self.needs(input);
        Ok(self.push(Op::SliceCh { input: input.0, start }, vec![len, h, w], out, needs))
    }

    /// Broadcast a scalar `[1]` or per-channel vector `[C]` to `[C,H,W]`.
    pub fn broadcast(&mut self, input: Var, shape: [usize; 3]) -> Result<Var> {
        let [c, h, w] = shape;
        let src = self.shape(input);
        let ok = src == [1] || src == [c];
        if !ok {
            return Err(Error::shape(
                "broadcast",
                format!("source {src:?} does not broadcast to {shape:?}"),
            ));
        }
        let mut out = vec![E::zero(); c * h * w];
        let vals = self.value(input);
        for ch in 0..c {
            let v = if vals.len() == 1 { vals[0] } else { vals[ch] };
            for o in out[ch * h * w..(ch + 1) * h * w].iter_mut() {
                *o = v;
            }
        }
        let needs = self.needs(input);
        Ok(self.push(Op::Broadcast { input: input.0 }, vec![c, h, w], out, needs))
    }

    /// Mean over all elements, giving a `[1]` scalar.
    pub fn mean(&mut self, input: Var) -> Result<Var> {
        let n = self.value(input).len();
        if n == 0 {
            return Err(Error::shape("mean", "empty tensor".to_string()));
        }
        let mut acc = E::zero();
        for v in self.value(input) {
            acc = acc + *v;
        }
        let out = vec![acc / E::from_usize(n).unwrap()];
        let needs = self.needs(input);
        Ok(self.push(Op::Mean { input: input.0 }, vec![1], out, needs))
    }

    /// Mean squared difference, giving a `[1]` scalar.
    pub fn sq_err_mean(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        if self.shape(lhs) != self.shape(rhs) {
            return Err(Error::shape(
                "sq_err_mean",
                format!("{:?} vs {:?}", self.shape(lhs), self.shape(rhs)),
            ));
        }
        let n = self.value(lhs).len();
        let mut acc = E::zero();
        for (&a, &b) in self.value(lhs).iter().zip(self.value(rhs)) {
            let d = a - b;
            acc = acc + d * d;
        }
        let out = vec![acc / E::from_usize(n).unwrap()];
        let needs = self.needs(lhs) || self.needs(rhs);
        Ok(self.push(Op::SqErrMean { lhs: lhs.0, rhs: rhs.0 }, vec![1], out, needs))
    }

    /// Reverse pass from a scalar loss. Each recorded operation is visited
    /// exactly once, in reverse topological order (the recording order).
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<E>> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::InvalidArg("loss var is not on this tape".to_string()));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.nodes[loss.0].shape),
            ));
        }
        let mut grads: Vec<Option<Vec<E>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![E::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.apply_backward(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<E>>], node: usize, delta: Vec<E>) {
        if !self.nodes[node].needs_grad {
            return;
        }
        match &mut grads[node] {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(&delta) {
                    *a = *a + *b;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn apply_backward(&self, i: usize, g: &[E], grads: &mut [Option<Vec<E>>]) {
        match self.nodes[i].op.clone() {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, stride } => {
                let (ci, h, w) = chw(&self.nodes[input].shape).unwrap();
                let wshape = &self.nodes[weight].shape;
                let (co, kk) = (wshape[0], wshape[2]);
                if self.nodes[input].needs_grad {
                    let dx = k::conv2d_grad_input(g, &self.nodes[weight].value, ci, co, h, w, kk, stride);
                    self.accumulate(grads, input, dx);
                }
                if self.nodes[weight].needs_grad {
                    let dw = k::conv2d_grad_weight(g, &self.nodes[input].value, ci, co, h, w, kk, stride);
                    self.accumulate(grads, weight, dw);
                }
                if let Some(b) = bias {
                    if self.nodes[b].needs_grad {
                        let (oh, ow) = (self.nodes[i].shape[1], self.nodes[i].shape[2]);
                        let db = k::conv2d_grad_bias(g, co, oh, ow);
                        self.accumulate(grads, b, db);
                    }
                }
            }
            Op::Upsample2x { input } => {
                let (c, h, w) = chw(&self.nodes[input].shape).unwrap();
                self.accumulate(grads, input, k::upsample2x_grad(g, c, h, w));
            }
            Op::Add { lhs, rhs } => {
                self.accumulate(grads, lhs, g.to_vec());
                self.accumulate(grads, rhs, g.to_vec());
            }
            Op::Mul { lhs, rhs } => {
                let dl: Vec<E> = g.iter().zip(&self.nodes[rhs].value).map(|(&gv, &b)| gv * b).collect();
                let dr: Vec<E> = g.iter().zip(&self.nodes[lhs].value).map(|(&gv, &a)| gv * a).collect();
                self.accumulate(grads, lhs, dl);
                self.accumulate(grads, rhs, dr);
            }
            Op::Silu { input } => {
                self.accumulate(grads, input, k::silu_grad(g, &self.nodes[input].value));
            }
            Op::Affine { input, weight, bias } => {
                let n_in = self.nodes[input].shape[0];
                let n_out = self.nodes[i].shape[0];
                if self.nodes[input].needs_grad {
                    self.accumulate(grads, input, k::affine_grad_input(g, &self.nodes[weight].value, n_in, n_out));
                }
                if self.nodes[weight].needs_grad {
                    self.accumulate(grads, weight, k::affine_grad_weight(g, &self.nodes[input].value, n_in, n_out));
                }
                if self.nodes[bias].needs_grad {
                    self.accumulate(grads, bias, g.to_vec());
                }
            }
            Op::ConcatCh { lhs, rhs } => {
                let n1 = self.nodes[lhs].value.len();
                self.accumulate(grads, lhs, g[..n1].to_vec());
                self.accumulate(grads, rhs, g[n1..].to_vec());
            }
            Op::SliceCh { input, start } => {
                let (c, h, w) = chw(&self.nodes[input].shape).unwrap();
                let mut dx = vec![E::zero(); c * h * w];
                dx[start * h * w..start * h * w + g.len()].copy_from_slice(g);
                self.accumulate(grads, input, dx);
            }
            Op::Broadcast { input } => {
                let src = self.nodes[input].value.len();
                let (c, h, w) = chw(&self.nodes[i].shape).unwrap();
                let mut dx = vec![E::zero(); src];
                for ch in 0..c {
                    let mut acc = E::zero();
                    for v in &g[ch * h * w..(ch + 1) * h * w] {
                        acc = acc + *v;
                    }
                    let slot = if src == 1 { 0 } else { ch };
                    dx[slot] = dx[slot] + acc;
                }
                self.accumulate(grads, input, dx);
            }
            Op::Mean { input } => {
                let n = self.nodes[input].value.len();
                let scale = g[0] / E::from_usize(n).unwrap();
                self.accumulate(grads, input, vec![scale; n]);
            }
            Op::SqErrMean { lhs, rhs } => {
                let n = self.nodes[lhs].value.len();
                let scale = g[0] * E::from_usize(2).unwrap() / E::from_usize(n).unwrap();
                let dl: Vec<E> = self.nodes[lhs]
                    .value
                    .iter()
                    .zip(&self.nodes[rhs].value)
                    .map(|(&a, &b)| scale * (a - b))
                    .collect();
                let dr: Vec<E> = dl.iter().map(|&v| -v).collect();
                self.accumulate(grads, lhs, dl);
                self.accumulate(grads, rhs, dr);
            }
        }
    }
}

impl<E: Real> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}
