use rand::Rng;

use crate::diffmath::Matrix;

/// Per-head GAT score vectors, stored as `1×d` rows and sliced by head.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionVectors<T> {
    pub src: T,
    pub dst: T,
}

/// Local layer parameters. `attention` is `None` for the GCN local kind.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalLayerParams<T> {
    pub w_v: T,
    pub w_h: T,
    pub beta: T,
    pub attention: Option<AttentionVectors<T>>,
    pub ln_gain: T,
    pub ln_shift: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalLayerParams<T> {
    pub w_q: T,
    pub w_k: T,
    pub w_v: T,
    pub w_h: T,
    pub beta: T,
    pub ln_gain: T,
    pub ln_shift: T,
}

/// Parameters of the parallel local-and-global layer used by the ablation scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridLayerParams<T> {
    pub w_q: T,
    pub w_k: T,
    pub w_v: T,
    pub w_h: T,
    pub beta: T,
    pub attention: Option<AttentionVectors<T>>,
    pub ln_gain: T,
    pub ln_shift: T,
}

fn gate_init(d: usize) -> (Matrix, Matrix, Matrix) {
    (Matrix::zeros(1, d), Matrix::filled(1, d, 1.0), Matrix::zeros(1, d))
}

impl LocalLayerParams<Matrix> {
    pub fn init<R: Rng + ?Sized>(d: usize, gat: bool, rng: &mut R) -> Self {
        let w_v = Matrix::glorot(d, d, rng);
        let w_h = Matrix::glorot(d, d, rng);
        let attention = gat.then(|| AttentionVectors {
            src: Matrix::glorot(1, d, rng),
            dst: Matrix::glorot(1, d, rng),
        });
        let (beta, ln_gain, ln_shift) = gate_init(d);
        Self { w_v, w_h, beta, attention, ln_gain, ln_shift }
    }
}

impl GlobalLayerParams<Matrix> {
    pub fn init<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let w_q = Matrix::glorot(d, d, rng);
        let w_k = Matrix::glorot(d, d, rng);
        let w_v = Matrix::glorot(d, d, rng);
        let w_h = Matrix::glorot(d, d, rng);
        let (beta, ln_gain, ln_shift) = gate_init(d);
        Self { w_q, w_k, w_v, w_h, beta, ln_gain, ln_shift }
    }
}

impl HybridLayerParams<Matrix> {
    pub fn init<R: Rng + ?Sized>(d: usize, gat: bool, rng: &mut R) -> Self {
        let w_q = Matrix::glorot(d, d, rng);
        let w_k = Matrix::glorot(d, d, rng);
        let w_v = Matrix::glorot(d, d, rng);
        let w_h = Matrix::glorot(d, d, rng);
        let attention = gat.then(|| AttentionVectors {
            src: Matrix::glorot(1, d, rng),
            dst: Matrix::glorot(1, d, rng),
        });
        let (beta, ln_gain, ln_shift) = gate_init(d);
        Self { w_q, w_k, w_v, w_h, beta, attention, ln_gain, ln_shift }
    }
}

impl<T> LocalLayerParams<T> {
    /// Tensors with stable names, in a fixed order.
    pub fn named(&self) -> Vec<(&'static str, &T)> {
        let mut out = vec![("w_v", &self.w_v), ("w_h", &self.w_h), ("beta", &self.beta)];
        if let Some(a) = &self.attention {
            out.push(("att_src", &a.src));
            out.push(("att_dst", &a.dst));
        }
        out.push(("ln_gain", &self.ln_gain));
        out.push(("ln_shift", &self.ln_shift));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut T)> {
        let mut out = vec![("w_v", &mut self.w_v), ("w_h", &mut self.w_h), ("beta", &mut self.beta)];
        if let Some(a) = &mut self.attention {
            out.push(("att_src", &mut a.src));
            out.push(("att_dst", &mut a.dst));
        }
        out.push(("ln_gain", &mut self.ln_gain));
        out.push(("ln_shift", &mut self.ln_shift));
        out
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> LocalLayerParams<U> {
        LocalLayerParams {
            w_v: f(&self.w_v),
            w_h: f(&self.w_h),
            beta: f(&self.beta),
            attention: self.attention.as_ref().map(|a| AttentionVectors {
                src: f(&a.src),
                dst: f(&a.dst),
            }),
            ln_gain: f(&self.ln_gain),
            ln_shift: f(&self.ln_shift),
        }
    }
}

impl<T> GlobalLayerParams<T> {
    pub fn named(&self) -> Vec<(&'static str, &T)> {
        vec![
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_h", &self.w_h),
            ("beta", &self.beta),
            ("ln_gain", &self.ln_gain),
            ("ln_shift", &self.ln_shift),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut T)> {
        vec![
            ("w_q", &mut self.w_q),
            ("w_k", &mut self.w_k),
            ("w_v", &mut self.w_v),
            ("w_h", &mut self.w_h),
            ("beta", &mut self.beta),
            ("ln_gain", &mut self.ln_gain),
            ("ln_shift", &mut self.ln_shift),
        ]
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> GlobalLayerParams<U> {
        GlobalLayerParams {
            w_q: f(&self.w_q),
            w_k: f(&self.w_k),
            w_v: f(&self.w_v),
            w_h: f(&self.w_h),
            beta: f(&self.beta),
            ln_gain: f(&self.ln_gain),
            ln_shift: f(&self.ln_shift),
        }
    }
}

impl<T> HybridLayerParams<T> {
    pub fn named(&self) -> Vec<(&'static str, &T)> {
        let mut out = vec![
            ("w_q", &self.w_q),
            ("w_k", &self.w_k),
            ("w_v", &self.w_v),
            ("w_h", &self.w_h),
            ("beta", &self.beta),
        ];
        if let Some(a) = &self.attention {
            out.push(("att_src", &a.src));
            out.push(("att_dst", &a.dst));
        }
        out.push(("ln_gain", &self.ln_gain));
        out.push(("ln_shift", &self.ln_shift));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut T)> {
        let mut out = vec![
            ("w_q", &mut self.w_q),
            ("w_k", &mut self.w_k),
            ("w_v", &mut self.w_v),
            ("w_h", &mut self.w_h),
            ("beta", &mut self.beta),
        ];
        if let Some(a) = &mut self.attention {
            out.push(("att_src", &mut a.src));
            out.push(("att_dst", &mut a.dst));
        }
        out.push(("ln_gain", &mut self.ln_gain));
        out.push(("ln_shift", &mut self.ln_shift));
        out
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> HybridLayerParams<U> {
        HybridLayerParams {
            w_q: f(&self.w_q),
            w_k: f(&self.w_k),
            w_v: f(&self.w_v),
            w_h: f(&self.w_h),
            beta: f(&self.beta),
            attention: self.attention.as_ref().map(|a| AttentionVectors {
                src: f(&a.src),
                dst: f(&a.dst),
            }),
            ln_gain: f(&self.ln_gain),
            ln_shift: f(&self.ln_shift),
        }
    }
}
