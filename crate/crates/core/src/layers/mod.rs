//! Equivariant network layers built on the tape: linear maps, multivector
//! MLPs, geometric attention and the transformer block.
//!
//! Each layer owns a parameter-name prefix; `init` registers its arrays in a
//! [`ParameterStore`] and `forward` reads them back through the tape.

use rand::Rng;

use crate::autodiff::{AutodiffError, ParameterStore, Tape, Tensor, Var, ALPHA_TERMS, BETA_TERMS};
use crate::pga::RigidMotion;

/// Stabiliser added to the mean invariant norm in layer normalisation.
pub const LAYERNORM_EPS: f64 = 1e-6;

/// Equivariant linear map between multivector channel sets.
#[derive(Debug, Clone, PartialEq)]
pub struct EquiLinear {
    pub prefix: String,
    pub c_in: usize,
    pub c_out: usize,
}

impl EquiLinear {
    pub fn new(prefix: impl Into<String>, c_in: usize, c_out: usize) -> Self {
        EquiLinear { prefix: prefix.into(), c_in, c_out }
    }

    pub fn alpha_name(&self) -> String {
        format!("{}.alpha", self.prefix)
    }

    pub fn beta_name(&self) -> String {
        format!("{}.beta", self.prefix)
    }

    pub fn num_params(&self) -> usize {
        self.c_in * self.c_out * (ALPHA_TERMS + BETA_TERMS)
    }

    /// Uniform init in `±1/√(c_in·5)` and `±1/√(c_in·4)`, or all zeros.
    pub fn init<R: Rng + ?Sized>(
        &self,
        store: &mut ParameterStore,
        rng: &mut R,
        zero: bool,
    ) -> Result<(), AutodiffError> {
        let (co, ci) = (self.c_out, self.c_in);
        let mut draw = |terms: usize| -> Vec<f64> {
            let n = co * ci * terms;
            if zero {
                return vec![0.0; n];
            }
            let bound = 1.0 / ((ci * terms) as f64).sqrt();
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let alpha = draw(ALPHA_TERMS);
        let beta = draw(BETA_TERMS);
        store.insert(&self.alpha_name(), vec![co, ci, ALPHA_TERMS], alpha)?;
        store.insert(&self.beta_name(), vec![co, ci, BETA_TERMS], beta)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var, AutodiffError> {
        let a = tape.param(store, &self.alpha_name())?;
        let b = tape.param(store, &self.beta_name())?;
        tape.equi_linear(x, a, b)
    }
}

/// Layer norm, widening linear map, pairwise geometric products, gated GELU
/// and a projection back to `c_out` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricMlp {
    pub hidden: usize,
    pub widen: EquiLinear,
    pub project: EquiLinear,
}

impl GeometricMlp {
    pub fn new(prefix: &str, c_in: usize, hidden: usize, c_out: usize) -> Self {
        GeometricMlp {
            hidden,
            widen: EquiLinear::new(format!("{prefix}.lin1"), c_in, 2 * hidden),
            project: EquiLinear::new(format!("{prefix}.lin2"), 3 * hidden, c_out),
        }
    }

    pub fn num_params(&self) -> usize {
        self.widen.num_params() + self.project.num_params()
    }

    /// `zero_output` zero-initialises the final projection.
    pub fn init<R: Rng + ?Sized>(
        &self,
        store: &mut ParameterStore,
        rng: &mut R,
        zero_output: bool,
    ) -> Result<(), AutodiffError> {
        self.widen.init(store, rng, false)?;
        self.project.init(store, rng, zero_output)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var, AutodiffError> {
        let h = self.hidden;
        let normed = tape.equi_layernorm(x, LAYERNORM_EPS)?;
        let wide = self.widen.forward(tape, store, normed)?;
        let left = tape.slice_channels(wide, 0, h)?;
        let right = tape.slice_channels(wide, h, h)?;
        let prod = tape.geometric_product(left, right)?;
        let joined = tape.concat_channels(&[wide, prod])?;
        let gated = tape.gated_gelu(joined)?;
        self.project.forward(tape, store, gated)
    }
}

/// Pre-normalised multi-head attention with an output projection.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricAttention {
    pub heads: usize,
    pub q: EquiLinear,
    pub k: EquiLinear,
    pub v: EquiLinear,
    pub out: EquiLinear,
}

impl GeometricAttention {
    pub fn new(prefix: &str, channels: usize, heads: usize) -> Result<Self, AutodiffError> {
        if heads == 0 || channels % heads != 0 {
            return Err(AutodiffError::Heads { channels, heads });
        }
        let lin = |name: &str| EquiLinear::new(format!("{prefix}.{name}"), channels, channels);
        Ok(GeometricAttention { heads, q: lin("q"), k: lin("k"), v: lin("v"), out: lin("out") })
    }

    pub fn num_params(&self) -> usize {
        4 * self.q.num_params()
    }

    pub fn init<R: Rng + ?Sized>(
        &self,
        store: &mut ParameterStore,
        rng: &mut R,
        zero_output: bool,
    ) -> Result<(), AutodiffError> {
        self.q.init(store, rng, false)?;
        self.k.init(store, rng, false)?;
        self.v.init(store, rng, false)?;
        self.out.init(store, rng, zero_output)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var, AutodiffError> {
        let normed = tape.equi_layernorm(x, LAYERNORM_EPS)?;
        let q = self.q.forward(tape, store, normed)?;
        let k = self.k.forward(tape, store, normed)?;
        let v = self.v.forward(tape, store, normed)?;
        let mixed = tape.geometric_attention(q, k, v, self.heads)?;
        self.out.forward(tape, store, mixed)
    }
}

/// `A = X + attention(X)`, `Y = A + mlp(A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerBlock {
    pub attn: GeometricAttention,
    pub mlp: GeometricMlp,
}

impl TransformerBlock {
    /// Block `index` with parameters named `block{index}.attn.*` and
    /// `block{index}.mlp.*`.
    pub fn new(index: usize, channels: usize, heads: usize) -> Result<Self, AutodiffError> {
        let prefix = format!("block{index}");
        Ok(TransformerBlock {
            attn: GeometricAttention::new(&format!("{prefix}.attn"), channels, heads)?,
            mlp: GeometricMlp::new(&format!("{prefix}.mlp"), channels, channels, channels),
        })
    }

    pub fn num_params(&self) -> usize {
        self.attn.num_params() + self.mlp.num_params()
    }

    /// Output projections start at zero, so a fresh block is the identity.
    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParameterStore, rng: &mut R) -> Result<(), AutodiffError> {
        self.attn.init(store, rng, true)?;
        self.mlp.init(store, rng, true)
    }

    /// Same as [`init`](Self::init) but with random output projections.
    pub fn init_random<R: Rng + ?Sized>(&self, store: &mut ParameterStore, rng: &mut R) -> Result<(), AutodiffError> {
        self.attn.init(store, rng, false)?;
        self.mlp.init(store, rng, false)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParameterStore, x: Var) -> Result<Var, AutodiffError> {
        let attn = self.attn.forward(tape, store, x)?;
        let a = tape.add(x, attn)?;
        let mlp = self.mlp.forward(tape, store, a)?;
        tape.add(a, mlp)
    }
}

/// Message `m_{v→p}` from a fine vertex's features and the translation
/// `p − v` to its cluster centre.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolingMlp {
    pub mlp: GeometricMlp,
}

impl PoolingMlp {
    pub fn new(prefix: &str, c_in: usize, c_out: usize) -> Self {
        PoolingMlp { mlp: GeometricMlp::new(prefix, c_in + 1, c_out, c_out) }
    }

    /// `translations` holds one embedded translation per fine vertex, shape `[n, 1, 16]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        x_fine: Var,
        translations: Var,
    ) -> Result<Var, AutodiffError> {
        let joined = tape.concat_channels(&[x_fine, translations])?;
        self.mlp.forward(tape, store, joined)
    }
}

/// Lift from interpolated coarse features plus the input embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationMlp {
    pub mlp: GeometricMlp,
}

impl InterpolationMlp {
    pub fn new(prefix: &str, c_interp: usize, c_skip: usize, c_out: usize) -> Self {
        InterpolationMlp { mlp: GeometricMlp::new(prefix, c_interp + c_skip, c_out, c_out) }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParameterStore,
        x_interp: Var,
        x_skip: Var,
    ) -> Result<Var, AutodiffError> {
        if tape.shape(x_interp)[0] != tape.shape(x_skip)[0] {
            return Err(AutodiffError::Shape(format!(
                "interpolation lift: {} interpolated rows vs {} skip rows",
                tape.shape(x_interp)[0],
                tape.shape(x_skip)[0]
            )));
        }
        let joined = tape.concat_channels(&[x_interp, x_skip])?;
        self.mlp.forward(tape, store, joined)
    }
}

/// Applies a rigid motion to every multivector of a `[.., 16]` tensor.
pub fn transform_features(motion: &RigidMotion, t: &Tensor) -> Tensor {
    Tensor { shape: t.shape.clone(), data: motion.apply_mv_slice(&t.data) }
}

/// `max|a − b| / max|b|`, the deviation used by the equivariance checks.
pub fn relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_features(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Tensor {
        Tensor::new(vec![n, c, 16], (0..n * c * 16).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn identity_linear_map() {
        let lin = EquiLinear::new("id", 2, 2);
        let mut store = ParameterStore::new();
        let mut alpha = vec![0.0; 2 * 2 * 5];
        for i in 0..2 {
            for k in 0..5 {
                alpha[(i * 2 + i) * 5 + k] = 1.0;
            }
        }
        store.insert("id.alpha", vec![2, 2, 5], alpha).unwrap();
        store.insert("id.beta", vec![2, 2, 4], vec![0.0; 16]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random_features(&mut rng, 3, 2);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = lin.forward(&mut tape, &store, xv).unwrap();
        assert_eq!(tape.value(y), &x);
    }

    #[test]
    fn fresh_block_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let block = TransformerBlock::new(0, 4, 2).unwrap();
        let mut store = ParameterStore::new();
        block.init(&mut store, &mut rng).unwrap();
        assert_eq!(store.num_params(), block.num_params());
        let x = random_features(&mut rng, 5, 4);
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = block.forward(&mut tape, &store, xv).unwrap();
        assert_eq!(tape.value(y), &x);
    }

    #[test]
    fn parameter_names_follow_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParameterStore::new();
        TransformerBlock::new(3, 4, 2).unwrap().init(&mut store, &mut rng).unwrap();
        let names: Vec<&str> = store.names().map(String::as_str).collect();
        for expected in ["block3.attn.q.alpha", "block3.attn.out.beta", "block3.mlp.lin1.alpha", "block3.mlp.lin2.beta"]
        {
            assert!(names.contains(&expected), "{expected} missing from {names:?}");
        }
    }

    #[test]
    fn heads_must_divide_channels() {
        assert!(matches!(GeometricAttention::new("a", 6, 4), Err(AutodiffError::Heads { .. })));
    }
}
