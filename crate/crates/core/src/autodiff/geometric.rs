//! Differentiable multivector operations on `[.., 16]` arrays.
//!
//! The fused kernels (equivariant linear map, normalisation, gating,
//! attention) are each equal to a composition of the generic primitives; the
//! unit tests check both routes against each other.

use std::cell::RefCell;

use super::ops::{gelu, gelu_grad, softmax_in_place};
use super::tape::{Function, Tape, Tensor, Var};
use super::AutodiffError;
use crate::pga::blade::{contains_e0, DIM, GRADE, NON_DEGENERATE};
use crate::pga::cayley;

/// `(target blade with e0, source blade without e0)` for left product by `e0`.
const E0_PAIRS: [(usize, usize); 8] = [(1, 0), (5, 2), (6, 3), (7, 4), (11, 8), (12, 9), (13, 10), (15, 14)];

/// Number of grade-projection coefficients of the equivariant linear map.
pub const ALPHA_TERMS: usize = 5;
/// Number of `e0`-lifted grade-projection coefficients (source grades 0..=3).
pub const BETA_TERMS: usize = 4;

fn check_mv(name: &str, t: &Tensor) -> Result<(), AutodiffError> {
    if t.shape.last() != Some(&DIM) {
        return Err(AutodiffError::Shape(format!("{name}: last axis must be 16, got {:?}", t.shape)));
    }
    Ok(())
}

fn check_feature(name: &str, t: &Tensor) -> Result<(usize, usize), AutodiffError> {
    if t.shape.len() != 3 || t.shape[2] != DIM || t.shape[0] == 0 || t.shape[1] == 0 {
        return Err(AutodiffError::Shape(format!("{name}: expected [n, c, 16], got {:?}", t.shape)));
    }
    Ok((t.shape[0], t.shape[1]))
}

struct GeometricProduct;
impl Function for GeometricProduct {
    fn name(&self) -> &'static str {
        "geometric_product"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        check_mv("geometric_product", x[0])?;
        if x[0].shape != x[1].shape {
            return Err(AutodiffError::Shape(format!("geometric_product: {:?} vs {:?}", x[0].shape, x[1].shape)));
        }
        let terms = cayley().terms();
        let mut out = vec![0.0; x[0].numel()];
        for ((o, a), b) in out.chunks_exact_mut(DIM).zip(x[0].data.chunks_exact(DIM)).zip(x[1].data.chunks_exact(DIM)) {
            for t in terms {
                o[t.out] += t.sign * a[t.lhs] * b[t.rhs];
            }
        }
        Ok(Tensor { shape: x[0].shape.clone(), data: out })
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], needs: &[bool]) -> Vec<Vec<f64>> {
        let terms = cayley().terms();
        let mut ga = if needs[0] { vec![0.0; x[0].numel()] } else { vec![] };
        let mut gb = if needs[1] { vec![0.0; x[1].numel()] } else { vec![] };
        for (m, (a, b)) in x[0].data.chunks_exact(DIM).zip(x[1].data.chunks_exact(DIM)).enumerate() {
            let gm = &g[m * DIM..(m + 1) * DIM];
            for t in terms {
                let go = t.sign * gm[t.out];
                if needs[0] {
                    ga[m * DIM + t.lhs] += go * b[t.rhs];
                }
                if needs[1] {
                    gb[m * DIM + t.rhs] += go * a[t.lhs];
                }
            }
        }
        vec![ga, gb]
    }
}

/// Keeps the components whose blade mask is set; linear and self-adjoint.
struct BladeMask {
    keep: [bool; DIM],
}
impl Function for BladeMask {
    fn name(&self) -> &'static str {
        "blade_mask"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        check_mv("blade_mask", x[0])?;
        Ok(Tensor { shape: x[0].shape.clone(), data: self.apply(&x[0].data) })
    }
    fn backward(&self, _: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        vec![self.apply(g)]
    }
}
impl BladeMask {
    fn apply(&self, data: &[f64]) -> Vec<f64> {
        data.iter().enumerate().map(|(i, &v)| if self.keep[i % DIM] { v } else { 0.0 }).collect()
    }
}

/// Left multiplication by `e0`.
struct E0Left;
impl Function for E0Left {
    fn name(&self) -> &'static str {
        "e0_left"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        check_mv("e0_left", x[0])?;
        let mut out = vec![0.0; x[0].numel()];
        for (o, a) in out.chunks_exact_mut(DIM).zip(x[0].data.chunks_exact(DIM)) {
            for &(dst, src) in &E0_PAIRS {
                o[dst] = a[src];
            }
        }
        Ok(Tensor { shape: x[0].shape.clone(), data: out })
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        let mut out = vec![0.0; x[0].numel()];
        for (o, gm) in out.chunks_exact_mut(DIM).zip(g.chunks_exact(DIM)) {
            for &(dst, src) in &E0_PAIRS {
                o[src] = gm[dst];
            }
        }
        vec![out]
    }
}

/// `out[t,o] = Σ_i Σ_k α[o,i,k] <x[t,i]>_k + Σ_i Σ_k β[o,i,k] e0 <x[t,i]>_k`
/// with `k = 0..=4` for α and `k = 0..=3` for β.
struct EquiLinear;
impl EquiLinear {
    /// Per-blade expansion of the coefficients: `w1[o,i,b] = α[o,i,grade(b)]`
    /// and `w2[o,i,j] = β[o,i,grade(src_j)]` for the j-th `e0` pair.
    fn expand(alpha: &Tensor, beta: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let pairs = alpha.shape[0] * alpha.shape[1];
        let mut w1 = Vec::with_capacity(pairs * DIM);
        let mut w2 = Vec::with_capacity(pairs * E0_PAIRS.len());
        for p in 0..pairs {
            let a = &alpha.data[p * ALPHA_TERMS..(p + 1) * ALPHA_TERMS];
            let b = &beta.data[p * BETA_TERMS..(p + 1) * BETA_TERMS];
            w1.extend(GRADE.iter().map(|&g| a[g]));
            w2.extend(E0_PAIRS.iter().map(|&(_, src)| b[GRADE[src]]));
        }
        (w1, w2)
    }
}
impl Function for EquiLinear {
    fn name(&self) -> &'static str {
        "equi_linear"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        let (input, alpha, beta) = (x[0], x[1], x[2]);
        let (n, ci) = check_feature("equi_linear", input)?;
        let co = alpha.shape.first().copied().unwrap_or(0);
        if alpha.shape != [co, ci, ALPHA_TERMS] || beta.shape != [co, ci, BETA_TERMS] {
            return Err(AutodiffError::Shape(format!(
                "equi_linear: input {:?}, alpha {:?}, beta {:?}",
                input.shape, alpha.shape, beta.shape
            )));
        }
        let (w1, w2) = Self::expand(alpha, beta);
        let mut out = vec![0.0; n * co * DIM];
        for t in 0..n {
            let xt = &input.data[t * ci * DIM..(t + 1) * ci * DIM];
            for o in 0..co {
                let acc = &mut out[(t * co + o) * DIM..(t * co + o + 1) * DIM];
                for i in 0..ci {
                    let xi = &xt[i * DIM..(i + 1) * DIM];
                    let c1 = &w1[(o * ci + i) * DIM..(o * ci + i + 1) * DIM];
                    for b in 0..DIM {
                        acc[b] += c1[b] * xi[b];
                    }
                    let c2 = &w2[(o * ci + i) * 8..(o * ci + i + 1) * 8];
                    for (j, &(dst, src)) in E0_PAIRS.iter().enumerate() {
                        acc[dst] += c2[j] * xi[src];
                    }
                }
            }
        }
        Ok(Tensor { shape: vec![n, co, DIM], data: out })
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], needs: &[bool]) -> Vec<Vec<f64>> {
        let (input, alpha, beta) = (x[0], x[1], x[2]);
        let (n, ci, co) = (input.shape[0], input.shape[1], alpha.shape[0]);
        let (w1, w2) = Self::expand(alpha, beta);
        let mut gx = if needs[0] { vec![0.0; input.numel()] } else { vec![] };
        let mut gw1 = vec![0.0; co * ci * DIM];
        let mut gw2 = vec![0.0; co * ci * 8];
        let want_w = needs[1] || needs[2];
        for t in 0..n {
            let xt = &input.data[t * ci * DIM..(t + 1) * ci * DIM];
            for o in 0..co {
                let go = &g[(t * co + o) * DIM..(t * co + o + 1) * DIM];
                for i in 0..ci {
                    let p = o * ci + i;
                    if needs[0] {
                        let gxi = &mut gx[(t * ci + i) * DIM..(t * ci + i + 1) * DIM];
                        let c1 = &w1[p * DIM..(p + 1) * DIM];
                        for b in 0..DIM {
                            gxi[b] += c1[b] * go[b];
                        }
                        for (j, &(dst, src)) in E0_PAIRS.iter().enumerate() {
                            gxi[src] += w2[p * 8 + j] * go[dst];
                        }
                    }
                    if want_w {
                        let xi = &xt[i * DIM..(i + 1) * DIM];
                        let d1 = &mut gw1[p * DIM..(p + 1) * DIM];
                        for b in 0..DIM {
                            d1[b] += xi[b] * go[b];
                        }
                        for (j, &(dst, src)) in E0_PAIRS.iter().enumerate() {
                            gw2[p * 8 + j] += xi[src] * go[dst];
                        }
                    }
                }
            }
        }
        let mut ga = vec![0.0; alpha.numel()];
        let mut gb = vec![0.0; beta.numel()];
        if want_w {
            for p in 0..co * ci {
                for b in 0..DIM {
                    ga[p * ALPHA_TERMS + GRADE[b]] += gw1[p * DIM + b];
                }
                for (j, &(_, src)) in E0_PAIRS.iter().enumerate() {
                    gb[p * BETA_TERMS + GRADE[src]] += gw2[p * 8 + j];
                }
            }
        }
        vec![gx, ga, gb]
    }
}

/// Divides each token by `sqrt(mean_c inv_norm_sq(x[t,c]) + eps)`.
struct EquiLayerNorm {
    eps: f64,
}
impl Function for EquiLayerNorm {
    fn name(&self) -> &'static str {
        "equi_layernorm"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        let (n, c) = check_feature("equi_layernorm", x[0])?;
        let mut out = x[0].data.clone();
        for t in 0..n {
            let tok = &mut out[t * c * DIM..(t + 1) * c * DIM];
            let r = self.inv_scale(tok, c);
            tok.iter_mut().for_each(|v| *v *= r);
        }
        Ok(Tensor { shape: x[0].shape.clone(), data: out })
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        let (n, c) = (x[0].shape[0], x[0].shape[1]);
        let mut out = vec![0.0; x[0].numel()];
        for t in 0..n {
            let range = t * c * DIM..(t + 1) * c * DIM;
            let (xt, gt) = (&x[0].data[range.clone()], &g[range.clone()]);
            let r = self.inv_scale(xt, c);
            let s: f64 = xt.iter().zip(gt).map(|(a, b)| a * b).sum();
            let k = r * r * r * s / c as f64;
            for (idx, (o, (&xv, &gv))) in out[range].iter_mut().zip(xt.iter().zip(gt)).enumerate() {
                *o = r * gv;
                if !contains_e0(idx % DIM) {
                    *o -= k * xv;
                }
            }
        }
        vec![out]
    }
}
impl EquiLayerNorm {
    fn inv_scale(&self, tok: &[f64], c: usize) -> f64 {
        let mut total = 0.0;
        for mv in tok.chunks_exact(DIM) {
            for &b in &NON_DEGENERATE {
                total += mv[b] * mv[b];
            }
        }
        1.0 / (total / c as f64 + self.eps).sqrt()
    }
}

/// `x * GELU(x_s)` per multivector.
struct GatedGelu;
impl Function for GatedGelu {
    fn name(&self) -> &'static str {
        "gated_gelu"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        check_mv("gated_gelu", x[0])?;
        let mut out = x[0].data.clone();
        for mv in out.chunks_exact_mut(DIM) {
            let gate = gelu(mv[0]);
            mv.iter_mut().for_each(|v| *v *= gate);
        }
        Ok(Tensor { shape: x[0].shape.clone(), data: out })
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], _: &[bool]) -> Vec<Vec<f64>> {
        let mut out = vec![0.0; x[0].numel()];
        for ((o, mv), gm) in out.chunks_exact_mut(DIM).zip(x[0].data.chunks_exact(DIM)).zip(g.chunks_exact(DIM)) {
            let gate = gelu(mv[0]);
            let dot: f64 = mv.iter().zip(gm).map(|(a, b)| a * b).sum();
            for (ov, gv) in o.iter_mut().zip(gm) {
                *ov = gv * gate;
            }
            o[0] += dot * gelu_grad(mv[0]);
        }
        vec![out]
    }
}

/// Multi-head dot-product attention over tokens. Logits pair queries and
/// keys over the blades without `e0`; values mix all 16 components.
struct GeometricAttention {
    heads: usize,
    weights: RefCell<Vec<f64>>,
}
impl GeometricAttention {
    fn dims(&self, q: &Tensor) -> (usize, usize, usize, f64) {
        let (n, c) = (q.shape[0], q.shape[1]);
        let ch = c / self.heads;
        let scale = 1.0 / ((ch * NON_DEGENERATE.len()) as f64).sqrt();
        (n, c, ch, scale)
    }
}
impl Function for GeometricAttention {
    fn name(&self) -> &'static str {
        "geometric_attention"
    }
    fn forward(&self, x: &[&Tensor]) -> Result<Tensor, AutodiffError> {
        let (q, k, v) = (x[0], x[1], x[2]);
        let (n, c) = check_feature("attention", q)?;
        if k.shape != q.shape || v.shape != q.shape {
            return Err(AutodiffError::Shape(format!("attention: q {:?}, k {:?}, v {:?}", q.shape, k.shape, v.shape)));
        }
        if self.heads == 0 || c % self.heads != 0 {
            return Err(AutodiffError::Heads { channels: c, heads: self.heads });
        }
        let (_, _, ch, scale) = self.dims(q);
        let mut weights = vec![0.0; self.heads * n * n];
        let mut out = vec![0.0; n * c * DIM];
        for h in 0..self.heads {
            let c0 = h * ch;
            let a = &mut weights[h * n * n..(h + 1) * n * n];
            for i in 0..n {
                let row = &mut a[i * n..(i + 1) * n];
                for (j, r) in row.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for cc in c0..c0 + ch {
                        let qi = &q.data[(i * c + cc) * DIM..(i * c + cc + 1) * DIM];
                        let kj = &k.data[(j * c + cc) * DIM..(j * c + cc + 1) * DIM];
                        for &b in &NON_DEGENERATE {
                            s += qi[b] * kj[b];
                        }
                    }
                    *r = s * scale;
                }
                softmax_in_place(row);
                for (j, &w) in row.iter().enumerate() {
                    let src = &v.data[(j * c + c0) * DIM..(j * c + c0 + ch) * DIM];
                    let dst = &mut out[(i * c + c0) * DIM..(i * c + c0 + ch) * DIM];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        *self.weights.borrow_mut() = weights;
        Ok(Tensor { shape: q.shape.clone(), data: out })
    }
    fn backward(&self, x: &[&Tensor], _: &Tensor, g: &[f64], needs: &[bool]) -> Vec<Vec<f64>> {
        let (q, k, v) = (x[0], x[1], x[2]);
        let (n, c, ch, scale) = self.dims(q);
        let weights = self.weights.borrow();
        let mut gq = vec![0.0; q.numel()];
        let mut gk = vec![0.0; k.numel()];
        let mut gv = vec![0.0; v.numel()];
        let mut dlogit = vec![0.0; n];
        for h in 0..self.heads {
            let c0 = h * ch;
            let a = &weights[h * n * n..(h + 1) * n * n];
            for i in 0..n {
                let gi = &g[(i * c + c0) * DIM..(i * c + c0 + ch) * DIM];
                let row = &a[i * n..(i + 1) * n];
                let mut mean = 0.0;
                for j in 0..n {
                    let vj = &v.data[(j * c + c0) * DIM..(j * c + c0 + ch) * DIM];
                    let da: f64 = gi.iter().zip(vj).map(|(p, r)| p * r).sum();
                    dlogit[j] = da;
                    mean += row[j] * da;
                    if needs[2] {
                        let w = row[j];
                        let gvj = &mut gv[(j * c + c0) * DIM..(j * c + c0 + ch) * DIM];
                        for (d, s) in gvj.iter_mut().zip(gi) {
                            *d += w * s;
                        }
                    }
                }
                for j in 0..n {
                    let dl = row[j] * (dlogit[j] - mean) * scale;
                    if dl == 0.0 {
                        continue;
                    }
                    for cc in c0..c0 + ch {
                        let (qi_off, kj_off) = ((i * c + cc) * DIM, (j * c + cc) * DIM);
                        for &b in &NON_DEGENERATE {
                            gq[qi_off + b] += dl * k.data[kj_off + b];
                            gk[kj_off + b] += dl * q.data[qi_off + b];
                        }
                    }
                }
            }
        }
        vec![gq, gk, gv]
    }
}

impl Tape {
    pub fn geometric_product(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.record(Box::new(GeometricProduct), &[a, b])
    }

    pub fn grade_project(&mut self, a: Var, grade: usize) -> Result<Var, AutodiffError> {
        if grade > 4 {
            return Err(AutodiffError::Grade(grade));
        }
        let keep = std::array::from_fn(|b| GRADE[b] == grade);
        self.record(Box::new(BladeMask { keep }), &[a])
    }

    /// Zeroes every component whose blade contains `e0`.
    pub fn drop_e0(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let keep = std::array::from_fn(|b| !contains_e0(b));
        self.record(Box::new(BladeMask { keep }), &[a])
    }

    pub fn e0_left(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(Box::new(E0Left), &[a])
    }

    /// Equivariant linear map; `alpha: [c_out, c_in, 5]`, `beta: [c_out, c_in, 4]`.
    pub fn equi_linear(&mut self, x: Var, alpha: Var, beta: Var) -> Result<Var, AutodiffError> {
        self.record(Box::new(EquiLinear), &[x, alpha, beta])
    }

    pub fn equi_layernorm(&mut self, x: Var, eps: f64) -> Result<Var, AutodiffError> {
        self.record(Box::new(EquiLayerNorm { eps }), &[x])
    }

    pub fn gated_gelu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.record(Box::new(GatedGelu), &[x])
    }

    pub fn geometric_attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var, AutodiffError> {
        self.record(Box::new(GeometricAttention { heads, weights: RefCell::new(Vec::new()) }), &[q, k, v])
    }
}

/// Row-stochastic attention matrix of the given head, recomputed from values;
/// used by tests and diagnostics.
pub fn attention_weights(q: &Tensor, k: &Tensor, heads: usize, head: usize) -> Vec<f64> {
    let (n, c) = (q.shape[0], q.shape[1]);
    let ch = c / heads;
    let scale = 1.0 / ((ch * NON_DEGENERATE.len()) as f64).sqrt();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for cc in head * ch..(head + 1) * ch {
                for &b in &NON_DEGENERATE {
                    s += q.data[(i * c + cc) * DIM + b] * k.data[(j * c + cc) * DIM + b];
                }
            }
            a[i * n + j] = s * scale;
        }
        softmax_in_place(&mut a[i * n..(i + 1) * n]);
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor { shape, data: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() }
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    /// Equivariant linear map built from grade projections, e0 products,
    /// scaling and sums only.
    fn composed_linear(t: &mut Tape, x: Var, alpha: &Tensor, beta: &Tensor) -> Var {
        let (n, ci) = (t.shape(x)[0], t.shape(x)[1]);
        let co = alpha.shape[0];
        let mut outs = Vec::new();
        for o in 0..co {
            let mut acc: Option<Var> = None;
            for i in 0..ci {
                let xi = t.slice_channels(x, i, 1).unwrap();
                for kk in 0..5 {
                    let p = t.grade_project(xi, kk).unwrap();
                    let term = t.scale(p, alpha.data[(o * ci + i) * 5 + kk]).unwrap();
                    acc = Some(match acc {
                        Some(a) => t.add(a, term).unwrap(),
                        None => term,
                    });
                    if kk < 4 {
                        let lifted = t.e0_left(p).unwrap();
                        let term = t.scale(lifted, beta.data[(o * ci + i) * 4 + kk]).unwrap();
                        acc = Some(t.add(acc.unwrap(), term).unwrap());
                    }
                }
            }
            outs.push(acc.unwrap());
        }
        let out = t.concat_channels(&outs).unwrap();
        assert_eq!(t.shape(out), &[n, co, 16]);
        out
    }

    #[test]
    fn fused_linear_matches_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, vec![3, 2, 16]);
        let alpha = random(&mut rng, vec![3, 2, 5]);
        let beta = random(&mut rng, vec![3, 2, 4]);
        let mut t = Tape::new();
        let xv = t.leaf(x);
        let (a, b) = (t.leaf(alpha.clone()), t.leaf(beta.clone()));
        let fused = t.equi_linear(xv, a, b).unwrap();
        let composed = composed_linear(&mut t, xv, &alpha, &beta);
        assert!(max_diff(&t.value(fused).data, &t.value(composed).data) < 1e-14);
    }

    #[test]
    fn e0_left_matches_product_with_e0() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, vec![4, 16]);
        let mut e0 = Tensor::zeros(vec![4, 16]);
        for r in 0..4 {
            e0.data[r * 16 + 1] = 1.0;
        }
        let mut t = Tape::new();
        let xv = t.leaf(x);
        let ev = t.constant(e0);
        let a = t.e0_left(xv).unwrap();
        let b = t.geometric_product(ev, xv).unwrap();
        assert_eq!(t.value(a).data, t.value(b).data);
    }

    #[test]
    fn layernorm_matches_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, vec![1, 3, 16]);
        let mut t = Tape::new();
        let xv = t.leaf(x.clone());
        let fused = t.equi_layernorm(xv, 1e-6).unwrap();
        // sqrt(mean inv_norm_sq + eps) via generic primitives.
        let masked = t.drop_e0(xv).unwrap();
        let sq = t.mul(masked, masked).unwrap();
        let total = t.sum(sq).unwrap();
        let mean = t.scale(total, 1.0 / 3.0).unwrap();
        let eps = t.constant(Tensor::scalar(1e-6));
        let shifted = t.add(mean, eps).unwrap();
        let root = t.sqrt(shifted).unwrap();
        let inv = t.recip(root).unwrap();
        let r = t.value(inv).item();
        let expected: Vec<f64> = x.data.iter().map(|v| v * r).collect();
        assert!(max_diff(&t.value(fused).data, &expected) < 1e-15);
    }

    #[test]
    fn attention_matches_matmul_softmax_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (n, c, heads) = (5, 4, 2);
        let q = random(&mut rng, vec![n, c, 16]);
        let k = random(&mut rng, vec![n, c, 16]);
        let v = random(&mut rng, vec![n, c, 16]);
        let mut t = Tape::new();
        let (qv, kv, vv) = (t.leaf(q.clone()), t.leaf(k.clone()), t.leaf(v.clone()));
        let fused = t.geometric_attention(qv, kv, vv, heads).unwrap();
        let fused = t.value(fused).clone();

        let ch = c / heads;
        let scale = 1.0 / ((ch * 8) as f64).sqrt();
        for h in 0..heads {
            let qh = t.slice_channels(qv, h * ch, ch).unwrap();
            let kh = t.slice_channels(kv, h * ch, ch).unwrap();
            let vh = t.slice_channels(vv, h * ch, ch).unwrap();
            let qm = t.drop_e0(qh).unwrap();
            let qm = t.reshape(qm, vec![n, ch * 16]).unwrap();
            let km = t.reshape(kh, vec![n, ch * 16]).unwrap();
            // Transpose of K through an explicit permutation-free construction.
            let kt_data: Vec<f64> = {
                let kd = &t.value(km).data;
                (0..ch * 16).flat_map(|r| (0..n).map(move |j| (r, j))).map(|(r, j)| kd[j * ch * 16 + r]).collect()
            };
            let kt = t.constant(Tensor::new(vec![ch * 16, n], kt_data).unwrap());
            let logits = t.matmul(qm, kt).unwrap();
            let logits = t.scale(logits, scale).unwrap();
            let a = t.softmax(logits).unwrap();
            let vm = t.reshape(vh, vec![n, ch * 16]).unwrap();
            let o = t.matmul(a, vm).unwrap();
            let od = &t.value(o).data;
            for i in 0..n {
                for r in 0..ch * 16 {
                    let fused_v = fused.data[(i * c + h * ch) * 16 + r];
                    assert!((fused_v - od[i * ch * 16 + r]).abs() < 1e-14);
                }
            }
            let w = attention_weights(&q, &k, heads, h);
            for i in 0..n {
                let s: f64 = w[i * n..(i + 1) * n].iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_rejects_bad_heads() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros(vec![2, 3, 16]));
        assert!(matches!(t.geometric_attention(x, x, x, 2), Err(AutodiffError::Heads { channels: 3, heads: 2 })));
    }
}
