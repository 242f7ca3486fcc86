//! Finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParameterStore;
use super::tape::{Tape, Tensor, Var};
use super::AutodiffError;

/// `|a − f| / (1e−8 + |a| + |f|)`.
pub fn relative_error(ad: f64, fd: f64) -> f64 {
    (ad - fd).abs() / (1e-8 + ad.abs() + fd.abs())
}

fn eval_scalar(tape: &Tape, out: Var) -> Result<f64, AutodiffError> {
    let v = tape.value(out);
    if v.numel() != 1 {
        return Err(AutodiffError::Shape(format!("objective must be scalar, got {:?}", v.shape)));
    }
    let x = v.item();
    if !x.is_finite() {
        return Err(AutodiffError::NonFinite(format!("objective evaluated to {x}")));
    }
    Ok(x)
}

/// Compares the tape gradient of `f` at `point` with central differences of
/// step `eps`; returns the largest componentwise relative error.
pub fn grad_check<F>(f: F, point: &Tensor, eps: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, AutodiffError>,
{
    let eval = |x: Tensor| -> Result<f64, AutodiffError> {
        let mut t = Tape::new();
        let v = t.constant(x);
        let out = f(&mut t, v)?;
        eval_scalar(&t, out)
    };
    let mut tape = Tape::new();
    let x = tape.leaf(point.clone());
    let out = f(&mut tape, x)?;
    eval_scalar(&tape, out)?;
    let ad = tape.backward(out)?.get(&tape, x);
    let mut worst = 0.0f64;
    for i in 0..point.numel() {
        let mut plus = point.clone();
        plus.data[i] += eps;
        let mut minus = point.clone();
        minus.data[i] -= eps;
        let fd = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        worst = worst.max(relative_error(ad[i], fd));
    }
    Ok(worst)
}

/// The worst component found by [`grad_check_params_worst`].
#[derive(Debug, Clone, PartialEq)]
pub struct WorstComponent {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub error: f64,
}

/// Gradient check with respect to the parameters of `store`. At most
/// `max_per_array` components of each array are probed (chosen by `seed`);
/// `None` probes every component.
pub fn grad_check_params<F>(
    store: &ParameterStore,
    f: F,
    eps: f64,
    max_per_array: Option<usize>,
    seed: u64,
) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &ParameterStore) -> Result<Var, AutodiffError>,
{
    Ok(grad_check_params_worst(store, f, eps, max_per_array, seed)?.map_or(0.0, |w| w.error))
}

/// Same as [`grad_check_params`] but reports where the worst error occurs.
pub fn grad_check_params_worst<F>(
    store: &ParameterStore,
    f: F,
    eps: f64,
    max_per_array: Option<usize>,
    seed: u64,
) -> Result<Option<WorstComponent>, AutodiffError>
where
    F: Fn(&mut Tape, &ParameterStore) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    eval_scalar(&tape, out)?;
    let grads = tape.backward(out)?.into_params();
    let eval = |s: &ParameterStore| -> Result<f64, AutodiffError> {
        let mut t = Tape::new();
        let out = f(&mut t, s)?;
        eval_scalar(&t, out)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = store.clone();
    let mut worst: Option<WorstComponent> = None;
    for (name, p) in store.iter() {
        let n = p.numel();
        let idx: Vec<usize> = match max_per_array {
            Some(m) if m < n => {
                let mut v = sample(&mut rng, n, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        let zeros = vec![0.0; n];
        let ad = grads.get(name).unwrap_or(&zeros);
        for i in idx {
            let orig = p.value[i];
            probe.get_mut(name).expect("cloned store").value[i] = orig + eps;
            let fp = eval(&probe)?;
            probe.get_mut(name).expect("cloned store").value[i] = orig - eps;
            let fm = eval(&probe)?;
            probe.get_mut(name).expect("cloned store").value[i] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let error = relative_error(ad[i], numeric);
            if worst.as_ref().is_none_or(|w| error > w.error) {
                worst = Some(WorstComponent { name: name.clone(), index: i, analytic: ad[i], numeric, error });
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_is_exact() {
        let point = Tensor::new(vec![5], vec![0.3, -1.2, 2.5, 0.01, -0.7]).unwrap();
        let err = grad_check(
            |t, x| {
                let sq = t.mul(x, x)?;
                t.sum(sq)
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn l1_away_from_kink() {
        let point = Tensor::new(vec![4], vec![0.3, -1.2, 2.5, -0.7]).unwrap();
        let target = [0.1, 0.4, -1.0, 0.2];
        let err = grad_check(|t, x| t.l1_loss(x, &target), &point, 1e-5).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let point = Tensor::new(vec![1], vec![0.0]).unwrap();
        let r = grad_check(|t, x| t.recip(x), &point, 1e-5);
        assert!(matches!(r, Err(AutodiffError::NonFinite(_))));
    }

    #[test]
    fn parameter_check() {
        let mut s = ParameterStore::new();
        s.insert("w", vec![3], vec![0.5, -0.25, 1.5]).unwrap();
        let err = grad_check_params(
            &s,
            |t, s| {
                let w = t.param(s, "w")?;
                let g = t.gelu(w)?;
                let p = t.mul(g, w)?;
                t.sum(p)
            },
            1e-5,
            None,
            0,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }
}
