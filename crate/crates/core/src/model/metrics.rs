use super::ModelError;
use crate::pga::Vec3;

/// Relative L2 error in percent: `100·sqrt(Σ‖ŷ − y‖² / Σ‖y‖²)`.
pub fn metric_eps(pred: &[Vec3], target: &[Vec3]) -> Result<f64, ModelError> {
    if pred.len() != target.len() {
        return Err(ModelError::TaskMismatch(format!("{} predictions for {} targets", pred.len(), target.len())));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, t) in pred.iter().zip(target) {
        for a in 0..3 {
            num += (p[a] - t[a]).powi(2);
            den += t[a] * t[a];
        }
    }
    if den == 0.0 {
        return Err(ModelError::Metric("target field is identically zero".into()));
    }
    Ok(100.0 * (num / den).sqrt())
}

/// Mean absolute error over samples.
pub fn metric_mae(pred: &[f64], target: &[f64]) -> Result<f64, ModelError> {
    if pred.len() != target.len() {
        return Err(ModelError::TaskMismatch(format!("{} predictions for {} targets", pred.len(), target.len())));
    }
    if pred.is_empty() {
        return Err(ModelError::Metric("no samples".into()));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_reference_values() {
        let t = vec![[1.0, 2.0, -1.0], [0.5, 0.0, 3.0]];
        assert_eq!(metric_eps(&t, &t).unwrap(), 0.0);
        assert_eq!(metric_eps(&[[0.0; 3]; 2], &t).unwrap(), 100.0);
        let doubled: Vec<Vec3> = t.iter().map(|v| [2.0 * v[0], 2.0 * v[1], 2.0 * v[2]]).collect();
        assert!((metric_eps(&doubled, &t).unwrap() - 100.0).abs() < 1e-12);
        assert!(metric_eps(&t, &[[0.0; 3]; 2]).is_err());
    }

    #[test]
    fn mae_reference_values() {
        assert_eq!(metric_mae(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), 2.0);
        assert_eq!(metric_mae(&[3.0, 1.0], &[0.0, 0.0]).unwrap(), 2.0);
        assert_eq!(metric_mae(&[0.5], &[0.5]).unwrap(), 0.0);
        assert!(metric_mae(&[], &[]).is_err());
    }
}
