use crate::error::{Error, Result};

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "{} estimates against {} truths",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Relative squared error `Σ(m̂ - m)² / Σ m²`.
pub fn rmse_m(m_hat: &[f64], m_true: &[f64]) -> Result<f64> {
    same_len(m_hat, m_true)?;
    let denom: f64 = m_true.iter().map(|m| m * m).sum();
    if !(denom > 0.0) {
        return Err(Error::Degenerate("true function is identically zero".into()));
    }
    let num: f64 = m_hat.iter().zip(m_true).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / denom)
}

/// Shift `c` minimizing `Σ(m̂ + c - m)²`, i.e. the mean discrepancy.
pub fn level_shift(m_hat: &[f64], m_true: &[f64]) -> Result<f64> {
    same_len(m_hat, m_true)?;
    if m_hat.is_empty() {
        return Err(Error::InvalidArgument("no points to align".into()));
    }
    Ok(m_true.iter().zip(m_hat).map(|(t, h)| t - h).sum::<f64>() / m_hat.len() as f64)
}

/// Mean squared prediction error.
pub fn mspe(y_hat: &[f64], y: &[f64]) -> Result<f64> {
    same_len(y_hat, y)?;
    if y.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    Ok(y_hat.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        let m = [1.0, -2.0, 3.0];
        assert_eq!(rmse_m(&m, &m).unwrap(), 0.0);
        let doubled: Vec<f64> = m.iter().map(|v| 2.0 * v).collect();
        assert_eq!(rmse_m(&doubled, &m).unwrap(), 1.0);
        assert_eq!(rmse_m(&[0.0; 3], &m).unwrap(), 1.0);
        assert!(rmse_m(&[1.0], &[0.0]).is_err());
        assert!(rmse_m(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mspe_examples() {
        assert_eq!(mspe(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mspe(&[1.5, 2.5], &[1.0, 2.0]).unwrap(), 0.25);
        assert_eq!(mspe(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert!(mspe(&[], &[]).is_err());
    }

    #[test]
    fn shift_recovers_offset() {
        let t = [1.0, 2.0, 4.0];
        let h = [0.5, 1.5, 3.5];
        assert_eq!(level_shift(&h, &t).unwrap(), 0.5);
    }
}
