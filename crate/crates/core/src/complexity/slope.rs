use super::ComplexityError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(ln T, ln regret)`.
pub fn slope_fit(horizons: &[f64], values: &[f64]) -> Result<SlopeFit, ComplexityError> {
    if horizons.len() != values.len() || horizons.len() < 3 {
        return Err(ComplexityError::Input("need at least 3 paired points".into()));
    }
    if let Some(v) = horizons.iter().chain(values).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(ComplexityError::Input(format!("log-log fit needs positive values, got {v}")));
    }
    let xs: Vec<f64> = horizons.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(ComplexityError::Input("horizons must not all be equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeFit { slope, intercept, r_squared })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_laws() {
        let ts = [512.0, 1024.0, 2048.0, 4096.0];
        let lin: Vec<f64> = ts.iter().map(|t| 3.0 * t).collect();
        assert!((slope_fit(&ts, &lin).unwrap().slope - 1.0).abs() < 1e-9);
        let root: Vec<f64> = ts.iter().map(|t: &f64| 0.7 * t.sqrt()).collect();
        let fit = slope_fit(&ts, &root).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-9);
        assert!((fit.intercept - 0.7f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(slope_fit(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(slope_fit(&[1.0, 2.0, 3.0], &[1.0, 0.0, 2.0]).is_err());
    }
}
