use crate::error::{Error, Result};

/// A point of the (sparsity β, signal strength r) plane, optionally with
/// θ from p = n^{1/θ}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionPoint {
    pub beta: f64,
    pub r: f64,
    pub theta: Option<f64>,
}

impl DetectionPoint {
    pub fn new(beta: f64, theta: Option<f64>) -> Self {
        DetectionPoint { beta, r: 0.0, theta }
    }
}

/// ϱ(β): β − ½ on [½, ¾], (1 − √(1 − β))² on (¾, 1).
pub fn rho(beta: f64) -> f64 {
    if beta <= 0.75 {
        beta - 0.5
    } else {
        (1.0 - (1.0 - beta).sqrt()).powi(2)
    }
}

/// ϱ_θ(β): penalised boundary with an estimated precision matrix.
pub fn rho_theta(beta: f64, theta: f64) -> f64 {
    if beta <= (3.0 - theta) / 4.0 {
        ((1.0 - theta).sqrt() - (1.0 - beta - theta / 2.0).sqrt()).powi(2)
    } else {
        rho(beta)
    }
}

/// (ϱ(β), ϱ_θ(β)) for β ∈ [½, 1) and θ ∈ (0, 1).
pub fn detection_boundary(pt: &DetectionPoint) -> Result<(f64, Option<f64>)> {
    if !(pt.beta >= 0.5 && pt.beta < 1.0) {
        return Err(Error::out_of_range("beta", pt.beta, "[0.5, 1)"));
    }
    let rt = match pt.theta {
        Some(t) if !(t > 0.0 && t < 1.0) => return Err(Error::out_of_range("theta", t, "(0, 1)")),
        Some(t) => Some(rho_theta(pt.beta, t)),
        None => None,
    };
    Ok((rho(pt.beta), rt))
}

impl DetectionPoint {
    /// Whether r lies strictly above ϱ(β) (or ϱ_θ(β) when θ is set).
    pub fn detectable(&self) -> Result<bool> {
        let (r0, rt) = detection_boundary(self)?;
        Ok(self.r > rt.unwrap_or(r0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_values() {
        assert!((rho(0.6) - 0.1).abs() < 1e-15);
        assert_eq!(rho(0.75), 0.25);
        assert!((rho(0.84) - 0.36).abs() < 1e-15);
        assert!(detection_boundary(&DetectionPoint::new(0.4, None)).is_err());
        assert!(detection_boundary(&DetectionPoint::new(1.0, None)).is_err());
        assert!(detection_boundary(&DetectionPoint::new(0.6, Some(1.0))).is_err());
    }

    #[test]
    fn both_branches_meet_at_three_quarters() {
        let left = 0.75 - 0.5;
        let right = (1.0 - (1.0f64 - 0.75).sqrt()).powi(2);
        assert_eq!(left, right);
        assert!((rho(0.75 + 1e-12) - 0.25).abs() < 1e-11);
    }

    #[test]
    fn theta_penalty_region() {
        for &theta in &[0.3, 0.5, 0.7] {
            let knot = (3.0 - theta) / 4.0;
            for i in 0..500 {
                let beta = 0.5 + 0.5 * i as f64 / 500.0;
                let (r0, rt) = detection_boundary(&DetectionPoint::new(beta, Some(theta))).unwrap();
                let rt = rt.unwrap();
                if beta >= knot {
                    assert!((rt - r0).abs() < 1e-14);
                } else {
                    assert!(rt >= r0, "beta {beta} theta {theta}");
                }
            }
        }
    }

    #[test]
    fn detectable_above_boundary() {
        let pt = DetectionPoint { beta: 0.6, r: 0.2, theta: None };
        assert!(pt.detectable().unwrap());
        let pt = DetectionPoint { beta: 0.6, r: 0.05, theta: None };
        assert!(!pt.detectable().unwrap());
    }
}
