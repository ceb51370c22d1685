//! Radial cutoff profiles built from the quintic smoothstep (C² at the
//! breakpoints).

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffKind {
    Rho,
    Sigma,
    Chi,
    FWeight,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CutoffProfile {
    pub kind: CutoffKind,
    pub start: f64,
    pub end: f64,
    /// Plateau height of the f_weight bump; 1 for the decreasing profiles.
    pub peak: f64,
    pub degree: u32,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

fn smoothstep_prime(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    30.0 * x * x * (1.0 - x) * (1.0 - x)
}

impl CutoffProfile {
    fn decreasing(kind: CutoffKind, start: f64, end: f64) -> Self {
        assert!(end > start && start >= 0.0, "cutoff breakpoints out of order");
        Self {
            kind,
            start,
            end,
            peak: 1.0,
            degree: 5,
        }
    }

    /// 1 on [0, 3ε/5], 0 on [4ε/5, ∞).
    pub fn rho(eps: f64) -> Self {
        Self::decreasing(CutoffKind::Rho, 0.6 * eps, 0.8 * eps)
    }

    /// 1 on [0, 3ε/5], 0 on [ε, ∞).
    pub fn sigma(eps: f64) -> Self {
        Self::decreasing(CutoffKind::Sigma, 0.6 * eps, eps)
    }

    /// 1 on [0, ε], 0 on [1.6ε, ∞): localizes a reference form away from a curve.
    pub fn chi(eps: f64) -> Self {
        Self::decreasing(CutoffKind::Chi, eps, 1.6 * eps)
    }

    /// Arbitrary decreasing profile of a given kind.
    pub fn custom(kind: CutoffKind, start: f64, end: f64) -> Self {
        Self::decreasing(kind, start, end)
    }

    /// Bump ≥ 1, equal to 1 outside [start, end] and to `peak` at the centre.
    pub fn f_weight(start: f64, end: f64, peak: f64) -> Self {
        assert!(peak >= 1.0 && end > start);
        Self {
            kind: CutoffKind::FWeight,
            start,
            end,
            peak,
            degree: 5,
        }
    }

    fn x(&self, d: f64) -> f64 {
        (d - self.start) / (self.end - self.start)
    }

    pub fn value(&self, d: f64) -> f64 {
        let x = self.x(d);
        match self.kind {
            CutoffKind::FWeight => {
                if x <= 0.0 || x >= 1.0 {
                    return 1.0;
                }
                // S(2x) rising, S(2 − 2x) falling
                let s = if x < 0.5 { smoothstep(2.0 * x) } else { smoothstep(2.0 - 2.0 * x) };
                1.0 + (self.peak - 1.0) * s
            }
            _ => 1.0 - smoothstep(x),
        }
    }

    pub fn derivative(&self, d: f64) -> f64 {
        let x = self.x(d);
        let w = self.end - self.start;
        match self.kind {
            CutoffKind::FWeight => {
                if x <= 0.0 || x >= 1.0 {
                    return 0.0;
                }
                let s = if x < 0.5 {
                    2.0 * smoothstep_prime(2.0 * x)
                } else {
                    -2.0 * smoothstep_prime(2.0 - 2.0 * x)
                };
                (self.peak - 1.0) * s / w
            }
            _ => -smoothstep_prime(x) / w,
        }
    }

    /// Support radius (value ≠ plateau beyond it is impossible).
    pub fn support(&self) -> f64 {
        self.end
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateaus_and_monotonicity() {
        let eps = 0.2;
        let r = CutoffProfile::rho(eps);
        assert_eq!(r.value(0.0), 1.0);
        assert_eq!(r.value(0.6 * eps), 1.0);
        assert_eq!(r.value(0.8 * eps), 0.0);
        assert_eq!(r.value(1.0), 0.0);
        let s = CutoffProfile::sigma(eps);
        assert_eq!(s.value(0.12), 1.0);
        assert_eq!(s.value(eps), 0.0);
        let mut prev = 1.0;
        for k in 0..=1000 {
            let v = s.value(k as f64 * eps / 1000.0);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn second_differences_stay_bounded_across_breakpoints() {
        let eps = 0.2;
        for prof in [CutoffProfile::rho(eps), CutoffProfile::sigma(eps), CutoffProfile::chi(eps)] {
            let w = prof.end - prof.start;
            // bound on |S''|/w² is 10/√3/w²
            let bound = 5.78 / (w * w);
            for h in [1e-3, 5e-4] {
                for b in [prof.start, prof.end] {
                    for off in [-2.0, -1.0, 0.0, 1.0, 2.0] {
                        let x = b + off * h;
                        let dd = (prof.value(x + h) - 2.0 * prof.value(x) + prof.value(x - h)) / (h * h);
                        assert!(dd.abs() <= bound * 1.01, "{:?} at {x}: {dd}", prof.kind);
                    }
                }
            }
        }
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let p = CutoffProfile::rho(0.3);
        for k in 0..50 {
            let d = 0.17 + k as f64 * 0.001;
            let fd = (p.value(d + 1e-7) - p.value(d - 1e-7)) / 2e-7;
            assert!((fd - p.derivative(d)).abs() < 1e-5);
        }
    }

    #[test]
    fn f_weight_is_at_least_one() {
        let f = CutoffProfile::f_weight(0.2, 0.6, 3.0);
        assert_eq!(f.value(0.1), 1.0);
        assert_eq!(f.value(0.7), 1.0);
        assert!((f.value(0.4) - 3.0).abs() < 1e-12);
        assert!((0..100).all(|k| f.value(k as f64 * 0.01) >= 1.0));
    }
}
