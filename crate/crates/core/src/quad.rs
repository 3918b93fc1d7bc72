//! Symmetric Gaussian quadrature on the reference triangle
//! `{(x, y) : x, y >= 0, x + y <= 1}`.
//!
//! Weights are normalized to sum to 1, so a physical integral is
//! `area * sum(w_k * f(p_k))`. The degree-4 rule integrates every product of
//! quadratic basis functions and their gradients exactly on affine elements;
//! the degree-6 rule is used for callable loads and error integrands.

/// One quadrature point in barycentric-free reference coordinates.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub x: f64,
    pub y: f64,
    pub w: f64,
}

/// Degree-4 rule, 6 points (exact for polynomials of total degree <= 4).
pub fn rule_deg4() -> &'static [QuadPoint] {
    const A1: f64 = 0.445948490915965;
    const W1: f64 = 0.223381589678011;
    const A2: f64 = 0.091576213509771;
    const W2: f64 = 0.109951743655322;
    static RULE: [QuadPoint; 6] = [
        QuadPoint { x: A1, y: A1, w: W1 },
        QuadPoint { x: 1.0 - 2.0 * A1, y: A1, w: W1 },
        QuadPoint { x: A1, y: 1.0 - 2.0 * A1, w: W1 },
        QuadPoint { x: A2, y: A2, w: W2 },
        QuadPoint { x: 1.0 - 2.0 * A2, y: A2, w: W2 },
        QuadPoint { x: A2, y: 1.0 - 2.0 * A2, w: W2 },
    ];
    &RULE
}

/// Degree-6 rule, 12 points (exact for polynomials of total degree <= 6).
pub fn rule_deg6() -> &'static [QuadPoint] {
    const A1: f64 = 0.063089014491502;
    const W1: f64 = 0.050844906370207;
    const A2: f64 = 0.249286745170910;
    const W2: f64 = 0.116786275726379;
    const A3: f64 = 0.053145049844816;
    const B3: f64 = 0.310352451033785;
    const C3: f64 = 1.0 - A3 - B3;
    const W3: f64 = 0.082851075618374;
    static RULE: [QuadPoint; 12] = [
        QuadPoint { x: A1, y: A1, w: W1 },
        QuadPoint { x: 1.0 - 2.0 * A1, y: A1, w: W1 },
        QuadPoint { x: A1, y: 1.0 - 2.0 * A1, w: W1 },
        QuadPoint { x: A2, y: A2, w: W2 },
        QuadPoint { x: 1.0 - 2.0 * A2, y: A2, w: W2 },
        QuadPoint { x: A2, y: 1.0 - 2.0 * A2, w: W2 },
        QuadPoint { x: A3, y: B3, w: W3 },
        QuadPoint { x: B3, y: A3, w: W3 },
        QuadPoint { x: A3, y: C3, w: W3 },
        QuadPoint { x: C3, y: A3, w: W3 },
        QuadPoint { x: B3, y: C3, w: W3 },
        QuadPoint { x: C3, y: B3, w: W3 },
    ];
    &RULE
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact reference-triangle integral of x^a y^b: a! b! / (a + b + 2)!.
    fn monomial_exact(a: u32, b: u32) -> f64 {
        let fact = |n: u32| (1..=n as u64).product::<u64>() as f64;
        fact(a) * fact(b) / fact(a + b + 2)
    }

    fn integrate(rule: &[QuadPoint], a: u32, b: u32) -> f64 {
        // Reference triangle area is 1/2; weights sum to 1.
        0.5 * rule
            .iter()
            .map(|p| p.w * p.x.powi(a as i32) * p.y.powi(b as i32))
            .sum::<f64>()
    }

    #[test]
    fn weights_sum_to_one() {
        for rule in [rule_deg4(), rule_deg6()] {
            let s: f64 = rule.iter().map(|p| p.w).sum();
            assert!((s - 1.0).abs() < 1e-14, "weight sum {s}");
        }
    }

    #[test]
    fn points_inside_reference_triangle() {
        for rule in [rule_deg4(), rule_deg6()] {
            for p in rule {
                assert!(p.x > 0.0 && p.y > 0.0 && p.x + p.y < 1.0);
                assert!(p.w > 0.0);
            }
        }
    }

    #[test]
    fn deg4_exact_through_degree_four() {
        for a in 0..=4u32 {
            for b in 0..=(4 - a) {
                let got = integrate(rule_deg4(), a, b);
                let want = monomial_exact(a, b);
                assert!(
                    (got - want).abs() < 1e-15,
                    "x^{a} y^{b}: got {got}, want {want}"
                );
            }
        }
    }

    #[test]
    fn deg6_exact_through_degree_six() {
        for a in 0..=6u32 {
            for b in 0..=(6 - a) {
                let got = integrate(rule_deg6(), a, b);
                let want = monomial_exact(a, b);
                assert!(
                    (got - want).abs() < 1e-15,
                    "x^{a} y^{b}: got {got}, want {want}"
                );
            }
        }
    }

    #[test]
    fn deg4_not_exact_at_degree_five() {
        // Guard against silently upgrading the rule: degree five fails.
        let got = integrate(rule_deg4(), 5, 0);
        let want = monomial_exact(5, 0);
        assert!((got - want).abs() > 1e-9);
    }
}
