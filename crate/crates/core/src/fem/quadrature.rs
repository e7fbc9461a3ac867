use crate::mesh::ElementKind;

/// Points in parent coordinates (unused trailing components are zero) and weights.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// 2×2 Gauss–Legendre rule on the bi-unit square, unit weights.
    pub fn gauss_2x2() -> Self {
        let g = 1.0 / 3f64.sqrt();
        // Same ordering as the quad4 nodes.
        let points = vec![[-g, -g, 0.0], [g, -g, 0.0], [g, g, 0.0], [-g, g, 0.0]];
        QuadratureRule { points, weights: vec![1.0; 4] }
    }

    /// Centroid rule on the reference tetrahedron, weight 1/6.
    pub fn tet_centroid() -> Self {
        QuadratureRule { points: vec![[0.25, 0.25, 0.25]], weights: vec![1.0 / 6.0] }
    }

    pub fn for_kind(kind: ElementKind) -> Self {
        match kind {
            ElementKind::Quad4 => Self::gauss_2x2(),
            ElementKind::Tet4 => Self::tet_centroid(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_1d(a: u32) -> f64 {
        if a % 2 == 1 {
            0.0
        } else {
            2.0 / (a + 1) as f64
        }
    }

    #[test]
    fn weights_sum_to_parent_measure() {
        assert!((QuadratureRule::gauss_2x2().weights.iter().sum::<f64>() - 4.0).abs() < 1e-15);
        assert!((QuadratureRule::tet_centroid().weights.iter().sum::<f64>() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn gauss_is_exact_for_bicubics() {
        let rule = QuadratureRule::gauss_2x2();
        for a in 0..=3u32 {
            for b in 0..=3u32 {
                let approx: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                    .sum();
                let exact = exact_1d(a) * exact_1d(b);
                assert!((approx - exact).abs() < 1e-14, "xi^{a} eta^{b}: {approx} vs {exact}");
            }
        }
    }
}
