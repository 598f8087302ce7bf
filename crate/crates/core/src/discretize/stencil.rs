//! Finite-difference stencils for `−∇·(σ∇u)`.

/// Three-point stencil `[west, center, east]` at node `i` from the
/// coefficient values at nodes `i−1, i, i+1`.
pub fn stencil_1d(sigma_left: f64, sigma_center: f64, sigma_right: f64, h: f64) -> [f64; 3] {
    let s = 1.0 / (h * h);
    [
        -s * (sigma_left + sigma_center) / 2.0,
        s * (sigma_left + 2.0 * sigma_center + sigma_right) / 2.0,
        -s * (sigma_center + sigma_right) / 2.0,
    ]
}

/// Coefficient values (or stencil weights) on a five-point neighborhood.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FivePoint {
    pub center: f64,
    pub west: f64,
    pub east: f64,
    pub south: f64,
    pub north: f64,
}

impl FivePoint {
    pub fn uniform(v: f64) -> Self {
        Self {
            center: v,
            west: v,
            east: v,
            south: v,
            north: v,
        }
    }
}

/// Five-point stencil at node `(i, j)` from the coefficient at the node and
/// its four neighbors.
pub fn stencil_2d(sigma: FivePoint, h: f64) -> FivePoint {
    let s = 1.0 / (2.0 * h * h);
    let off = |nb: f64| -s * (sigma.center + nb);
    FivePoint {
        center: s
            * (sigma.west + sigma.south + 4.0 * sigma.center + sigma.north + sigma.east),
        west: off(sigma.west),
        east: off(sigma.east),
        south: off(sigma.south),
        north: off(sigma.north),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_coefficient_is_laplacian() {
        let h = 0.125;
        let st = stencil_1d(1.0, 1.0, 1.0, h);
        assert_eq!(st, [-64.0, 128.0, -64.0]);
        let st2 = stencil_2d(FivePoint::uniform(1.0), h);
        assert_eq!(st2.center, 4.0 * 64.0);
        assert_eq!(st2.north, -64.0);
    }

    #[test]
    fn one_sided_coefficient() {
        assert_eq!(stencil_1d(0.0, 1.0, 1.0, 1.0), [-0.5, 1.5, -1.0]);
    }

    #[test]
    fn linear_in_sigma() {
        let a = stencil_1d(2.0, 2.0, 2.0, 0.5);
        let b = stencil_1d(1.0, 1.0, 1.0, 0.5);
        for k in 0..3 {
            assert_eq!(a[k], 2.0 * b[k]);
        }
    }

    #[test]
    fn isolated_node_2d() {
        let h = 0.25;
        let sigma = FivePoint {
            center: 1.0,
            west: 0.0,
            east: 0.0,
            south: 0.0,
            north: 0.0,
        };
        let st = stencil_2d(sigma, h);
        assert_eq!(st.center, 2.0 / (h * h));
        assert_eq!(st.west, -1.0 / (2.0 * h * h));
    }
}
