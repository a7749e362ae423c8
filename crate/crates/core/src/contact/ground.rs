use nalgebra::Vector2;

/// Terrain profile `z = h(x)` in the sagittal plane.
pub trait Ground: Send + Sync {
    fn height(&self, x: f64) -> f64;
    /// `h'(x)`.
    fn slope(&self, x: f64) -> f64;
    /// `h''(x)`.
    fn curvature(&self, x: f64) -> f64;

    /// Unit tangent (pointing toward +x) and unit upward normal at `x`.
    fn frame(&self, x: f64) -> (Vector2<f64>, Vector2<f64>) {
        let s = self.slope(x);
        let k = 1.0 / (1.0 + s * s).sqrt();
        (Vector2::new(k, s * k), Vector2::new(-s * k, k))
    }

    /// Rate of change of the tangent angle when the contact moves with `x_dot`.
    fn turn_rate(&self, x: f64, x_dot: f64) -> f64 {
        let s = self.slope(x);
        self.curvature(x) / (1.0 + s * s) * x_dot
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FlatGround {
    pub height: f64,
}

impl Ground for FlatGround {
    fn height(&self, _x: f64) -> f64 {
        self.height
    }
    fn slope(&self, _x: f64) -> f64 {
        0.0
    }
    fn curvature(&self, _x: f64) -> f64 {
        0.0
    }
}
