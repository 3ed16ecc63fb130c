use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `C · χ_{I×J}` with `I = [x0, x1]`, `J = [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub amplitude: f64,
}

impl Rectangle {
    pub fn new(x: [f64; 2], y: [f64; 2], amplitude: f64) -> Self {
        Self { x, y, amplitude }
    }

    pub fn width(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    pub fn height(&self) -> f64 {
        self.y[1] - self.y[0]
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x[0] < x && x < self.x[1] && self.y[0] < y && y < self.y[1]
    }

    fn overlaps(&self, other: &Rectangle) -> bool {
        self.x[0] < other.x[1] && other.x[0] < self.x[1] && self.y[0] < other.y[1] && other.y[0] < self.y[1]
    }
}

/// Decay envelope `C₀ (1+|x|)^{-m₁} (1+|y|)^{-m₂}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub c0: f64,
    pub m1: f64,
    pub m2: f64,
}

impl Envelope {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.c0 * (1.0 + x.abs()).powf(-self.m1) * (1.0 + y.abs()).powf(-self.m2)
    }
}

/// Non-negative perturbation supported on a union of disjoint rectangles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationV {
    rectangles: Vec<Rectangle>,
    envelope: Option<Envelope>,
}

impl PerturbationV {
    pub fn new(rectangles: Vec<Rectangle>, envelope: Option<Envelope>) -> Result<Self> {
        for (i, r) in rectangles.iter().enumerate() {
            let finite = r.x.iter().chain(&r.y).all(|v| v.is_finite()) && r.amplitude.is_finite();
            if !finite {
                return Err(Error::InvalidInput(format!("rectangle {i} has non-finite data")));
            }
            if !(r.x[0] < r.x[1] && r.y[0] < r.y[1]) {
                return Err(Error::InvalidInput(format!("rectangle {i} has empty interior")));
            }
            if r.amplitude <= 0.0 {
                return Err(Error::InvalidInput(format!("rectangle {i} amplitude must be positive")));
            }
            for (k, other) in rectangles[..i].iter().enumerate() {
                if r.overlaps(other) {
                    return Err(Error::InvalidInput(format!("rectangles {k} and {i} overlap")));
                }
            }
        }
        if let Some(env) = envelope {
            if !(env.c0 >= 0.0 && env.m1 > 0.0 && env.m2 > 0.0) {
                return Err(Error::InvalidInput("envelope needs C0 >= 0, m1 > 0, m2 > 0".into()));
            }
            for (i, r) in rectangles.iter().enumerate() {
                // the envelope is smallest at the corner farthest from the axes
                let x = r.x[0].abs().max(r.x[1].abs());
                let y = r.y[0].abs().max(r.y[1].abs());
                let bound = env.eval(x, y);
                if r.amplitude > bound * (1.0 + 1e-12) {
                    return Err(Error::InvalidInput(format!(
                        "rectangle {i} amplitude {} exceeds envelope {bound} at corner ({x}, {y})",
                        r.amplitude
                    )));
                }
            }
        }
        Ok(Self { rectangles, envelope })
    }

    pub fn zero() -> Self {
        Self {
            rectangles: Vec::new(),
            envelope: None,
        }
    }

    pub fn rectangle(x: [f64; 2], y: [f64; 2], amplitude: f64) -> Result<Self> {
        Self::new(vec![Rectangle::new(x, y, amplitude)], None)
    }

    pub fn rectangles(&self) -> &[Rectangle] {
        &self.rectangles
    }

    pub fn envelope(&self) -> Option<Envelope> {
        self.envelope
    }

    pub fn is_zero(&self) -> bool {
        self.rectangles.is_empty()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.rectangles
            .iter()
            .filter(|r| r.contains(x, y))
            .map(|r| r.amplitude)
            .sum()
    }

    /// `ℛ₊ ⊇ supp V` with `C₊ = max V`.
    pub fn bounding_box(&self) -> Option<Rectangle> {
        let first = self.rectangles.first()?;
        let mut b = *first;
        for r in &self.rectangles[1..] {
            b.x = [b.x[0].min(r.x[0]), b.x[1].max(r.x[1])];
            b.y = [b.y[0].min(r.y[0]), b.y[1].max(r.y[1])];
            b.amplitude = b.amplitude.max(r.amplitude);
        }
        Some(b)
    }

    /// Same support with every amplitude multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let rects = self
            .rectangles
            .iter()
            .map(|r| Rectangle::new(r.x, r.y, r.amplitude * factor))
            .collect();
        Self::new(rects, None)
    }
}
