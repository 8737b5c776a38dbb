use serde::{Deserialize, Serialize};

/// A point in the cell frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 3]> for Position3 {
    fn from(v: [f64; 3]) -> Self {
        Position3::new(v[0], v[1], v[2])
    }
}

impl From<Position3> for [f64; 3] {
    fn from(p: Position3) -> Self {
        [p.x, p.y, p.z]
    }
}

impl Position3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Position3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Position3) -> f64 {
        (*self - *other).norm()
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn scale(&self, k: f64) -> Position3 {
        Position3::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn midpoint(&self, other: &Position3) -> Position3 {
        Position3::new(
            0.5 * (self.x + other.x),
            0.5 * (self.y + other.y),
            0.5 * (self.z + other.z),
        )
    }

    pub fn to_array(self) -> [f64; 3] {
        self.into()
    }
}

impl std::ops::Add for Position3 {
    type Output = Position3;
    fn add(self, o: Position3) -> Position3 {
        Position3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Position3 {
    type Output = Position3;
    fn sub(self, o: Position3) -> Position3 {
        Position3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// Axis-aligned horizontal bounds of the shared workspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds2 {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Bounds2 {
    pub fn is_valid(&self) -> bool {
        self.x[0].is_finite()
            && self.x[1].is_finite()
            && self.y[0].is_finite()
            && self.y[1].is_finite()
            && self.x[0] < self.x[1]
            && self.y[0] < self.y[1]
    }

    pub fn contains(&self, p: &Position3) -> bool {
        (self.x[0]..=self.x[1]).contains(&p.x) && (self.y[0]..=self.y[1]).contains(&p.y)
    }

    /// Clamps the horizontal components; returns the point and whether it moved.
    pub fn clamp(&self, p: Position3) -> (Position3, bool) {
        let q = Position3::new(p.x.clamp(self.x[0], self.x[1]), p.y.clamp(self.y[0], self.y[1]), p.z);
        (q, q != p)
    }
}
