use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canvas fill outside the object.
pub const BACKGROUND: [f64; 3] = [0.5, 0.5, 0.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Circle,
    Square,
    Triangle,
    Cross,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [
        ShapeKind::Circle,
        ShapeKind::Square,
        ShapeKind::Triangle,
        ShapeKind::Cross,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Square => "square",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Cross => "cross",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorName {
    Red,
    Green,
    Blue,
    Yellow,
}

impl ColorName {
    pub const ALL: [ColorName; 4] = [
        ColorName::Red,
        ColorName::Green,
        ColorName::Blue,
        ColorName::Yellow,
    ];

    pub fn rgb(self) -> [f64; 3] {
        match self {
            ColorName::Red => [1.0, 0.0, 0.0],
            ColorName::Green => [0.0, 1.0, 0.0],
            ColorName::Blue => [0.0, 0.0, 1.0],
            ColorName::Yellow => [1.0, 1.0, 0.0],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ColorName::Red => "red",
            ColorName::Green => "green",
            ColorName::Blue => "blue",
            ColorName::Yellow => "yellow",
        }
    }
}

/// Object fill color: one of the four canonical names, or a free RGB
/// triple for the continuous-color suite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ColorValue {
    #[serde(rename = "discrete")]
    Discrete(ColorName),
    #[serde(rename = "rgb")]
    Rgb([f64; 3]),
}

impl ColorValue {
    pub fn rgb(&self) -> [f64; 3] {
        match self {
            ColorValue::Discrete(name) => name.rgb(),
            ColorValue::Rgb(rgb) => *rgb,
        }
    }

    pub fn discrete(&self) -> Option<ColorName> {
        match self {
            ColorValue::Discrete(name) => Some(*name),
            ColorValue::Rgb(_) => None,
        }
    }
}

/// Everything needed to render one image: shape kind, fill color, integer
/// pixel center and half-extent. The object must sit fully inside the
/// canvas with at least one pixel of background margin on every side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub shape: ShapeKind,
    pub color: ColorValue,
    pub center: (usize, usize),
    pub size: usize,
}

impl ShapeSpec {
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let (cx, cy) = self.center;
        let s = self.size;
        if s < 3 {
            return Err(Error::input("shape_spec", format!("size {} below minimum 3", s)));
        }
        let fits = cx >= s + 1 && cy >= s + 1 && cx + s + 2 <= width && cy + s + 2 <= height;
        if !fits {
            return Err(Error::input(
                "shape_spec",
                format!(
                    "center ({}, {}) size {} does not fit a {}x{} canvas with margin",
                    cx, cy, s, width, height
                ),
            ));
        }
        let rgb = self.color.rgb();
        if rgb.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::input("shape_spec", format!("rgb {:?} outside [0,1]", rgb)));
        }
        if rgb == BACKGROUND {
            return Err(Error::input("shape_spec", "object color equals the background"));
        }
        Ok(())
    }
}
