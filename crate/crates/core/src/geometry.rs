//! Bounding boxes and the detection vocabulary shared by every other module.
//!
//! Coordinates are normalized to `[0, 1]` relative to the image, with the
//! origin at the top-left corner. Adapters that work in pixels convert at the
//! boundary.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box has zero area after clamping: ({x_min}, {y_min}, {x_max}, {y_max})")]
    ZeroArea {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("box coordinate is not a finite number")]
    NonFinite,
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("class label is empty or contains whitespace: {0:?}")]
    BadLabel(String),
    #[error("identifier is empty or contains whitespace: {0:?}")]
    BadIdentifier(String),
}

/// Axis-aligned box in normalized image coordinates.
///
/// Construction clamps every coordinate into `[0, 1]` and rejects boxes whose
/// area is zero after clamping, so `x_min < x_max` and `y_min < y_max` hold for
/// every value of this type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let c = |v: f64| v.clamp(0.0, 1.0);
        let (x_min, y_min, x_max, y_max) = (c(x_min), c(y_min), c(x_max), c(y_max));
        if x_min >= x_max || y_min >= y_max {
            return Err(GeometryError::ZeroArea {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Builds a box from the `x_center y_center width height` convention used by
    /// YOLO-style label files.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection(&self, other: &BBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Intersection over union. Both areas are strictly positive, so the union
    /// never vanishes.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection(other);
        if inter == 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }

    /// Pixel rectangle `(x0, y0, x1, y1)` inclusive, for drawing on a
    /// `width` x `height` image.
    pub fn to_pixels(&self, width: u32, height: u32) -> (u32, u32, u32, u32) {
        let px = |v: f64, n: u32| ((v * n as f64).round() as i64).clamp(0, n as i64 - 1) as u32;
        (
            px(self.x_min, width),
            px(self.y_min, height),
            px(self.x_max, width),
            px(self.y_max, height),
        )
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            x_min: f64,
            y_min: f64,
            x_max: f64,
            y_max: f64,
        }
        let r = Raw::deserialize(d)?;
        BBox::new(r.x_min, r.y_min, r.x_max, r.y_max).map_err(serde::de::Error::custom)
    }
}

pub fn area(b: &BBox) -> f64 {
    b.area()
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    a.iou(b)
}

fn is_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

/// Class name, stored in canonical lowercase so comparison is case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct ClassLabel(String);

impl ClassLabel {
    pub fn new(name: &str) -> Result<Self, GeometryError> {
        let name = name.trim();
        if !is_token(name) {
            return Err(GeometryError::BadLabel(name.to_string()));
        }
        Ok(Self(name.to_lowercase()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ClassLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        ClassLabel::new(&s).map_err(serde::de::Error::custom)
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = GeometryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

macro_rules! token_newtype {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Result<Self, GeometryError> {
                let s = s.into();
                if !is_token(&s) {
                    return Err(GeometryError::BadIdentifier(s));
                }
                Ok(Self(s))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                $name::new(s).map_err(serde::de::Error::custom)
            }
        }
    };
}

token_newtype!(
    /// Opaque frame reference. Must be a single whitespace-free token because it
    /// travels on the detection wire protocol.
    FrameId
);
token_newtype!(
    /// Name of a registered detector backend.
    DetectorId
);

/// One classified box reported by a detector for one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub label: ClassLabel,
    pub confidence: f64,
    pub source: DetectorId,
    pub frame_id: FrameId,
}

impl Detection {
    pub fn new(
        bbox: BBox,
        label: ClassLabel,
        confidence: f64,
        source: DetectorId,
        frame_id: FrameId,
    ) -> Result<Self, GeometryError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(GeometryError::Confidence(confidence));
        }
        Ok(Self {
            bbox,
            label,
            confidence,
            source,
            frame_id,
        })
    }
}

/// Label set of a detection list.
pub fn label_set<'a>(dets: impl IntoIterator<Item = &'a Detection>) -> BTreeSet<ClassLabel> {
    dets.into_iter().map(|d| d.label.clone()).collect()
}
