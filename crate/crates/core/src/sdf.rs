//! Analytic signed distance fields used to describe relic geometry.
//!
//! Distances are in meters and negative inside. Every node kind is exact
//! (or a lower bound inside, for unions), so the field is 1-Lipschitz.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Maximum nesting depth accepted for an SDF tree.
pub const MAX_DEPTH: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SdfNode {
    Sphere {
        center: Vec3,
        radius: f64,
    },
    Box {
        center: Vec3,
        half_extents: Vec3,
    },
    Capsule {
        p0: Vec3,
        p1: Vec3,
        radius: f64,
    },
    Union {
        children: Vec<SdfNode>,
    },
    Translate {
        child: std::boxed::Box<SdfNode>,
        offset: Vec3,
    },
    ScaleUniform {
        child: std::boxed::Box<SdfNode>,
        factor: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdfError {
    #[error("sdf tree deeper than {MAX_DEPTH} levels")]
    TooDeep,
    #[error("non-positive {what} ({value}) at {path}")]
    NonPositive {
        what: &'static str,
        value: f64,
        path: String,
    },
    #[error("non-finite parameter at {0}")]
    NonFinite(String),
    #[error("empty union at {0}")]
    EmptyUnion(String),
}

/// Axis-aligned bounds, `min` and `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    fn union(self, other: Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }
}

impl SdfNode {
    pub fn sphere(center: [f64; 3], radius: f64) -> Self {
        SdfNode::Sphere {
            center: center.into(),
            radius,
        }
    }

    pub fn cuboid(center: [f64; 3], half_extents: [f64; 3]) -> Self {
        SdfNode::Box {
            center: center.into(),
            half_extents: half_extents.into(),
        }
    }

    pub fn capsule(p0: [f64; 3], p1: [f64; 3], radius: f64) -> Self {
        SdfNode::Capsule {
            p0: p0.into(),
            p1: p1.into(),
            radius,
        }
    }

    pub fn union(children: Vec<SdfNode>) -> Self {
        SdfNode::Union { children }
    }

    pub fn translate(self, offset: [f64; 3]) -> Self {
        SdfNode::Translate {
            child: std::boxed::Box::new(self),
            offset: offset.into(),
        }
    }

    pub fn scale(self, factor: f64) -> Self {
        SdfNode::ScaleUniform {
            child: std::boxed::Box::new(self),
            factor,
        }
    }

    /// Signed distance from `p` to the surface.
    pub fn eval(&self, p: &Vec3) -> f64 {
        match self {
            SdfNode::Sphere { center, radius } => (p - center).norm() - radius,
            SdfNode::Box {
                center,
                half_extents,
            } => {
                let q = (p - center).abs() - half_extents;
                let outside = q.sup(&Vec3::zeros()).norm();
                let inside = q.max().min(0.0);
                outside + inside
            }
            SdfNode::Capsule { p0, p1, radius } => {
                let pa = p - p0;
                let ba = p1 - p0;
                let len2 = ba.norm_squared();
                let h = if len2 > 0.0 {
                    (pa.dot(&ba) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                (pa - ba * h).norm() - radius
            }
            SdfNode::Union { children } => children
                .iter()
                .map(|c| c.eval(p))
                .fold(f64::INFINITY, f64::min),
            SdfNode::Translate { child, offset } => child.eval(&(p - offset)),
            SdfNode::ScaleUniform { child, factor } => factor * child.eval(&(p / *factor)),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            SdfNode::Sphere { .. } | SdfNode::Box { .. } | SdfNode::Capsule { .. } => 1,
            SdfNode::Union { children } => 1 + children.iter().map(|c| c.depth()).max().unwrap_or(0),
            SdfNode::Translate { child, .. } | SdfNode::ScaleUniform { child, .. } => {
                1 + child.depth()
            }
        }
    }

    /// Conservative bounds of the interior (`eval <= 0`).
    pub fn bounds(&self) -> Aabb {
        match self {
            SdfNode::Sphere { center, radius } => {
                let r = Vec3::repeat(*radius);
                Aabb {
                    min: center - r,
                    max: center + r,
                }
            }
            SdfNode::Box {
                center,
                half_extents,
            } => Aabb {
                min: center - half_extents,
                max: center + half_extents,
            },
            SdfNode::Capsule { p0, p1, radius } => {
                let r = Vec3::repeat(*radius);
                Aabb {
                    min: p0.inf(p1) - r,
                    max: p0.sup(p1) + r,
                }
            }
            SdfNode::Union { children } => children
                .iter()
                .map(|c| c.bounds())
                .reduce(Aabb::union)
                .unwrap_or(Aabb {
                    min: Vec3::zeros(),
                    max: Vec3::zeros(),
                }),
            SdfNode::Translate { child, offset } => {
                let b = child.bounds();
                Aabb {
                    min: b.min + offset,
                    max: b.max + offset,
                }
            }
            SdfNode::ScaleUniform { child, factor } => {
                let b = child.bounds();
                Aabb {
                    min: b.min * *factor,
                    max: b.max * *factor,
                }
            }
        }
    }

    /// Checks depth, positivity and finiteness of every parameter.
    pub fn validate(&self) -> Result<(), SdfError> {
        if self.depth() > MAX_DEPTH {
            return Err(SdfError::TooDeep);
        }
        self.validate_at("geometry")
    }

    fn validate_at(&self, path: &str) -> Result<(), SdfError> {
        let finite = |v: &Vec3| v.iter().all(|x| x.is_finite());
        let positive = |what: &'static str, value: f64| {
            if !value.is_finite() {
                Err(SdfError::NonFinite(path.to_string()))
            } else if value <= 0.0 {
                Err(SdfError::NonPositive {
                    what,
                    value,
                    path: path.to_string(),
                })
            } else {
                Ok(())
            }
        };
        match self {
            SdfNode::Sphere { center, radius } => {
                if !finite(center) {
                    return Err(SdfError::NonFinite(path.to_string()));
                }
                positive("radius", *radius)
            }
            SdfNode::Box {
                center,
                half_extents,
            } => {
                if !finite(center) {
                    return Err(SdfError::NonFinite(path.to_string()));
                }
                half_extents
                    .iter()
                    .try_for_each(|h| positive("half extent", *h))
            }
            SdfNode::Capsule { p0, p1, radius } => {
                if !finite(p0) || !finite(p1) {
                    return Err(SdfError::NonFinite(path.to_string()));
                }
                positive("radius", *radius)
            }
            SdfNode::Union { children } => {
                if children.is_empty() {
                    return Err(SdfError::EmptyUnion(path.to_string()));
                }
                children
                    .iter()
                    .enumerate()
                    .try_for_each(|(i, c)| c.validate_at(&format!("{path}.children[{i}]")))
            }
            SdfNode::Translate { child, offset } => {
                if !finite(offset) {
                    return Err(SdfError::NonFinite(path.to_string()));
                }
                child.validate_at(&format!("{path}.child"))
            }
            SdfNode::ScaleUniform { child, factor } => {
                positive("scale factor", *factor)?;
                child.validate_at(&format!("{path}.child"))
            }
        }
    }
}
