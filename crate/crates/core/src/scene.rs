//! Detection ingestion: merge class and phrase detections into named,
//! typed scene objects.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pddl::{Domain, ROOT_TYPE};

pub const DEFAULT_THETA_MATCH: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("scene has no detections")]
    EmptyScene,
    #[error("invalid box {0:?}")]
    InvalidBox([f64; 4]),
    #[error("box {bbox:?} lies outside the {width}x{height} image")]
    OutOfImage {
        bbox: [f64; 4],
        width: f64,
        height: f64,
    },
    #[error("score {0} outside [0, 1]")]
    BadScore(f64),
    #[error("type '{0}' is not declared by the domain")]
    UnknownType(String),
    #[error("duplicate phrase-derived name '{0}'")]
    DuplicateName(String),
    #[error("'{0}' is not a valid object name")]
    BadName(String),
}

/// Axis-aligned box in pixels. Serialized as `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(c: [f64; 4]) -> Self {
        BBox::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.coords()
    }
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
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

    pub fn is_valid(&self) -> bool {
        self.coords().iter().all(|c| c.is_finite())
            && self.x_min < self.x_max
            && self.y_min < self.y_max
    }

    pub fn fits(&self, width: f64, height: f64) -> bool {
        self.x_min >= 0.0 && self.y_min >= 0.0 && self.x_max <= width && self.y_max <= height
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(
            self.x_min + dx,
            self.y_min + dy,
            self.x_max + dx,
            self.y_max + dy,
        )
    }

    fn raster_cmp(&self, other: &BBox) -> Ordering {
        self.y_min
            .total_cmp(&other.y_min)
            .then(self.x_min.total_cmp(&other.x_min))
            .then(self.y_max.total_cmp(&other.y_max))
            .then(self.x_max.total_cmp(&other.x_max))
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let h = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = w * h;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDetection {
    pub query: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
    pub suggested_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseDetection {
    pub query: String,
    pub referent_name: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suggested_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObservation {
    pub image_width: f64,
    pub image_height: f64,
    pub class_detections: Vec<ClassDetection>,
    #[serde(default)]
    pub phrase_detections: Vec<PhraseDetection>,
}

impl SceneObservation {
    pub fn validate(&self) -> Result<(), SceneError> {
        let boxes = self
            .class_detections
            .iter()
            .map(|d| (d.bbox, d.score))
            .chain(self.phrase_detections.iter().map(|d| (d.bbox, d.score)));
        for (b, score) in boxes {
            if !b.is_valid() {
                return Err(SceneError::InvalidBox(b.coords()));
            }
            if !b.fits(self.image_width, self.image_height) {
                return Err(SceneError::OutOfImage {
                    bbox: b.coords(),
                    width: self.image_width,
                    height: self.image_height,
                });
            }
            if !(0.0..=1.0).contains(&score) {
                return Err(SceneError::BadScore(score));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectSet {
    pub objects: Vec<SceneObject>,
}

impl ObjectSet {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn names(&self) -> BTreeSet<&str> {
        self.objects.iter().map(|o| o.name.as_str()).collect()
    }

    /// `(name, type)` pairs as declared in a problem.
    pub fn declarations(&self) -> Vec<(String, String)> {
        self.objects
            .iter()
            .map(|o| (o.name.clone(), o.ty.clone()))
            .collect()
    }
}

/// Unnamed object awaiting [`assign_names`]; `name` carries a phrase-derived
/// name when one was attached.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingObject {
    pub ty: String,
    pub bbox: BBox,
    pub name: Option<String>,
}

pub fn merge_detections(
    obs: &SceneObservation,
    domain: &Domain,
    theta_match: f64,
) -> Result<ObjectSet, SceneError> {
    if obs.class_detections.is_empty() && obs.phrase_detections.is_empty() {
        return Err(SceneError::EmptyScene);
    }
    obs.validate()?;
    let mut pending: Vec<PendingObject> = Vec::new();
    for d in &obs.class_detections {
        let ty = d.suggested_type.to_lowercase();
        if !domain.types.contains(&ty) {
            return Err(SceneError::UnknownType(ty));
        }
        pending.push(PendingObject {
            ty,
            bbox: d.bbox,
            name: None,
        });
    }
    let n_class = pending.len();
    for p in &obs.phrase_detections {
        let name = p.referent_name.to_lowercase();
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in pending[..n_class].iter().enumerate() {
            let v = iou(&p.bbox, &c.bbox);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        // A class object already claimed by a different referent is not
        // renamed; the phrase then stands for a new object.
        let target = best.filter(|&(i, v)| {
            v >= theta_match && pending[i].name.as_ref().is_none_or(|n| *n == name)
        });
        match target {
            Some((i, _)) => pending[i].name = Some(name),
            None => {
                let ty = match &p.suggested_type {
                    Some(t) if domain.types.contains(&t.to_lowercase()) => t.to_lowercase(),
                    _ => ROOT_TYPE.to_string(),
                };
                pending.push(PendingObject {
                    ty,
                    bbox: p.bbox,
                    name: Some(name),
                });
            }
        }
    }
    assign_names(pending)
}

/// Orders objects by `(y_min, x_min)` and names them `<type><k>` with a
/// per-type 1-based counter. Phrase-derived names take precedence and are
/// never reused as generated names.
pub fn assign_names(mut objects: Vec<PendingObject>) -> Result<ObjectSet, SceneError> {
    objects.sort_by(|a, b| {
        a.bbox
            .raster_cmp(&b.bbox)
            .then_with(|| a.ty.cmp(&b.ty))
            .then_with(|| a.name.cmp(&b.name))
    });
    let mut taken = BTreeSet::new();
    for o in &objects {
        if let Some(n) = &o.name {
            if !crate::pddl::is_identifier(n) {
                return Err(SceneError::BadName(n.clone()));
            }
            if !taken.insert(n.clone()) {
                return Err(SceneError::DuplicateName(n.clone()));
            }
        }
    }
    let mut counters: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::with_capacity(objects.len());
    for o in objects {
        let k = counters.entry(o.ty.clone()).or_insert(0);
        *k += 1;
        let name = match o.name {
            Some(n) => n,
            None => {
                let mut candidate = format!("{}{}", o.ty, k);
                while taken.contains(&candidate) {
                    *k += 1;
                    candidate = format!("{}{}", o.ty, k);
                }
                taken.insert(candidate.clone());
                candidate
            }
        };
        out.push(SceneObject {
            name,
            ty: o.ty,
            bbox: o.bbox,
        });
    }
    Ok(ObjectSet { objects: out })
}
