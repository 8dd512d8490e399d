use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

/// Ground-truth part box plus the human-assigned template id for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartAnnotation {
    #[serde(rename = "image")]
    pub image_id: String,
    #[serde(rename = "part")]
    pub part_name: String,
    #[serde(rename = "template")]
    pub template_id: usize,
    pub bbox: BBox,
}

impl PartAnnotation {
    /// Problems with this annotation against an image of the given size and a
    /// template count `m`.
    pub fn check(&self, image_width: u32, image_height: u32, m: usize) -> Vec<String> {
        let mut out = Vec::new();
        let b = &self.bbox;
        if !(b.x1 < b.x2 && b.y1 < b.y2) {
            out.push(format!("{}: degenerate bbox {:?}", self.image_id, <[f64; 4]>::from(*b)));
        }
        if b.x1 < 0.0 || b.y1 < 0.0 || b.x2 > f64::from(image_width) || b.y2 > f64::from(image_height)
        {
            out.push(format!(
                "{}: bbox {:?} leaves the {}x{} image",
                self.image_id,
                <[f64; 4]>::from(*b),
                image_width,
                image_height
            ));
        }
        if self.template_id >= m {
            out.push(format!(
                "{}: template {} outside [0, {m})",
                self.image_id, self.template_id
            ));
        }
        out
    }
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<PartAnnotation>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_annotations(anns: &[PartAnnotation], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(anns)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let a = PartAnnotation {
            image_id: "img_0001".into(),
            part_name: "head".into(),
            template_id: 2,
            bbox: BBox::new(1.0, 2.0, 30.0, 40.5),
        };
        let v: serde_json::Value = serde_json::to_value(&a).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"image": "img_0001", "part": "head", "template": 2, "bbox": [1.0, 2.0, 30.0, 40.5]})
        );
        let back: PartAnnotation = serde_json::from_value(v).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn check_flags_each_invariant() {
        let a = PartAnnotation {
            image_id: "x".into(),
            part_name: "head".into(),
            template_id: 3,
            bbox: BBox::new(10.0, 10.0, 5.0, 120.0),
        };
        assert_eq!(a.check(100, 100, 3).len(), 3);
    }
}
