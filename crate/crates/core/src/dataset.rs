//! Annotated image sets in the YOLO text-label layout.
//!
//! ```text
//! <root>/classes.txt          one class name per line; line n is index n
//! <root>/images/<stem>.jpg
//! <root>/labels/<stem>.txt    `class_index x_center y_center width height`
//! ```
//!
//! Without `images/` the images sit in `<root>` itself; without `labels/` the
//! label files sit next to the images. An image with no label file has no
//! objects.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{BBox, ClassLabel, FrameId};
use crate::ingestion::list_images;
use crate::metrics::GroundTruthBox;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("dataset {path}: {message}")]
    Layout { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub fn load_class_names(path: &Path) -> Result<Vec<ClassLabel>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let name = line.trim();
        if name.is_empty() {
            continue;
        }
        out.push(ClassLabel::new(name).map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    if out.is_empty() {
        return Err(DatasetError::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "no class names".into(),
        });
    }
    Ok(out)
}

pub fn parse_labels(
    text: &str,
    path: &Path,
    names: &[ClassLabel],
    frame_id: &FrameId,
) -> Result<Vec<GroundTruthBox>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let err = |message: String| DatasetError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        }
        let index: usize = fields[0]
            .parse()
            .map_err(|_| err(format!("bad class index {:?}", fields[0])))?;
        let label = names
            .get(index)
            .ok_or_else(|| err(format!("class index {index} not in class-names file ({} names)", names.len())))?;
        let mut v = [0.0f64; 4];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse().map_err(|_| err(format!("bad number {f:?}")))?;
        }
        let bbox = BBox::from_center(v[0], v[1], v[2], v[3]).map_err(|e| err(e.to_string()))?;
        out.push(GroundTruthBox {
            bbox,
            label: label.clone(),
            frame_id: frame_id.clone(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub frame_id: FrameId,
    pub image: PathBuf,
    pub truths: Vec<GroundTruthBox>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub class_names: Vec<ClassLabel>,
    /// In lexicographic image order.
    pub samples: Vec<Sample>,
}

impl Dataset {
    /// Frame ids are the image file stems.
    pub fn open(root: &Path, class_names: Option<&Path>) -> Result<Self, DatasetError> {
        let layout = |message: String| DatasetError::Layout {
            path: root.to_path_buf(),
            message,
        };
        if !root.is_dir() {
            return Err(layout("not a directory".into()));
        }
        let names_path = class_names
            .map(Path::to_path_buf)
            .unwrap_or_else(|| root.join("classes.txt"));
        let names = load_class_names(&names_path)?;
        let images_dir = if root.join("images").is_dir() {
            root.join("images")
        } else {
            root.to_path_buf()
        };
        let labels_dir = if root.join("labels").is_dir() {
            root.join("labels")
        } else {
            images_dir.clone()
        };
        let images = list_images(&images_dir).map_err(|e| layout(e.to_string()))?;
        if images.is_empty() {
            return Err(layout(format!("no images in {}", images_dir.display())));
        }
        let mut seen: BTreeMap<FrameId, PathBuf> = BTreeMap::new();
        let mut samples = Vec::with_capacity(images.len());
        for image in images {
            let stem = image
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            let frame_id = FrameId::new(stem.clone()).map_err(|e| layout(format!("{}: {e}", image.display())))?;
            if let Some(prev) = seen.insert(frame_id.clone(), image.clone()) {
                return Err(layout(format!(
                    "{} and {} share the stem {stem}",
                    prev.display(),
                    image.display()
                )));
            }
            let label_path = labels_dir.join(format!("{stem}.txt"));
            let truths = match std::fs::read_to_string(&label_path) {
                Ok(text) => parse_labels(&text, &label_path, &names, &frame_id)?,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
                Err(source) => {
                    return Err(DatasetError::Io {
                        path: label_path,
                        source,
                    })
                }
            };
            samples.push(Sample {
                frame_id,
                image,
                truths,
            });
        }
        Ok(Self {
            root: root.to_path_buf(),
            class_names: names,
            samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<ClassLabel> {
        ["boar", "elephant", "monkey"]
            .iter()
            .map(|n| ClassLabel::new(n).unwrap())
            .collect()
    }

    #[test]
    fn parses_center_format() {
        let f = FrameId::new("img1").unwrap();
        let t = parse_labels("1 0.5 0.5 0.2 0.4\n\n0 0.1 0.1 0.2 0.2\n", Path::new("l.txt"), &names(), &f).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].label.as_str(), "elephant");
        assert!((t[0].bbox.x_min() - 0.4).abs() < 1e-12);
        assert!((t[0].bbox.y_max() - 0.7).abs() < 1e-12);
        // clamped at the frame edge
        assert_eq!(t[1].bbox.x_min(), 0.0);
    }

    #[test]
    fn errors_carry_file_and_line() {
        let f = FrameId::new("img1").unwrap();
        let cases = [
            ("0 0.5 0.5 0.2\n", "expected 5 fields"),
            ("0 0.5 0.5 0.2 0.2\n7 0.5 0.5 0.1 0.1\n", "class index 7"),
            ("x 0.5 0.5 0.2 0.2\n", "bad class index"),
            ("0 0.5 0.5 zero 0.2\n", "bad number"),
            ("0 0.5 0.5 0 0.2\n", "zero"),
        ];
        for (text, needle) in cases {
            let e = parse_labels(text, Path::new("labels/img1.txt"), &names(), &f).unwrap_err().to_string();
            assert!(e.starts_with("labels/img1.txt:"), "{e}");
            assert!(e.to_lowercase().contains(needle), "{e} lacks {needle}");
        }
        let e = parse_labels("0 0.5 0.5 0.2 0.2\n7 0.5 0.5 0.1 0.1\n", Path::new("a.txt"), &names(), &f).unwrap_err();
        assert!(matches!(e, DatasetError::Parse { line: 2, .. }));
    }

    #[test]
    fn opens_split_layout() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        std::fs::create_dir_all(root.join("images")).unwrap();
        std::fs::create_dir_all(root.join("labels")).unwrap();
        std::fs::write(root.join("classes.txt"), "boar\nelephant\nmonkey\n").unwrap();
        for stem in ["b", "a", "c"] {
            std::fs::write(root.join(format!("images/{stem}.jpg")), b"x").unwrap();
        }
        std::fs::write(root.join("labels/a.txt"), "2 0.5 0.5 0.5 0.5\n").unwrap();
        std::fs::write(root.join("labels/b.txt"), "").unwrap();
        let ds = Dataset::open(root, None).unwrap();
        let ids: Vec<&str> = ds.samples.iter().map(|s| s.frame_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        assert_eq!(ds.samples[0].truths.len(), 1);
        assert!(ds.samples[1].truths.is_empty());
        assert!(ds.samples[2].truths.is_empty());
    }
}
