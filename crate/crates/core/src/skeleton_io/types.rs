use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinate axis of the 3D skeleton space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dim {
    X,
    Y,
    Z,
}

impl Dim {
    pub const ALL: [Dim; 3] = [Dim::X, Dim::Y, Dim::Z];

    pub fn index(self) -> usize {
        match self {
            Dim::X => 0,
            Dim::Y => 1,
            Dim::Z => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dim::X => "X",
            Dim::Y => "Y",
            Dim::Z => "Z",
        }
    }
}

impl std::fmt::Display for Dim {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// 3D coordinates of every joint at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SkeletonFrame {
    pub joints: Vec<[f64; 3]>,
}

impl SkeletonFrame {
    pub fn new(joints: Vec<[f64; 3]>) -> Result<Self> {
        let frame = Self { joints };
        frame.validate()?;
        Ok(frame)
    }

    pub fn zeros(num_joints: usize) -> Self {
        Self {
            joints: vec![[0.0; 3]; num_joints],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a skeleton needs at least 2 joints, got {}",
                self.joints.len()
            )));
        }
        if self.joints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("skeleton frame"));
        }
        Ok(())
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn coords(&self, dim: Dim) -> Vec<f64> {
        self.joints.iter().map(|j| j[dim.index()]).collect()
    }

    /// Translates the frame so that joint `root` sits at the origin.
    pub fn centered_at(&self, root: usize) -> Self {
        let r = self.joints[root];
        Self {
            joints: self
                .joints
                .iter()
                .map(|j| [j[0] - r[0], j[1] - r[1], j[2] - r[2]])
                .collect(),
        }
    }
}

/// One raw skeleton recording of a single person.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    #[serde(rename = "id")]
    pub identity: String,
    pub rec: u32,
    pub frames: Vec<SkeletonFrame>,
}

impl Recording {
    pub fn name(&self) -> String {
        format!("{}#{}", self.identity, self.rec)
    }
}

/// A fixed-length window cut from a recording.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSequence {
    pub frames: Vec<SkeletonFrame>,
    pub identity: String,
    /// Class label in `1..=C`, when known.
    pub label: Option<usize>,
    pub rec: u32,
    /// Position among the windows of the source recording; consecutive
    /// values are temporally adjacent windows.
    pub seq_index: usize,
    /// Index of the source recording within its dataset.
    pub recording: usize,
    /// Offset of the first frame within the source recording.
    pub start: usize,
}

impl SkeletonSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn num_joints(&self) -> usize {
        self.frames.first().map_or(0, SkeletonFrame::num_joints)
    }

    pub fn slice(&self, dim: Dim) -> DimensionSlice {
        DimensionSlice::from_frames(&self.frames, dim)
    }
}

/// The `f × J` matrix of one coordinate of a skeleton sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct DimensionSlice {
    pub dim: Dim,
    pub values: Vec<Vec<f64>>,
}

impl DimensionSlice {
    pub fn from_frames(frames: &[SkeletonFrame], dim: Dim) -> Self {
        Self {
            dim,
            values: frames.iter().map(|fr| fr.coords(dim)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_joints(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}
