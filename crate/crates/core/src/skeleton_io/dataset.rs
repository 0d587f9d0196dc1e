use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::split::{split_recording, SplitConfig};
use super::types::{Recording, SkeletonSequence};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Gallery,
    Probe,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityEntry {
    /// Class label in `1..=C`.
    pub label: usize,
    pub name: String,
    pub recordings: usize,
}

/// Protocol tags for one recording.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub id: String,
    pub rec: u32,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub num_joints: usize,
    pub sequence_length: usize,
    /// JSON-Lines file of recordings, relative to the manifest.
    pub recordings_file: String,
    pub identities: Vec<IdentityEntry>,
    pub splits: Vec<SplitEntry>,
    /// Joint used to center every frame; `None` keeps raw coordinates.
    #[serde(default)]
    pub root_joint: Option<usize>,
}

/// Recordings plus the manifest that labels and splits them.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub recordings: Vec<Recording>,
}

impl Dataset {
    pub fn num_joints(&self) -> usize {
        self.manifest.num_joints
    }

    pub fn num_identities(&self) -> usize {
        self.manifest.identities.len()
    }

    pub fn label_of(&self, identity: &str) -> Option<usize> {
        self.manifest
            .identities
            .iter()
            .find(|e| e.name == identity)
            .map(|e| e.label)
    }

    pub fn split_of(&self, identity: &str, rec: u32) -> Option<&SplitEntry> {
        self.manifest
            .splits
            .iter()
            .find(|s| s.id == identity && s.rec == rec)
    }

    /// Recording indices tagged with `split`, in manifest order.
    pub fn recordings_in(&self, split: Split) -> Vec<usize> {
        self.recordings
            .iter()
            .enumerate()
            .filter(|(_, r)| self.split_of(&r.identity, r.rec).map(|s| s.split) == Some(split))
            .map(|(i, _)| i)
            .collect()
    }

    /// Applies the manifest's root-joint centering, if any.
    pub fn preprocessed(&self) -> Dataset {
        match self.manifest.root_joint {
            None => self.clone(),
            Some(root) => Dataset {
                manifest: self.manifest.clone(),
                recordings: self
                    .recordings
                    .iter()
                    .map(|r| Recording {
                        identity: r.identity.clone(),
                        rec: r.rec,
                        frames: r.frames.iter().map(|f| f.centered_at(root)).collect(),
                    })
                    .collect(),
            },
        }
    }

    /// Windows of the selected recordings, labelled, in recording order.
    pub fn sequences(&self, recordings: &[usize], split: &SplitConfig) -> Result<Vec<SkeletonSequence>> {
        let mut out = Vec::new();
        for &idx in recordings {
            let rec = &self.recordings[idx];
            let label = self.label_of(&rec.identity);
            for mut s in split_recording(rec, split)? {
                s.label = label;
                s.recording = idx;
                out.push(s);
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        for (i, e) in m.identities.iter().enumerate() {
            if e.label != i + 1 {
                return Err(Error::Config(format!(
                    "identity labels must be contiguous from 1; entry {i} has label {}",
                    e.label
                )));
            }
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for r in &self.recordings {
            if self.label_of(&r.identity).is_none() {
                return Err(Error::Config(format!("recording {} has an unknown identity", r.name())));
            }
            *counts.entry(r.identity.as_str()).or_default() += 1;
            for f in &r.frames {
                f.validate()?;
                if f.num_joints() != m.num_joints {
                    return Err(Error::Config(format!(
                        "recording {} has {} joints, manifest says {}",
                        r.name(),
                        f.num_joints(),
                        m.num_joints
                    )));
                }
            }
        }
        for e in &m.identities {
            let n = counts.get(e.name.as_str()).copied().unwrap_or(0);
            if n != e.recordings {
                return Err(Error::Config(format!(
                    "identity {} lists {} recordings, found {n}",
                    e.name, e.recordings
                )));
            }
        }
        for s in &m.splits {
            if !self.recordings.iter().any(|r| r.identity == s.id && r.rec == s.rec) {
                return Err(Error::Config(format!("split entry references missing recording {}#{}", s.id, s.rec)));
            }
        }
        if let Some(root) = m.root_joint {
            if root >= m.num_joints {
                return Err(Error::Config(format!("root joint {root} out of range")));
            }
        }
        Ok(())
    }

    /// Builds a manifest for `recordings`: identities ordered by first
    /// appearance, the last `test_per_identity` recordings of each identity
    /// tagged test/probe and the rest train/gallery.
    pub fn from_recordings(
        recordings: Vec<Recording>,
        num_joints: usize,
        sequence_length: usize,
        test_per_identity: usize,
    ) -> Result<Dataset> {
        let mut order: Vec<String> = Vec::new();
        let mut per_id: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, r) in recordings.iter().enumerate() {
            let pos = match order.iter().position(|n| *n == r.identity) {
                Some(p) => p,
                None => {
                    order.push(r.identity.clone());
                    order.len() - 1
                }
            };
            per_id.entry(pos).or_default().push(i);
        }
        let identities = order
            .iter()
            .enumerate()
            .map(|(i, name)| IdentityEntry {
                label: i + 1,
                name: name.clone(),
                recordings: per_id[&i].len(),
            })
            .collect();
        let mut splits = Vec::new();
        for (pos, recs) in &per_id {
            let n = recs.len();
            for (k, &ri) in recs.iter().enumerate() {
                let test = k + test_per_identity >= n;
                splits.push(SplitEntry {
                    id: order[*pos].clone(),
                    rec: recordings[ri].rec,
                    split: if test { Split::Test } else { Split::Train },
                    role: Some(if test { Role::Probe } else { Role::Gallery }),
                    condition: None,
                });
            }
        }
        let ds = Dataset {
            manifest: DatasetManifest {
                num_joints,
                sequence_length,
                recordings_file: "recordings.jsonl".into(),
                identities,
                splits,
                root_joint: None,
            },
            recordings,
        };
        ds.validate()?;
        Ok(ds)
    }
}

fn recordings_path(manifest_path: &Path, manifest: &DatasetManifest) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.recordings_file)
}

/// Reads a manifest and the recordings file it references.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    if !manifest_path.exists() {
        return Err(Error::MissingFile(manifest_path.to_path_buf()));
    }
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.display().to_string(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let rec_path = recordings_path(manifest_path, &manifest);
    if !rec_path.exists() {
        return Err(Error::MissingFile(rec_path));
    }
    let file = fs::File::open(&rec_path).map_err(|e| Error::io(&rec_path, e))?;
    let mut recordings = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&rec_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Recording = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: rec_path.display().to_string(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        recordings.push(rec);
    }
    let ds = Dataset {
        manifest,
        recordings,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes the manifest to `manifest_path` and the recordings beside it.
pub fn save_dataset(dataset: &Dataset, manifest_path: &Path) -> Result<()> {
    if let Some(dir) = manifest_path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let text = serde_json::to_string_pretty(&dataset.manifest)?;
    fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))?;
    let rec_path = recordings_path(manifest_path, &dataset.manifest);
    let file = fs::File::create(&rec_path).map_err(|e| Error::io(&rec_path, e))?;
    let mut w = BufWriter::new(file);
    for r in &dataset.recordings {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(&rec_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&rec_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton_io::SkeletonFrame;

    fn tiny() -> Dataset {
        let recs = (0..4)
            .map(|i| Recording {
                identity: format!("p{}", i / 2),
                rec: (i % 2) as u32,
                frames: (0..3)
                    .map(|t| {
                        SkeletonFrame::new(vec![[0.1 * t as f64, 1.0 / 3.0, -2.5e-7], [i as f64, 0.0, 1e10]])
                            .unwrap()
                    })
                    .collect(),
            })
            .collect();
        Dataset::from_recordings(recs, 2, 6, 1).unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let ds = tiny();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn missing_recordings_file_named() {
        let ds = tiny();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_dataset(&ds, &path).unwrap();
        fs::remove_file(dir.path().join("recordings.jsonl")).unwrap();
        match load_dataset(&path).unwrap_err() {
            Error::MissingFile(p) => assert!(p.ends_with("recordings.jsonl")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let ds = tiny();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_dataset(&ds, &path).unwrap();
        let rp = dir.path().join("recordings.jsonl");
        let mut text = fs::read_to_string(&rp).unwrap();
        text = text.replacen('\n', "\n{not json\n", 1);
        fs::write(&rp, text).unwrap();
        match load_dataset(&path).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn empty_dataset_is_valid() {
        let ds = Dataset::from_recordings(Vec::new(), 5, 6, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        assert!(back.recordings.is_empty());
        assert_eq!(back.num_identities(), 0);
    }

    #[test]
    fn split_tags_last_recording_as_test() {
        let ds = tiny();
        assert_eq!(ds.recordings_in(Split::Train), vec![0, 2]);
        assert_eq!(ds.recordings_in(Split::Test), vec![1, 3]);
        assert_eq!(ds.label_of("p1"), Some(2));
    }

    #[test]
    fn non_contiguous_labels_rejected() {
        let mut ds = tiny();
        ds.manifest.identities[1].label = 5;
        assert!(ds.validate().is_err());
    }
}
