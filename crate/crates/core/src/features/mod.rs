//! Gait features from trained models and the identity recognizer built on them.

mod encoding;
mod recognizer;

pub use encoding::{
    extract_encodings, fuse_all, fuse_encodings, read_encodings, write_encodings, FeatureSource, GaitEncoding,
    Variant,
};
pub use recognizer::{predict_sequence, train_recognizer, RecognitionNet, RecognizerConfig, Strategy};
