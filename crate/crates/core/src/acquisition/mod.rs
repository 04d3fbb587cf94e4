//! Synthetic ground truth, forward simulation of the acquisition, k-space
//! undersampling, augmentation and sample I/O.

mod augment;
mod forward;
mod maps;
mod phantom;
mod undersample;

pub use augment::{apply_transform, augment, AugmentParams, Transform};
pub use forward::forward_simulate;
pub use maps::{load_sample, save_sample, ParametricMaps, Sample, Tsmi, TsmiKind, CHANNELS};
pub use phantom::{generate_phantom, BrainPhantomParams, EllipseRegion, PhantomSpec};
pub use undersample::{undersample, UndersamplingScheme, GOLDEN_ANGLE_DEG};
