//! FISP fingerprint simulation and dictionary construction.

mod dictionary;
mod epg;
mod schedule;

pub use dictionary::{build_dictionary, Dictionary, ParameterGrid};
pub use epg::{rf_rotation, simulate_fingerprint, Fingerprint, RF_PHASE_DEG};
pub use schedule::{SequenceSchedule, TissueParams};

pub(crate) use dictionary::norm;
pub(crate) use epg::simulate_unit;
