//! Configuration, snapshots, CSV tables and initial states.

pub mod config;
pub mod csv;
pub mod initial;
pub mod snapshot;

pub use config::{parse_config, AuditSettings, InitialCondition, MmsCase, RunConfig};
pub use initial::{build_initial, gaussian_blob, random_smooth};
pub use snapshot::{decode, encode, read_snapshot, write_snapshot};
