//! Stochastic state-reduction simulator for laser-driven two- and
//! three-level atoms.

pub mod analysis;
pub mod dynamics;
pub mod ensemble;
pub mod graph;
pub mod mcwf;
pub mod models;
pub mod oracle;
pub mod record;
pub mod scheme;

pub use dynamics::{run_program, run_trajectory};
pub use graph::Channel;
pub use record::EmissionRecord;
pub use scheme::{build_scheme, ConfigurationKind, LevelScheme, RabiOnset, SchemeConfig};
