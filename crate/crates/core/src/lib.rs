//! Safety design for cyber-physical systems running resilient controller
//! architectures.
//!
//! A control-affine polynomial system with a safety function `h` of relative
//! degree `r` is attacked once per cycle. Depending on the architecture, the
//! controller is compromised, then restored, restarted, switched or replaced
//! by a safety controller. This crate certifies rates for the `r`-th
//! derivative of `h` in every status, propagates them through each cycle,
//! searches level sets, timings and a recovery policy that bring the state
//! back to `A = ⋂_i {L_f^i h ≥ c_i}`, and simulates worst-case attack cycles.

pub mod acc;
pub mod certify;
pub mod design;
pub mod exec;
pub mod hybrid;
pub mod polynomial;
pub(crate) mod serde_real;
pub mod sim;
pub mod system;
pub mod timing;

pub use exec::Exec;
