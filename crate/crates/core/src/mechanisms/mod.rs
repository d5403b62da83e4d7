//! Pluggable multi-task mechanisms: linguistic hierarchy, gates, label
//! embedding, orthogonality penalty and adversarial task discrimination.

mod adversarial;
mod compose;
mod elh;
mod gate;
mod label_embed;
mod oc;

pub use adversarial::{adversarial_loss, Discriminator};
pub use compose::{compose_losses, LossBundle};
pub use elh::{elh_losses, AuxSelection, ElhHeads, ElhLosses};
pub use gate::{gate_merge, GateLevel, GateParams};
pub use label_embed::{label_embed_output, JointLabelSpace};
pub use oc::oc_penalty;
