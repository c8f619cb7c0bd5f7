//! The three parametric components: restorer, localizer and discriminator.

mod checkpoint;
mod convert;
mod models;
mod params;
mod unet;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, Component, NetConfig, Provenance,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use convert::{
    image_to_tensor, images_to_tensor, masks_to_tensor, tensor_to_images, tensor_to_prob_maps,
};
pub use models::{
    Discriminator, DiscriminatorConfig, LocalizationConfig, LocalizationNet, Network,
    RestorationConfig, RestorationNet, PROB_FLOOR,
};
pub use params::{clamp_straight_through, NamedTensor, ParamStore};
