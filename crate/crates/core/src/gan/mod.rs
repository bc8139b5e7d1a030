//! The volumetric GAN: networks, losses, optimizer, and training loop.

mod adam;
mod loss;
mod nets;
mod train;

pub use adam::{adam_step, Adam, AdamConfig};
pub use loss::{
    content_loss, critic_loss, generator_loss, gram, style_loss, GeneratorTerms, LossConfig,
    Objective, CONTENT_LAYERS, STYLE_LAYERS,
};
pub use nets::{
    disc_channels, discriminator_features, discriminator_layers, discriminator_score,
    feature_shapes, generator_forward, generator_heads, generator_layers, pnet_forward,
    pnet_layers, Bound, LayerSpec, ParamSet, ScaleConfig, N_FEATURE_LAYERS,
};
pub use train::{
    header_path, read_header, CheckpointHeader, GanState, Hyper, IterMetrics, MetricsLog, Sample,
};
