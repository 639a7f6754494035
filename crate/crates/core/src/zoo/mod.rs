//! Model zoo: presets, layers, the four network families, and the bundle.

pub mod bundle;
pub mod layers;
pub mod networks;
pub mod preset;
#[cfg(test)]
mod tests;

pub use bundle::{build_bundle, BuildOptions, LoadOutcome, ModelBundle};
pub use layers::{BatchNorm, ConvBlock, DenseLayer, MountedParams};
pub use networks::{
    ActionGenerator, ClassifierHead, ContextExtractor, Discriminator, GeneratorOut, CODE_SCALE,
};
pub use preset::{ArchPreset, LayerSpec, PresetName, BN_EPS, BN_MOMENTUM};
