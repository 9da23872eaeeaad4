pub mod fmat;
pub mod manifest;
pub mod synth;

pub use fmat::{read_fmat, write_fmat};
pub use manifest::{load_all, load_task, PoolManifest};
pub use synth::{generate_synthetic, SynthConfig};
