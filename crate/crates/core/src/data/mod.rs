//! Data ingestion, alignment and seeded synthetic generators.

mod images;
mod series;
mod synth;

pub use images::{
    apply_channel_to_dataset, gen_two_class_images, load_images_csv, write_images_csv,
    ImageDataset, Pixels,
};
pub use series::{align, load_csv, split, AlignPolicy, AlignedSeries, Split, TimeKind, TimeSeries};
pub use synth::{gen_diversity_series, gen_fir_series, FirSeries, InputProcess};
