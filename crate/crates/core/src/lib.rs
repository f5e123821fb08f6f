//! Striation signal extraction from topographic scans of cut wire surfaces.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod despike;
pub mod detrend;
pub mod dewarp;
pub mod impute;
pub mod label;
pub mod loess;
pub mod matrix_text;
pub mod orient;
pub mod params;
pub mod pipeline;
pub mod signal;
pub mod stats;
pub mod surface;
pub mod synth;
pub mod x3p;

pub use label::{pair_category, parse_label, Edge, LabelError, Location, PairCategory, ScanLabel};
pub use params::{PipelineParams, SignalStatistic};
pub use surface::{SurfaceError, SurfaceMatrix};
