//! File formats, the scene bundle layout and the synthetic scene generator.
//! Byte-level layouts are documented in `docs/formats.md`.

mod bundle;
mod json;
mod pfm;
mod ply;
mod png;
mod synth;

pub use bundle::{SceneBundle, ViewSet};
pub use json::{
    read_camera, read_cameras, read_config, read_graph, read_json, write_camera, write_cameras, write_graph,
    write_json, CameraJson, GraphJson,
};
pub use pfm::{read_depth, read_point_map, write_depth, write_point_map, Pfm};
pub use ply::{parse_ply, ply_bytes, read_ply, write_ply, PlyFormat};
pub use png::{quantize, quantized, read_png, write_png};
pub use synth::{synth, SynthSpec};
