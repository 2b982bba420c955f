//! Configuration, field files and images.

pub mod config;
pub mod field_io;
pub mod render;

pub use config::{parse_config, parse_config_str, Algorithm, RunConfig};
pub use field_io::{read_field, write_field};
pub use render::render_png;
