pub mod backends;
pub mod eval;
pub mod geometry;
pub mod parsing;
pub mod pipeline;
pub mod render;
pub mod tasks;
