pub mod codec;
pub mod geometry;
pub mod image;
pub mod kv;
pub mod pipeline;
pub mod pool;
pub mod rate;
pub mod session;
pub mod sim;
pub mod vision;
pub mod wire;
