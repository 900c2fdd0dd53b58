pub mod artifacts;
pub mod clock;
pub mod cloud;
pub mod db;
pub mod ids;
pub mod image;
pub mod mock;
pub mod report;
pub mod synth;
pub mod vault;
