pub mod bt;
pub mod costmap;
pub mod geometry;
pub mod grid;
pub mod lifecycle;
pub mod control;
pub mod planning;
pub mod localization;
pub mod recovery;
pub mod sensor;
pub mod sim;
pub mod app;
