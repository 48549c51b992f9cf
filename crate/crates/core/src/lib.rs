pub mod allocation;
pub mod cli;
pub mod controller;
pub mod engine;
pub mod geom;
pub mod msg;
pub mod planner;
pub mod radio;
pub mod scenario;
pub mod stigmergy;
pub mod world;
