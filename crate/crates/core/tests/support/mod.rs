#![allow(dead_code)]

pub mod cases;
pub mod frames;
pub mod upstream;
pub mod wire;
