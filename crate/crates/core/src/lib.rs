pub mod controllers;
pub mod harness;
pub mod nn;
pub mod replay;
pub mod sim;
pub mod switch;
