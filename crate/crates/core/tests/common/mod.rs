#![allow(dead_code)]

pub mod conjugate;
pub mod flow_checks;
