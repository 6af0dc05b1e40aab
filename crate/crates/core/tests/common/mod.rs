#![allow(dead_code)]

pub mod nests;
