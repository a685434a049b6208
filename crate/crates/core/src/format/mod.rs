pub mod gdap;
pub mod pgm;

pub use gdap::{read_gdap, write_gdap, Dtype, GdapTensor};
pub use pgm::{read_pgm, write_pgm, GrayImage};
