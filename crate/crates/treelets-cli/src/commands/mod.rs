pub mod eiv_sweep;
pub mod hier;
pub mod ident_demo;
pub mod treelet;
