pub mod fd;
pub mod oracles;
