pub mod dc;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod measure;
pub mod ssn;
pub mod problems;
pub mod l0;
pub mod sparsa;
pub mod cli;
