pub mod equivalence;
pub mod gradients;
pub mod oracles;
