//! Function dictionaries, trajectories and the data matrices built from them.

mod data;
mod function;
mod library;
mod trajectory;

pub use data::{DataMatrices, DataMode, RankStatus, RichnessReport};
pub use function::BasisFunction;
pub use library::{monomials_up_to_degree, BasisLibrary};
pub use trajectory::Trajectory;
