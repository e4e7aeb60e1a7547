pub mod analysis;
pub mod design;
pub mod error;
pub mod linsolve;
pub mod model;
pub mod simulate;
pub mod sweep;
pub mod two_time;
