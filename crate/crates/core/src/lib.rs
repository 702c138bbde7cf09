pub mod bistable;
pub mod evolve;
pub mod kernels;
pub mod linalg;
pub mod quad;
pub mod twfront;
pub mod twoscale;
