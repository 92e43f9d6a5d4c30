//! Test functions, continuous Fourier transforms on grids, and the norms and
//! frequency decompositions built on them.

mod descriptor;
mod grid;
mod holo;
mod norms;

pub use descriptor::{dawson, Component, Descriptor, Shape};
pub use grid::{
    auto_grid, fourier_transform, fourier_transform_padded, fourier_transform_with_tol, inverse_fourier_transform,
    make_grid_function, sample_default, Convention, GridFunction, SpectrumGrid, DEFAULT_STEP, DEFAULT_TAIL,
    DEFAULT_TRANSFORM_TAIL, MAX_AUTO_POINTS,
};
pub(crate) use grid::spectrum_to_samples;
pub use holo::{hl_norm, HlNorm, HlOptions, HolomorphicDescriptor};
pub use norms::{
    hardy_split, hardy_split_function, shifted_tail_seminorm, sobolev_norm, sobolev_norm_with_tol, tail_moment,
    HardySplit, Order, DEFAULT_DIVERGENCE_TOL,
};
