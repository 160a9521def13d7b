//! Coding schemes for distributed computing on edge clusters.
//!
//! * [`placement`] and [`shuffle`]: repetitive Map placement and the
//!   coded-multicast shuffle whose load is `(1/r)(1 − r/K)`.
//! * [`erasure`] and [`straggler`]: MDS-coded tasks that finish once any `k`
//!   of `n` workers return, with analytic and Monte Carlo latency.
//! * [`unified`]: MDS-coded Map tasks on a repetitive placement, trading Map
//!   latency against shuffle load.
//! * [`matmul`]: a coded matrix multiplication on a thread pool.
//! * [`analysis`] and [`harness`]: closed-form helpers and the CLI.

pub mod analysis;
mod bits;
pub mod erasure;
pub mod gf256;
pub mod harness;
pub mod matmul;
pub mod numeric;
pub mod placement;
pub mod shuffle;
pub mod straggler;
pub mod unified;

pub use bits::BitBuf;
