//! Closed triangle meshes represented by their dihedral-angle vectors.
//!
//! * [`mesh`]: topology validation, OBJ/CSV I/O and every per-edge,
//!   per-face and per-corner geometric quantity.
//! * [`rigidity`]: the dihedral infinitesimal rigidity system and its
//!   numeric rank test, plus finite-difference validators for its rows.
//! * [`morph`]: reconstruction of embeddings from interpolated dihedrals
//!   and edge lengths, and straight-line morphs in dihedral space.
//! * [`analysis`]: PCA over corpora of same-topology dihedral vectors.
//! * [`cli`]: the `dihedra` command-line front end.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose, and index
// loops over xyz read better than iterator chains.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod fmt;
pub mod linalg;
pub mod mesh;
pub mod morph;
pub mod par;
pub mod rigidity;
pub mod shapes;

pub use error::{Error, Result};
pub use mesh::{DihedralVector, TriMesh};
