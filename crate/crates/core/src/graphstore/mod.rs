//! Graphs, datasets, file I/O, synthetic generators and spectral probes.

pub mod generators;
mod graph;
mod homophily;
pub mod pgrf;
pub mod spectral;

pub use generators::{gen_csl, gen_er, gen_sbm, SbmParams};
pub use graph::{
    invert_permutation, random_partition, random_permutation, Dataset, Graph, Partitioning, Split,
};
pub use homophily::{class_adjusted_homophily, edge_homophily};
pub use pgrf::{parse_dataset, parse_dataset_str, write_dataset, write_dataset_string};
pub use spectral::{fiedler_vector, normalized_laplacian, Fiedler};
