//! Static word embeddings: storage, training, and neighbour search.

mod index;
mod sgns;
mod table;

pub use index::{Backend, ForestParams, Neighbor, NeighborIndex};
pub use sgns::{train_sgns, SgnsParams};
pub use table::{cosine, EmbeddingTable};
