//! Binary interchange formats. All are little-endian and carry a magic tag
//! and a version.

mod binio;
pub mod dump;
pub mod index_file;
pub mod tensor;
pub mod vectors;

pub use dump::{DumpRecord, EmbeddingDump};
pub use tensor::{Tensor, TensorContainer};
pub use vectors::VectorSet;
