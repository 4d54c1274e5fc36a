//! Operator-valued non-commutative probability over `M_d(C)`: partitions and
//! their nesting orders, moment-cumulant transforms for four independence
//! species, non-commutative generating series, monotone convolution
//! semigroups and triangular-array limit theorems.

pub mod cumulants;
pub mod dist;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod io;
pub mod limits;
pub mod matalg;
pub mod ncseries;
pub mod partitions;
pub mod random;
pub mod tensor;

pub use cumulants::{CumulantTensor, Species};
pub use dist::{MomentTensor, RealizedCP, RealizedDistribution, State};
pub use error::{Error, Result};
pub use flow::{FlowState, Generator};
pub use io::{Eta, Model};
pub use limits::{ConvergenceReport, TriangularArray};
pub use matalg::{CMatrix, HalfPlanePoint, C64};
pub use ncseries::NCSeries;
pub use partitions::{NestingForest, Partition, PartitionClass};
pub use tensor::Multilinear;
