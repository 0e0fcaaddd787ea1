pub mod augment;
pub mod condparse;
pub mod convert;
pub mod eval;
pub mod geom;
pub mod selfcheck;
pub mod textcodec;
