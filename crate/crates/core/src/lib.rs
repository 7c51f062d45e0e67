pub mod cubic;
pub mod double_base;
pub mod engine;
pub mod interval;
pub mod oracle;
pub mod relations;
