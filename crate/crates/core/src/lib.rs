pub mod executor;
pub mod knowledge;
pub mod monitor;
pub mod recipe;
pub mod value;
pub mod sim;
