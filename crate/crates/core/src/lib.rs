pub mod evaluation;
pub mod forecast;
pub mod hmd;
pub mod models;
pub mod report;
