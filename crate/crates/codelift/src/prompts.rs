//! The versioned prompt catalog. Prompts are compiled in so a given build
//! always sends identical stage prompts — part of the determinism story.
//! Bump [`CATALOG_VERSION`] whenever any prompt text changes.

pub const CATALOG_VERSION: &str = "1";

pub const ARCHITECT_SYSTEM: &str = include_str!("../prompts/architect_system.txt");
pub const DEVELOPER_SYSTEM: &str = include_str!("../prompts/developer_system.txt");
pub const FILEPLAN_SYSTEM: &str = include_str!("../prompts/fileplan_system.txt");
pub const POPULATION_SYSTEM: &str = include_str!("../prompts/population_system.txt");
