pub mod driver;
pub mod error;
pub mod fem;
pub mod interface;
pub mod macroscale;
pub mod material;
pub mod mesh;
pub mod model;
pub mod oracle;
pub mod quad;
pub mod reloc;
