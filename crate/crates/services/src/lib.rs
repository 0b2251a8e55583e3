//! Services of the authoring platform: configuration authoring, condition
//! evaluation, assembly sequencing, robot adapters, previews and the headless
//! scene client, plus a deterministic runtime that wires them to a bus.

pub mod assembly;
pub mod authoring;
pub mod engine;
pub mod fake;
pub mod ingest;
pub mod preview;
pub mod process;
pub mod replica;
pub mod robot;
pub mod runtime;
pub mod scenario;
pub mod scene;
pub mod service;
pub mod supervisor;
pub mod store;
pub mod tracker;
