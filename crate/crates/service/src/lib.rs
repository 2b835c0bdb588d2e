//! Survey service: hands out bandit-chosen evidence sequences, collects
//! ratings, credits rewards, and persists everything as append-only logs.

pub mod client;
pub mod error;
pub mod http;
pub mod service;
pub mod session;
pub mod sim;
pub mod store;

pub use client::{Embedded, HttpApi, SurveyApi};
pub use error::ServiceError;
pub use http::{router, serve, BackgroundServer};
pub use service::{
    load_data_dir, load_data_dir_with, Ack, Clock, LoadedState, ManualClock, Metadata, PayloadType, Progress, RewardNote,
    ServiceConfig, SessionStart, StepPayload, Submission, SurveyService, SystemClock, API_SCHEMA_VERSION,
};
pub use session::{Expect, SessionRecord, SessionStatus, StepType};
pub use sim::{run_sessions, run_simulation, SimPull, SimulationResult, SimulationTrace};
