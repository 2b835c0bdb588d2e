//! Simulated raters for exercising the bandit loop without people.

mod profile;
mod sim;

pub use profile::{PopulationSpec, RaterGroup, RaterProfile};
pub use sim::{session_reward, simulate_bandit, true_means, Trace, TraceRow, PATIENTS_PER_SESSION};
