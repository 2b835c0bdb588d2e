//! UCB1 bandits over fixed evidence sequences.

mod book;
mod catalog;
mod state;

pub use book::{
    read_pull_log, write_pull, ArmSnapshot, BanditBook, BanditSnapshot, InstanceSnapshot, PullRecord,
    SNAPSHOT_SCHEMA_VERSION,
};
pub use book::read_jsonl;
pub use catalog::{build_catalogs, Arm, ArmCatalog, ArmId, Part, Role};
pub use state::{
    check_rating, normalize_mean_rating, normalize_rating, ucb_bonus, ucb_select, ArmBound, ArmStats, BanditState,
    Reward, MAX_RATING, MIN_RATING,
};
