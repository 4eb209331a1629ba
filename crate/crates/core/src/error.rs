use thiserror::Error;

use crate::model::{LaneId, VehicleId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("lane {0} does not exist")]
    UnknownLane(LaneId),
    #[error("unknown vehicle {0}")]
    UnknownVehicle(VehicleId),
    #[error("invalid passing order: {0}")]
    InvalidOrder(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("invalid kinematics: {0}")]
    Kinematics(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("search: {0}")]
    Search(String),
    #[error(
        "instance has {count} valid passing orders, above the enumeration cap of {cap}; use MCTS instead"
    )]
    EnumerationCap { count: String, cap: u64 },
    #[error("tree snapshot was not retained; enable keep_tree in the search config")]
    NoSnapshot,
    #[error("simulation consistency: {0}")]
    Consistency(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
