//! Solver core for school bus routing under an open opt-out offer.
//!
//! A school offers every student a flat incentive to give up their bus seat.
//! This crate fits per-student ridership, samples who accepts the offer,
//! re-plans stops and chance-constrained routes for the students who remain,
//! and estimates the expected savings over a grid of incentive values.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration,
//! the parallel sweep driver and the command line live in the `sbrp` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

mod math;

pub mod allocation;
pub mod instance;
pub mod optout;
pub mod overbooking;
pub mod ridership;
pub mod routing;
pub mod simulation;

pub use allocation::{solve_allocation, Allocation, AllocationError, SolveMode};
pub use instance::{
    build_candidate_sets, generate_synthetic, walk_distance, CandidateSets, Instance,
    InstanceError, Point, Site, SiteKind, Stop, Student, SyntheticParams,
};
pub use optout::{OptOutError, OptOutModel};
pub use overbooking::{ChanceParams, LoadMoments, OverbookingError};
pub use ridership::{fit_ridership, DistanceTransform, RidershipError, RidershipModel};
pub use routing::{
    solve_routing, Route, RoutePlan, RoutingError, RoutingProblem, StopDemand, TravelModel,
};
pub use simulation::{CostParams, PlanningParams, SavingsCurve, Scenario, SimulationError};
