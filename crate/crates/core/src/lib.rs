//! Laparoscopic robot-learning environments: pivotized instrument kinematics,
//! a position-based soft-body core, five reinforcement-learning tasks,
//! software-rendered observations, RRT planning, trajectory recording and a
//! remote environment server.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod envcore;
pub mod envs;
pub mod envserver;
pub mod kinematics;
pub mod planner;
pub mod sensors;
pub mod softbody;
pub mod trajstore;
