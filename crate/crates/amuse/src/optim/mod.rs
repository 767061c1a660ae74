//! The optimizer family: SGD, AdamW, Muon, the schedule-free wrapper,
//! SF-Muon, and AMUSE, plus the averaging-identity oracles.

mod config;
mod optimizer;
pub mod oracles;
pub mod schedule;

pub use config::{AuxKind, AveragingMode, LrSchedule, OptimizerConfig, OptimizerKind};
pub use optimizer::{
    clip_gradients, grads_to_slots, interpolate_slots, model_to_slots, slot_groups,
    slots_to_model, EvalSwapGuard, OptState, Optimizer, ParamGroup, SlotState, StepInfo,
    UpdateRule,
};
