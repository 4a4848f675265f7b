//! Conditional group normalization, the CG-Block, and decoder group schedules.

mod cgblock;
mod cgnorm;
mod schedule;

pub use cgblock::CgBlock;
pub use cgnorm::{label_hidden_width, CgNorm, CgNormOptions, NormKind};
pub use schedule::{validate_schedule, GroupSchedule, LayerSpec, ScheduleReport, Violation, ViolationKind};
