use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmisError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub channels: usize,
    pub groups: usize,
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(D={}, G={})", self.channels, self.groups)
    }
}

/// Per-layer `(channels, groups)` of a decoder, head first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSchedule {
    pub layers: Vec<LayerSpec>,
    pub classes: usize,
}

impl GroupSchedule {
    /// Expand the table convention: one channel entry applies to every layer;
    /// with several entries, entry `i` applies to layer `i` and the last entry
    /// covers all remaining layers.
    pub fn from_lists(channels: &[usize], groups: &[usize], classes: usize) -> Result<Self> {
        if channels.is_empty() || groups.is_empty() {
            return Err(SmisError::config("schedule needs at least one channel and one group entry"));
        }
        if channels.len() > groups.len() {
            return Err(SmisError::config(format!(
                "{} channel entries for {} layers",
                channels.len(),
                groups.len()
            )));
        }
        let last = *channels.last().unwrap_or(&0);
        let layers = groups
            .iter()
            .enumerate()
            .map(|(i, &g)| LayerSpec {
                channels: channels.get(i).copied().unwrap_or(last),
                groups: g,
            })
            .collect();
        Ok(GroupSchedule { layers, classes })
    }

    pub fn groups(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.groups).collect()
    }

    pub fn channels(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.channels).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    Empty,
    ZeroGroups,
    NonIncreasingGroups,
    Divisibility,
    FinalGroupNotOne,
    /// `G^i` is not a multiple of `G^{i+1}`; blocks still merge by adjacency
    /// but unevenly. Reported as a note, not a violation.
    NonNested,
}

impl ViolationKind {
    pub fn label(self) -> &'static str {
        match self {
            ViolationKind::Empty => "empty schedule",
            ViolationKind::ZeroGroups => "zero groups",
            ViolationKind::NonIncreasingGroups => "non-increasing groups",
            ViolationKind::Divisibility => "divisibility",
            ViolationKind::FinalGroupNotOne => "final group not 1",
            ViolationKind::NonNested => "non-nested transition",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub layer: usize,
    pub kind: ViolationKind,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScheduleReport {
    pub violations: Vec<Violation>,
    pub notes: Vec<Violation>,
}

impl ScheduleReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    pub fn into_result(self) -> Result<Vec<Violation>> {
        if self.is_ok() {
            Ok(self.notes)
        } else {
            let msg: Vec<String> = self.violations.iter().map(|v| v.message.clone()).collect();
            Err(SmisError::config(format!("invalid group schedule: {}", msg.join("; "))))
        }
    }
}

/// Every problem with a decoder schedule (layer indices are 0-based).
pub fn validate_schedule(s: &GroupSchedule) -> ScheduleReport {
    let mut rep = ScheduleReport::default();
    let mut push = |layer: usize, kind: ViolationKind, message: String| {
        let v = Violation { layer, kind, message };
        if kind == ViolationKind::NonNested {
            rep.notes.push(v);
        } else {
            rep.violations.push(v);
        }
    };
    if s.layers.is_empty() {
        push(0, ViolationKind::Empty, "schedule has no layers".into());
        return rep;
    }
    for (i, l) in s.layers.iter().enumerate() {
        if l.groups == 0 {
            push(i, ViolationKind::ZeroGroups, format!("layer {i}: zero groups"));
            continue;
        }
        if l.channels % l.groups != 0 {
            push(
                i,
                ViolationKind::Divisibility,
                format!("layer {i}: {} channels not divisible by {} groups", l.channels, l.groups),
            );
        }
        if i > 0 {
            let prev = s.layers[i - 1].groups;
            if prev == 0 {
                continue;
            }
            if l.groups > prev {
                push(
                    i,
                    ViolationKind::NonIncreasingGroups,
                    format!("layer {i}: groups increase from {prev} to {}", l.groups),
                );
            } else if prev % l.groups != 0 {
                push(
                    i,
                    ViolationKind::NonNested,
                    format!("layer {i}: {prev} groups do not split evenly into {}", l.groups),
                );
            }
        }
    }
    let last = s.layers.len() - 1;
    if s.layers[last].groups != 1 {
        push(
            last,
            ViolationKind::FinalGroupNotOne,
            format!("final layer has {} groups", s.layers[last].groups),
        );
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_fashion_schedule_is_valid() {
        let s = GroupSchedule::from_lists(&[160], &[8, 8, 4, 4, 2, 2, 1], 8).unwrap();
        let rep = validate_schedule(&s);
        assert!(rep.is_ok() && rep.notes.is_empty(), "{rep:?}");
    }

    #[test]
    fn increasing_groups_flagged_at_layer_one() {
        let s = GroupSchedule::from_lists(&[160], &[4, 8, 4, 2, 1], 8).unwrap();
        let rep = validate_schedule(&s);
        let v = &rep.violations[0];
        assert_eq!((v.layer, v.kind), (1, ViolationKind::NonIncreasingGroups));
        assert_eq!(v.kind.label(), "non-increasing groups");
    }

    #[test]
    fn non_divisible_channels_flagged() {
        let s = GroupSchedule::from_lists(&[160], &[7, 7, 1], 8).unwrap();
        let rep = validate_schedule(&s);
        assert!(rep.has(ViolationKind::Divisibility));
        assert_eq!(rep.violations.iter().filter(|v| v.kind == ViolationKind::Divisibility).count(), 2);
    }

    #[test]
    fn channel_list_expansion() {
        let s = GroupSchedule::from_lists(&[151, 64], &[151, 16, 16, 1], 151).unwrap();
        assert_eq!(s.channels(), vec![151, 64, 64, 64]);
        assert!(GroupSchedule::from_lists(&[1, 2, 3], &[1, 1], 1).is_err());
    }

    #[test]
    fn final_layer_must_be_single_group() {
        let s = GroupSchedule::from_lists(&[16], &[4, 2], 4).unwrap();
        assert!(validate_schedule(&s).has(ViolationKind::FinalGroupNotOne));
    }
}
