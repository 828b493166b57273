use std::fmt;

use serde::{Deserialize, Serialize};

/// The six discrete actions, in the order used for logits and one-hot encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    MoveAhead,
    RotateLeft,
    RotateRight,
    LookUp,
    LookDown,
    Done,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; 6] =
        [Action::MoveAhead, Action::RotateLeft, Action::RotateRight, Action::LookUp, Action::LookDown, Action::Done];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Yaw in multiples of 45°, measured clockwise from +x in grid coordinates
/// (x to the right, y down the rows).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Heading(u8);

impl Heading {
    pub const COUNT: usize = 8;

    pub fn new(k: u8) -> Heading {
        Heading(k % 8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn degrees(self) -> f64 {
        45.0 * self.0 as f64
    }

    pub fn left(self) -> Heading {
        Heading((self.0 + 7) % 8)
    }

    pub fn right(self) -> Heading {
        Heading((self.0 + 1) % 8)
    }

    /// One-cell displacement of a MoveAhead along this heading.
    pub fn step(self) -> (i32, i32) {
        const STEPS: [(i32, i32); 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];
        STEPS[self.0 as usize]
    }
}

/// Camera pitch: −30°, 0° or +30° (positive looks up).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pitch {
    Down,
    Level,
    Up,
}

impl Pitch {
    pub const COUNT: usize = 3;
    pub const ALL: [Pitch; 3] = [Pitch::Down, Pitch::Level, Pitch::Up];

    pub fn degrees(self) -> f64 {
        match self {
            Pitch::Down => -30.0,
            Pitch::Level => 0.0,
            Pitch::Up => 30.0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Pitch> {
        Pitch::ALL.get(i).copied()
    }

    pub fn up(self) -> Pitch {
        match self {
            Pitch::Down => Pitch::Level,
            _ => Pitch::Up,
        }
    }

    pub fn down(self) -> Pitch {
        match self {
            Pitch::Up => Pitch::Level,
            _ => Pitch::Down,
        }
    }
}

/// Agent state `(x, y, θ_r, θ_h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: i32,
    pub y: i32,
    pub heading: Heading,
    pub pitch: Pitch,
}

impl AgentPose {
    pub fn new(x: i32, y: i32, heading: u8, pitch: Pitch) -> Self {
        AgentPose { x, y, heading: Heading::new(heading), pitch }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotations_are_inverse() {
        for k in 0..8 {
            let h = Heading::new(k);
            assert_eq!(h.left().right(), h);
            assert_eq!(h.right().left(), h);
        }
        assert_eq!(Heading::new(0).left().degrees(), 315.0);
    }

    #[test]
    fn pitch_clamps() {
        assert_eq!(Pitch::Up.up(), Pitch::Up);
        assert_eq!(Pitch::Down.down(), Pitch::Down);
        assert_eq!(Pitch::Level.up().down(), Pitch::Level);
    }

    #[test]
    fn action_indices_roundtrip() {
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(Action::from_index(i), Some(*a));
        }
        assert_eq!(Action::from_index(6), None);
        assert_eq!(Action::Done.index(), 5);
    }
}
