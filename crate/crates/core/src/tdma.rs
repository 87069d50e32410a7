//! TDMA time base for the main control channel (MCCH).
//!
//! Simulated time is kept as integer nanoseconds. Every MCCH subslot start
//! is an exact integer, so event ordering never depends on floating point.
//! A frame holds four 14.167 ms timeslots; the MCCH is timeslot 1 and is
//! split into two subslots. Eighteen frames make a multiframe and frame 18
//! carries control signalling only.

use std::fmt;

use thiserror::Error;

pub const SLOT_NS: u64 = 14_167_000;
pub const SUBSLOT_NS: u64 = SLOT_NS / 2;
pub const FRAME_NS: u64 = 4 * SLOT_NS;
pub const FRAMES_PER_MULTIFRAME: u8 = 18;
pub const CONTROL_FRAME: u8 = 18;
pub const SUBSLOTS_PER_FRAME: u64 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TdmaError {
    #[error("frame number {0} outside 1..=18")]
    InvalidFrame(u8),
    #[error("MCCH subslot {0} outside 0..=1")]
    InvalidSubslot(u8),
    #[error("time {0} ns does not fall on an MCCH subslot boundary")]
    OffBoundary(u64),
    #[error("reserved run must contain at least one subslot")]
    EmptyRequest,
}

/// Timing constants in seconds, as a derived view of the integer time base.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingConstants {
    pub slot_duration: f64,
    pub subslot_duration: f64,
    pub frame_duration: f64,
    pub multiframe_frames: u8,
}

impl TimingConstants {
    pub const TETRA: TimingConstants = TimingConstants {
        slot_duration: SLOT_NS as f64 * 1e-9,
        subslot_duration: SUBSLOT_NS as f64 * 1e-9,
        frame_duration: FRAME_NS as f64 * 1e-9,
        multiframe_frames: FRAMES_PER_MULTIFRAME,
    };

    pub fn multiframe_duration(&self) -> f64 {
        self.frame_duration * f64::from(self.multiframe_frames)
    }
}

/// Simulation clock value in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    /// Rounds to the nearest nanosecond; negative inputs clamp to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime((secs.max(0.0) * 1e9).round() as u64)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn multiframes(n: u32) -> Self {
        SimTime(u64::from(n) * u64::from(FRAMES_PER_MULTIFRAME) * FRAME_NS)
    }

    pub fn frames(n: u64) -> Self {
        SimTime(n * FRAME_NS)
    }
}

impl std::ops::Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.7}s", self.as_secs_f64())
    }
}

/// Position of one MCCH subslot on the timeline.
///
/// Field order gives the derived `Ord` the (multiframe, frame, subslot)
/// lexicographic ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubslotAddress {
    multiframe: u32,
    frame: u8,
    subslot: u8,
}

impl SubslotAddress {
    pub const ORIGIN: SubslotAddress = SubslotAddress {
        multiframe: 0,
        frame: 1,
        subslot: 0,
    };

    pub fn new(multiframe: u32, frame: u8, subslot: u8) -> Result<Self, TdmaError> {
        if !(1..=FRAMES_PER_MULTIFRAME).contains(&frame) {
            return Err(TdmaError::InvalidFrame(frame));
        }
        if subslot > 1 {
            return Err(TdmaError::InvalidSubslot(subslot));
        }
        Ok(SubslotAddress {
            multiframe,
            frame,
            subslot,
        })
    }

    pub fn multiframe(self) -> u32 {
        self.multiframe
    }

    pub fn frame(self) -> u8 {
        self.frame
    }

    pub fn subslot(self) -> u8 {
        self.subslot
    }

    pub fn is_control_frame(self) -> bool {
        self.frame == CONTROL_FRAME
    }

    /// Global frame counter since the origin, frame 18 included.
    pub fn global_frame(self) -> u64 {
        u64::from(self.multiframe) * u64::from(FRAMES_PER_MULTIFRAME) + u64::from(self.frame - 1)
    }

    /// Global MCCH subslot counter since the origin, frame 18 included.
    pub fn index(self) -> u64 {
        self.global_frame() * SUBSLOTS_PER_FRAME + u64::from(self.subslot)
    }

    pub fn from_index(index: u64) -> Self {
        let global_frame = index / SUBSLOTS_PER_FRAME;
        let mf = global_frame / u64::from(FRAMES_PER_MULTIFRAME);
        SubslotAddress {
            multiframe: u32::try_from(mf).expect("multiframe counter overflow"),
            frame: (global_frame % u64::from(FRAMES_PER_MULTIFRAME)) as u8 + 1,
            subslot: (index % SUBSLOTS_PER_FRAME) as u8,
        }
    }

    pub fn time(self) -> SimTime {
        SimTime(self.global_frame() * FRAME_NS + u64::from(self.subslot) * SUBSLOT_NS)
    }

    /// Inverse of [`SubslotAddress::time`]; fails unless `t` is exactly an MCCH subslot start.
    pub fn from_time(t: SimTime) -> Result<Self, TdmaError> {
        let ns = t.as_nanos();
        let global_frame = ns / FRAME_NS;
        let subslot = match ns % FRAME_NS {
            0 => 0,
            SUBSLOT_NS => 1,
            _ => return Err(TdmaError::OffBoundary(ns)),
        };
        Ok(Self::from_index(global_frame * SUBSLOTS_PER_FRAME + subslot))
    }

    /// The first MCCH subslot starting at or after `t`.
    pub fn at_or_after(t: SimTime) -> Self {
        let ns = t.as_nanos();
        let global_frame = ns / FRAME_NS;
        let rem = ns % FRAME_NS;
        let index = match rem {
            0 => global_frame * SUBSLOTS_PER_FRAME,
            r if r <= SUBSLOT_NS => global_frame * SUBSLOTS_PER_FRAME + 1,
            _ => (global_frame + 1) * SUBSLOTS_PER_FRAME,
        };
        Self::from_index(index)
    }

    /// Same subslot position, `frames` TDMA frames later (frame 18 counts).
    pub fn advance_frames(self, frames: u64) -> Self {
        Self::from_index(self.index() + frames * SUBSLOTS_PER_FRAME)
    }

    /// Subslot 0 of the following frame, optionally stepping past frame 18.
    pub fn start_of_next_frame(self, skip_control_frame: bool) -> Self {
        let mut next = Self::from_index((self.global_frame() + 1) * SUBSLOTS_PER_FRAME);
        if skip_control_frame && next.is_control_frame() {
            next = Self::from_index((next.global_frame() + 1) * SUBSLOTS_PER_FRAME);
        }
        next
    }
}

impl fmt::Display for SubslotAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.multiframe, self.frame, self.subslot)
    }
}

/// Start time of `addr` in seconds.
pub fn time_of(addr: SubslotAddress) -> f64 {
    addr.time().as_secs_f64()
}

pub fn next_mcch_subslot(addr: SubslotAddress, skip_frame_18: bool) -> SubslotAddress {
    let mut next = SubslotAddress::from_index(addr.index() + 1);
    if skip_frame_18 {
        while next.is_control_frame() {
            next = SubslotAddress::from_index(next.index() + 1);
        }
    }
    next
}

/// `n` consecutive MCCH subslots from `start`, jumping over frame 18.
pub fn reserved_run(start: SubslotAddress, n: usize) -> Result<Vec<SubslotAddress>, TdmaError> {
    if n == 0 {
        return Err(TdmaError::EmptyRequest);
    }
    let mut cur = if start.is_control_frame() {
        next_mcch_subslot(start, true)
    } else {
        start
    };
    let mut run = Vec::with_capacity(n);
    run.push(cur);
    while run.len() < n {
        cur = next_mcch_subslot(cur, true);
        run.push(cur);
    }
    Ok(run)
}
