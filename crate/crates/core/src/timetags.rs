//! Detection records referenced to laser sync markers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time-tagger input channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Channel {
    Sync = 0,
    D1 = 1,
    D2 = 2,
}

impl Channel {
    pub fn from_index(i: u8) -> Option<Channel> {
        match i {
            0 => Some(Channel::Sync),
            1 => Some(Channel::D1),
            2 => Some(Channel::D2),
            _ => None,
        }
    }

    pub fn index(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeTag {
    pub time_ps: i64,
    pub channel: Channel,
}

impl TimeTag {
    pub fn new(channel: Channel, time_ps: i64) -> Self {
        Self { time_ps, channel }
    }
}

/// Ordered list of detection records. Timestamps are integer picoseconds.
///
/// The record vector is public; [`TimeTagStream::validate`] checks ordering
/// and consumers call it before relying on it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimeTagStream {
    pub records: Vec<TimeTag>,
}

impl TimeTagStream {
    /// Builds a stream, rejecting unsorted input.
    pub fn new(records: Vec<TimeTag>) -> Result<Self> {
        let s = Self { records };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self
            .records
            .windows(2)
            .position(|w| w[1].time_ps < w[0].time_ps)
        {
            return Err(Error::UnsortedStream { index: i + 1 });
        }
        Ok(())
    }

    pub fn count(&self, channel: Channel) -> usize {
        self.records.iter().filter(|r| r.channel == channel).count()
    }
}
