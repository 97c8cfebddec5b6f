use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The four phases of a therapy session, in the order they occur.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionPhase {
    InitialConversation,
    ArtisticWork,
    Adaptation,
    Retrospective,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum TransitionError {
    #[error("illegal phase transition from {from} to {to}")]
    IllegalTransition { from: SessionPhase, to: SessionPhase },
    #[error("session is closed: no transition out of {from} is allowed")]
    SessionClosed { from: SessionPhase },
}

impl SessionPhase {
    pub const ALL: [SessionPhase; 4] =
        [SessionPhase::InitialConversation, SessionPhase::ArtisticWork, SessionPhase::Adaptation, SessionPhase::Retrospective];

    /// Zero-based position in the session.
    pub const fn ordinal(self) -> u8 {
        match self {
            SessionPhase::InitialConversation => 0,
            SessionPhase::ArtisticWork => 1,
            SessionPhase::Adaptation => 2,
            SessionPhase::Retrospective => 3,
        }
    }

    pub const fn roman(self) -> &'static str {
        match self {
            SessionPhase::InitialConversation => "i",
            SessionPhase::ArtisticWork => "ii",
            SessionPhase::Adaptation => "iii",
            SessionPhase::Retrospective => "iv",
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            SessionPhase::InitialConversation => "initial_conversation",
            SessionPhase::ArtisticWork => "artistic_work",
            SessionPhase::Adaptation => "adaptation",
            SessionPhase::Retrospective => "retrospective",
        }
    }

    pub fn next(self) -> Option<SessionPhase> {
        Self::ALL.get(self.ordinal() as usize + 1).copied()
    }

    pub const fn is_terminal(self) -> bool {
        matches!(self, SessionPhase::Retrospective)
    }

    /// Checks a requested move. Legal moves are a single step forward or a
    /// self-transition; the retrospective phase only admits its self-loop.
    pub fn check_transition(self, target: SessionPhase) -> Result<(), TransitionError> {
        if target == self {
            return Ok(());
        }
        if self.is_terminal() {
            return Err(TransitionError::SessionClosed { from: self });
        }
        if target.ordinal() == self.ordinal() + 1 {
            Ok(())
        } else {
            Err(TransitionError::IllegalTransition { from: self, to: target })
        }
    }
}

impl fmt::Display for SessionPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for SessionPhase {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL.into_iter().find(|p| p.as_str() == s || p.roman() == s).ok_or(())
    }
}
