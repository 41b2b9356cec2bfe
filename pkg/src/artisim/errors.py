"""Exception types raised across the simulator.

Everything derives from ArtisimError so callers can catch the whole family;
benchmark code additionally treats PolicyFailure and ProtocolViolation as
quarantine-worthy rather than fatal.
"""

from __future__ import annotations


class ArtisimError(Exception):
    """Base class for all errors raised by this package."""


# -- kinematics ---------------------------------------------------------------

class NotMovable(ArtisimError):
    """The addressed part has no joint."""


class UnknownPart(ArtisimError):
    """No part with the given id exists in the object."""


class DegenerateRadius(ArtisimError):
    """Contact point lies on the revolute axis line: motion direction undefined."""


class AssetError(ArtisimError):
    """Object asset file is syntactically or semantically invalid."""


# -- scene --------------------------------------------------------------------

class EmptyScene(ArtisimError):
    """Nothing to render: no parts, or no part visible in the frame."""


class BackgroundPixel(ArtisimError):
    """Operation requires a foreground pixel but got background."""


class NotOnSurface(ArtisimError):
    """Query point does not lie on any box face of the part."""


class DimensionMismatch(ArtisimError):
    """Array shapes disagree with the observation."""


# -- interaction --------------------------------------------------------------

class InvalidDirection(ArtisimError):
    """Gripper direction is not a unit vector."""


# -- feedback extraction ------------------------------------------------------

class TooShort(ArtisimError):
    """Trajectory has fewer than two poses."""


class CollinearTrajectory(ArtisimError):
    """Start/mid/end chords are collinear; no axis can be recovered."""


class NoMovement(ArtisimError):
    """No trajectory in the set shows any movement."""


class DegenerateChords(ArtisimError):
    """All pairwise chord cross products vanish."""


class MovablePart(ArtisimError):
    """Segmentation of unmovable surface requested on a movable part."""


# -- correction loop ----------------------------------------------------------

class NoMasks(ArtisimError):
    """Position-correction prompt requested before any mask was accumulated."""


class NoEstimate(ArtisimError):
    """Rotation prompt requested without a usable joint estimate."""


class PolicyFailure(ArtisimError):
    """Policy produced unusable output even after one re-ask.

    When raised by the session orchestrator, ``session_log`` carries the
    partial log so the episode can be quarantined without losing data.
    """

    def __init__(self, message: str, session_log=None):
        super().__init__(message)
        self.session_log = session_log


# -- policy / discretization --------------------------------------------------

class NotUnit(ArtisimError):
    """Vector expected to be unit length is not."""


class DegenerateZero(ArtisimError):
    """Decoded direction has (near-)zero length."""


class NoMovableVisible(ArtisimError):
    """Oracle policy found no visible movable part."""


# -- bridge -------------------------------------------------------------------

class ProtocolViolation(ArtisimError):
    """Peer sent a malformed frame, wrong version, or closed mid-message."""


class ParseFailure(ArtisimError):
    """Peer reply did not match the answer grammar after a re-ask."""


# -- datagen / bench ----------------------------------------------------------

class ExhaustedBudget(ArtisimError):
    """Rejection sampling hit the trial budget before reaching the target count."""


class IoFailure(ArtisimError):
    """Report or corpus files could not be written."""
