"""
Exceptions raised by the landscape-scan modules
"""


class ClptError(Exception):
    """Base class for all landscape-scan errors"""


class ShapeMismatch(ClptError, ValueError):
    """Protocols or sample sets with different (T, L) were combined"""


class InvalidProtocol(ClptError, ValueError):
    """Protocol values out of [-1, 1], L < 1 or T <= 0"""


class DegenerateGroundState(ClptError):
    """The two lowest eigenvalues of the static Hamiltonian coincide"""


class InsufficientRuns(ClptError):
    """Fewer than two runs were given for a pairwise analysis"""


class EmptyAfterExclusion(ClptError):
    """Every run was excluded from the order parameter"""


class NotBracketed(ClptError):
    """A transition lies outside the scanned T grid"""


class NoCollapse(ClptError):
    """Component structure persists for every beta in a scan"""


class TrackingLost(ClptError):
    """Component identity across neighbouring T values is ambiguous"""


class ConfigError(ClptError, ValueError):
    """Invalid experiment configuration"""


class ArtifactError(ClptError):
    """Malformed input file (protocol CSV/JSON, run manifest)"""
