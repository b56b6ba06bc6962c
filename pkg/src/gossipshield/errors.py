"""Exception types shared across the simulator."""


class GossipShieldError(Exception):
    """Base class for all library-specific failures."""


class ConfigError(GossipShieldError):
    """Raised when a run configuration is malformed or out of range."""


class TopologyError(GossipShieldError):
    """Raised when a requested network cannot be built.

    Covers the disconnected-reliable-subgraph case (for example a star whose
    hub is Byzantine) and exhausted resampling budgets for random graphs.
    """


class BrokenOptimumError(GossipShieldError):
    """Raised when a reference optimum turns out not to be a lower bound."""


class RegimeError(GossipShieldError):
    """Raised when theory constants fall outside the contractive regime."""
