# core/errors.py
"""
Exception hierarchy of the lab.
- Library code raises; only core/cli.py turns these into exit codes.
- EXIT_CODES maps each family onto the CLI contract (2 / 3 / 4).
"""


class WarpLabError(Exception):
    """Base class for every error raised by the lab."""


# ====== configuration / input ======
class ConfigError(WarpLabError):
    """Run config failed validation (unknown key, wrong type, out of range)."""


class SchemaError(WarpLabError):
    """Two reports cannot be compared (kind or schema mismatch)."""


# ====== geometry ======
class ProfileError(WarpLabError):
    pass


class NoHorizonError(ProfileError):
    """The defining radicand has no positive root."""


class InvalidParametersError(ProfileError):
    pass


class OutOfDomainError(ProfileError):
    """Evaluation requested outside [0, r_bar)."""


class DomainError(WarpLabError):
    """Boundary graph leaves (0, r_bar), self-intersects or has the wrong topology."""


class MeshError(WarpLabError):
    pass


class SurfaceError(WarpLabError):
    """Surface is not admissible for a deficit (not mean-convex, not graphical)."""


# ====== numerics ======
class NumericalError(WarpLabError):
    pass


class SolverError(NumericalError):
    """Newton or linear solve failed, or the linearisation looked indefinite."""


class HypothesisError(NumericalError):
    """The warping profile fails a hypothesis the solver depends on."""


class RecoveryError(NumericalError):
    """Patch recovery cannot form a full stencil (mesh too small)."""


class OracleError(NumericalError):
    """1-D reference solve diverged or hit the hemisphere blow-up."""


class FlowError(NumericalError):
    """Level-set flow left the domain."""


class ResidualThresholdError(WarpLabError):
    """Strict mode: an identity residual or invariant exceeded its tolerance."""


EXIT_CODES = {
    ConfigError: 2,
    SchemaError: 2,
    ProfileError: 2,
    DomainError: 2,
    MeshError: 2,
    SurfaceError: 3,
    NumericalError: 3,
    ResidualThresholdError: 4,
}


def exit_code_for(exc: BaseException) -> int:
    for cls in type(exc).__mro__:
        if cls in EXIT_CODES:
            return EXIT_CODES[cls]
    return 1
