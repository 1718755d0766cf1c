"""Exception types shared across the package.

Every error raised by library code derives from LiblabError so callers
(and the CLI, which maps them to exit code 2) can catch one base class.
"""


class LiblabError(Exception):
    """Base class for all numerical / validation failures in liblab."""


class NegativeMass(LiblabError):
    """A measure decomposition would produce a signed part."""


class BranchFailure(LiblabError):
    """No admissible branch of a conformal map (e.g. both Joukowski roots
    land outside the unit disk)."""


class BranchAmbiguity(LiblabError):
    """The discriminant of the quadratic relating L and H sits on the
    negative real axis, so the principal square root is ill-determined."""


class NewtonDivergence(LiblabError):
    """A Newton iteration failed to converge; message carries the offending
    target point and time."""


class ExitedDisk(LiblabError):
    """A subordination iterate left the closed unit disk and could not be
    pulled back (target outside the image of the map)."""


class CharacteristicExit(LiblabError):
    """A Loewner characteristic reached |g| = 1 strictly before the target
    time; the seed is outside the domain of g_t."""


class DivergenceDetected(LiblabError):
    """Boundary values of Re L grow like 1/(1-r): the measure has a density
    that does not exist (atom) at the probed angle."""


class AtomPresent(LiblabError):
    """An operation that needs an absolutely continuous measure received
    one with atoms."""


class TooCloseToSpectrum(LiblabError):
    """Cauchy-transform evaluation point is within 1e-10 of [0, 1]."""


class TimeGridMismatch(LiblabError):
    """Two time grids that must agree (empirical vs analytic flow) differ."""


class SpecValidationError(LiblabError):
    """An experiment spec (CLI config) failed validation; message carries a
    human-readable diagnostic, with line/column for JSON syntax errors."""
