"""
Error hierarchy for the simulation toolkit.

Every failure the CLI can report is a :class:`NeurVecError` subclass.  Each
class carries a one-word ``category`` (printed on stderr as a single
machine-parsable line) and a distinct process ``exit_code``.
"""


class NeurVecError(Exception):
    """Base class for all toolkit errors."""

    category = "internal"
    exit_code = 1


# ── Configuration / CLI ─────────────────────────────────────────────────


class ConfigParseError(NeurVecError):
    category = "config_parse"
    exit_code = 2


class MissingInputError(NeurVecError):
    category = "missing_input"
    exit_code = 3


class InvalidConfigError(NeurVecError):
    category = "invalid_config"
    exit_code = 4


# ── Systems / integration ───────────────────────────────────────────────


class DimensionMismatch(NeurVecError):
    category = "dimension_mismatch"
    exit_code = 10


class SingularMassMatrix(NeurVecError):
    category = "singular_mass_matrix"
    exit_code = 11


class UnsupportedSystem(NeurVecError):
    category = "unsupported_system"
    exit_code = 12


class RejectionBudgetExceeded(NeurVecError):
    category = "rejection_budget_exceeded"
    exit_code = 13


class Divergence(NeurVecError):
    """A trajectory left the finite, bounded state region."""

    category = "divergence"
    exit_code = 14

    def __init__(self, step: int, trajectory: int, detail: str = "") -> None:
        self.step = step
        self.trajectory = trajectory
        msg = f"trajectory {trajectory} diverged at step {step}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


# ── Corrector model ─────────────────────────────────────────────────────


class ModelSystemMismatch(NeurVecError):
    category = "model_system_mismatch"
    exit_code = 20


class StepSizeMismatch(NeurVecError):
    category = "step_size_mismatch"
    exit_code = 21


class SamplingMismatch(NeurVecError):
    category = "sampling_mismatch"
    exit_code = 22


class NonFiniteLoss(NeurVecError):
    category = "non_finite_loss"
    exit_code = 23

    def __init__(self, epoch: int, step: int) -> None:
        self.epoch = epoch
        self.step = step
        super().__init__(f"non-finite training loss at epoch {epoch}, step {step}")


# ── File formats ────────────────────────────────────────────────────────


class BadMagic(NeurVecError):
    category = "bad_magic"
    exit_code = 30


class FormatVersionMismatch(NeurVecError):
    category = "format_version_mismatch"
    exit_code = 31


class ChecksumMismatch(NeurVecError):
    category = "checksum_mismatch"
    exit_code = 32


class TruncatedFile(NeurVecError):
    category = "truncated_file"
    exit_code = 33


class EmptySplit(NeurVecError):
    category = "empty_split"
    exit_code = 34


class MalformedFile(NeurVecError):
    """Structurally complete file with bytes beyond the checksum."""

    category = "malformed_file"
    exit_code = 35


# ── Evaluation ──────────────────────────────────────────────────────────


class ShapeMismatch(NeurVecError):
    category = "shape_mismatch"
    exit_code = 40


class TimeAxisMismatch(NeurVecError):
    category = "time_axis_mismatch"
    exit_code = 41


class EmptyRange(NeurVecError):
    category = "empty_range"
    exit_code = 42


class DegenerateVariance(NeurVecError):
    category = "degenerate_variance"
    exit_code = 43


class ThresholdViolation(NeurVecError):
    category = "threshold_violation"
    exit_code = 50


def exit_code_table() -> list[tuple[int, str]]:
    """Return ``(exit_code, category)`` for every error class, sorted by code."""
    seen: dict[int, str] = {}
    stack = [NeurVecError]
    while stack:
        cls = stack.pop()
        seen[cls.exit_code] = cls.category
        stack.extend(cls.__subclasses__())
    return sorted(seen.items())
