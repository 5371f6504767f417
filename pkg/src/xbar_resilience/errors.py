# SPDX-FileCopyrightText: 2025 xbar-resilience contributors
# SPDX-License-Identifier: MIT
"""Exception hierarchy shared by every module.

``ValidationError`` subclasses mean the caller gave us something unusable
(exit code 1 on the command line); ``RuntimeFailure`` subclasses mean the work
itself failed (exit code 2).
"""

from __future__ import annotations

__all__ = [
    "XbarError",
    "ValidationError",
    "RuntimeFailure",
    "ArchError",
    "ArchParseError",
    "ArchShapeError",
    "DivisibilityError",
    "IdxFormatError",
    "NoiseConfigError",
    "TrainConfigError",
    "TrainingDivergedError",
    "BundleError",
    "BundleIntegrityError",
    "CrossbarMappingError",
    "EnergyParamsError",
    "CalibrationError",
    "SweepConfigError",
]


class XbarError(Exception):
    """Base class for all errors raised by xbar_resilience."""


class ValidationError(XbarError):
    """Input, configuration or file contents are invalid."""


class RuntimeFailure(XbarError):
    """A well-formed request failed while running."""


class ArchError(ValidationError):
    """Architecture string or shape is invalid."""


class ArchParseError(ArchError):
    def __init__(self, token: str, position: int, reason: str = "unknown token") -> None:
        self.token = token
        self.position = position
        super().__init__(f"{reason} {token!r} at position {position}")


class ArchShapeError(ArchError):
    def __init__(self, previous: str, current: str, detail: str) -> None:
        self.previous = previous
        self.current = current
        super().__init__(f"shape mismatch between {previous} and {current}: {detail}")


class DivisibilityError(ArchError):
    def __init__(self, what: str, value: int, divisor: int) -> None:
        self.value = value
        self.divisor = divisor
        super().__init__(f"{what}: {value} is not divisible by {divisor}")


class IdxFormatError(ValidationError):
    """Malformed or mismatched IDX file."""


class NoiseConfigError(ValidationError):
    pass


class TrainConfigError(ValidationError):
    pass


class TrainingDivergedError(RuntimeFailure):
    def __init__(self, epoch: int, batch: int, lr: float, loss: float) -> None:
        self.epoch = epoch
        self.batch = batch
        self.lr = lr
        self.loss = loss
        super().__init__(
            f"training diverged at epoch {epoch}, batch {batch} (lr={lr:g}, loss={loss}); "
            "lower the learning rate or enable gradient clipping"
        )


class BundleError(ValidationError):
    """Weight bundle is missing, has the wrong version or inconsistent dims."""


class BundleIntegrityError(BundleError):
    """Blob contents do not match the manifest hash."""


class CrossbarMappingError(ValidationError):
    pass


class EnergyParamsError(ValidationError):
    pass


class CalibrationError(ValidationError):
    def __init__(self, message: str, unidentifiable: tuple[str, ...] = ()) -> None:
        self.unidentifiable = unidentifiable
        if unidentifiable:
            message = f"{message}; unidentifiable parameters: {', '.join(unidentifiable)}"
        super().__init__(message)


class SweepConfigError(ValidationError):
    pass
