from typing import List, Optional, Tuple


class SeparationError(Exception):
    """Base class for every error raised by the separation toolkit."""


class ConfigError(SeparationError):
    pass


class SceneValidationError(SeparationError):
    """Raised when a scene or trajectory violates its geometric invariants."""

    def __init__(self, message: str, sample_index: Optional[int] = None,
                 violations: Optional[List[str]] = None):
        super().__init__(message)
        self.sample_index = sample_index
        self.violations = violations or []


class GeometryError(SeparationError):
    pass


class SignalShapeError(SeparationError):
    pass


class ZeroEnergyError(SeparationError):
    pass


class SourceCountError(SeparationError):
    """Raised when no active source survives the count rule."""

    def __init__(self, message: str, count_verdict: Tuple[Optional[int], int]):
        super().__init__(message)
        self.count_verdict = count_verdict


class ComponentError(SeparationError):
    """Wraps a component failure with the stage, source and round it happened in."""

    def __init__(self, message: str, stage: str, source_index: Optional[int] = None,
                 round_index: Optional[int] = None):
        location = f"stage={stage}"
        if source_index is not None:
            location += f" source={source_index}"
        if round_index is not None:
            location += f" round={round_index}"
        super().__init__(f"{location}: {message}")
        self.stage = stage
        self.source_index = source_index
        self.round_index = round_index


class UnknownComponentError(SeparationError):
    pass


class AudioFormatError(SeparationError):
    pass


class MalformedContainerError(AudioFormatError):
    pass


class UnsupportedCodecError(AudioFormatError):
    def __init__(self, format_tag: str, path: str = ""):
        super().__init__(f"unsupported codec {format_tag} in {path}".strip())
        self.format_tag = format_tag


class NonFiniteAudioError(AudioFormatError):
    pass


class ManifestError(SeparationError):
    """Raised when a dataset manifest or one of its entries fails validation."""

    def __init__(self, message: str, violations: Optional[List[str]] = None):
        super().__init__(message)
        self.violations = violations or []
