"""Exception types shared across the package."""


class SkillmemError(Exception):
    """Base class for all package errors."""


class ParseError(SkillmemError):
    """A malformed input row; carries the 1-based line number."""

    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ConfigError(SkillmemError):
    """Invalid configuration (unknown format tag, bad fold count, ...)."""


class EmptyDatasetError(SkillmemError):
    """Preprocessing removed every interaction."""


class EncodingError(SkillmemError):
    """An interaction could not be turned into a feature row."""


class FitError(SkillmemError):
    """Model training failed (non-finite inputs or divergent chain)."""


class MetricError(SkillmemError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""


class SchedulingError(SkillmemError):
    """The scheduler could not satisfy the request (e.g. no item covers a skill)."""
