"""Exception hierarchy shared by the pipeline stages.

Each error carries the process exit code the CLI maps it to.
"""

from __future__ import annotations


class OssRolesError(Exception):
    exit_code = 1


class ConfigError(OssRolesError):
    exit_code = 2


class AuthError(OssRolesError):
    exit_code = 3


class NotFound(OssRolesError):
    exit_code = 1


class PartialFetch(OssRolesError):
    """Network failure mid-pagination; progress was persisted and the fetch can resume."""

    exit_code = 1


class OutOfWindow(OssRolesError, ValueError):
    pass


class NoData(OssRolesError):
    exit_code = 4


class NumericalError(OssRolesError):
    exit_code = 5


class DegenerateMatrix(NumericalError):
    pass


class NoFactorsRetained(NumericalError):
    pass


class SingularCorrelation(NumericalError):
    pass


class InvalidCandidateRange(NumericalError, ValueError):
    pass


class LabelRuleConflict(OssRolesError):
    exit_code = 2


class MissingCentroid(NumericalError, KeyError):
    pass


class EmptyPopulation(NoData):
    pass


class MissingArtifact(OssRolesError):
    exit_code = 4


class SchemaError(OssRolesError):
    exit_code = 2
