"""Diagnostics shared by the config, engine and lint passes."""

from __future__ import annotations

from dataclasses import dataclass

ERROR = "error"
WARNING = "warning"


class CarveError(Exception):
    """Base class for every error raised by this package."""

    code = "CarveError"

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.message = message
        # 0-based line index, when the error is tied to one.
        self.line = line


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    path: str | None = None
    lineno: int | None = None  # 1-based, for humans
    severity: str = ERROR

    @classmethod
    def from_error(cls, err: CarveError, path: str | None = None) -> Diagnostic:
        lineno = None if err.line is None else err.line + 1
        return cls(err.code, err.message, path, lineno, ERROR)

    @property
    def is_error(self) -> bool:
        return self.severity == ERROR

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "severity": self.severity,
            "path": self.path,
            "line": self.lineno,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Diagnostic:
        return cls(d["code"], d["message"], d["path"], d["line"], d["severity"])

    def __str__(self) -> str:
        where = self.path or "<input>"
        if self.lineno is not None:
            where = f"{where}:{self.lineno}"
        return f"{where}: {self.severity}: {self.code}: {self.message}"
