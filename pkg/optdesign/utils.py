# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

from __future__ import annotations

import logging as log
import sys
from contextlib import contextmanager
from enum import Enum
from typing import TYPE_CHECKING, Any

from typing_extensions import override

if TYPE_CHECKING:
    from collections.abc import Iterator


class OptDesignError(Exception):
    """Base of every error raised by this package."""


class AutoStrEnum(Enum):
    """Enum where auto() value gives the name of the member"""
    @override
    @staticmethod
    def _generate_next_value_(name: str, *_, **__: Any):
        return name


@contextmanager
def report(
    *types: type[Exception], msg: str | None = None,
) -> Iterator[list[Exception]]:
    """On exceptions in `with` block, cancel the rest and log the error."""
    caught: list[Exception] = []
    try:
        yield caught
    except (types or Exception) as e:  # noqa: PLW0711, B030
        caught.append(e)
        log.exception(msg or "Caught exception")


@contextmanager
def errors_to_exit(code: int = 2) -> Iterator[None]:
    """Turn package errors into a one-line message and an exit code."""
    try:
        yield
    except OptDesignError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        raise SystemExit(code) from e
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        raise SystemExit(code) from e
