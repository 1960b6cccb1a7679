"""Bundled instrumented parser targets."""

from __future__ import annotations

from importlib import resources

from . import cnk, melf
from .base import ParseError, ParseResult, PlantedFault, TargetHang, TargetSpec, Tracer

_REGISTRY = {spec.name: spec for spec in (cnk.SPEC, melf.SPEC)}


def list_targets() -> list[TargetSpec]:
    return list(_REGISTRY.values())


def get_target(name: str) -> TargetSpec:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown target {name!r}; available: {sorted(_REGISTRY)}") from None


def fixture(name: str) -> bytes:
    """Bytes of a shipped fixture file, e.g. ``fixture("cnk_valid.bin")``."""
    return resources.files(__package__).joinpath("fixtures", name).read_bytes()


def cnk_parse(data: bytes) -> ParseResult:
    return cnk.SPEC.parse(data)


def melf_parse(data: bytes) -> ParseResult:
    return melf.SPEC.parse(data)


__all__ = [
    "ParseError",
    "ParseResult",
    "PlantedFault",
    "TargetHang",
    "TargetSpec",
    "Tracer",
    "cnk_parse",
    "fixture",
    "get_target",
    "list_targets",
    "melf_parse",
]
