"""Callable protocols shared by the solver modules."""

from __future__ import annotations

from typing import TYPE_CHECKING, Callable, Protocol, TypeAlias, runtime_checkable

from ramseyrecoil.types.model import ModeSet

if TYPE_CHECKING:
    # only for mypy / pyright / type-checkers, never at runtime
    from ramseyrecoil.model import FieldPair, FieldState


@runtime_checkable
class FieldSolver(Protocol):
    """Protocol for a field solver.

    A field solver maps the current state and the incident amplitude to the forward and
    backward field envelopes on the state's grid.
    """

    def __call__(  # noqa: D102 # pylint: disable=missing-function-docstring
        self, state: FieldState, e0_now: float, mode_set: ModeSet
    ) -> FieldPair: ...


EnvelopeFn: TypeAlias = Callable[[float], float]
"""Incident amplitude as a function of time."""
