"""Mode and grid type aliases."""

# pylint: disable=no-member

from typing import Literal, TypeAlias

ModeIndex: TypeAlias = int
ModeKind: TypeAlias = Literal["ground", "excited"]
FieldBranch: TypeAlias = Literal["plus", "minus"]
Stencil: TypeAlias = Literal["central2", "upwind1"]
Channel: TypeAlias = Literal["s0", "s2", "s_minus2"]
