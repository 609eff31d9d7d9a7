"""CouplingGraph.

This module defines a CouplingGraph class that uses NetworkX to represent which
modes the forward and backward fields couple.
"""

from typing import NamedTuple, Optional

import networkx as nx

from ramseyrecoil.errors import StructureError
from ramseyrecoil.types.mode import FieldBranch, ModeIndex
from ramseyrecoil.types.model import ModeSet


class PartnerSlices(NamedTuple):
    """Excited-state rows paired, in order, with the ground-state rows.

    ``b[plus]`` lines up b_{j+1} with a_j and ``b[minus]`` lines up b_{j−1} with a_j.
    """

    plus: slice
    minus: slice


def node_name(mode: ModeIndex) -> str:
    """Get the graph node of a mode, e.g. ``a-2`` or ``b1``."""
    return f"{'a' if mode % 2 == 0 else 'b'}{mode}"


class CouplingGraph:
    """CouplingGraph.

    Directed graph with an edge a_j → b_{j±1} for every dipole coupling of the truncated
    mode set. The edge attribute ``field`` names the envelope that drives it: E⁺ couples
    a_j with b_{j+1} and E⁻ couples a_j with b_{j−1}.
    """

    _attrs = ("field",)
    """Attributes to be taken from the edges of the graph."""

    def __init__(self, mode_set: Optional[ModeSet] = None):
        self.mode_set = mode_set or ModeSet()
        self.graph = nx.DiGraph()

        for mode in self.mode_set.ground_modes:
            self.graph.add_node(node_name(mode), mode=mode, kind="ground")
        for mode in self.mode_set.excited_modes:
            self.graph.add_node(node_name(mode), mode=mode, kind="excited")

        for mode in self.mode_set.ground_modes:
            self.graph.add_edge(node_name(mode), node_name(mode + 1), field="plus")
            self.graph.add_edge(node_name(mode), node_name(mode - 1), field="minus")

    def partners(self, mode: ModeIndex) -> dict[FieldBranch, ModeIndex]:
        """Get the modes coupled to ``mode``, keyed by the field that couples them.

        A ground mode always has both partners. An excited mode at the edge of the
        truncation lacks the partner the truncation dropped.

        Raises:
            KeyError: If the mode is outside the truncated set.

        """
        node = node_name(mode)
        if node not in self.graph:
            raise KeyError(f"Mode {mode} not in truncated set (M={self.mode_set.max_order}).")

        if self.mode_set.kind(mode) == "ground":
            edges = self.graph.out_edges(node, data="field")
            return {field: self.graph.nodes[v]["mode"] for _, v, field in edges}

        edges = self.graph.in_edges(node, data="field")
        return {field: self.graph.nodes[u]["mode"] for u, _, field in edges}

    def truncated_couplings(self) -> list[tuple[ModeIndex, ModeIndex, FieldBranch]]:
        """List the couplings ``(ground, excited, field)`` that the truncation drops.

        These are the couplings of b_{±(M+1)} to the absent a_{±(M+2)}.
        """
        dropped = []
        for mode in self.mode_set.excited_modes:
            for field, ground in (("plus", mode - 1), ("minus", mode + 1)):
                if abs(ground) > self.mode_set.max_order:
                    dropped.append((ground, mode, field))
        return dropped

    def is_closed(self) -> bool:
        """Check that every coupling a ground mode takes part in stays inside the set."""
        return all(
            self.graph.out_degree(node_name(mode)) == 2
            for mode in self.mode_set.ground_modes
        )

    def partner_slices(self) -> PartnerSlices:
        """Get the excited-row slices lined up with the ground rows.

        Raises:
            StructureError: If the partner rows of a field are not a contiguous block.

        """
        rows: dict[str, list[int]] = {"plus": [], "minus": []}
        for mode in self.mode_set.ground_modes:
            for field, partner in self.partners(mode).items():
                rows[field].append(self.mode_set.excited_index(partner))

        slices = {}
        for field, indices in rows.items():
            block = slice(indices[0], indices[-1] + 1)
            if indices != list(range(block.start, block.stop)):
                raise StructureError(f"{field} partners are not contiguous rows: {indices}")
            slices[field] = block
        return PartnerSlices(**slices)

    def pretty_string(self) -> str:
        """Generate a human-readable string representation of the graph's edges.

        Returns:
            str: One line per edge in the format ``"a0 --> b1 [field: plus]"``.

        """
        _str = []

        for u, v, d in self.graph.edges(data=True):
            _types = [f"{attr}: {d[attr]}" for attr in self._attrs if d.get(attr)]
            types_string = f" [{', '.join(_types)}]" if _types else ""
            _str.append(f"{u} --> {v}{types_string}")

        return "\n".join(_str)

    def pretty_print(self):
        """Print the graph in a human-readable format."""
        print(self.pretty_string())
