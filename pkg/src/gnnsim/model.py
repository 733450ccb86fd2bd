"""GNN model descriptions: layer specs, validation, and the built-in zoo.

A model is an ordered list of layer descriptors plus named weight
matrices. Four layer families are supported (gcn, sage, gin, sgc);
each lowers to a different kernel sequence in the compiler.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import CompileError
from .matrices import ActivationKind


class ModelKind(Enum):
    GCN = "gcn"
    SAGE = "sage"
    GIN = "gin"
    SGC = "sgc"


class AggregationOp(Enum):
    SUM = "sum"
    MEAN = "mean"
    MAX = "max"
    MIN = "min"


class AdjacencyNorm(Enum):
    """Compile-time adjacency rewrite applied before aggregation."""

    NONE = "none"
    SYM = "sym"  # D^-1/2 A D^-1/2
    ROW = "row"  # D^-1 A


@dataclass(frozen=True)
class ActivationSpec:
    kind: ActivationKind = ActivationKind.RELU
    enabled: bool = True
    slope: float = 0.0

    @classmethod
    def none(cls) -> "ActivationSpec":
        return cls(ActivationKind.RELU, False)

    @classmethod
    def relu(cls) -> "ActivationSpec":
        return cls(ActivationKind.RELU, True)

    @classmethod
    def prelu(cls, slope: float) -> "ActivationSpec":
        return cls(ActivationKind.PRELU, True, slope)


@dataclass(frozen=True)
class LayerSpec:
    kind: ModelKind
    f_in: int
    f_out: int
    aggregation: AggregationOp = AggregationOp.SUM
    activation: ActivationSpec = field(default_factory=ActivationSpec.relu)
    adjacency_norm: AdjacencyNorm | None = None  # None -> family default
    gin_epsilon: float = 0.0
    sgc_hops: int = 1

    def resolved_norm(self) -> AdjacencyNorm:
        if self.adjacency_norm is not None:
            return self.adjacency_norm
        if self.aggregation is AggregationOp.MEAN:
            return AdjacencyNorm.ROW
        if self.kind in (ModelKind.GCN, ModelKind.SGC):
            return AdjacencyNorm.SYM
        return AdjacencyNorm.NONE

    def weight_slots(self) -> list[tuple[str, tuple[int, int]]]:
        """Weight matrix names and shapes this layer consumes."""
        if self.kind is ModelKind.SAGE:
            return [
                ("w_neigh", (self.f_in, self.f_out)),
                ("w_self", (self.f_in, self.f_out)),
            ]
        if self.kind is ModelKind.GIN:
            # Two-layer MLP with hidden width f_out.
            return [("w1", (self.f_in, self.f_out)), ("w2", (self.f_out, self.f_out))]
        return [("w", (self.f_in, self.f_out))]


def weight_id(layer_idx: int, slot: str) -> str:
    return f"W:{layer_idx}:{slot}"


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple[LayerSpec, ...]
    name: str = "model"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for prev, cur in zip(self.layers, self.layers[1:]):
            if prev.f_out != cur.f_in:
                raise CompileError(
                    f"layer dimension chain broken: {prev.f_out} -> {cur.f_in}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].f_in if self.layers else 0

    @property
    def output_dim(self) -> int:
        return self.layers[-1].f_out if self.layers else 0

    def weight_slots(self) -> list[tuple[str, tuple[int, int]]]:
        """All (weight id, shape) pairs, in layer order."""
        out = []
        for idx, layer in enumerate(self.layers):
            for slot, shape in layer.weight_slots():
                out.append((weight_id(idx, slot), shape))
        return out


ZOO_IDS = ("gcn2", "sage2", "gin2", "sgc2")


def zoo_model(
    zoo_id: str,
    f_in: int,
    hidden: int,
    f_out: int | None = None,
    hops: int = 2,
    epsilon: float = 0.0,
) -> ModelSpec:
    """Build one of the stock two-layer models (or a k-hop sgc)."""
    f_out = hidden if f_out is None else f_out
    if zoo_id == "gcn2":
        layers = [
            LayerSpec(ModelKind.GCN, f_in, hidden),
            LayerSpec(ModelKind.GCN, hidden, f_out, activation=ActivationSpec.none()),
        ]
    elif zoo_id == "sage2":
        layers = [
            LayerSpec(ModelKind.SAGE, f_in, hidden, aggregation=AggregationOp.MEAN),
            LayerSpec(
                ModelKind.SAGE,
                hidden,
                f_out,
                aggregation=AggregationOp.MEAN,
                activation=ActivationSpec.none(),
            ),
        ]
    elif zoo_id == "gin2":
        layers = [
            LayerSpec(ModelKind.GIN, f_in, hidden, gin_epsilon=epsilon),
            LayerSpec(
                ModelKind.GIN,
                hidden,
                f_out,
                activation=ActivationSpec.none(),
                gin_epsilon=epsilon,
            ),
        ]
    elif zoo_id == "sgc2":
        layers = [
            LayerSpec(
                ModelKind.SGC, f_in, f_out, activation=ActivationSpec.none(), sgc_hops=hops
            )
        ]
    else:
        raise CompileError(f"unknown zoo model id: {zoo_id!r} (expected one of {ZOO_IDS})")
    return ModelSpec(tuple(layers), name=zoo_id)
