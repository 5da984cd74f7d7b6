"""Partition signals into non-overlapping blocks and reassemble them.

A 2-D signal is a ``T x F`` matrix with time on axis 0. It is tiled by
``M x M`` blocks in reading order (block ``b = r * cols + c``) and each block
is flattened row-major with time first, so the 0-based flat index of cell
``(t_local, f_local)`` is ``t_local * M + f_local``. A 1-D signal of length
``N`` is cut into consecutive length-``M`` blocks.

Cells that do not fill a whole block are either rejected (``strict``) or
kept untouched in ``BlockGrid.remainder`` (``passthrough``). A convolution
whose kernel and stride both equal ``M`` never reads those cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError, StructuralError

FLATTEN_ORDER = "time-major row-major"
REMAINDER_POLICIES = ("strict", "passthrough")


@dataclass(frozen=True)
class BlockSpec:
    mode: str
    M: int
    remainder_policy: str = "strict"

    def __post_init__(self):
        if self.mode not in ("1d", "2d"):
            raise ParameterError(f"mode must be '1d' or '2d', got {self.mode!r}")
        if int(self.M) < 1:
            raise ParameterError(f"block size M must be >= 1, got {self.M}")
        if self.remainder_policy not in REMAINDER_POLICIES:
            raise ParameterError(f"unknown remainder policy {self.remainder_policy!r}")

    @property
    def block_length(self) -> int:
        return self.M * self.M if self.mode == "2d" else self.M


@dataclass
class BlockGrid:
    """Flattened blocks plus everything needed to rebuild the signal.

    ``remainder`` is ``(bottom, right)`` for 2-D signals, where ``bottom`` is
    ``X[rows*M:, :]`` and ``right`` is ``X[:rows*M, cols*M:]``; for 1-D it is
    the single array ``X[count*M:]``.
    """

    blocks: np.ndarray
    grid_dims: tuple[int, ...]
    remainder: tuple[np.ndarray, ...]
    original_dims: tuple[int, ...]
    spec: BlockSpec


def grid_shape(dims: tuple[int, ...], spec: BlockSpec) -> tuple[int, ...]:
    M = spec.M
    if spec.mode == "2d":
        if len(dims) != 2:
            raise DimensionError(f"2d mode needs a matrix, got shape {dims}")
        T, F = dims
        if spec.remainder_policy == "strict" and (T % M or F % M):
            raise DimensionError(f"T={T}, F={F} not divisible by M={M}")
        return (T // M, F // M)
    if len(dims) != 1:
        raise DimensionError(f"1d mode needs a sequence, got shape {dims}")
    (N,) = dims
    if spec.remainder_policy == "strict" and N % M:
        raise DimensionError(f"N={N} not divisible by M={M}")
    return (N // M,)


def partition(X, spec: BlockSpec) -> BlockGrid:
    X = np.asarray(X)
    dims = tuple(X.shape)
    grid = grid_shape(dims, spec)
    M = spec.M
    if spec.mode == "2d":
        rows, cols = grid
        core = X[: rows * M, : cols * M]
        blocks = core.reshape(rows, M, cols, M).transpose(0, 2, 1, 3).reshape(rows * cols, M * M)
        remainder = (X[rows * M :, :].copy(), X[: rows * M, cols * M :].copy())
    else:
        (count,) = grid
        blocks = X[: count * M].reshape(count, M)
        remainder = (X[count * M :].copy(),)
    return BlockGrid(np.ascontiguousarray(blocks).copy(), grid, remainder, dims, spec)


def _check(grid: BlockGrid) -> None:
    spec = grid.spec
    try:
        expected = grid_shape(grid.original_dims, BlockSpec(spec.mode, spec.M, "passthrough"))
    except DimensionError as exc:
        raise StructuralError(str(exc)) from exc
    if tuple(grid.grid_dims) != expected:
        raise StructuralError(f"grid dims {grid.grid_dims} inconsistent with {grid.original_dims}")
    n = int(np.prod(expected))
    if grid.blocks.shape != (n, spec.block_length):
        raise StructuralError(
            f"blocks have shape {grid.blocks.shape}, expected {(n, spec.block_length)}"
        )
    M = spec.M
    if spec.mode == "2d":
        T, F = grid.original_dims
        rows, cols = expected
        shapes = ((T - rows * M, F), (rows * M, F - cols * M))
    else:
        shapes = ((grid.original_dims[0] - expected[0] * M,),)
    if len(grid.remainder) != len(shapes) or any(
        r.shape != s for r, s in zip(grid.remainder, shapes)
    ):
        raise StructuralError("remainder shape inconsistent with original dims")


def assemble(grid: BlockGrid) -> np.ndarray:
    _check(grid)
    M = grid.spec.M
    out = np.empty(grid.original_dims, dtype=np.result_type(grid.blocks, *grid.remainder))
    if grid.spec.mode == "2d":
        rows, cols = grid.grid_dims
        out[: rows * M, : cols * M] = (
            grid.blocks.reshape(rows, cols, M, M).transpose(0, 2, 1, 3).reshape(rows * M, cols * M)
        )
        out[rows * M :, :] = grid.remainder[0]
        out[: rows * M, cols * M :] = grid.remainder[1]
    else:
        (count,) = grid.grid_dims
        out[: count * M] = grid.blocks.reshape(-1)
        out[count * M :] = grid.remainder[0]
    return out
