"""Channel permutation search for N:M sparsity.

With an N:M pattern, each row of the score matrix is split into consecutive
groups of m_group input channels and only the n_keep highest-scoring entries
of each group survive. The retained objective of a permutation is the total
score kept under that grouping; since the total score is fixed, maximizing
retained score is the same as minimizing pruned score.

Two search stages run over the columns of the score matrix:

  1. global_naive_shuffle sorts channels by their column mean (descending)
     and deals them round-robin across the G = C / m_group groups, so
     channels with similar means land in different groups.
  2. local_block_shuffle partitions the arranged channels into consecutive
     blocks and, within each block, repeatedly applies the single pairwise
     column swap with the largest strict objective improvement, stopping
     when no swap improves the block objective by more than a 1e-9 relative
     threshold or when the per-block iteration cap is reached.

channel_shuffle chains the two, falling back to the identity arrangement as
the local-search start whenever the global stage fails to beat it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .metrics import MetricMatrix

RELATIVE_IMPROVEMENT_THRESHOLD = 1e-9

DEFAULT_BLOCK_SIZE = 256


@dataclass(frozen=True)
class SparsityPattern:
    """Keep n_keep of every m_group consecutive channels (e.g. 2 of 4)."""

    n_keep: int
    m_group: int

    def __post_init__(self):
        if self.m_group < 2:
            raise ValidationError(f"m_group must be >= 2, got {self.m_group}")
        # n_keep == m_group is allowed programmatically as a no-prune debug
        # mode; the CLI only accepts strict patterns (n_keep < m_group).
        if not 1 <= self.n_keep <= self.m_group:
            raise ValidationError(
                f"n_keep must be in [1, m_group], got {self.n_keep}:{self.m_group}"
            )

    @classmethod
    def parse(cls, text: str) -> "SparsityPattern":
        parts = text.split(":")
        if len(parts) != 2:
            raise ValidationError(f"pattern must look like 'N:M', got {text!r}")
        try:
            n, m = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise ValidationError(f"pattern must be two integers 'N:M', got {text!r}") from exc
        if not 1 <= n < m:
            raise ValidationError(f"pattern requires 1 <= N < M, got {text!r}")
        return cls(n_keep=n, m_group=m)

    def __str__(self) -> str:
        return f"{self.n_keep}:{self.m_group}"


@dataclass(frozen=True, eq=False)
class Permutation:
    """A column arrangement: position p holds original channel order[p].

    objective_before is the retained objective of the arrangement the search
    started from; objective_after belongs to the returned order. trace holds
    the running objective, one entry per accepted swap after the initial
    value, and is strictly increasing.
    """

    order: np.ndarray
    global_applied: bool
    local_applied: bool
    objective_before: float
    objective_after: float
    swaps_applied: int = 0
    trace: tuple[float, ...] = field(default=())

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64)
        object.__setattr__(self, "order", order)
        c = order.size
        if not np.array_equal(np.sort(order), np.arange(c)):
            raise ValidationError("permutation order must be a bijection over channels")

    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.order)
        inv[self.order] = np.arange(self.order.size)
        return inv


def _scores_of(xi) -> np.ndarray:
    if isinstance(xi, MetricMatrix):
        return xi.scores
    arr = np.asarray(xi, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"scores must be 2-D, got shape {arr.shape}")
    return arr


def _order_of(order, channels: int) -> np.ndarray:
    if isinstance(order, Permutation):
        arr = order.order
    else:
        arr = np.asarray(order, dtype=np.int64)
    if arr.shape != (channels,):
        raise ValidationError(f"order must have shape ({channels},), got {arr.shape}")
    if not np.array_equal(np.sort(arr), np.arange(channels)):
        raise ValidationError("order must be a bijection over channels")
    return arr


def identity_permutation(channels: int) -> np.ndarray:
    return np.arange(channels, dtype=np.int64)


def _check_divisible(channels: int, pat: SparsityPattern) -> None:
    if channels % pat.m_group != 0:
        raise ValidationError(
            f"channel count {channels} is not divisible by group size {pat.m_group}"
        )


def retained_objective(xi, order, pat: SparsityPattern) -> float:
    """Total score kept by N:M pruning under the given column arrangement."""
    scores = _scores_of(xi)
    rows, channels = scores.shape
    _check_divisible(channels, pat)
    arr = _order_of(order, channels)
    grouped = scores[:, arr].reshape(rows, channels // pat.m_group, pat.m_group)
    top = np.sort(grouped, axis=2)[:, :, pat.m_group - pat.n_keep:]
    return float(top.sum())


def pruned_objective(xi, order, pat: SparsityPattern) -> float:
    """Total score removed by N:M pruning; retained + pruned = total score."""
    scores = _scores_of(xi)
    return float(scores.sum()) - retained_objective(xi, order, pat)


def global_naive_shuffle(xi, pat: SparsityPattern) -> Permutation:
    """Sort channels by column mean (descending, ties keep the lower index)
    and deal them round-robin across the G = C / m_group groups."""
    scores = _scores_of(xi)
    rows, channels = scores.shape
    _check_divisible(channels, pat)
    groups = channels // pat.m_group
    means = scores.mean(axis=0)
    ranked = np.argsort(-means, kind="stable")
    # rank i goes to group (i mod G) at slot (i div G)
    order = ranked.reshape(pat.m_group, groups).T.reshape(-1).astype(np.int64)
    before = retained_objective(scores, identity_permutation(channels), pat)
    after = retained_objective(scores, order, pat)
    return Permutation(
        order=order,
        global_applied=True,
        local_applied=False,
        objective_before=before,
        objective_after=after,
    )


def _block_greedy(block: np.ndarray, pat: SparsityPattern, max_iters: int):
    """Greedy largest-improvement pairwise swap search on one block.

    `block` ([rows, B] f64) is mutated in place. Returns the within-block
    position permutation, the number of accepted swaps, and the block
    objective after each accepted swap. Candidate deltas are maintained
    incrementally: a swap only invalidates entries involving the two
    affected groups.
    """
    rows, width = block.shape
    n, m = pat.n_keep, pat.m_group
    groups = width // m
    pos = np.arange(width, dtype=np.int64)
    kept_per_group = np.sort(block.reshape(rows, groups, m), axis=2)[:, :, m - n:].sum(axis=(0, 2))
    if groups < 2 or n == m:
        return pos, 0, [], float(kept_per_group.sum())

    # Per position u: statistics of its group's other m-1 columns, per row.
    # Replacing u's column with values v keeps pref_n1 + v when v >= nth
    # (v enters the top n) and pref_n otherwise.
    nth = np.empty((rows, width))
    pref_n = np.empty((rows, width))
    pref_n1 = np.empty((rows, width))

    def refresh_group(g: int) -> None:
        cols = block[:, g * m:(g + 1) * m]
        kept_per_group[g] = np.sort(cols, axis=1)[:, m - n:].sum()
        for slot in range(m):
            rest = np.sort(np.delete(cols, slot, axis=1), axis=1)[:, ::-1]
            u = g * m + slot
            nth[:, u] = rest[:, n - 1]
            pref_n[:, u] = rest[:, :n].sum(axis=1)
            pref_n1[:, u] = rest[:, :n - 1].sum(axis=1)

    for g in range(groups):
        refresh_group(g)

    # replaced[u, q]: kept sum of u's group when u's column holds column q's values
    replaced = np.empty((width, width))

    def refresh_replaced_row(u: int) -> None:
        take = block >= nth[:, u][:, None]
        replaced[u, :] = np.where(take, pref_n1[:, u][:, None] + block, pref_n[:, u][:, None]).sum(axis=0)

    def refresh_replaced_col(u: int) -> None:
        col = block[:, u][:, None]
        replaced[:, u] = np.where(col >= nth, pref_n1 + col, pref_n).sum(axis=0)

    for u in range(width):
        refresh_replaced_row(u)

    group_of = np.arange(width) // m
    same_group = group_of[:, None] == group_of[None, :]

    def delta_row(u: int, gk_pos: np.ndarray) -> np.ndarray:
        row = replaced[u, :] + replaced[:, u] - gk_pos[u] - gk_pos
        row[same_group[u]] = -np.inf
        return row

    gk_pos = np.repeat(kept_per_group, m)
    delta = replaced + replaced.T - gk_pos[:, None] - gk_pos[None, :]
    delta[same_group] = -np.inf

    swaps = 0
    objectives = []
    while swaps < max_iters:
        flat = int(np.argmax(delta))
        p, q = divmod(flat, width)
        best = float(delta[p, q])
        block_obj = float(kept_per_group.sum())
        if not best > RELATIVE_IMPROVEMENT_THRESHOLD * abs(block_obj):
            break
        block[:, [p, q]] = block[:, [q, p]]
        pos[[p, q]] = pos[[q, p]]
        swaps += 1
        g1, g2 = p // m, q // m
        refresh_group(g1)
        refresh_group(g2)
        gk_pos = np.repeat(kept_per_group, m)
        touched = list(range(g1 * m, (g1 + 1) * m)) + list(range(g2 * m, (g2 + 1) * m))
        for u in touched:
            refresh_replaced_row(u)
            refresh_replaced_col(u)
        for u in touched:
            row = delta_row(u, gk_pos)
            delta[u, :] = row
            delta[:, u] = row
        objectives.append(float(kept_per_group.sum()))
    return pos, swaps, objectives, float(kept_per_group.sum())


def local_block_shuffle(xi, start, pat: SparsityPattern,
                        block_size: int = DEFAULT_BLOCK_SIZE,
                        max_iters: int | None = None) -> Permutation:
    """Greedy within-block pairwise swap search starting from `start`.

    Blocks are consecutive runs of block_size channels in the arranged
    order (the final block may be shorter); each accepted swap must improve
    the block objective by more than 1e-9 relative. The per-block swap cap
    defaults to 10x the block's width.
    """
    scores = _scores_of(xi)
    rows, channels = scores.shape
    _check_divisible(channels, pat)
    if block_size < pat.m_group or block_size % pat.m_group != 0:
        raise ValidationError(
            f"block size must be a positive multiple of m_group, got {block_size}"
        )
    if max_iters is not None and max_iters < 0:
        raise ValidationError(f"max_iters must be >= 0, got {max_iters}")
    start_order = _order_of(start, channels)
    was_global = isinstance(start, Permutation) and start.global_applied

    arranged = scores[:, start_order].astype(np.float64)
    order = start_order.copy()
    starts = list(range(0, channels, block_size))
    # Objective bookkeeping: per-block retained sums; trace entries are the
    # sum over blocks so every accepted swap appends a strictly larger value.
    block_slices = [slice(s, min(s + block_size, channels)) for s in starts]
    block_objs = []
    for sl in block_slices:
        width = sl.stop - sl.start
        grouped = arranged[:, sl].reshape(rows, width // pat.m_group, pat.m_group)
        block_objs.append(float(np.sort(grouped, axis=2)[:, :, pat.m_group - pat.n_keep:].sum()))
    trace = [float(np.sum(block_objs))]
    total_swaps = 0
    for b, sl in enumerate(block_slices):
        width = sl.stop - sl.start
        cap = 10 * width if max_iters is None else max_iters
        sub = np.ascontiguousarray(arranged[:, sl])
        pos, swaps, objectives, final_obj = _block_greedy(sub, pat, cap)
        if swaps:
            order[sl] = order[sl][pos]
            arranged[:, sl] = sub
            for obj in objectives:
                block_objs[b] = obj
                trace.append(float(np.sum(block_objs)))
            block_objs[b] = final_obj
            total_swaps += swaps
    before = retained_objective(scores, start_order, pat)
    after = retained_objective(scores, order, pat)
    return Permutation(
        order=order,
        global_applied=was_global,
        local_applied=True,
        objective_before=before,
        objective_after=after,
        swaps_applied=total_swaps,
        trace=tuple(trace),
    )


def channel_shuffle(xi, pat: SparsityPattern,
                    block_size: int = DEFAULT_BLOCK_SIZE,
                    max_iters: int | None = None) -> Permutation:
    """Global round-robin arrangement followed by local block search.

    If the global stage does not beat the identity arrangement, the local
    search restarts from identity instead, so the result never falls below
    the unshuffled objective. objective_before reports the identity
    objective, objective_after the final one.
    """
    scores = _scores_of(xi)
    rows, channels = scores.shape
    _check_divisible(channels, pat)
    identity = identity_permutation(channels)
    identity_obj = retained_objective(scores, identity, pat)
    global_perm = global_naive_shuffle(scores, pat)
    if global_perm.objective_after < identity_obj:
        start = Permutation(
            order=identity,
            global_applied=False,
            local_applied=False,
            objective_before=identity_obj,
            objective_after=identity_obj,
        )
    else:
        start = global_perm
    local = local_block_shuffle(scores, start, pat, block_size=block_size, max_iters=max_iters)
    return Permutation(
        order=local.order,
        global_applied=start.global_applied,
        local_applied=True,
        objective_before=identity_obj,
        objective_after=local.objective_after,
        swaps_applied=local.swaps_applied,
        trace=local.trace,
    )
