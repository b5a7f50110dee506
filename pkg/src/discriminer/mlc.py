"""Maximum-likelihood monotone conjunctive discriminants.

For two labels the problem is the 0/1 program

    max  sum_i (1 - w_i) log r_i + w_i log(1 - r_i)
    s.t. (1/|R_i|) sum_{k in R_i} x_k <= w_i <= sum_{k in R_i} x_k

where ``x_k`` selects predicate ``k`` as a conjunct, ``R_i`` is the set of
predicates false in trace ``i`` and ``r_i`` is the trace's mass on the first
label. Given the selected set ``S``, every ``w_i`` is determined
(``w_i = 1`` iff ``S`` meets ``R_i``), so the program is solved exactly as a
subset optimization by best-first branch and bound over predicate inclusion.

Objective values are compared through :func:`objective`, which sums the
per-trace log terms with :func:`math.fsum`. The correctly rounded sum does not
depend on term order, so merged (preprocessed) instances and the brute-force
oracle produce bit-identical optima.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from itertools import chain
from typing import Sequence

import numpy as np

from .discriminant import PROB_FLOOR, TRUE, Conjunction, Discriminant

__all__ = [
    "IlpInstance",
    "Reduced",
    "Solution",
    "MLCResult",
    "build_instance",
    "objective",
    "preprocess",
    "solve_two_label",
    "solve_preprocessed",
    "brute_force_two_label",
    "learn_conjunctive",
]


def _bits(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def _mask(indices) -> int:
    m = 0
    for j in indices:
        m |= 1 << int(j)
    return m


def _row_masks(M: np.ndarray) -> list[int]:
    """Bitmask (bit j = column j) of every row of a boolean matrix."""
    packed = np.packbits(np.asarray(M, dtype=bool), axis=1, bitorder="little")
    return [int.from_bytes(row.tobytes(), "little") for row in packed]


def _safe_log(p: float) -> float:
    return math.log(min(max(p, PROB_FLOOR), 1.0))


@dataclass(frozen=True)
class IlpInstance:
    """Two-label instance. Trace ``i`` contributes ``log_r[i]`` terms when it keeps
    the first label (``w_i = 0``) and ``log_rest[i]`` terms otherwise.

    Raw instances carry one term per trace; preprocessing merges traces by
    concatenating their terms. ``constant`` holds terms of traces whose ``w``
    is fixed to 0.
    """

    m: int
    falsified: tuple[int, ...]  # bitmask of R_i
    log_r: tuple[tuple[float, ...], ...]
    log_rest: tuple[tuple[float, ...], ...]
    constant: tuple[float, ...] = ()
    r: tuple[float, ...] | None = None

    @property
    def n(self) -> int:
        return len(self.falsified)

    def falsified_sets(self) -> list[frozenset[int]]:
        return [frozenset(_bits(R)) for R in self.falsified]


def build_instance(P: np.ndarray, D: np.ndarray, label_index: int, rows: Sequence[int] | None = None) -> IlpInstance:
    """Instance separating ``label_index`` from every other label.

    ``P`` is the (N, m) predicate table, ``D`` the (N, K) label distributions.
    """
    P = np.asarray(P, dtype=bool)
    D = np.asarray(D, dtype=float)
    rows = np.arange(P.shape[0]) if rows is None else np.asarray(rows, dtype=np.int64)
    others = np.delete(D[rows], label_index, axis=1)
    log_r, log_rest, rs = [], [], []
    for i, row in enumerate(rows.tolist()):
        r = float(D[row, label_index])
        rs.append(r)
        log_r.append((_safe_log(r),))
        log_rest.append((_safe_log(math.fsum(others[i].tolist())),))
    return IlpInstance(
        m=P.shape[1],
        falsified=tuple(_row_masks(~P[rows])),
        log_r=tuple(log_r),
        log_rest=tuple(log_rest),
        r=tuple(rs),
    )


def objective(inst: IlpInstance, chosen: int) -> float:
    """Log-likelihood of selecting the predicate bitmask ``chosen``."""
    terms = chain(
        inst.constant,
        *(inst.log_rest[i] if R & chosen else inst.log_r[i] for i, R in enumerate(inst.falsified)),
    )
    return math.fsum(terms)


@dataclass(frozen=True)
class Reduced:
    instance: IlpInstance
    predicate_map: tuple[int, ...]  # reduced predicate -> original index
    trace_groups: tuple[tuple[int, ...], ...]  # reduced trace -> original traces
    fixed_traces: tuple[int, ...]  # original traces with w forced to 0
    excluded: tuple[int, ...]  # original predicates appearing in no R_i

    def expand(self, reduced_mask: int) -> int:
        return _mask(self.predicate_map[j] for j in _bits(reduced_mask))


def preprocess(inst: IlpInstance) -> Reduced:
    """Shrink an instance without changing its optimum.

    * predicates false in no trace are excluded (they never change any w_i);
    * predicates with identical columns collapse onto the lowest index;
    * traces with identical falsified sets merge, concatenating their terms;
    * traces with an empty falsified set have w_i fixed to 0.
    """
    used = 0
    for R in inst.falsified:
        used |= R
    excluded = tuple(j for j in range(inst.m) if not (used >> j) & 1)

    columns: dict[bytes, int] = {}
    if inst.n and used:
        nbytes = (inst.m + 7) // 8
        raw = b"".join(R.to_bytes(nbytes, "little") for R in inst.falsified)
        F = np.unpackbits(np.frombuffer(raw, dtype=np.uint8).reshape(inst.n, nbytes), axis=1, bitorder="little")
        cols = np.packbits(F[:, : inst.m].T, axis=1)
        for j in _bits(used):
            columns.setdefault(cols[j].tobytes(), j)
    reps = sorted(columns.values())
    new_index = {j: k for k, j in enumerate(reps)}
    rep_mask = _mask(reps)

    constant = list(inst.constant)
    fixed = []
    groups: dict[int, list[int]] = {}
    for i, R in enumerate(inst.falsified):
        R_rep = R & rep_mask
        if R_rep == 0:
            constant.extend(inst.log_r[i])
            fixed.append(i)
            continue
        groups.setdefault(R_rep, []).append(i)

    falsified, log_r, log_rest, trace_groups = [], [], [], []
    for R_rep, members in groups.items():
        falsified.append(_mask(new_index[j] for j in _bits(R_rep)))
        log_r.append(tuple(chain.from_iterable(inst.log_r[i] for i in members)))
        log_rest.append(tuple(chain.from_iterable(inst.log_rest[i] for i in members)))
        trace_groups.append(tuple(members))

    reduced = IlpInstance(
        m=len(reps),
        falsified=tuple(falsified),
        log_r=tuple(log_r),
        log_rest=tuple(log_rest),
        constant=tuple(constant),
    )
    return Reduced(
        instance=reduced,
        predicate_map=tuple(reps),
        trace_groups=tuple(trace_groups),
        fixed_traces=tuple(fixed),
        excluded=excluded,
    )


@dataclass(frozen=True)
class Solution:
    conjuncts: tuple[int, ...]
    log_likelihood: float
    optimal: bool = True
    nodes: int = 0
    root_bound: float = math.inf

    @property
    def formula(self) -> Conjunction:
        return Conjunction(self.conjuncts)


def _better(val: float, mask: int, best_val: float, best_mask: int) -> bool:
    if val != best_val:
        return val > best_val
    c, bc = mask.bit_count(), best_mask.bit_count()
    if c != bc:
        return c < bc
    return tuple(_bits(mask)) < tuple(_bits(best_mask))


def _greedy(inst: IlpInstance, A, B) -> int:
    """Add predicates one at a time while the objective improves."""
    chosen = 0
    w1 = 0  # bitmask over traces with w_i = 1
    cand = 0
    for R in inst.falsified:
        cand |= R
    n = inst.n
    while cand:
        best_gain, best_j = 0.0, -1
        for j in _bits(cand):
            bit = 1 << j
            gain = 0.0
            for i in range(n):
                if not (w1 >> i) & 1 and inst.falsified[i] & bit:
                    gain += B[i] - A[i]
            if gain > best_gain + 1e-12:
                best_gain, best_j = gain, j
        if best_j < 0:
            break
        bit = 1 << best_j
        chosen |= bit
        cand &= ~bit
        for i in range(n):
            if inst.falsified[i] & bit:
                w1 |= 1 << i
    return chosen


def _exact_root_bound(inst: IlpInstance) -> float:
    """Sum of the better side of every free trace, rounded once.

    Sides are compared by the exact sign of their difference so the result is
    never below the fsum-evaluated objective of any predicate set.
    """
    terms = list(inst.constant)
    for R, a, b in zip(inst.falsified, inst.log_r, inst.log_rest):
        if R and math.fsum([*b, *(-t for t in a)]) > 0.0:
            terms.extend(b)
        else:
            terms.extend(a)
    return math.fsum(terms)


def solve_two_label(inst: IlpInstance, time_limit_s: float | None = None, deadline: float | None = None) -> Solution:
    """Exact optimum by best-first branch and bound.

    Among optimal predicate sets the smallest one wins, then the
    lexicographically smallest sorted index tuple. With a time limit the best
    incumbent is returned and ``optimal`` is False if the search was cut short.
    """
    if deadline is None and time_limit_s is not None:
        deadline = time.perf_counter() + time_limit_s
    R = inst.falsified
    n = inst.n
    A = [math.fsum(t) for t in inst.log_r]
    B = [math.fsum(t) for t in inst.log_rest]
    Mx = [max(a, b) for a, b in zip(A, B)]
    C = math.fsum(inst.constant)
    scale = abs(C) + sum(abs(a) + abs(b) for a, b in zip(A, B))
    tol = 1e-9 * max(1.0, scale)

    def bound(I: int, F: int):
        s = C
        useful = 0
        for i in range(n):
            Ri = R[i]
            if Ri & I:
                s += B[i]
            elif Ri & F:
                s += Mx[i]
                useful |= Ri
            else:
                s += A[i]
        return s, useful & F

    all_preds = 0
    for Ri in R:
        all_preds |= Ri

    best_mask = 0
    best_val = objective(inst, 0)
    g = _greedy(inst, A, B)
    if g:
        gv = objective(inst, g)
        if _better(gv, g, best_val, best_mask):
            best_val, best_mask = gv, g

    root_bound, root_free = bound(0, all_preds)
    heap = [(-root_bound, 0, 0, root_free)]
    root_bound = _exact_root_bound(inst)
    counter = 1
    nodes = 1
    optimal = True
    while heap:
        if deadline is not None and time.perf_counter() > deadline:
            optimal = False
            break
        negb, _, I, F = heapq.heappop(heap)
        b = -negb
        if b < best_val - tol:
            break  # best-first: every remaining node is worse
        size = I.bit_count()
        if b <= best_val + tol and size + 1 > best_mask.bit_count():
            continue
        if not F:
            continue
        low = F & -F
        rest = F ^ low
        # include the predicate
        I1 = I | low
        b1, F1 = bound(I1, rest)
        nodes += 1
        v1 = objective(inst, I1)
        if _better(v1, I1, best_val, best_mask):
            best_val, best_mask = v1, I1
        heapq.heappush(heap, (-b1, counter, I1, F1))
        counter += 1
        # exclude it
        b0, F0 = bound(I, rest)
        nodes += 1
        heapq.heappush(heap, (-b0, counter, I, F0))
        counter += 1

    return Solution(
        conjuncts=tuple(_bits(best_mask)),
        log_likelihood=best_val,
        optimal=optimal,
        nodes=nodes,
        root_bound=root_bound,
    )


def solve_preprocessed(inst: IlpInstance, time_limit_s: float | None = None, deadline: float | None = None) -> Solution:
    """Preprocess, solve the reduced instance, and map the result back."""
    red = preprocess(inst)
    sol = solve_two_label(red.instance, time_limit_s=time_limit_s, deadline=deadline)
    mask = red.expand(_mask(sol.conjuncts))
    return Solution(
        conjuncts=tuple(_bits(mask)),
        log_likelihood=objective(inst, mask),
        optimal=sol.optimal,
        nodes=sol.nodes,
        root_bound=sol.root_bound,
    )


def brute_force_two_label(inst: IlpInstance) -> Solution:
    """Enumerate all 2^m predicate subsets. Reference oracle for small m."""
    m, n = inst.m, inst.n
    if m > 20:
        raise ValueError("brute force is limited to m <= 20")
    subsets = ((np.arange(1 << m)[:, None] >> np.arange(m)[None, :]) & 1).astype(np.int64)
    Fmat = np.array([[(R >> j) & 1 for j in range(m)] for R in inst.falsified], dtype=np.int64).reshape(n, m)
    W = (subsets @ Fmat.T) > 0
    A = np.array([math.fsum(t) for t in inst.log_r])
    B = np.array([math.fsum(t) for t in inst.log_rest])
    approx = np.where(W, B[None, :], A[None, :]).sum(axis=1) if n else np.zeros(1 << m)
    near = np.flatnonzero(approx >= approx.max() - 1e-6 * max(1.0, np.abs(approx).max()))
    best_mask, best_val = None, -math.inf
    for s in near.tolist():
        v = objective(inst, s)
        if best_mask is None or _better(v, s, best_val, best_mask):
            best_val, best_mask = v, s
    return Solution(conjuncts=tuple(_bits(best_mask)), log_likelihood=best_val, nodes=1 << m)


@dataclass
class MLCResult:
    discriminant: Discriminant
    steps: list[Solution] = field(default_factory=list)
    degenerate_labels: list[int] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return all(s.optimal for s in self.steps)

    @property
    def max_conjuncts(self) -> int:
        return self.discriminant.max_conjuncts()


def learn_conjunctive(
    P: np.ndarray,
    D: np.ndarray,
    names: Sequence[str] = (),
    time_limit_s: float | None = None,
    use_preprocess: bool = True,
) -> MLCResult:
    """Learn <phi_1, ..., phi_{K-1}, true> one label at a time.

    Labels are taken in column order of ``D`` (ascending cluster time). After
    each step the traces satisfying the new formula are removed. When no
    traces remain, the outstanding formulas become the conjunction of all
    predicates.
    """
    P = np.asarray(P, dtype=bool)
    D = np.asarray(D, dtype=float)
    n, m = P.shape
    K = D.shape[1]
    deadline = None if time_limit_s is None else time.perf_counter() + time_limit_s
    solve = solve_preprocessed if use_preprocess else solve_two_label
    remaining = np.arange(n)
    formulas = []
    steps = []
    degenerate = []
    for label in range(K - 1):
        if len(remaining) == 0:
            formulas.append(Conjunction(tuple(range(m))))
            degenerate.append(label)
            continue
        inst = build_instance(P, D, label, rows=remaining)
        sol = solve(inst, deadline=deadline)
        steps.append(sol)
        phi = sol.formula
        formulas.append(phi)
        remaining = remaining[~phi.holds_rows(P[remaining])]
    formulas.append(TRUE)
    psi = Discriminant(formulas=tuple(formulas), attribute_names=tuple(names))
    return MLCResult(discriminant=psi, steps=steps, degenerate_labels=degenerate)
