"""Note-onset matching and precision/recall/F1.

An estimated note is correct when its pitch equals a reference note's pitch
and their onsets differ by at most the tolerance (inclusive, 50 ms by
default). Matching is maximum-cardinality bipartite matching, not greedy,
so interleaved onsets pair up optimally. Offsets and velocities are
ignored.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .notes import NoteSequence

DEFAULT_ONSET_TOLERANCE_S = 0.05

# Onset differences are rounded to this many decimals before the tolerance
# comparison, so an exactly-at-tolerance pair is not lost to float noise.
_DIFF_DECIMALS = 6


class EvalError(Exception):
    pass


class EmptyCorpus(EvalError):
    pass


@dataclass(frozen=True)
class MatchResult:
    pairs: tuple[tuple[int, int], ...]
    unmatched_ref: tuple[int, ...]
    unmatched_est: tuple[int, ...]
    onset_tolerance_s: float

    @property
    def n_ref(self) -> int:
        return len(self.pairs) + len(self.unmatched_ref)

    @property
    def n_est(self) -> int:
        return len(self.pairs) + len(self.unmatched_est)


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    n_ref: int
    n_est: int
    n_match: int


def _hopcroft_karp(adjacency: list[list[int]], n_right: int) -> list[int]:
    """Maximum bipartite matching; returns match_left (right index or -1)."""
    inf = float("inf")
    n_left = len(adjacency)
    match_left = [-1] * n_left
    match_right = [-1] * n_right
    dist = [0.0] * n_left

    def bfs() -> bool:
        queue = deque()
        for u in range(n_left):
            if match_left[u] == -1:
                dist[u] = 0.0
                queue.append(u)
            else:
                dist[u] = inf
        found = False
        while queue:
            u = queue.popleft()
            for v in adjacency[u]:
                w = match_right[v]
                if w == -1:
                    found = True
                elif dist[w] == inf:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return found

    def dfs(root: int) -> bool:
        # Iterative so adversarially long augmenting paths cannot overflow
        # the interpreter stack.
        frames = [(root, iter(adjacency[root]))]
        chosen: list[int] = []
        while frames:
            u, edges = frames[-1]
            pushed = False
            for v in edges:
                w = match_right[v]
                if w == -1:
                    chosen.append(v)
                    for (uu, _), vv in zip(frames, chosen):
                        match_left[uu] = vv
                        match_right[vv] = uu
                    return True
                if dist[w] == dist[u] + 1:
                    chosen.append(v)
                    frames.append((w, iter(adjacency[w])))
                    pushed = True
                    break
            if not pushed:
                dist[u] = inf
                frames.pop()
                if chosen:
                    chosen.pop()
        return False

    while bfs():
        for u in range(n_left):
            if match_left[u] == -1:
                dfs(u)
    return match_left


def match_notes(ref: NoteSequence, est: NoteSequence,
                onset_tol: float = DEFAULT_ONSET_TOLERANCE_S) -> MatchResult:
    """Optimal pairing of reference and estimated notes.

    Candidate pairs need equal pitch and an onset difference of at most
    ``onset_tol`` (boundary inclusive); among all feasible pairings one of
    maximum cardinality is returned.
    """
    if onset_tol <= 0:
        raise ValueError(f"onset tolerance must be positive, got {onset_tol}")

    by_pitch: dict[int, list[int]] = {}
    for j, note in enumerate(est.notes):
        by_pitch.setdefault(note.pitch, []).append(j)

    adjacency: list[list[int]] = []
    for note in ref.notes:
        candidates = []
        for j in by_pitch.get(note.pitch, ()):
            diff = round(abs(note.onset - est.notes[j].onset), _DIFF_DECIMALS)
            if diff <= onset_tol:
                candidates.append(j)
        adjacency.append(candidates)

    match_left = _hopcroft_karp(adjacency, len(est.notes))
    pairs = tuple((i, j) for i, j in enumerate(match_left) if j != -1)
    matched_est = {j for _, j in pairs}
    return MatchResult(
        pairs=pairs,
        unmatched_ref=tuple(i for i, j in enumerate(match_left) if j == -1),
        unmatched_est=tuple(j for j in range(len(est.notes)) if j not in matched_est),
        onset_tolerance_s=onset_tol,
    )


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; works on the [0, 1] scale and on percentages alike."""
    if precision + recall <= 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def metrics_from_counts(n_ref: int, n_est: int, n_match: int) -> Metrics:
    if n_ref == 0 and n_est == 0:
        return Metrics(1.0, 1.0, 1.0, 0, 0, 0)
    precision = n_match / n_est if n_est > 0 else 0.0
    recall = n_match / n_ref if n_ref > 0 else 0.0
    return Metrics(precision, recall, f1_score(precision, recall),
                   n_ref, n_est, n_match)


def prf(match: MatchResult) -> Metrics:
    """Precision/recall/F1 from a match result.

    Conventions: both sides empty scores perfect; a single empty side gives
    that side's ratio as zero.
    """
    return metrics_from_counts(match.n_ref, match.n_est, len(match.pairs))


def evaluate(ref: NoteSequence, est: NoteSequence,
             onset_tol: float = DEFAULT_ONSET_TOLERANCE_S) -> Metrics:
    return prf(match_notes(ref, est, onset_tol))


def aggregate(per_file: list[Metrics], mode: str = "macro") -> Metrics:
    """Corpus-level metrics: unweighted mean (macro) or recomputation from
    summed counts (micro). Counts are summed in both modes."""
    if not per_file:
        raise EmptyCorpus("no per-file metrics to aggregate")
    n_ref = sum(m.n_ref for m in per_file)
    n_est = sum(m.n_est for m in per_file)
    n_match = sum(m.n_match for m in per_file)
    if mode == "micro":
        return metrics_from_counts(n_ref, n_est, n_match)
    if mode == "macro":
        k = len(per_file)
        return Metrics(
            precision=sum(m.precision for m in per_file) / k,
            recall=sum(m.recall for m in per_file) / k,
            f1=sum(m.f1 for m in per_file) / k,
            n_ref=n_ref, n_est=n_est, n_match=n_match,
        )
    raise ValueError(f"unknown aggregation mode {mode!r}")
