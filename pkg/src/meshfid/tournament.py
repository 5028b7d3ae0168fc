"""Swiss-tournament pairwise annotation protocol: pairing generation,
vote recording, win-count normalization, IQR outlier removal, and
confidence-interval statistics.

Pairing rule: sort by (wins desc, id asc), pair adjacent entries, avoid
rematches by scanning down for the nearest unplayed opponent, and give the
bye (neither win nor loss) to the lowest-ranked participant who has not had
one.  Rematches are allowed only once every non-rematch option is
exhausted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Tournament",
    "Vote",
    "AnnotationRecord",
    "TournamentError",
    "new_tournament",
    "next_pairings",
    "record_result",
    "final_scores",
    "remove_outliers",
    "confidence_interval",
    "aggregate_dataset",
    "simulate_tournament",
]


class TournamentError(Exception):
    pass


@dataclass(frozen=True)
class Vote:
    session: str
    round: int
    left: str
    right: str
    winner: str
    timestamp: float = 0.0
    subject: str = ""

    def __post_init__(self):
        if self.winner not in (self.left, self.right):
            raise TournamentError(f"winner {self.winner!r} not in pair")

    def to_dict(self) -> dict:
        return {
            "session": self.session, "round": self.round, "left": self.left,
            "right": self.right, "winner": self.winner,
            "timestamp": self.timestamp, "subject": self.subject,
        }

    @staticmethod
    def from_dict(d: dict) -> "Vote":
        return Vote(**d)


@dataclass
class Tournament:
    participants: list
    rounds_total: int = 6
    wins: dict = field(default_factory=dict)
    played: set = field(default_factory=set)  # frozenset pairs already matched
    byes: dict = field(default_factory=dict)  # participant -> bye count
    rounds_completed: int = 0
    pending: list = field(default_factory=list)  # unresolved pairs of the current round
    current_bye: str | None = None

    def complete(self) -> bool:
        return self.rounds_completed >= self.rounds_total


def new_tournament(participants, rounds_total: int = 6) -> Tournament:
    participants = sorted(participants)
    if len(participants) < 2:
        raise TournamentError("need at least 2 participants")
    if len(set(participants)) != len(participants):
        raise TournamentError("duplicate participant ids")
    return Tournament(
        participants=participants,
        rounds_total=rounds_total,
        wins={p: 0 for p in participants},
    )


def _pair_ranked(ranked: list, played: set) -> list:
    """Adjacent pairing with rematch avoidance by nearest-forward swap;
    falls back to a rematch when no fresh opponent remains."""
    pairs = []
    pool = list(ranked)
    while pool:
        a = pool.pop(0)
        pick = None
        for j, b in enumerate(pool):
            if frozenset((a, b)) not in played:
                pick = j
                break
        if pick is None:
            pick = 0  # rematch unavoidable
        pairs.append((a, pool.pop(pick)))
    return pairs


def next_pairings(t: Tournament) -> list:
    """Generate the next round's pairings (caches them as pending)."""
    if t.complete():
        raise TournamentError("tournament already complete")
    if t.pending:
        return list(t.pending)
    ranked = sorted(t.participants, key=lambda p: (-t.wins[p], p))
    bye = None
    if len(ranked) % 2 == 1:
        # lowest-ranked participant without a prior bye
        for p in reversed(ranked):
            if p not in t.byes:
                bye = p
                break
        if bye is None:
            bye = ranked[-1]
        ranked = [p for p in ranked if p != bye]
        t.byes[bye] = t.byes.get(bye, 0) + 1
    t.current_bye = bye
    t.pending = _pair_ranked(ranked, t.played)
    return list(t.pending)


def record_result(t: Tournament, vote: Vote) -> None:
    """Apply one vote to a pending pairing; closes the round when its last
    pairing resolves."""
    if not t.pending:
        raise TournamentError("no pending pairings; call next_pairings first")
    key = frozenset((vote.left, vote.right))
    match = next((p for p in t.pending if frozenset(p) == key), None)
    if match is None:
        if key in t.played:
            raise TournamentError(f"duplicate vote for pair {sorted(key)}")
        raise TournamentError(f"pair {sorted(key)} is not pending in this round")
    t.pending.remove(match)
    t.played.add(key)
    t.wins[vote.winner] += 1
    if not t.pending:
        t.rounds_completed += 1
        t.current_bye = None


def final_scores(t: Tournament) -> dict:
    """wins normalized by rounds actually played; requires completion.

    A bye is neither a win nor a loss, so byed rounds are excluded from the
    denominator (dividing by rounds_total would silently score a bye as a
    loss).  Without byes this is exactly wins / rounds_total.
    """
    if not t.complete():
        raise TournamentError(
            f"tournament incomplete: {t.rounds_completed}/{t.rounds_total} rounds"
        )
    return {
        p: t.wins[p] / max(1, t.rounds_total - t.byes.get(p, 0)) for p in t.participants
    }


def simulate_tournament(participants, comparator, rounds_total: int = 6, session: str = "sim") -> Tournament:
    """Run a full tournament with a deterministic comparator
    (comparator(a, b) -> winning id)."""
    t = new_tournament(participants, rounds_total)
    while not t.complete():
        for a, b in next_pairings(t):
            record_result(t, Vote(session=session, round=t.rounds_completed + 1,
                                  left=a, right=b, winner=comparator(a, b)))
    return t


# ---- score statistics ----------------------------------------------------


def remove_outliers(scores) -> tuple[list, list, dict]:
    """Drop scores outside [Q1 - 1.5 IQR, Q3 + 1.5 IQR].

    Quartiles use linear interpolation between order statistics.  Fewer than
    4 scores: nothing is removed and the result is flagged.
    """
    scores = [float(s) for s in scores]
    if len(scores) < 4:
        return scores, [], {"method": "linear", "applied": False, "reason": "fewer than 4 scores"}
    q1, q3 = np.percentile(scores, [25, 75], method="linear")
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    kept = [s for s in scores if lo <= s <= hi]
    removed = [s for s in scores if not lo <= s <= hi]
    return kept, removed, {"method": "linear", "applied": True, "fence": [float(lo), float(hi)]}


def confidence_interval(scores, z: float = 1.96) -> float:
    """Half-width z * sigma / sqrt(n) with the sample (n-1) standard
    deviation."""
    scores = np.asarray(list(scores), dtype=np.float64)
    if scores.size < 2:
        raise TournamentError("confidence interval needs at least 2 scores")
    return float(z * scores.std(ddof=1) / np.sqrt(scores.size))


@dataclass(frozen=True)
class AnnotationRecord:
    mesh_id: str
    subject: str
    score: float
    outlier: bool = False

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise TournamentError("normalized score must lie in [0,1]")


def aggregate_dataset(tournaments_by_subject: dict) -> dict:
    """Aggregate completed per-subject tournaments of one object group.

    Input: {subject_id: Tournament}.  Output: per-mesh mean of kept scores,
    per-mesh CI, and dataset-level mean CI before/after outlier removal plus
    the removal fraction.
    """
    if not tournaments_by_subject:
        raise TournamentError("no completed tournaments")
    per_mesh: dict[str, list[AnnotationRecord]] = {}
    for subject, t in sorted(tournaments_by_subject.items()):
        for mesh_id, score in final_scores(t).items():
            per_mesh.setdefault(mesh_id, []).append(
                AnnotationRecord(mesh_id=mesh_id, subject=subject, score=score)
            )
    meshes = {}
    total, removed_count = 0, 0
    cis_before, cis_after = [], []
    for mesh_id in sorted(per_mesh):
        records = per_mesh[mesh_id]
        raw = [r.score for r in records]
        kept, removed, info = remove_outliers(raw)
        total += len(raw)
        removed_count += len(removed)
        entry = {
            "score": float(np.mean(kept)),
            "n_subjects": len(raw),
            "n_removed": len(removed),
            "quartile_method": info["method"],
        }
        if len(raw) >= 2:
            cis_before.append(confidence_interval(raw))
            entry["ci_before"] = cis_before[-1]
        if len(kept) >= 2:
            cis_after.append(confidence_interval(kept))
            entry["ci"] = cis_after[-1]
        else:
            entry["ci"] = None  # undefined with a single kept score
        meshes[mesh_id] = entry
    return {
        "meshes": meshes,
        "mean_ci_before": float(np.mean(cis_before)) if cis_before else None,
        "mean_ci_after": float(np.mean(cis_after)) if cis_after else None,
        "removed_fraction": removed_count / total if total else 0.0,
    }
