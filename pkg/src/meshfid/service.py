"""HTTP front end for the annotation engine: serves mesh pairs, records
votes into an append-only JSON-lines log, and exports aggregated scores.

State is file-backed and desk-scale: one vote log plus periodic tournament
snapshots under the store directory.  Replaying the log reconstructs every
tournament exactly.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from pydantic import BaseModel

from .tournament import (
    Tournament,
    TournamentError,
    Vote,
    aggregate_dataset,
    final_scores,
    new_tournament,
    next_pairings,
    record_result,
)
from .train import load_manifest

__all__ = ["AnnotationStore", "create_app"]


@dataclass
class Session:
    session_id: str
    subject: str
    group: str
    tournament: Tournament
    created: float = field(default_factory=time.time)
    updated: float = field(default_factory=time.time)


class AnnotationStore:
    """Vote log + in-memory sessions for one dataset root."""

    def __init__(self, dataset_root, store_dir=None, rounds_total: int = 6):
        self.dataset_root = Path(dataset_root)
        self.store_dir = Path(store_dir) if store_dir else self.dataset_root / "annotations"
        self.store_dir.mkdir(parents=True, exist_ok=True)
        self.rounds_total = rounds_total
        self.manifest = load_manifest(self.dataset_root / "manifest.json")
        self.groups = {
            obj["id"]: [d["path"] for d in obj["distorted"]]
            for obj in self.manifest["objects"]
        }
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()
        self.log_path = self.store_dir / "votes.jsonl"
        self._replay()

    # -- persistence -------------------------------------------------------

    def _replay(self) -> None:
        """Rebuild sessions by replaying the append-only log."""
        if not self.log_path.exists():
            return
        with open(self.log_path) as fh:
            for line in fh:
                rec = json.loads(line)
                if rec["type"] == "session":
                    self._create_session(rec["subject"], rec["group"], rec["session"], log=False)
                elif rec["type"] == "vote":
                    sess = self.sessions[rec["vote"]["session"]]
                    next_pairings(sess.tournament)
                    record_result(sess.tournament, Vote.from_dict(rec["vote"]))

    def _append_log(self, record: dict) -> None:
        with open(self.log_path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    def _snapshot(self, sess: Session) -> None:
        snap = {
            "session": sess.session_id,
            "subject": sess.subject,
            "group": sess.group,
            "wins": sess.tournament.wins,
            "rounds_completed": sess.tournament.rounds_completed,
            "complete": sess.tournament.complete(),
        }
        with open(self.store_dir / f"session_{sess.session_id}.json", "w") as fh:
            json.dump(snap, fh, indent=2, sort_keys=True)

    # -- session lifecycle -------------------------------------------------

    def _create_session(self, subject: str, group: str, session_id: str | None = None, log: bool = True) -> Session:
        if group not in self.groups:
            raise KeyError(group)
        participants = self.groups[group]
        if len(participants) < 2:
            raise TournamentError(f"group {group!r} has fewer than 2 meshes")
        session_id = session_id or uuid.uuid4().hex[:12]
        sess = Session(
            session_id=session_id,
            subject=subject,
            group=group,
            tournament=new_tournament(participants, self.rounds_total),
        )
        self.sessions[session_id] = sess
        if log:
            self._append_log({"type": "session", "session": session_id, "subject": subject, "group": group})
        return sess

    def create_session(self, subject: str, group: str) -> dict:
        with self.lock:
            sess = self._create_session(subject, group)
            pairings = next_pairings(sess.tournament)
            self._snapshot(sess)
            return {"session": sess.session_id, "round": 1, "pairings": [list(p) for p in pairings]}

    def get_next(self, session_id: str) -> dict:
        with self.lock:
            sess = self._get(session_id)
            t = sess.tournament
            if t.complete():
                return {"complete": True, "scores": final_scores(t)}
            pending = next_pairings(t)
            left, right = pending[0]
            return {
                "complete": False,
                "round": t.rounds_completed + 1,
                "rounds_total": t.rounds_total,
                "pair": {
                    "left": left,
                    "right": right,
                    "meshUrlLeft": f"/meshes/{left}",
                    "meshUrlRight": f"/meshes/{right}",
                },
            }

    def post_vote(self, session_id: str, left: str, right: str, winner: str) -> dict:
        with self.lock:
            sess = self._get(session_id)
            t = sess.tournament
            if t.complete():
                raise TournamentError("session already complete")
            next_pairings(t)
            vote = Vote(
                session=session_id,
                round=t.rounds_completed + 1,
                left=left,
                right=right,
                winner=winner,
                timestamp=time.time(),
                subject=sess.subject,
            )
            record_result(t, vote)  # raises on stale/duplicate pairs
            self._append_log({"type": "vote", "vote": vote.to_dict()})
            sess.updated = time.time()
            self._snapshot(sess)
            remaining = len(t.pending)
            return {
                "ok": True,
                "remaining": remaining,
                "round_complete": remaining == 0,
                "complete": t.complete(),
            }

    def export_group(self, group: str) -> dict:
        with self.lock:
            if group not in self.groups:
                raise KeyError(group)
            completed = {
                s.subject + ":" + s.session_id: s.tournament
                for s in self.sessions.values()
                if s.group == group and s.tournament.complete()
            }
            if not completed:
                raise TournamentError(f"no completed sessions for group {group!r}")
            agg = aggregate_dataset(completed)
            agg["group"] = group
            agg["n_sessions"] = len(completed)
            return agg

    def _get(self, session_id: str) -> Session:
        if session_id not in self.sessions:
            raise KeyError(session_id)
        return self.sessions[session_id]


class SessionRequest(BaseModel):
    subject: str
    group: str


class VoteRequest(BaseModel):
    left: str
    right: str
    winner: str


def create_app(dataset_root, store_dir=None, rounds_total: int = 6) -> FastAPI:
    store = AnnotationStore(dataset_root, store_dir=store_dir, rounds_total=rounds_total)
    app = FastAPI(title="meshfid annotation service")
    app.state.store = store

    @app.get("/api/groups")
    def groups():
        return {"groups": [{"id": g, "meshes": m} for g, m in sorted(store.groups.items())]}

    @app.post("/api/sessions")
    def create_session(req: SessionRequest):
        try:
            return store.create_session(req.subject, req.group)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown group {req.group!r}")
        except TournamentError as e:
            raise HTTPException(status_code=400, detail=str(e))

    @app.get("/api/sessions/{session_id}/next")
    def get_next(session_id: str):
        try:
            return store.get_next(session_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")

    @app.post("/api/sessions/{session_id}/vote")
    def post_vote(session_id: str, req: VoteRequest):
        try:
            return store.post_vote(session_id, req.left, req.right, req.winner)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown session")
        except TournamentError as e:
            detail = str(e)
            status = 409 if "duplicate" in detail or "not pending" in detail else 400
            raise HTTPException(status_code=status, detail=detail)

    @app.get("/api/export/{group}")
    def export(group: str):
        try:
            return store.export_group(group)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown group")
        except TournamentError as e:
            raise HTTPException(status_code=400, detail=str(e))

    @app.get("/meshes/{mesh_path:path}")
    def mesh_file(mesh_path: str):
        target = (store.dataset_root / mesh_path).resolve()
        if not str(target).startswith(str(store.dataset_root.resolve())) or not target.is_file():
            raise HTTPException(status_code=404, detail="no such mesh")
        return FileResponse(target)

    return app
