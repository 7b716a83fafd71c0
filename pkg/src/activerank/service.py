"""HTTP annotation service: the human-oracle side of the active loop.

The service owns an ActiveLoop plus an append-only JSONL store of
submitted labels. Pending pairs are served in stable order; submissions
are fsynced line by line, so killing the process at any point loses at
most nothing: on restart the store is replayed over the persisted session
and answered pairs stay answered. When a round's queue drains, a POST to
/rounds/advance ingests the labels, retrains, and issues the next round.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .loop import ActiveLoop, LoopDataset, LoopError
from .ranking import AnnotatedPair, LABEL_VALUES

STORE_FILE = "annotations.jsonl"
TOKEN_HEADER = "x-annotation-token"


class ServiceError(RuntimeError):
    """Store corruption or a session/store mismatch."""


@dataclass
class PendingPair:
    """One queued comparison, as shown to the annotator."""

    pair_id: str
    left: dict
    right: dict
    round_index: int
    answered: bool = False

    def payload(self, position: int, total: int) -> dict:
        return {
            "pair_id": self.pair_id,
            "left": self.left,
            "right": self.right,
            "round": self.round_index,
            "position": position,
            "total": total,
        }


@dataclass(frozen=True)
class AnnotationRecord:
    pair_id: str
    label: float
    annotator: str
    timestamp: str


def _pair_id(round_index: int, position: int) -> str:
    return f"r{round_index:02d}-p{position:04d}"


class AnnotationSession:
    """Serializes all queue mutations and persists each accepted label.

    The wrapped loop persists its own session file at every state change;
    this class only adds the per-submission store and the pending-queue
    bookkeeping, so a crash at any instant is recoverable from disk.
    """

    def __init__(self, loop: ActiveLoop, store_path: str | Path):
        self.loop = loop
        self.store_path = Path(store_path)
        self.pairs: dict[str, PendingPair] = {}
        self.order: list[str] = []
        self.records: dict[str, AnnotationRecord] = {}
        self._lock = threading.Lock()
        self._issue_current()
        self._replay()
        self._store = self.store_path.open("a")

    # -- construction -----------------------------------------------------

    @classmethod
    def start(cls, loop: ActiveLoop, store_path: str | Path) -> "AnnotationSession":
        """Begin a fresh session (proposes the initial round)."""
        loop.oracle_kind = "human"
        loop.propose_initial()
        return cls(loop, store_path)

    @classmethod
    def resume(cls, out_dir: str | Path, dataset: LoopDataset) -> "AnnotationSession":
        """Reload a session directory written by an earlier process."""
        loop = ActiveLoop.resume(out_dir, dataset)
        return cls(loop, Path(out_dir) / STORE_FILE)

    def _issue_current(self) -> None:
        """Materialize queue entries for the loop's pending (i, j) pairs."""
        self.pairs.clear()
        self.order.clear()
        features = self.loop.dataset.features
        for position, (i, j) in enumerate(self.loop.pending):
            pid = _pair_id(self.loop._round, position)
            self.pairs[pid] = PendingPair(
                pair_id=pid,
                left={"id": i, "features": [float(v) for v in features[i]]},
                right={"id": j, "features": [float(v) for v in features[j]]},
                round_index=self.loop._round,
            )
            self.order.append(pid)

    def _replay(self) -> None:
        """Re-apply stored submissions that belong to the current round."""
        if not self.store_path.exists():
            return
        with self.store_path.open() as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    doc = json.loads(line)
                    record = AnnotationRecord(
                        pair_id=doc["pair_id"],
                        label=float(doc["label"]),
                        annotator=doc.get("annotator", ""),
                        timestamp=doc.get("timestamp", ""),
                    )
                except (json.JSONDecodeError, KeyError, ValueError) as exc:
                    raise ServiceError(f"{self.store_path}:{lineno}: bad record ({exc})") from exc
                pair = self.pairs.get(record.pair_id)
                if pair is not None and not pair.answered:
                    pair.answered = True
                    self.records[record.pair_id] = record

    # -- queue operations --------------------------------------------------

    def next_pending(self, limit: int) -> list[dict]:
        if limit < 1:
            raise ValueError("limit must be >= 1")
        with self._lock:
            total = len(self.order)
            out = []
            for position, pid in enumerate(self.order):
                pair = self.pairs[pid]
                if pair.answered:
                    continue
                out.append(pair.payload(position, total))
                if len(out) >= limit:
                    break
            return out

    def submit(self, pair_id: str, label: float, annotator: str) -> dict:
        with self._lock:
            if label not in LABEL_VALUES:
                raise HTTPException(
                    status_code=422,
                    detail=f"label must be one of {list(LABEL_VALUES)}, got {label}",
                )
            pair = self.pairs.get(pair_id)
            if pair is None:
                raise HTTPException(status_code=404, detail=f"unknown pair id {pair_id!r}")
            if pair.answered:
                raise HTTPException(status_code=409, detail=f"pair {pair_id!r} already answered")
            record = AnnotationRecord(
                pair_id=pair_id,
                label=float(label),
                annotator=annotator,
                timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            )
            line = json.dumps(
                {
                    "pair_id": record.pair_id,
                    "i": pair.left["id"],
                    "j": pair.right["id"],
                    "label": record.label,
                    "annotator": record.annotator,
                    "round": pair.round_index,
                    "source": "human",
                    "timestamp": record.timestamp,
                },
                sort_keys=True,
            )
            self._store.write(line + "\n")
            self._store.flush()
            os.fsync(self._store.fileno())
            pair.answered = True
            self.records[pair_id] = record
            return {"pair_id": pair_id, "remaining": self._pending_count()}

    def _pending_count(self) -> int:
        return sum(1 for pid in self.order if not self.pairs[pid].answered)

    def status(self) -> dict:
        with self._lock:
            n = len(self.loop.dataset.pool_ids)
            return {
                "pending": self._pending_count(),
                "answered": len(self.order) - self._pending_count(),
                "round": self.loop._round,
                "iterations_done": self.loop.state.k,
                "total_iterations": self.loop.config.K,
                "labeled_count": len(self.loop.state.labeled_ids),
                "labeling_ratio": 100.0 * len(self.loop.state.labeled_ids) / n,
                "done": self.loop.done,
            }

    def advance(self) -> dict:
        """Ingest the drained queue, retrain, and issue the next round."""
        with self._lock:
            if self.loop.done:
                raise HTTPException(status_code=409, detail="loop already finished")
            if self._pending_count() > 0:
                raise HTTPException(
                    status_code=409,
                    detail=f"{self._pending_count()} pairs still pending",
                )
            if self.loop.pending:
                labeled = []
                for pid in self.order:
                    pair = self.pairs[pid]
                    labeled.append(
                        AnnotatedPair(
                            pair.left["id"], pair.right["id"], self.records[pid].label
                        )
                    )
                try:
                    self.loop.ingest(labeled)
                except LoopError as exc:
                    raise HTTPException(status_code=409, detail=str(exc)) from exc
            self.loop.train_round()
            if not self.loop.done:
                self.loop.propose_next()
            self._issue_current()
        return self.status()


class LabelBody(BaseModel):
    label: float
    annotator: str = "anonymous"


def create_app(
    session: AnnotationSession,
    token: str | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    """Wire the session into HTTP routes, optionally behind a shared token."""

    def check_token(request: Request) -> None:
        if token is not None and request.headers.get(TOKEN_HEADER) != token:
            raise HTTPException(status_code=401, detail="missing or wrong token")

    app = FastAPI(title="pairwise annotation service", dependencies=[Depends(check_token)])

    @app.get("/pairs")
    def get_pairs(limit: int = 1) -> list[dict]:
        if limit < 1:
            raise HTTPException(status_code=422, detail="limit must be >= 1")
        return session.next_pending(limit)

    @app.post("/pairs/{pair_id}/label")
    def post_label(pair_id: str, body: LabelBody) -> dict:
        return session.submit(pair_id, body.label, body.annotator)

    @app.get("/status")
    def get_status() -> dict:
        return session.status()

    @app.post("/rounds/advance")
    def post_advance() -> dict:
        return session.advance()

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
