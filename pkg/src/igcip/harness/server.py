"""HTTP rating service.

Serves blinded rating sets to one or more rater sessions and persists their
responses. Reads go through a shared lock only long enough to snapshot the
progress table; submissions serialize through the lock around a single
append-only JSON-lines writer. A set accepts at most one record per rater;
the second submission gets a 409. Restarting the service on an existing
records file resumes every session at its first unanswered set.
"""

from __future__ import annotations

import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .ratings import (
    RatingRecord,
    append_rating_record,
    blinded_payload,
    load_rating_records,
    summarize_ratings,
)


class RatingResponse(BaseModel):
    set_id: str
    ranks: dict
    acceptable: dict


def make_app(sets, records_path) -> FastAPI:
    """Build the rating app over an ordered list of sets and a records file."""
    by_id = {s.set_id: s for s in sets}
    records_path = Path(records_path)
    lock = threading.Lock()
    records = load_rating_records(records_path)
    answered = {(r.set_id, r.rater) for r in records}

    app = FastAPI(title="configuration rating service")

    def _progress(session_id: str) -> dict:
        completed = sum(1 for sid, rater in answered if rater == session_id and sid in by_id)
        return {"completed": completed, "total": len(sets)}

    @app.get("/api/session/{session_id}/next")
    def next_set(session_id: str):
        with lock:
            progress = _progress(session_id)
            pending = next(
                (s for s in sets if (s.set_id, session_id) not in answered), None
            )
        if pending is None:
            return {"done": True, "progress": progress, "set": None}
        return {"done": False, "progress": progress, "set": blinded_payload(pending)}

    @app.post("/api/session/{session_id}/response")
    def submit(session_id: str, response: RatingResponse):
        if response.set_id not in by_id:
            raise HTTPException(status_code=404, detail=f"unknown set {response.set_id!r}")
        try:
            record = RatingRecord(
                set_id=response.set_id,
                rater=session_id,
                ranks=response.ranks,
                acceptable=response.acceptable,
            )
        except (ValueError, TypeError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        with lock:
            key = (record.set_id, record.rater)
            if key in answered:
                raise HTTPException(status_code=409, detail="set already rated in this session")
            append_rating_record(record, records_path)
            records.append(record)
            answered.add(key)
            progress = _progress(session_id)
        return {"status": "ok", "progress": progress}

    @app.get("/api/session/{session_id}/summary")
    def summary(session_id: str):
        with lock:
            session_records = [r for r in records if r.rater == session_id]
        return summarize_ratings(session_records, sets)

    return app


def serve(sets, records_path, port: int = 8000, host: str = "127.0.0.1") -> None:
    """Run the rating service until interrupted."""
    import uvicorn

    uvicorn.run(make_app(sets, records_path), host=host, port=port, log_level="warning")
