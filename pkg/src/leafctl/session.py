"""Event-sourced live print sessions.

A session mirrors the physical loop: the tool recommends a density, the
operator prints the leaf and reports bench measurements, the belief advances,
and the next density appears.  Every state change is an appended event in a
newline-delimited JSON log (one file per session); the in-memory state is a
pure fold over that log, which doubles as the crash-recovery mechanism.  An
event is fsynced before its effect is acknowledged.

Measurement entry accepts:
  * several stiffness values: raw bench readings, averaged with r = count
  * a single stiffness value: an already-averaged reading, r = plan.repetitions
  * load-deflection point sets: reduced to stiffness per set, then as above
An explicit ``repetitions`` override wins over both conventions.
"""

from __future__ import annotations

import json
import math
import os
import threading
import time
import uuid
from dataclasses import dataclass, replace
from pathlib import Path

from . import control as ctl
from .calibration import stiffness_from_bending
from .filter import Observation, update_with_fallback
from .model import (
    BeliefState,
    BuildPlan,
    BuildTrace,
    LeafctlError,
    ProcessModel,
    StepRecord,
    validate,
)


class UnknownSession(LeafctlError):
    code = "UnknownSession"


class SessionComplete(LeafctlError):
    code = "SessionComplete"


class EmptyMeasurement(LeafctlError):
    code = "EmptyMeasurement"


class CorruptEventLog(LeafctlError):
    code = "CorruptEventLog"


AWAITING_PRINT = "awaiting_print"
AWAITING_MEASUREMENT = "awaiting_measurement"
COMPLETE = "complete"


@dataclass(frozen=True)
class HistoryEntry:
    step: int
    applied_density: float
    raw_measurements: tuple[float, ...]
    averaged_observation: float
    repetitions: int
    belief_after: BeliefState
    decision: ctl.ControlDecision  # the recommendation this step was printed from

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "applied_density": self.applied_density,
            "raw_measurements": list(self.raw_measurements),
            "averaged_observation": self.averaged_observation,
            "repetitions": self.repetitions,
            "belief_after": self.belief_after.to_dict(),
            "decision": self.decision.to_dict(),
        }


@dataclass(frozen=True)
class Session:
    id: str
    created_at: float
    plan: BuildPlan
    model: ProcessModel
    belief: BeliefState
    history: tuple[HistoryEntry, ...]
    status: str
    next_decision: ctl.ControlDecision | None
    next_applied_density: float | None  # operator override for the next leaf

    @property
    def final_abs_error_pct(self) -> float | None:
        """Final error against the target, from the last averaged observation.

        True stiffness is unknowable on a live build, so the final reading
        stands in for it (the belief mean remains available separately).
        """
        if self.status != COMPLETE:
            return None
        final = self.history[-1].averaged_observation
        return abs(final - self.plan.target_k) / self.plan.target_k * 100.0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "created_at": self.created_at,
            "plan": self.plan.to_dict(),
            "model": self.model.to_dict(),
            "belief": self.belief.to_dict(),
            "history": [h.to_dict() for h in self.history],
            "status": self.status,
            "next_decision": None if self.next_decision is None else self.next_decision.to_dict(),
            "next_applied_density": self.next_applied_density,
            "final_abs_error_pct": self.final_abs_error_pct,
        }

    def to_trace(self) -> "BuildTrace":
        """Session history as the canonical build-trace artifact."""
        steps = tuple(
            StepRecord(
                step=h.step,
                applied_density=h.applied_density,
                true_stiffness=None,
                observed_stiffness=h.averaged_observation,
                belief_after=h.belief_after,
            )
            for h in self.history
        )
        return BuildTrace(
            strategy="filtered", steps=steps, final_abs_error_pct=self.final_abs_error_pct
        )


def _initial_session(session_id: str, created_at: float, plan: BuildPlan, model: ProcessModel) -> Session:
    validate(plan, model)
    belief = BeliefState.initial()
    decision = ctl.optimal_density(plan, model, belief.mean, 0)
    return Session(
        id=session_id,
        created_at=created_at,
        plan=plan,
        model=model,
        belief=belief,
        history=(),
        status=AWAITING_PRINT,
        next_decision=decision,
        next_applied_density=None,
    )


def _reduce_values(payload: dict) -> tuple[tuple[float, ...], float, int | None]:
    """Measurement payload -> (raw values, averaged value, repetitions).

    Repetitions None means "a single pre-averaged reading": the caller fills
    in the plan's repetition count.  An explicit override must be >= 1.
    """
    if payload.get("bending") is not None:
        sets = payload["bending"]
        if not sets:
            raise EmptyMeasurement("no load-deflection point sets")
        values = tuple(
            stiffness_from_bending([(float(p[0]), float(p[1])) for p in point_set])
            for point_set in sets
        )
    else:
        values = tuple(float(v) for v in payload.get("values") or ())
        if not values:
            raise EmptyMeasurement("no measurement values")
    averaged = math.fsum(values) / len(values)
    if payload.get("repetitions") is not None:
        repetitions = int(payload["repetitions"])
        if repetitions < 1:
            raise EmptyMeasurement("repetitions must be >= 1")
    elif len(values) == 1:
        repetitions = None
    else:
        repetitions = len(values)
    return values, averaged, repetitions


def apply_event(state: Session | None, event: dict) -> Session:
    """Pure fold step: event log -> session state."""
    etype = event["type"]
    payload = event.get("payload", {})
    if etype == "created":
        if state is not None:
            raise CorruptEventLog("duplicate created event")
        return _initial_session(
            session_id=payload["id"],
            created_at=float(event["ts"]),
            plan=BuildPlan.from_dict(payload["plan"]),
            model=ProcessModel.from_dict(payload["model"]),
        )
    if state is None:
        raise CorruptEventLog(f"{etype} event before created")
    if etype == "density_committed":
        if state.status == COMPLETE:
            raise SessionComplete("session already complete")
        return replace(
            state,
            next_applied_density=float(payload["applied"]),
            status=AWAITING_MEASUREMENT,
        )
    if etype == "measurement_recorded":
        if state.status == COMPLETE:
            raise SessionComplete("session already complete")
        values, averaged, repetitions = _reduce_values(payload)
        if repetitions is None:
            repetitions = state.plan.repetitions
        applied = payload.get("applied_density")
        if applied is None:
            applied = (
                state.next_applied_density
                if state.next_applied_density is not None
                else state.next_decision.recommended_density
            )
        applied = float(applied)
        obs = Observation(value=averaged, repetitions=repetitions)
        belief = update_with_fallback(state.belief, state.model, applied, obs)
        entry = HistoryEntry(
            step=belief.step,
            applied_density=applied,
            raw_measurements=values,
            averaged_observation=averaged,
            repetitions=repetitions,
            belief_after=belief,
            decision=state.next_decision,
        )
        history = state.history + (entry,)
        if len(history) >= state.plan.n:
            return replace(
                state,
                belief=belief,
                history=history,
                status=COMPLETE,
                next_decision=None,
                next_applied_density=None,
            )
        decision = ctl.optimal_density(state.plan, state.model, belief.mean, belief.step)
        return replace(
            state,
            belief=belief,
            history=history,
            status=AWAITING_PRINT,
            next_decision=decision,
            next_applied_density=None,
        )
    if etype == "completed":
        return state  # terminal marker; state already reflects completion
    raise CorruptEventLog(f"unknown event type {etype!r}")


def fold_events(events: list[dict]) -> Session:
    state: Session | None = None
    for event in events:
        state = apply_event(state, event)
    if state is None:
        raise CorruptEventLog("empty event log")
    return state


class SessionStore:
    """Durable session registry over per-session NDJSON event logs.

    Writes to the same session are serialized by a per-session lock; reads
    return immutable snapshots.  Every append is flushed and fsynced before
    the new state is returned.
    """

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.sessions_dir = self.data_dir / "sessions"
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._registry_lock = threading.Lock()
        self._locks: dict[str, threading.Lock] = {}
        self._cache: dict[str, Session] = {}

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.Lock())

    def _log_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.ndjson"

    def _append(self, session_id: str, event: dict) -> None:
        line = json.dumps(event, sort_keys=False)
        with open(self._log_path(session_id), "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _load(self, session_id: str) -> Session:
        path = self._log_path(session_id)
        if not path.exists():
            raise UnknownSession(f"no session {session_id!r}")
        events = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    events.append(json.loads(line))
                except ValueError as exc:
                    raise CorruptEventLog(
                        f"session {session_id!r} line {lineno}: {exc}"
                    ) from exc
        return fold_events(events)

    def create_session(self, plan: BuildPlan, model: ProcessModel) -> Session:
        session_id = uuid.uuid4().hex[:12]
        ts = time.time()
        event = {
            "type": "created",
            "ts": ts,
            "payload": {"id": session_id, "plan": plan.to_dict(), "model": model.to_dict()},
        }
        # fold first: an invalid plan must fail before anything is persisted
        state = apply_event(None, event)
        with self._lock_for(session_id):
            self._append(session_id, event)
            self._cache[session_id] = state
        return state

    def get_session(self, session_id: str) -> Session:
        with self._lock_for(session_id):
            if session_id not in self._cache:
                self._cache[session_id] = self._load(session_id)
            return self._cache[session_id]

    def list_sessions(self) -> list[Session]:
        ids = sorted(p.stem for p in self.sessions_dir.glob("*.ndjson"))
        sessions = [self.get_session(sid) for sid in ids]
        sessions.sort(key=lambda s: (s.created_at, s.id))
        return sessions

    def delete_session(self, session_id: str) -> None:
        with self._lock_for(session_id):
            path = self._log_path(session_id)
            if not path.exists():
                raise UnknownSession(f"no session {session_id!r}")
            path.unlink()
            self._cache.pop(session_id, None)

    def override_density(self, session_id: str, applied: float) -> Session:
        """Record the density the operator actually printed with."""
        with self._lock_for(session_id):
            state = self._cache.get(session_id) or self._load(session_id)
            recommended = (
                state.next_decision.recommended_density if state.next_decision else None
            )
            event = {
                "type": "density_committed",
                "ts": time.time(),
                "payload": {"recommended": recommended, "applied": float(applied)},
            }
            new_state = apply_event(state, event)
            self._append(session_id, event)
            self._cache[session_id] = new_state
            return new_state

    def record_measurement(
        self,
        session_id: str,
        values: list[float] | None = None,
        bending: list[list[tuple[float, float]]] | None = None,
        repetitions: int | None = None,
        applied_density: float | None = None,
    ) -> Session:
        """Commit the pending density and its measurement in one step."""
        with self._lock_for(session_id):
            state = self._cache.get(session_id) or self._load(session_id)
            payload: dict = {}
            if bending is not None:
                payload["bending"] = [[[float(d), float(l)] for d, l in ps] for ps in bending]
            else:
                payload["values"] = [float(v) for v in values or ()]
            if repetitions is not None:
                payload["repetitions"] = int(repetitions)
            if applied_density is not None:
                payload["applied_density"] = float(applied_density)
            event = {"type": "measurement_recorded", "ts": time.time(), "payload": payload}
            new_state = apply_event(state, event)
            self._append(session_id, event)
            if new_state.status == COMPLETE:
                done = {
                    "type": "completed",
                    "ts": time.time(),
                    "payload": {"final_abs_error_pct": new_state.final_abs_error_pct},
                }
                new_state = apply_event(new_state, done)
                self._append(session_id, done)
            self._cache[session_id] = new_state
            return new_state
