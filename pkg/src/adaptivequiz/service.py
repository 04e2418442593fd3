"""Session-oriented quiz service over HTTP.

Hosts the live quiz loop: allocate a question for the student's current
grade, present it with shuffled answers, accept the answer, grade it, and
log it. All mutable state (grade states, item counters) is a pure fold over
the append-only response log, so recovery is simply replay; a response is
never acknowledged before its log line is flushed to disk.

Each (student, bank) pair has at most one pending question. Asking again
before answering re-serves the identical question and permutation, and a
question token guards against replayed or double submissions.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel

from .allocation import AllocationPolicy, allocation_pmf, uniform_pmf
from .bank import (
    BankFormatError,
    ItemBank,
    StudentState,
    load_bank as load_bank_file,
    rank_by_difficulty,
    read_log,
    record_response,
    replay,
)


class ServiceError(Exception):
    """Service-level failure with an HTTP-ish status code."""

    status_code = 400


class UnknownEntity(ServiceError):
    status_code = 404


class PendingConflict(ServiceError):
    """Stale, unknown, or already-consumed question token."""

    status_code = 409


@dataclass
class PendingQuestion:
    token: str
    item_id: str
    perm: list[int]  # perm[presented_index] -> canonical index
    issued_at: datetime


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    bank_dir: str | None = None
    log_path: str = "responses.jsonl"
    policy: AllocationPolicy = field(default_factory=AllocationPolicy)
    legacy_uniform: bool = False

    @classmethod
    def from_file(cls, path) -> "ServiceConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        if "policy" in raw:
            raw["policy"] = AllocationPolicy(**raw["policy"])
        cfg = cls(**raw)
        # Environment override for the log location.
        env_log = os.environ.get("QUIZ_LOG_PATH")
        if env_log:
            cfg.log_path = env_log
        return cfg


class QuizService:
    """In-process quiz engine behind the HTTP surface.

    A single lock serializes mutations; per-student operations therefore
    observe a consistent, totally ordered log. Reads take the same lock
    briefly and see a consistent prefix.
    """

    def __init__(
        self,
        log_path,
        policy: AllocationPolicy | None = None,
        legacy_uniform: bool = False,
        rng_seed: int | None = None,
    ):
        self.log_path = Path(log_path)
        self.policy = policy or AllocationPolicy()
        self.legacy_uniform = legacy_uniform
        self.banks: dict[str, ItemBank] = {}
        self.states: dict[tuple[str, str], StudentState] = {}
        self.pending: dict[tuple[str, str], PendingQuestion] = {}
        self.students: dict[str, dict] = {}
        self._rng = np.random.default_rng(rng_seed)
        self._lock = threading.RLock()
        self._log_file = None

    # -- bank and log management ------------------------------------------

    def add_bank(self, bank: ItemBank) -> str:
        with self._lock:
            if bank.bank_id in self.banks:
                raise ServiceError(f"bank {bank.bank_id!r} already loaded")
            self.banks[bank.bank_id] = bank
            return bank.bank_id

    def load_bank(self, path) -> str:
        """Load and validate a bank file; malformed banks are rejected whole."""
        return self.add_bank(load_bank_file(path))

    def recover(self) -> int:
        """Replay the response log into grade states and item counters."""
        if not self.log_path.exists():
            return 0
        with self._lock:
            records = list(read_log(self.log_path))
            self.states = replay(records, self.banks)
            for (student_id, _), _state in self.states.items():
                self.students.setdefault(student_id, {"name": student_id, "consent": True})
            return len(records)

    def _append_log(self, record) -> None:
        if self._log_file is None:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            self._log_file = open(self.log_path, "a", encoding="utf-8")
        self._log_file.write(record.to_json() + "\n")
        self._log_file.flush()
        os.fsync(self._log_file.fileno())

    def close(self) -> None:
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = None

    # -- student lifecycle -------------------------------------------------

    def register_student(self, name: str) -> str:
        """Register a student, disambiguating duplicate names with a suffix.

        Registration implies consent to answers being recorded for research;
        the acknowledgement is stored with the student.
        """
        name = name.strip()
        if not name:
            raise ServiceError("student name must be non-empty")
        with self._lock:
            student_id = name
            suffix = 2
            while student_id in self.students:
                student_id = f"{name}-{suffix}"
                suffix += 1
            self.students[student_id] = {"name": name, "consent": True}
            return student_id

    def _state(self, student_id: str, bank_id: str) -> StudentState:
        key = (student_id, bank_id)
        if key not in self.states:
            self.states[key] = StudentState(student_id=student_id, bank_id=bank_id)
        return self.states[key]

    def _require_student(self, student_id: str) -> None:
        if student_id not in self.students:
            raise UnknownEntity(f"unknown student {student_id!r}")

    def _require_bank(self, bank_id: str) -> ItemBank:
        if bank_id not in self.banks:
            raise UnknownEntity(f"unknown bank {bank_id!r}")
        return self.banks[bank_id]

    # -- the quiz loop -----------------------------------------------------

    def next_question(self, student_id: str, bank_id: str) -> dict:
        """Allocate (or re-serve) the pending question for this student and bank.

        Allocation ranks items by live empirical difficulty and samples from
        the grade-dependent distribution (or the legacy uniform one). The
        correct flag never leaves the server.
        """
        with self._lock:
            self._require_student(student_id)
            bank = self._require_bank(bank_id)
            key = (student_id, bank_id)
            pend = self.pending.get(key)
            if pend is None:
                ranking = rank_by_difficulty(bank)
                if self.legacy_uniform:
                    p = uniform_pmf(len(ranking))
                else:
                    grade = self._state(student_id, bank_id).grade
                    p = allocation_pmf(self.policy, len(ranking), grade)
                u = self._rng.random()
                idx = min(int(np.searchsorted(np.cumsum(p), u, side="right")), len(ranking) - 1)
                item = bank.item(ranking[idx])
                if item.shuffle:
                    perm = [int(i) for i in self._rng.permutation(len(item.answers))]
                else:
                    perm = list(range(len(item.answers)))
                pend = PendingQuestion(
                    token=uuid.uuid4().hex,
                    item_id=item.item_id,
                    perm=perm,
                    issued_at=datetime.now(timezone.utc),
                )
                self.pending[key] = pend
            item = bank.item(pend.item_id)
            return {
                "item_id": item.item_id,
                "stem": item.stem,
                "answers": [item.answers[i].text for i in pend.perm],
                "question_token": pend.token,
            }

    def submit_answer(
        self, student_id: str, bank_id: str, question_token: str, presented_index: int
    ) -> dict:
        """Grade a pending answer. The log line is durable before we reply."""
        with self._lock:
            self._require_student(student_id)
            bank = self._require_bank(bank_id)
            key = (student_id, bank_id)
            pend = self.pending.get(key)
            if pend is None or pend.token != question_token:
                raise PendingConflict("no pending question matches this token")
            if not 0 <= presented_index < len(pend.perm):
                raise ServiceError(
                    f"presented_index {presented_index} out of range (0..{len(pend.perm) - 1})"
                )
            item = bank.item(pend.item_id)
            canonical = pend.perm[presented_index]
            state, record = record_response(self._state(student_id, bank_id), item, canonical)
            self._append_log(record)
            del self.pending[key]
            return {
                "correct": record.correct,
                "raw_score": state.raw_score,
                "grade": state.grade,
            }

    def get_grade(self, student_id: str, bank_id: str) -> dict:
        with self._lock:
            self._require_student(student_id)
            self._require_bank(bank_id)
            state = self.states.get((student_id, bank_id))
            if state is None:
                return {"raw_score": 0.0, "grade": 0.0, "answered_count": 0}
            return {
                "raw_score": state.raw_score,
                "grade": state.grade,
                "answered_count": state.answered_count,
            }

    def export_log(self, bank_id: str | None = None, student_id: str | None = None):
        """Stream raw log lines, optionally filtered; empty log yields nothing."""
        if not self.log_path.exists():
            return
        for rec in read_log(self.log_path):
            if bank_id is not None and rec.bank_id != bank_id:
                continue
            if student_id is not None and rec.student_id != student_id:
                continue
            yield rec.to_json()


# ---------------------------------------------------------------------------
# HTTP surface
# ---------------------------------------------------------------------------


class RegisterBody(BaseModel):
    name: str


class QuestionBody(BaseModel):
    student_id: str


class AnswerBody(BaseModel):
    student_id: str
    question_token: str
    presented_index: int


def create_app(service: QuizService):
    """Wrap a QuizService in the documented FastAPI endpoints."""
    app = FastAPI(title="adaptive quiz service")

    def run(fn, *args):
        try:
            return fn(*args)
        except ServiceError as exc:
            raise HTTPException(status_code=exc.status_code, detail=str(exc)) from None
        except (KeyError, IndexError, ValueError, BankFormatError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None

    @app.post("/students")
    def register(body: RegisterBody):
        return {"student_id": run(service.register_student, body.name)}

    @app.get("/banks")
    def banks():
        return [
            {"bank_id": b.bank_id, "title": b.title, "n_items": len(b.items)}
            for b in service.banks.values()
        ]

    @app.post("/banks/{bank_id}/question")
    def question(bank_id: str, body: QuestionBody):
        return run(service.next_question, body.student_id, bank_id)

    @app.post("/banks/{bank_id}/answer")
    def answer(bank_id: str, body: AnswerBody):
        return run(service.submit_answer, body.student_id, bank_id, body.question_token, body.presented_index)

    @app.get("/banks/{bank_id}/grade")
    def grade(bank_id: str, student_id: str):
        return run(service.get_grade, student_id, bank_id)

    @app.get("/admin/export", response_class=PlainTextResponse)
    def export(bank_id: str | None = None, student_id: str | None = None):
        lines = list(service.export_log(bank_id=bank_id, student_id=student_id))
        return "\n".join(lines) + ("\n" if lines else "")

    return app


def build_service(config: ServiceConfig) -> QuizService:
    """Construct a service from config: load banks from the directory, replay the log."""
    service = QuizService(
        log_path=config.log_path,
        policy=config.policy,
        legacy_uniform=config.legacy_uniform,
    )
    if config.bank_dir:
        for path in sorted(Path(config.bank_dir).glob("*.json")):
            service.load_bank(path)
    service.recover()
    return service
