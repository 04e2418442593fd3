"""Item banks, response bookkeeping, grading, and difficulty ranking.

An item bank is a pool of multiple-choice questions attached to a lecture.
Students answer items one at a time; every answer is appended to a response
log and folds into a per-student grade. The grade only looks at the most
recent answers (a sliding window), so students can always quiz their way
back up. Answer counters on each item drive an empirical difficulty measure
used to rank the bank from easiest to hardest.

Everything here is pure or mutates only state passed in explicitly; shared
mutation and locking live in the service layer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Iterator, Sequence

import numpy as np

#: Number of most recent answers that count toward the grade.
GRADE_WINDOW = 8

#: Points awarded per correct answer / deducted per wrong answer.
CORRECT_POINTS = 1.0
WRONG_POINTS = -0.5

#: Difficulty assigned to an item nobody has answered yet (places it
#: mid-ranking instead of dividing zero by zero).
UNSEEN_DIFFICULTY = 0.5


class BankFormatError(ValueError):
    """Raised when a bank file or response log violates the schema."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class Answer:
    text: str
    correct: bool = False


@dataclass
class Item:
    """A single quiz question with its candidate answers and counters.

    ``times_answered`` / ``times_correct`` accumulate over the life of the
    bank and are derived from the response log, never persisted in the bank
    file itself.
    """

    item_id: str
    stem: str
    answers: list[Answer]
    shuffle: bool = True
    times_answered: int = 0
    times_correct: int = 0

    def __post_init__(self) -> None:
        if len(self.answers) < 2:
            raise BankFormatError(
                f"item {self.item_id!r}: needs at least 2 answers, got {len(self.answers)}"
            )
        n_correct = sum(1 for a in self.answers if a.correct)
        if n_correct != 1:
            raise BankFormatError(
                f"item {self.item_id!r}: exactly one answer must be correct, got {n_correct}"
            )
        if not 0 <= self.times_correct <= self.times_answered:
            raise BankFormatError(
                f"item {self.item_id!r}: counters out of range "
                f"(correct={self.times_correct}, answered={self.times_answered})"
            )

    @property
    def correct_index(self) -> int:
        """Index of the correct answer in canonical (unshuffled) order."""
        return next(i for i, a in enumerate(self.answers) if a.correct)


@dataclass
class ItemBank:
    bank_id: str
    title: str
    items: list[Item]

    def __post_init__(self) -> None:
        if not self.items:
            raise BankFormatError(f"bank {self.bank_id!r}: must contain at least one item")
        seen: set[str] = set()
        for it in self.items:
            if it.item_id in seen:
                raise BankFormatError(f"bank {self.bank_id!r}: duplicate item_id {it.item_id!r}")
            seen.add(it.item_id)
        self._index = {it.item_id: it for it in self.items}

    def __len__(self) -> int:
        return len(self.items)

    def item(self, item_id: str) -> Item:
        try:
            return self._index[item_id]
        except KeyError:
            raise KeyError(f"unknown item {item_id!r} in bank {self.bank_id!r}") from None


@dataclass(frozen=True)
class ResponseRecord:
    """One logged answer. The unit of the append-only response log."""

    student_id: str
    bank_id: str
    item_id: str
    seq: int
    chosen_index: int  # index into the item's canonical answer order
    correct: bool
    grade_after: float
    timestamp: datetime

    def to_json(self) -> str:
        return json.dumps(
            {
                "student_id": self.student_id,
                "bank_id": self.bank_id,
                "item_id": self.item_id,
                "seq": self.seq,
                "chosen_index": self.chosen_index,
                "correct": self.correct,
                "grade_after": self.grade_after,
                "timestamp": self.timestamp.astimezone(timezone.utc).isoformat().replace("+00:00", "Z"),
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "ResponseRecord":
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BankFormatError(f"bad response log line: {exc}") from None
        try:
            ts = datetime.fromisoformat(raw["timestamp"].replace("Z", "+00:00"))
            return cls(
                student_id=raw["student_id"],
                bank_id=raw["bank_id"],
                item_id=raw["item_id"],
                seq=int(raw["seq"]),
                chosen_index=int(raw["chosen_index"]),
                correct=bool(raw["correct"]),
                grade_after=float(raw["grade_after"]),
                timestamp=ts,
            )
        except KeyError as exc:
            raise BankFormatError(f"response log line missing field {exc}") from None


@dataclass
class StudentState:
    """Rolling grade state of one student within one bank."""

    student_id: str
    bank_id: str
    history: list[tuple[str, bool]] = field(default_factory=list)
    raw_score: float = 0.0
    grade: float = 0.0

    @property
    def answered_count(self) -> int:
        return len(self.history)


# ---------------------------------------------------------------------------
# Grading
# ---------------------------------------------------------------------------


def lecture_grade(history: Sequence[tuple[str, bool]]) -> tuple[float, float]:
    """Score a per-bank answer history.

    Only the last :data:`GRADE_WINDOW` answers count: +1 per correct answer,
    -1/2 per wrong one. The normalized grade divides the raw score by the
    window maximum and clamps into [0, 1], so a short history still divides
    by the full window (early students look low-graded and get easy items).

    Returns:
        ``(raw_score, grade)`` with ``grade`` in [0, 1].
    """
    window = history[-GRADE_WINDOW:]
    raw = sum(CORRECT_POINTS if correct else WRONG_POINTS for _, correct in window)
    grade = min(max(raw / GRADE_WINDOW, 0.0), 1.0)
    return raw, grade


def record_response(
    state: StudentState,
    item: Item,
    chosen_index: int,
    timestamp: datetime | None = None,
) -> tuple[StudentState, ResponseRecord]:
    """Apply one answer: update history, counters, and grade; emit the log record.

    Mutates ``state`` and ``item`` in place (they are the explicitly passed
    state values) and returns them alongside the freshly built record.
    """
    if not 0 <= chosen_index < len(item.answers):
        raise IndexError(
            f"chosen_index {chosen_index} out of range for item {item.item_id!r} "
            f"({len(item.answers)} answers)"
        )
    correct = item.answers[chosen_index].correct
    state.history.append((item.item_id, correct))
    item.times_answered += 1
    if correct:
        item.times_correct += 1
    state.raw_score, state.grade = lecture_grade(state.history)
    record = ResponseRecord(
        student_id=state.student_id,
        bank_id=state.bank_id,
        item_id=item.item_id,
        seq=len(state.history),
        chosen_index=chosen_index,
        correct=correct,
        grade_after=state.grade,
        timestamp=timestamp or datetime.now(timezone.utc),
    )
    return state, record


# ---------------------------------------------------------------------------
# Difficulty and ranking
# ---------------------------------------------------------------------------


def empirical_difficulty(item: Item) -> float:
    """Observed difficulty: 1 - (correct answers / times answered).

    Items never answered get :data:`UNSEEN_DIFFICULTY`.
    """
    if item.times_answered == 0:
        return UNSEEN_DIFFICULTY
    return 1.0 - item.times_correct / item.times_answered


def rank_by_difficulty(bank: ItemBank) -> list[str]:
    """Rank a bank's items from easiest to hardest.

    Returns item ids ordered by ascending empirical difficulty; the id at
    position ``r - 1`` has rank ``r``. Ties break lexicographically on
    item_id so the ranking is a deterministic bijection.
    """
    if not bank.items:
        raise ValueError(f"bank {bank.bank_id!r} is empty")
    return [
        it.item_id
        for it in sorted(bank.items, key=lambda it: (empirical_difficulty(it), it.item_id))
    ]


# ---------------------------------------------------------------------------
# First-exposure filtering
# ---------------------------------------------------------------------------


def first_exposure_filter(records: Iterable[ResponseRecord]) -> list[ResponseRecord]:
    """Keep only each student's first answer to each item.

    Calibration models assume no learning, so repeat encounters with an item
    are discarded. The input must be per-student chronological (seq strictly
    increasing within each student); anything else is rejected because
    "first" would be ambiguous.

    Idempotent: filtering a filtered stream is a no-op.
    """
    last_seq: dict[tuple[str, str], int] = {}
    seen: set[tuple[str, str, str]] = set()
    kept: list[ResponseRecord] = []
    for rec in records:
        sb = (rec.student_id, rec.bank_id)
        if sb in last_seq and rec.seq <= last_seq[sb]:
            raise ValueError(
                f"response log not ordered: student {rec.student_id!r} bank {rec.bank_id!r} "
                f"seq {rec.seq} after seq {last_seq[sb]}"
            )
        last_seq[sb] = rec.seq
        key = (rec.student_id, rec.bank_id, rec.item_id)
        if key not in seen:
            seen.add(key)
            kept.append(rec)
    return kept


# ---------------------------------------------------------------------------
# Answer shuffling
# ---------------------------------------------------------------------------


def shuffle_answers(
    item: Item, rng: np.random.Generator | int | None = None
) -> tuple[list[Answer], list[int]]:
    """Return the answers in presentation order plus the permutation map.

    ``perm[presented_index]`` is the canonical index of the answer shown at
    that position, so a chosen presented index translates back to canonical
    order with a single lookup. Items with ``shuffle=False`` get the
    identity permutation.
    """
    n = len(item.answers)
    if not item.shuffle:
        perm = list(range(n))
    else:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        perm = [int(i) for i in gen.permutation(n)]
    return [item.answers[i] for i in perm], perm


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def bank_from_dict(raw: dict) -> ItemBank:
    for key in ("bank_id", "title", "items"):
        if key not in raw:
            raise BankFormatError(f"bank file missing field {key!r}")
    items = []
    for pos, it in enumerate(raw["items"]):
        item_id = it.get("item_id", f"<item #{pos}>")
        for key in ("item_id", "stem", "answers"):
            if key not in it:
                raise BankFormatError(f"item {item_id!r}: missing field {key!r}")
        answers = [Answer(text=a["text"], correct=bool(a.get("correct", False))) for a in it["answers"]]
        items.append(
            Item(
                item_id=it["item_id"],
                stem=it["stem"],
                answers=answers,
                shuffle=bool(it.get("shuffle", True)),
            )
        )
    return ItemBank(bank_id=raw["bank_id"], title=raw["title"], items=items)


def bank_to_dict(bank: ItemBank) -> dict:
    # Counters are intentionally not persisted; they are a fold over the log.
    return {
        "bank_id": bank.bank_id,
        "title": bank.title,
        "items": [
            {
                "item_id": it.item_id,
                "stem": it.stem,
                "answers": [{"text": a.text, "correct": a.correct} for a in it.answers],
                "shuffle": it.shuffle,
            }
            for it in bank.items
        ],
    }


def load_bank(path) -> ItemBank:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BankFormatError(f"{path}: not valid JSON ({exc})") from None
    return bank_from_dict(raw)


def save_bank(bank: ItemBank, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(bank_to_dict(bank), fh, indent=2)
        fh.write("\n")


def read_log(path) -> Iterator[ResponseRecord]:
    """Stream a JSON-lines response log, with line numbers in error messages."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield ResponseRecord.from_json(line)
            except BankFormatError as exc:
                raise BankFormatError(f"{path}:{lineno}: {exc}") from None


def replay(
    records: Iterable[ResponseRecord], banks: dict[str, ItemBank] | None = None
) -> dict[tuple[str, str], StudentState]:
    """Fold a response log back into per-(student, bank) grade states.

    When ``banks`` is given, item counters are incremented as well, so a
    service can reconstruct its entire mutable state from the log alone.
    """
    states: dict[tuple[str, str], StudentState] = {}
    for rec in records:
        key = (rec.student_id, rec.bank_id)
        state = states.get(key)
        if state is None:
            state = states[key] = StudentState(student_id=rec.student_id, bank_id=rec.bank_id)
        if rec.seq != len(state.history) + 1:
            raise BankFormatError(
                f"log replay: student {rec.student_id!r} bank {rec.bank_id!r} "
                f"expected seq {len(state.history) + 1}, got {rec.seq}"
            )
        state.history.append((rec.item_id, rec.correct))
        state.raw_score, state.grade = lecture_grade(state.history)
        if banks is not None and rec.bank_id in banks:
            item = banks[rec.bank_id].item(rec.item_id)
            item.times_answered += 1
            if rec.correct:
                item.times_correct += 1
    return states
