"""Synthetic students, quiz sessions, and crossover exam data.

Everything downstream of the quiz loop (grading, allocation, calibration,
mixed-model analysis) is validated against data generated here under known
ground truth. Determinism is a hard contract: one seed yields byte-identical
logs, and each student draws from a generator stream derived from the seed
and the student's index, so simulating students in parallel can never change
the output. To keep students truly independent, each session ranks items
against a private copy of the bank counters; the shared bank still
accumulates every answer (increments commute, so ordering is irrelevant).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from datetime import datetime, timedelta, timezone
from typing import Sequence

import numpy as np

from .allocation import AllocationPolicy, allocation_pmf, uniform_pmf
from .bank import Answer, Item, ItemBank, ResponseRecord, StudentState, record_response
from .crossover import ExamRecord, randomize_crossover
from .irt import IrtModel, prob_correct

#: Fixed epoch for synthetic timestamps (one second per answer).
_EPOCH = datetime(2020, 1, 1, tzinfo=timezone.utc)


@dataclass
class SimStudent:
    student_id: str
    ability: float
    learning_rate: float = 0.0
    guesser: bool = False


@dataclass
class CrossoverTruth:
    """Generating parameters for synthetic crossover exam data.

    Scores live on a nominal 0-10 scale by convention (intercept near the
    middle, unit-ish noise); they are not clipped, since hard truncation
    would break the generative model the analysis tests are calibrated
    against.
    """

    n_exams: int = 4
    intercept: float = 5.0
    treatment_effect: float = 0.0
    math_effect: float = 1.0
    interaction_effect: float = 0.0
    exam_effects: tuple[float, ...] = (0.0, 0.0, 0.0)  # exams 2..n relative to exam 1
    sigma_student: float = 1.0
    sigma_resid: float = 1.0
    score_scale: tuple[float, float] = (0.0, 10.0)
    strong_math_fraction: float = 0.5
    missing_rate: float = 0.0


@dataclass
class SimConfig:
    """Complete description of one simulation run."""

    seed: int = 0
    n_students: int = 100
    # Generating item parameters. beta defaults to N(0,1) draws.
    n_items: int = 70
    variant: str = "m1"
    beta: Sequence[float] | None = None
    alpha: float | Sequence[float] | None = None
    guessing: Sequence[float] | None = None
    n_answers: int = 4
    policy: AllocationPolicy = field(default_factory=AllocationPolicy)
    questions_per_student: int = 70
    learning_rate: float = 0.0
    guesser_fraction: float = 0.0
    crossover: CrossoverTruth | None = None

    def __post_init__(self) -> None:
        if self.n_students < 0 or self.n_items < 1 or self.questions_per_student < 0:
            raise ValueError("counts must be nonnegative (and at least one item)")
        if not 0.0 <= self.guesser_fraction <= 1.0:
            raise ValueError(f"guesser_fraction must be in [0, 1], got {self.guesser_fraction}")
        if self.learning_rate < 0.0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")

    def to_json(self) -> str:
        raw = asdict(self)
        for key in ("beta", "guessing"):
            if raw.get(key) is not None:
                raw[key] = [float(v) for v in np.atleast_1d(raw[key])]
        if raw.get("alpha") is not None and not np.isscalar(raw["alpha"]):
            raw["alpha"] = [float(v) for v in np.atleast_1d(raw["alpha"])]
        return json.dumps(raw, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        raw = json.loads(text)
        if raw.get("policy") is None:
            raw.pop("policy", None)
        else:
            raw["policy"] = AllocationPolicy(**raw["policy"])
        if raw.get("crossover") is not None:
            cx = dict(raw["crossover"])
            if "exam_effects" in cx:
                cx["exam_effects"] = tuple(cx["exam_effects"])
            if "score_scale" in cx:
                cx["score_scale"] = tuple(cx["score_scale"])
            raw["crossover"] = CrossoverTruth(**cx)
        return cls(**raw)


@dataclass
class _Streams:
    population: np.random.SeedSequence
    bank: np.random.SeedSequence
    sessions: np.random.SeedSequence
    crossover: np.random.SeedSequence
    matrix: np.random.SeedSequence


def _streams(config: SimConfig) -> _Streams:
    """Derive the independent generator streams for one run."""
    root = np.random.SeedSequence(config.seed)
    return _Streams(*root.spawn(5))


# ---------------------------------------------------------------------------
# Population and item truth
# ---------------------------------------------------------------------------


def generate_population(config: SimConfig) -> list[SimStudent]:
    """Draw the student cohort: abilities standard normal, guessers Bernoulli."""
    if config.n_students < 1:
        raise ValueError("n_students must be >= 1")
    rng = np.random.default_rng(_streams(config).population)
    abilities = rng.standard_normal(config.n_students)
    guessers = rng.random(config.n_students) < config.guesser_fraction
    width = max(3, len(str(config.n_students)))
    return [
        SimStudent(
            student_id=f"s{i + 1:0{width}d}",
            ability=float(abilities[i]),
            learning_rate=config.learning_rate,
            guesser=bool(guessers[i]),
        )
        for i in range(config.n_students)
    ]


def generating_model(config: SimConfig) -> IrtModel:
    """Materialize the ground-truth response model (drawing beta if needed)."""
    rng = np.random.default_rng(_streams(config).bank)
    ids = [f"item-{i + 1:03d}" for i in range(config.n_items)]
    beta = (
        rng.standard_normal(config.n_items)
        if config.beta is None
        else np.asarray(config.beta, dtype=float)
    )
    if len(beta) != config.n_items:
        raise ValueError(f"beta has length {len(beta)}, expected {config.n_items}")
    alpha = config.alpha
    if config.variant in ("m3", "m4") and alpha is not None:
        alpha = np.asarray(alpha, dtype=float)
    guessing = None if config.guessing is None else np.asarray(config.guessing, dtype=float)
    if config.variant == "m1":
        alpha = None
    elif config.variant == "m2":
        alpha = 1.0 if alpha is None else float(alpha)
    elif alpha is None:
        alpha = np.ones(config.n_items)
    if config.variant == "m4" and guessing is None:
        guessing = np.zeros(config.n_items)
    return IrtModel(
        variant=config.variant,
        item_ids=ids,
        beta=beta,
        alpha=alpha,
        guessing=guessing if config.variant == "m4" else None,
        loglik=np.nan,
    )


def make_bank(config: SimConfig, bank_id: str = "sim-bank", title: str = "Simulated bank") -> ItemBank:
    """Synthesize a bank matching the generating model's items.

    The correct answer's canonical position varies by item (drawn from the
    bank stream) so shuffle bookkeeping gets exercised.
    """
    # Child stream so the correct positions do not consume the beta draws.
    rng = np.random.default_rng(_streams(config).bank.spawn(1)[0])
    items = []
    for i in range(config.n_items):
        correct_pos = int(rng.integers(config.n_answers))
        answers = [
            Answer(text=f"option {j + 1}", correct=(j == correct_pos))
            for j in range(config.n_answers)
        ]
        items.append(
            Item(item_id=f"item-{i + 1:03d}", stem=f"Simulated question {i + 1}", answers=answers)
        )
    return ItemBank(bank_id=bank_id, title=title, items=items)


# ---------------------------------------------------------------------------
# Quiz sessions
# ---------------------------------------------------------------------------


def simulate_response(
    student: SimStudent,
    model: IrtModel,
    item_index: int,
    n_answers: int,
    rng: np.random.Generator,
) -> bool:
    """One Bernoulli answer: model-driven, or uniform over answers for a guesser."""
    p = 1.0 / n_answers if student.guesser else prob_correct(model, item_index, student.ability)
    return bool(rng.random() < p)


@dataclass
class SessionResult:
    records: list[ResponseRecord]
    bank: ItemBank
    model: IrtModel
    students: list[SimStudent]


def run_sessions(config: SimConfig, bank: ItemBank | None = None) -> SessionResult:
    """Simulate full quiz sessions for the whole cohort.

    Each student repeatedly: ranks the bank by empirical difficulty, builds
    the allocation distribution from their current grade, draws an item,
    answers it from their (possibly drifting) ability, and records the
    response, exactly like the live service loop. Ability grows by the
    learning rate after every answer.
    """
    model = generating_model(config)
    if bank is None:
        bank = make_bank(config)
    if len(bank.items) != config.n_items:
        raise ValueError(f"bank has {len(bank.items)} items, config expects {config.n_items}")
    students = generate_population(config)
    child_seeds = _streams(config).sessions.spawn(config.n_students)

    item_ids = np.array([it.item_id for it in bank.items])
    id_to_index = {it.item_id: i for i, it in enumerate(bank.items)}
    base_answered = np.array([it.times_answered for it in bank.items], dtype=np.int64)
    base_correct = np.array([it.times_correct for it in bank.items], dtype=np.int64)

    records: list[ResponseRecord] = []
    clock = 0
    for student, seed in zip(students, child_seeds):
        rng = np.random.default_rng(seed)
        answered = base_answered.copy()
        correct = base_correct.copy()
        ability = student.ability
        state = StudentState(student_id=student.student_id, bank_id=bank.bank_id)
        for _ in range(config.questions_per_student):
            with np.errstate(invalid="ignore"):
                difficulty = np.where(answered > 0, 1.0 - correct / np.maximum(answered, 1), 0.5)
            ranking = item_ids[np.lexsort((item_ids, difficulty))]
            if config.policy.mode == "uniform":
                p = uniform_pmf(len(ranking))
            else:
                p = allocation_pmf(config.policy, len(ranking), state.grade)
            u = rng.random()
            rank_idx = min(int(np.searchsorted(np.cumsum(p), u, side="right")), len(ranking) - 1)
            item = bank.item(str(ranking[rank_idx]))
            idx = id_to_index[item.item_id]

            probe = SimStudent(student.student_id, ability, student.learning_rate, student.guesser)
            is_correct = simulate_response(probe, model, idx, len(item.answers), rng)
            chosen = item.correct_index if is_correct else _wrong_choice(item, rng)
            state, rec = record_response(state, item, chosen, timestamp=_EPOCH + timedelta(seconds=clock))
            records.append(rec)
            clock += 1

            answered[idx] += 1
            if is_correct:
                correct[idx] += 1
            ability += student.learning_rate
    return SessionResult(records=records, bank=bank, model=model, students=students)


def _wrong_choice(item: Item, rng: np.random.Generator) -> int:
    wrong = [i for i, a in enumerate(item.answers) if not a.correct]
    return wrong[int(rng.integers(len(wrong)))]


def simulate_matrix(config: SimConfig) -> tuple["ResponseMatrix", IrtModel, list[SimStudent]]:
    """Full-exposure response matrix: every student answers every item once.

    This is the calibration oracle's shortcut past the quiz loop; the
    ground-truth model and cohort are returned alongside so recovery can be
    scored against them.
    """
    from .irt import ResponseMatrix

    model = generating_model(config)
    students = generate_population(config)
    rng = np.random.default_rng(_streams(config).matrix)
    abilities = np.array([s.ability for s in students])
    alpha = model.alpha_vector()
    guess = model.guessing_vector()
    lin = alpha[None, :] * (abilities[:, None] - model.beta[None, :])
    p = 1.0 / (1.0 + np.exp(-lin))
    if guess is not None:
        p = guess[None, :] + (1.0 - guess[None, :]) * p
    guessers = np.array([s.guesser for s in students])
    p[guessers, :] = 1.0 / config.n_answers
    x = (rng.random(p.shape) < p).astype(np.int8)
    rows, cols = np.meshgrid(
        np.arange(config.n_students), np.arange(config.n_items), indexing="ij"
    )
    matrix = ResponseMatrix(
        students=[s.student_id for s in students],
        items=list(model.item_ids),
        rows=rows.ravel(),
        cols=cols.ravel(),
        values=x.ravel(),
    )
    return matrix, model, students


# ---------------------------------------------------------------------------
# Crossover exam data
# ---------------------------------------------------------------------------


def simulate_crossover(config: SimConfig) -> list[ExamRecord]:
    """Generate exam scores from the random-intercept model under the schedule.

    Students are split and crossed exactly as the analysis expects; optional
    missingness drops individual exams but every student keeps at least one
    (matching a cohort defined by "took at least one exam").
    """
    truth = config.crossover
    if truth is None:
        raise ValueError("config.crossover is not set")
    if len(truth.exam_effects) != truth.n_exams - 1:
        raise ValueError(
            f"exam_effects needs {truth.n_exams - 1} entries (exams 2..{truth.n_exams}), "
            f"got {len(truth.exam_effects)}"
        )
    rng = np.random.default_rng(_streams(config).crossover)
    width = max(3, len(str(config.n_students)))
    ids = [f"s{i + 1:0{width}d}" for i in range(config.n_students)]
    schedule = randomize_crossover(ids, rng, n_exams=truth.n_exams)
    strong = rng.random(config.n_students) < truth.strong_math_fraction
    intercepts = rng.normal(0.0, truth.sigma_student, config.n_students)

    records: list[ExamRecord] = []
    for i, sid in enumerate(ids):
        rows: list[ExamRecord] = []
        for exam, treatment in schedule.sequence(sid):
            mean = truth.intercept
            if treatment == "tutorweb":
                mean += truth.treatment_effect
            if strong[i]:
                mean += truth.math_effect
                if treatment == "tutorweb":
                    mean += truth.interaction_effect
            if exam > 1:
                mean += truth.exam_effects[exam - 2]
            score = mean + intercepts[i] + rng.normal(0.0, truth.sigma_resid)
            rows.append(
                ExamRecord(
                    student_id=sid,
                    exam=exam,
                    treatment=treatment,
                    math_background="strong" if strong[i] else "weak",
                    score=float(score),
                )
            )
        if truth.missing_rate > 0.0:
            keep = rng.random(len(rows)) >= truth.missing_rate
            if not keep.any():
                keep[int(rng.integers(len(rows)))] = True
            rows = [r for r, k in zip(rows, keep) if k]
        records.extend(rows)
    return records
