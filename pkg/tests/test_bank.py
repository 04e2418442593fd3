"""Grading rule, difficulty ranking, first-exposure filtering, shuffling, file formats."""

import json
from datetime import datetime, timezone

import numpy as np
import pytest

from adaptivequiz.bank import (
    Answer,
    BankFormatError,
    GRADE_WINDOW,
    Item,
    ItemBank,
    ResponseRecord,
    StudentState,
    bank_from_dict,
    empirical_difficulty,
    first_exposure_filter,
    lecture_grade,
    load_bank,
    rank_by_difficulty,
    read_log,
    record_response,
    replay,
    save_bank,
    shuffle_answers,
)


def make_item(item_id="q1", n_answers=4, correct=0, shuffle=True, answered=0, right=0):
    answers = [Answer(text=f"a{i}", correct=(i == correct)) for i in range(n_answers)]
    return Item(
        item_id=item_id,
        stem="stem",
        answers=answers,
        shuffle=shuffle,
        times_answered=answered,
        times_correct=right,
    )


def naive_grade(history):
    """Independent scorer: walk the whole history, keep a window by hand."""
    window = []
    for entry in history:
        window.append(entry)
        if len(window) > GRADE_WINDOW:
            window.pop(0)
    raw = 0.0
    for _, correct in window:
        raw += 1.0 if correct else -0.5
    g = raw / GRADE_WINDOW
    if g < 0:
        g = 0.0
    if g > 1:
        g = 1.0
    return raw, g


class TestLectureGrade:
    def test_eight_correct_is_full_marks(self):
        assert lecture_grade([("q", True)] * 8) == (8.0, 1.0)

    def test_empty_history(self):
        assert lecture_grade([]) == (0.0, 0.0)

    def test_four_wrong_clamps_to_zero(self):
        raw, g = lecture_grade([("q", False)] * 4)
        assert raw == -2.0
        assert g == 0.0

    def test_six_correct_two_wrong_in_last_eight(self):
        history = [("old", False)] * 2 + [("q", True)] * 6 + [("q", False)] * 2
        assert lecture_grade(history) == (5.0, 0.625)

    def test_window_property(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            n = int(rng.integers(0, 20))
            history = [("q", bool(rng.integers(2))) for _ in range(n)]
            prefix = [("x", bool(rng.integers(2))) for _ in range(int(rng.integers(0, 10)))]
            assert lecture_grade(prefix + history[-GRADE_WINDOW:]) == lecture_grade(
                (prefix + history[-GRADE_WINDOW:])[-GRADE_WINDOW:]
            )
            assert lecture_grade(history) == lecture_grade(history[-GRADE_WINDOW:])

    def test_matches_naive_scorer(self):
        rng = np.random.default_rng(11)
        for _ in range(500):
            n = int(rng.integers(0, 25))
            history = [("q", bool(rng.integers(2))) for _ in range(n)]
            assert lecture_grade(history) == naive_grade(history)

    def test_full_grade_only_when_window_all_correct(self):
        assert lecture_grade([("q", True)] * 7)[1] < 1.0
        assert lecture_grade([("q", False)] + [("q", True)] * 8)[1] == 1.0
        assert lecture_grade([("q", True)] * 9)[1] == 1.0


class TestRecordResponse:
    def test_first_correct_answer(self):
        state = StudentState("alice", "b")
        item = make_item()
        state, rec = record_response(state, item, 0)
        assert state.raw_score == 1.0
        assert state.grade == 0.125
        assert rec.correct and rec.seq == 1 and rec.grade_after == 0.125
        assert item.times_answered == 1 and item.times_correct == 1

    def test_first_wrong_answer(self):
        state = StudentState("alice", "b")
        item = make_item()
        state, rec = record_response(state, item, 1)
        assert state.raw_score == -0.5
        assert state.grade == 0.0
        assert not rec.correct
        assert item.times_answered == 1 and item.times_correct == 0

    def test_ten_answers_six_correct_in_window(self):
        state = StudentState("alice", "b")
        item = make_item()
        pattern = [1, 1, 0, 0, 0, 0, 0, 0, 1, 1]  # wrong, wrong, 6 correct, 2 wrong
        for chosen in pattern:
            state, rec = record_response(state, item, chosen)
        assert state.raw_score == 5.0
        assert state.grade == 0.625
        assert rec.seq == 10

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            record_response(StudentState("a", "b"), make_item(), 4)


class TestEmpiricalDifficulty:
    def test_never_answered_correctly(self):
        assert empirical_difficulty(make_item(answered=10, right=0)) == 1.0

    def test_three_quarters_correct(self):
        assert empirical_difficulty(make_item(answered=40, right=30)) == 0.25

    def test_unseen_item_sits_mid_ranking(self):
        assert empirical_difficulty(make_item()) == 0.5

    def test_bounded_and_monotone(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(1, 50))
            c = int(rng.integers(0, n + 1))
            item = make_item(answered=n, right=c)
            d = empirical_difficulty(item)
            assert 0.0 <= d <= 1.0
            assert empirical_difficulty(make_item(answered=n + 1, right=c + 1)) <= d
            assert empirical_difficulty(make_item(answered=n + 1, right=c)) >= d


class TestRanking:
    def test_orders_by_difficulty(self):
        # difficulties: a=0.2, b=0.8, c=0.5
        bank = ItemBank(
            "bk",
            "t",
            [
                make_item("a", answered=10, right=8),
                make_item("b", answered=10, right=2),
                make_item("c", answered=10, right=5),
            ],
        )
        assert rank_by_difficulty(bank) == ["a", "c", "b"]

    def test_single_item(self):
        bank = ItemBank("bk", "t", [make_item("only")])
        assert rank_by_difficulty(bank) == ["only"]

    def test_ties_break_on_item_id(self):
        bank = ItemBank("bk", "t", [make_item("b"), make_item("a")])
        assert rank_by_difficulty(bank) == ["a", "b"]

    def test_bijection_onto_ranks(self):
        rng = np.random.default_rng(9)
        items = [
            make_item(f"i{k:02d}", answered=int(rng.integers(0, 20)), right=0)
            for k in range(17)
        ]
        for it in items:
            it.times_correct = int(rng.integers(0, it.times_answered + 1))
        bank = ItemBank("bk", "t", items)
        ranking = rank_by_difficulty(bank)
        assert sorted(ranking) == sorted(it.item_id for it in items)
        assert ranking == rank_by_difficulty(bank)  # deterministic


def rec(student, item, seq, correct=True, bank="b"):
    return ResponseRecord(
        student_id=student,
        bank_id=bank,
        item_id=item,
        seq=seq,
        chosen_index=0,
        correct=correct,
        grade_after=0.0,
        timestamp=datetime(2024, 1, 1, tzinfo=timezone.utc),
    )


class TestFirstExposure:
    def test_keeps_only_first_answer(self):
        log = [rec("s", "x", 1, False), rec("s", "x", 2, False), rec("s", "x", 3, True)]
        kept = first_exposure_filter(log)
        assert len(kept) == 1
        assert kept[0].seq == 1 and not kept[0].correct

    def test_distinct_items_pass_through(self):
        log = [rec("s", "x", 1), rec("s", "y", 2), rec("t", "x", 1)]
        assert first_exposure_filter(log) == log

    def test_empty(self):
        assert first_exposure_filter([]) == []

    def test_unordered_rejected(self):
        with pytest.raises(ValueError, match="not ordered"):
            first_exposure_filter([rec("s", "x", 2), rec("s", "y", 1)])

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        log = []
        for s in ("s1", "s2", "s3"):
            for seq in range(1, 20):
                log.append(rec(s, f"i{rng.integers(5)}", seq, bool(rng.integers(2))))
        once = first_exposure_filter(log)
        assert first_exposure_filter(once) == once


class TestShuffleAnswers:
    def test_no_shuffle_is_identity(self):
        item = make_item(shuffle=False)
        presented, perm = shuffle_answers(item, 1)
        assert perm == [0, 1, 2, 3]
        assert [a.text for a in presented] == [a.text for a in item.answers]

    def test_seeded_reproducibility(self):
        item = make_item()
        _, p1 = shuffle_answers(item, 1234)
        _, p2 = shuffle_answers(item, 1234)
        assert p1 == p2

    def test_round_trip_inversion(self):
        item = make_item(n_answers=5, correct=3)
        presented, perm = shuffle_answers(item, 7)
        for pos, ans in enumerate(presented):
            assert item.answers[perm[pos]] is ans
        correct_pos = next(i for i, a in enumerate(presented) if a.correct)
        assert perm[correct_pos] == 3

    def test_uniform_over_permutations(self):
        item = make_item(n_answers=3)
        rng = np.random.default_rng(0)
        counts = {}
        for _ in range(6000):
            _, perm = shuffle_answers(item, rng)
            counts[tuple(perm)] = counts.get(tuple(perm), 0) + 1
        assert len(counts) == 6
        assert min(counts.values()) > 6000 / 6 * 0.75


class TestItemValidation:
    def test_needs_two_answers(self):
        with pytest.raises(BankFormatError, match="at least 2"):
            make_item(n_answers=1)

    def test_exactly_one_correct(self):
        answers = [Answer("a", True), Answer("b", True)]
        with pytest.raises(BankFormatError, match="exactly one"):
            Item(item_id="q", stem="s", answers=answers)

    def test_counter_invariant(self):
        with pytest.raises(BankFormatError, match="counters"):
            make_item(answered=2, right=3)

    def test_duplicate_item_ids(self):
        with pytest.raises(BankFormatError, match="duplicate"):
            ItemBank("bk", "t", [make_item("same"), make_item("same")])

    def test_empty_bank(self):
        with pytest.raises(BankFormatError, match="at least one item"):
            ItemBank("bk", "t", [])


class TestFileFormats:
    def test_bank_round_trip(self, tmp_path):
        bank = ItemBank("bk", "Title", [make_item("a"), make_item("b", correct=2)])
        path = tmp_path / "bank.json"
        save_bank(bank, path)
        loaded = load_bank(path)
        assert loaded.bank_id == "bk" and loaded.title == "Title"
        assert [it.item_id for it in loaded.items] == ["a", "b"]
        assert loaded.item("b").correct_index == 2
        # counters never persist
        assert loaded.item("a").times_answered == 0

    def test_bad_bank_names_the_item(self):
        raw = {
            "bank_id": "bk",
            "title": "t",
            "items": [{"item_id": "broken", "stem": "s", "answers": [{"text": "only", "correct": True}]}],
        }
        with pytest.raises(BankFormatError, match="broken"):
            bank_from_dict(raw)

    def test_log_line_round_trip(self):
        r = rec("alice", "q7", 3, True)
        again = ResponseRecord.from_json(r.to_json())
        assert again == r
        assert json.loads(r.to_json())["timestamp"].endswith("Z")

    def test_log_error_carries_line_number(self, tmp_path):
        path = tmp_path / "log.jsonl"
        path.write_text(rec("a", "x", 1).to_json() + "\nnot json\n")
        with pytest.raises(BankFormatError, match=":2:"):
            list(read_log(path))

    def test_replay_reconstructs_state_and_counters(self):
        bank = ItemBank("b", "t", [make_item("x"), make_item("y")])
        state = StudentState("s", "b")
        records = []
        for chosen in (0, 1, 0):
            state, r = record_response(state, bank.item("x"), chosen)
            records.append(r)
        fresh_bank = ItemBank("b", "t", [make_item("x"), make_item("y")])
        states = replay(records, {"b": fresh_bank})
        assert states[("s", "b")].grade == state.grade
        assert states[("s", "b")].history == state.history
        assert fresh_bank.item("x").times_answered == 3
        assert fresh_bank.item("x").times_correct == 2

    def test_replay_rejects_seq_gap(self):
        with pytest.raises(BankFormatError, match="expected seq"):
            replay([rec("s", "x", 2)])
