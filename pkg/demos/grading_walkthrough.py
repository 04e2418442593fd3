"""The sliding-window grading rule, step by step.

A correct answer is worth +1, a wrong one -1/2, and only the last eight
answers ever count, so a rough start can always be quizzed away. The
normalized grade divides by the eight-point maximum and clamps at zero.

Run:  python demos/grading_walkthrough.py
"""

from adaptivequiz import Answer, Item, StudentState, lecture_grade, record_response

item = Item(
    item_id="binomial-mean",
    stem="A fair coin is tossed 10 times. What is the expected number of heads?",
    answers=[Answer("5", correct=True), Answer("10"), Answer("2.5"), Answer("0.5")],
)

state = StudentState(student_id="demo-student", bank_id="demo")
outcomes = [False, False, True, True, True, False, True, True, True, True, True, True]

print("answer  correct  raw score  grade")
for i, want_correct in enumerate(outcomes):
    chosen = 0 if want_correct else 1
    state, record = record_response(state, item, chosen)
    print(f"{i + 1:6d}  {str(record.correct):7s}  {state.raw_score:9.1f}  {state.grade:.3f}")

# Only the last eight answers matter: the two early misses have scrolled out.
raw, grade = lecture_grade(state.history)
tail_raw, tail_grade = lecture_grade(state.history[-8:])
print(f"\nfull history grade {grade:.3f} == last-eight grade {tail_grade:.3f}")
assert (raw, grade) == (tail_raw, tail_grade)

# A perfect streak of eight is exactly full marks.
streak = [("q", True)] * 8
print("eight straight correct ->", lecture_grade(streak))
