"""A complete live session against the HTTP service, in-process.

Boots the quiz service with a small bank, registers a student, and answers
questions through the real wire API while watching the grade tracker. The
same endpoints serve the browser client in frontend/.

Run:  python demos/live_service_session.py
"""

import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from adaptivequiz import Answer, Item, ItemBank
from adaptivequiz.service import QuizService, create_app

bank = ItemBank(
    bank_id="demo-stats",
    title="Demo statistics bank",
    items=[
        Item(
            item_id=f"q{k:02d}",
            stem=f"Demo question {k}",
            answers=[Answer(f"answer {j}", correct=(j == k % 4)) for j in range(4)],
        )
        for k in range(8)
    ],
)

workdir = Path(tempfile.mkdtemp(prefix="quiz-demo-"))
service = QuizService(log_path=workdir / "responses.jsonl", rng_seed=2)
service.add_bank(bank)
client = TestClient(create_app(service))

student_id = client.post("/students", json={"name": "demo-student"}).json()["student_id"]
print(f"registered as {student_id!r}; banks: {client.get('/banks').json()}\n")

# Answer ten questions, deliberately missing every fourth one.
for turn in range(10):
    question = client.post(f"/banks/{bank.bank_id}/question", json={"student_id": student_id}).json()
    correct_text = next(
        a.text for a in bank.item(question["item_id"]).answers if a.correct
    )
    right_index = question["answers"].index(correct_text)
    chosen = right_index if turn % 4 else (right_index + 1) % 4
    result = client.post(
        f"/banks/{bank.bank_id}/answer",
        json={
            "student_id": student_id,
            "question_token": question["question_token"],
            "presented_index": chosen,
        },
    ).json()
    print(
        f"q{turn + 1:02d} {question['item_id']}: "
        f"{'correct' if result['correct'] else 'wrong  '}  "
        f"raw {result['raw_score']:4.1f}  grade {result['grade']:.3f}"
    )

grade = client.get(f"/banks/{bank.bank_id}/grade", params={"student_id": student_id}).json()
print(f"\ngrade tracker: {grade}")

log_lines = client.get("/admin/export").text.strip().split("\n")
print(f"append-only log holds {len(log_lines)} responses at {service.log_path}")
service.close()
