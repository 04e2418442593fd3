/** Session state machine against the faithful mock service. */
import { describe, expect, it } from "vitest";

import { ApiError, QuizApi } from "../src/api.js";
import { QuizSession } from "../src/session.js";
import { MockQuizServer } from "./mockServer.js";

function setup(seed = 1) {
  const server = new MockQuizServer(seed);
  const api = new QuizApi("http://service.test", server.fetch);
  return { server, api };
}

describe("session start", () => {
  it("registers, fetches the first question, and starts at grade zero", async () => {
    const { server, api } = setup();
    const session = await QuizSession.start(api, "alice", server.bankId);
    const view = session.view;
    expect(view.studentId).toBe("alice");
    expect(view.question).not.toBeNull();
    expect(view.question!.answers).toHaveLength(4);
    expect(view.grade).toBe(0);
    expect(view.answeredCount).toBe(0);
    expect(view.lastResult).toBeNull();
  });

  it("surfaces a start failure without partial state", async () => {
    const api = new QuizApi("http://service.test", async () => new Response("down", { status: 503 }));
    await expect(QuizSession.start(api, "alice", "any")).rejects.toThrow(ApiError);
  });

  it("re-serves the pending question when a session is re-entered", async () => {
    const { server, api } = setup();
    const first = await QuizSession.start(api, "bob", server.bankId);
    const q1 = first.view.question!;
    // same student asks again without answering: identical question and token
    const q2 = await api.nextQuestion(server.bankId, "bob");
    expect(q2).toEqual(q1);
  });
});

describe("answering", () => {
  it("ten answers: displayed grade always equals the service grade", async () => {
    const { server, api } = setup(7);
    const session = await QuizSession.start(api, "carol", server.bankId);
    for (let turn = 0; turn < 10; turn++) {
      // answer correctly on even turns, wrongly on odd ones
      const right = server.correctPresentedIndex("carol");
      const pick = turn % 2 === 0 ? right : (right + 1) % 4;
      const view = await session.answer(pick);
      expect(view).not.toBeNull();
      const serverGrade = server.gradeOf("carol");
      expect(view!.grade).toBe(serverGrade.grade);
      expect(view!.rawScore).toBe(serverGrade.raw_score);
      expect(view!.answeredCount).toBe(serverGrade.answered_count);
      expect(view!.lastResult!.correct).toBe(turn % 2 === 0);
    }
    expect(session.view.gradeHistory).toHaveLength(10);
    expect(server.log).toHaveLength(10);
  });

  it("correct first answer moves the grade display 0 -> 0.125", async () => {
    const { server, api } = setup();
    const session = await QuizSession.start(api, "dave", server.bankId);
    const view = await session.answer(server.correctPresentedIndex("dave"));
    expect(view!.grade).toBe(0.125);
    expect(view!.rawScore).toBe(1);
  });

  it("wrong first answer keeps the grade at zero and shows incorrect", async () => {
    const { server, api } = setup();
    const session = await QuizSession.start(api, "erin", server.bankId);
    const wrong = (server.correctPresentedIndex("erin") + 1) % 4;
    const view = await session.answer(wrong);
    expect(view!.grade).toBe(0);
    expect(view!.lastResult!.correct).toBe(false);
  });

  it("concurrent double submit logs exactly one response", async () => {
    const { server, api } = setup();
    const session = await QuizSession.start(api, "frank", server.bankId);
    const idx = server.correctPresentedIndex("frank");
    const [first, second] = await Promise.all([session.answer(idx), session.answer(idx)]);
    // one of the two is dropped by the in-flight guard
    expect([first, second].filter((v) => v !== null)).toHaveLength(1);
    expect(server.log).toHaveLength(1);
  });

  it("a stale token heals by re-fetching the pending question", async () => {
    const { server, api } = setup();
    const session = await QuizSession.start(api, "gina", server.bankId);
    const before = session.view.question!;
    // consume the token behind the session's back
    await api.submitAnswer(server.bankId, "gina", before.question_token, 0);
    const view = await session.answer(1);
    expect(view!.question!.question_token).not.toBe(before.question_token);
    expect(server.log).toHaveLength(1); // the sneak answer, not the stale one
  });

  it("rejects out-of-range indices locally", async () => {
    const { server, api } = setup();
    const session = await QuizSession.start(api, "hank", server.bankId);
    await expect(session.answer(17)).rejects.toThrow(RangeError);
  });
});

describe("grade tracker", () => {
  it("refresh is a no-op without new answers", async () => {
    const { server, api } = setup();
    const session = await QuizSession.start(api, "ivy", server.bankId);
    await session.answer(server.correctPresentedIndex("ivy"));
    const before = session.view;
    const after = await session.refreshGrade();
    expect(after.grade).toBe(before.grade);
    expect(after.rawScore).toBe(before.rawScore);
    expect(after.answeredCount).toBe(before.answeredCount);
    expect(after.stale).toBe(false);
  });

  it("eight straight correct answers reach grade 1.0", async () => {
    const { server, api } = setup(3);
    const session = await QuizSession.start(api, "jack", server.bankId);
    for (let i = 0; i < 8; i++) {
      await session.answer(server.correctPresentedIndex("jack"));
    }
    const view = await session.refreshGrade();
    expect(view.grade).toBe(1);
    expect(server.gradeOf("jack").grade).toBe(1);
  });

  it("network failure keeps last-known values and flags them stale", async () => {
    const { server, api } = setup();
    const session = await QuizSession.start(api, "kate", server.bankId);
    await session.answer(server.correctPresentedIndex("kate"));
    const gradeBefore = session.view.grade;
    // swap the transport for a failing one
    const flaky = new QuizApi("http://service.test", async () => {
      throw new TypeError("network down");
    });
    (session as unknown as { api: QuizApi }).api = flaky;
    const view = await session.refreshGrade();
    expect(view.stale).toBe(true);
    expect(view.grade).toBe(gradeBefore);
  });
});
