/**
 * Client-side session state for the quiz loop.
 *
 * Every displayed number (raw score, grade, answered count) originates from
 * a service response; the client never recomputes grades locally, so it can
 * never drift from the server's grading rule. Answers are displayed in
 * exactly the order the server presented them, and at most one request is
 * in flight at a time: a second submit while one is pending is ignored,
 * which combines with the server's token guard to make double-clicks log
 * exactly once.
 */
import { ApiError, QuizApi } from "./api.js";
import type { AnswerResult, GradePayload, QuestionPayload } from "./types.js";

export interface SessionView {
  studentId: string;
  bankId: string;
  question: QuestionPayload | null;
  lastResult: AnswerResult | null;
  rawScore: number;
  grade: number;
  answeredCount: number;
  /** Grade after each answered question, for the tracker chart. */
  gradeHistory: number[];
  /** True when the last refresh failed and the panel shows last-known values. */
  stale: boolean;
}

export class QuizSession {
  private view_: SessionView;
  private busy = false;

  private constructor(
    private readonly api: QuizApi,
    view: SessionView,
  ) {
    this.view_ = view;
  }

  /** Read-only snapshot of the current state. */
  get view(): SessionView {
    return { ...this.view_, gradeHistory: [...this.view_.gradeHistory] };
  }

  /** Register (or resume) a student and fetch the first question. */
  static async start(api: QuizApi, name: string, bankId: string): Promise<QuizSession> {
    const { student_id } = await api.registerStudent(name);
    const question = await api.nextQuestion(bankId, student_id);
    const grade = await api.getGrade(bankId, student_id);
    const session = new QuizSession(api, {
      studentId: student_id,
      bankId,
      question,
      lastResult: null,
      rawScore: grade.raw_score,
      grade: grade.grade,
      answeredCount: grade.answered_count,
      gradeHistory: [],
      stale: false,
    });
    return session;
  }

  /**
   * Submit the answer at a presented position, then fetch the next question.
   *
   * Returns null when a request is already in flight (double-click guard).
   * A stale-token rejection is healed transparently by re-fetching the
   * pending question; the caller just sees the refreshed view.
   */
  async answer(presentedIndex: number): Promise<SessionView | null> {
    const question = this.view_.question;
    if (this.busy || question === null) return null;
    if (presentedIndex < 0 || presentedIndex >= question.answers.length) {
      throw new RangeError(`answer index ${presentedIndex} out of range`);
    }
    this.busy = true;
    try {
      let result: AnswerResult;
      try {
        result = await this.api.submitAnswer(
          this.view_.bankId,
          this.view_.studentId,
          question.question_token,
          presentedIndex,
        );
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          // Token consumed or superseded: re-sync with the server's pending
          // question instead of surfacing an error.
          this.view_.question = await this.api.nextQuestion(this.view_.bankId, this.view_.studentId);
          return this.view;
        }
        throw err;
      }
      this.view_.lastResult = result;
      this.view_.rawScore = result.raw_score;
      this.view_.grade = result.grade;
      this.view_.answeredCount += 1;
      this.view_.gradeHistory.push(result.grade);
      this.view_.stale = false;
      this.view_.question = await this.api.nextQuestion(this.view_.bankId, this.view_.studentId);
      return this.view;
    } finally {
      this.busy = false;
    }
  }

  /** Grade tracker refresh: re-read the grade endpoint ("press of a button"). */
  async refreshGrade(): Promise<SessionView> {
    let payload: GradePayload;
    try {
      payload = await this.api.getGrade(this.view_.bankId, this.view_.studentId);
    } catch {
      this.view_.stale = true; // keep last-known values, flag them
      return this.view;
    }
    this.view_.rawScore = payload.raw_score;
    this.view_.grade = payload.grade;
    this.view_.answeredCount = payload.answered_count;
    this.view_.stale = false;
    return this.view;
  }
}
