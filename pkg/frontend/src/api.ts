/**
 * Thin typed client for the quiz service HTTP API.
 *
 * Submission is token-guarded on the server: answering with a consumed or
 * stale token fails with 409 instead of logging twice, so retries are safe.
 */
import type { AnswerResult, BankInfo, GradePayload, QuestionPayload } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function handle<T>(res: Response): Promise<T> {
  if (!res.ok) {
    const body = await res.text();
    throw new ApiError(res.status, body || `HTTP ${res.status}`);
  }
  return (await res.json()) as T;
}

export class QuizApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    }).then((res) => handle<T>(res));
  }

  registerStudent(name: string): Promise<{ student_id: string }> {
    return this.post("/students", { name });
  }

  listBanks(): Promise<BankInfo[]> {
    return this.fetchFn(`${this.baseUrl}/banks`).then((res) => handle<BankInfo[]>(res));
  }

  /** Fetch (or re-fetch: the server re-serves a pending question unchanged). */
  nextQuestion(bankId: string, studentId: string): Promise<QuestionPayload> {
    return this.post(`/banks/${encodeURIComponent(bankId)}/question`, { student_id: studentId });
  }

  submitAnswer(
    bankId: string,
    studentId: string,
    questionToken: string,
    presentedIndex: number,
  ): Promise<AnswerResult> {
    return this.post(`/banks/${encodeURIComponent(bankId)}/answer`, {
      student_id: studentId,
      question_token: questionToken,
      presented_index: presentedIndex,
    });
  }

  getGrade(bankId: string, studentId: string): Promise<GradePayload> {
    const params = new URLSearchParams({ student_id: studentId });
    return this.fetchFn(`${this.baseUrl}/banks/${encodeURIComponent(bankId)}/grade?${params}`).then(
      (res) => handle<GradePayload>(res),
    );
  }

  exportLog(): Promise<string> {
    return this.fetchFn(`${this.baseUrl}/admin/export`).then(async (res) => {
      if (!res.ok) throw new ApiError(res.status, await res.text());
      return res.text();
    });
  }
}
