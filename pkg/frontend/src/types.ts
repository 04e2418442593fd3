/** Wire types exchanged with the quiz service. Field names match the API exactly. */

export interface BankInfo {
  bank_id: string;
  title: string;
  n_items: number;
}

/** A question as presented: answers arrive already shuffled by the server. */
export interface QuestionPayload {
  item_id: string;
  stem: string;
  answers: string[];
  question_token: string;
}

export interface AnswerResult {
  correct: boolean;
  raw_score: number;
  grade: number;
}

export interface GradePayload {
  raw_score: number;
  grade: number;
  answered_count: number;
}
