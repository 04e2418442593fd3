/**
 * DOM rendering for the quiz client. No framework: the session state is the
 * single source of truth and every render redraws from it.
 */
import type { QuizSession, SessionView } from "./session.js";

export interface UiElements {
  stem: HTMLElement;
  answers: HTMLElement;
  result: HTMLElement;
  rawScore: HTMLElement;
  grade: HTMLElement;
  answeredCount: HTMLElement;
  staleBadge: HTMLElement;
  sparkline: HTMLElement;
  error: HTMLElement;
}

export function bindElements(root: Document | HTMLElement): UiElements {
  const find = (id: string): HTMLElement => {
    const el = root.querySelector<HTMLElement>(`#${id}`);
    if (!el) throw new Error(`missing #${id} in the page`);
    return el;
  };
  return {
    stem: find("question-stem"),
    answers: find("answer-list"),
    result: find("last-result"),
    rawScore: find("raw-score"),
    grade: find("grade"),
    answeredCount: find("answered-count"),
    staleBadge: find("stale-badge"),
    sparkline: find("grade-sparkline"),
    error: find("error-banner"),
  };
}

/** Inline-SVG polyline of the grade series, scaled to [0, 1]. */
export function sparklineSvg(history: number[], width = 220, height = 48): string {
  if (history.length === 0) {
    return `<svg width="${width}" height="${height}" role="img" aria-label="no answers yet"></svg>`;
  }
  const step = history.length > 1 ? width / (history.length - 1) : 0;
  const points = history
    .map((g, i) => `${(i * step).toFixed(1)},${((1 - g) * (height - 4) + 2).toFixed(1)}`)
    .join(" ");
  return (
    `<svg width="${width}" height="${height}" viewBox="0 0 ${width} ${height}" role="img" ` +
    `aria-label="grade history">` +
    `<polyline fill="none" stroke="currentColor" stroke-width="2" points="${points}" /></svg>`
  );
}

export class QuizUi {
  private submitting = false;

  constructor(
    private readonly session: QuizSession,
    private readonly el: UiElements,
  ) {}

  /** Redraw everything from the session view. */
  render(view: SessionView = this.session.view): void {
    const q = view.question;
    this.el.stem.textContent = q ? q.stem : "no question pending";
    this.el.answers.replaceChildren();
    if (q) {
      // Buttons appear in exactly the server's presented order; the index
      // sent back is the presented index, never a reordering of our own.
      q.answers.forEach((text, presentedIndex) => {
        const button = document.createElement("button");
        button.type = "button";
        button.className = "answer";
        button.dataset.index = String(presentedIndex);
        button.textContent = text;
        button.addEventListener("click", () => void this.submit(presentedIndex));
        this.el.answers.appendChild(button);
      });
    }
    if (view.lastResult === null) {
      this.el.result.textContent = "";
      this.el.result.className = "result";
    } else {
      this.el.result.textContent = view.lastResult.correct ? "correct" : "incorrect";
      this.el.result.className = view.lastResult.correct ? "result good" : "result bad";
    }
    this.el.rawScore.textContent = view.rawScore.toFixed(1);
    this.el.grade.textContent = view.grade.toFixed(3);
    this.el.answeredCount.textContent = String(view.answeredCount);
    this.el.staleBadge.hidden = !view.stale;
    this.el.sparkline.innerHTML = sparklineSvg(view.gradeHistory);
  }

  /** Submit one answer; re-entries while a submit is in flight are dropped. */
  async submit(presentedIndex: number): Promise<void> {
    if (this.submitting) return;
    this.submitting = true;
    this.setAnswersDisabled(true);
    try {
      const view = await this.session.answer(presentedIndex);
      if (view) this.render(view);
      this.el.error.hidden = true;
    } catch (err) {
      this.el.error.textContent = `submit failed: ${err instanceof Error ? err.message : err}`;
      this.el.error.hidden = false;
      this.setAnswersDisabled(false);
    } finally {
      this.submitting = false;
    }
  }

  async refreshGrade(): Promise<void> {
    this.render(await this.session.refreshGrade());
  }

  private setAnswersDisabled(disabled: boolean): void {
    for (const button of this.el.answers.querySelectorAll("button")) {
      button.disabled = disabled;
    }
  }
}
