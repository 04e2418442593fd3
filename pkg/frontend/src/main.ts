/** Page bootstrap: join form -> live session with the grade tracker. */
import { QuizApi } from "./api.js";
import { QuizSession } from "./session.js";
import { QuizUi, bindElements } from "./ui.js";

function query<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
}

async function populateBanks(api: QuizApi): Promise<void> {
  const select = query<HTMLSelectElement>("bank-select");
  select.replaceChildren();
  for (const bank of await api.listBanks()) {
    const option = document.createElement("option");
    option.value = bank.bank_id;
    option.textContent = `${bank.title} (${bank.n_items} questions)`;
    select.appendChild(option);
  }
}

async function join(): Promise<void> {
  const errorBanner = query<HTMLElement>("error-banner");
  const api = new QuizApi(query<HTMLInputElement>("service-url").value.replace(/\/$/, ""));
  const name = query<HTMLInputElement>("student-name").value.trim();
  const bankId = query<HTMLSelectElement>("bank-select").value;
  try {
    const session = await QuizSession.start(api, name, bankId);
    const ui = new QuizUi(session, bindElements(document));
    query<HTMLElement>("join-panel").hidden = true;
    query<HTMLElement>("quiz-panel").hidden = false;
    query<HTMLButtonElement>("refresh-grade").addEventListener("click", () => void ui.refreshGrade());
    ui.render();
    errorBanner.hidden = true;
  } catch (err) {
    // No partial state: the join panel stays up with a retry affordance.
    errorBanner.textContent = `could not start session: ${err instanceof Error ? err.message : err}`;
    errorBanner.hidden = false;
  }
}

function bootstrap(): void {
  const api = () => new QuizApi(query<HTMLInputElement>("service-url").value.replace(/\/$/, ""));
  query<HTMLButtonElement>("load-banks").addEventListener("click", () => {
    void populateBanks(api()).catch((err) => {
      const banner = query<HTMLElement>("error-banner");
      banner.textContent = `could not list banks: ${err instanceof Error ? err.message : err}`;
      banner.hidden = false;
    });
  });
  query<HTMLFormElement>("join-form").addEventListener("submit", (event) => {
    event.preventDefault();
    void join();
  });
}

document.addEventListener("DOMContentLoaded", bootstrap);
