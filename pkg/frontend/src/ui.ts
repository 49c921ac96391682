/**
 * DOM layer: renders the editing loop (click words to strike them, request
 * a rewrite, introduced words emphasized) and the paraphrase tab with its
 * tau slider and boldness readout.
 */

import { ApiError, EditingClient } from "./api.js";
import {
  EditorSession,
  Round,
  SafetyError,
  applyEdit,
  gotoRound,
  newSession,
  toggleMarker,
} from "./session.js";
import type { ModelInfo } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export class EditorView {
  private session: EditorSession | null = null;
  private busy = false;
  private editModel?: string;
  private monoAvailable = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: EditingClient,
  ) {}

  async start(): Promise<void> {
    try {
      const info = await this.client.models();
      const preferred =
        info.models.find((m: ModelInfo) => m.mode === "bilingual") ??
        info.models.find((m: ModelInfo) => m.mode === "monolingual");
      this.editModel = preferred?.id;
      this.monoAvailable =
        info.marker_model &&
        info.models.some((m: ModelInfo) => m.mode === "monolingual");
    } catch {
      this.editModel = undefined;
    }
    this.render();
  }

  private needsSource(): boolean {
    return this.editModel !== undefined && !this.editModel.includes("mono");
  }

  private render(): void {
    this.root.replaceChildren();
    const tabs = el("div", "tabs");
    const editTab = el("button", "tab active", "Edit");
    const paraTab = el("button", "tab", "Paraphrase");
    tabs.append(editTab, paraTab);
    const editPane = el("div", "pane");
    const paraPane = el("div", "pane hidden");
    editTab.onclick = () => {
      editTab.classList.add("active");
      paraTab.classList.remove("active");
      editPane.classList.remove("hidden");
      paraPane.classList.add("hidden");
    };
    paraTab.onclick = () => {
      paraTab.classList.add("active");
      editTab.classList.remove("active");
      paraPane.classList.remove("hidden");
      editPane.classList.add("hidden");
    };
    this.renderEditPane(editPane);
    this.renderParaphrasePane(paraPane);
    this.root.append(tabs, editPane, paraPane);
  }

  private renderEditPane(pane: HTMLElement): void {
    pane.replaceChildren();
    const sourceInput = el("input") as HTMLInputElement;
    sourceInput.placeholder = "source sentence (bilingual models)";
    const guessInput = el("input") as HTMLInputElement;
    guessInput.placeholder = "sentence to edit";
    const startBtn = el("button", "primary", "Start editing");
    startBtn.onclick = () => {
      if (!guessInput.value.trim()) {
        return;
      }
      this.session = newSession(
        guessInput.value,
        this.needsSource() ? sourceInput.value : undefined,
      );
      this.renderSession(pane.querySelector(".session") as HTMLElement);
    };
    const form = el("div", "form");
    form.append(sourceInput, guessInput, startBtn);
    const sessionBox = el("div", "session");
    pane.append(form, sessionBox);
    this.renderSession(sessionBox);
  }

  private renderSession(box: HTMLElement): void {
    box.replaceChildren();
    if (!this.session) {
      box.append(el("p", "hint", "Strike words out by clicking them, then rewrite."));
      return;
    }
    this.session.rounds.forEach((round, index) => {
      box.append(this.renderRound(round, index));
    });
    if (this.session.notice) {
      box.append(el("p", "notice", this.session.notice));
    }
    const latest = this.session.rounds.length - 1;
    const actions = el("div", "actions");
    const rewrite = el("button", "primary", this.busy ? "Rewriting..." : "Rewrite");
    rewrite.disabled = this.busy;
    rewrite.onclick = () => void this.requestRewrite(box);
    actions.append(rewrite);
    if (this.session.activeRound !== latest) {
      const back = el("button", "", "Back to latest round");
      back.onclick = () => {
        this.session = gotoRound(this.session!, latest);
        this.renderSession(box);
      };
      actions.append(back);
    }
    box.append(actions);
  }

  private renderRound(round: Round, index: number): HTMLElement {
    const card = el("div", "round");
    card.append(el("h3", "", `Round ${index + 1}`));
    const guessLine = el("p", "guess");
    round.guessWords.forEach((word, i) => {
      const span = el("span", "word", word);
      if (round.markers[i] === 1) {
        span.classList.add("struck");
      }
      span.onclick = () => {
        if (this.busy || !this.session) {
          return;
        }
        this.session = toggleMarker(this.session, index, i);
        this.renderSession(card.parentElement as HTMLElement);
      };
      guessLine.append(span, document.createTextNode(" "));
    });
    card.append(guessLine);
    if (round.outputWords) {
      const outLine = el("p", "output");
      const introduced = new Set(round.introduced ?? []);
      round.outputWords.forEach((word, i) => {
        outLine.append(
          introduced.has(i) ? el("strong", "introduced", word) : el("span", "", word),
          document.createTextNode(" "),
        );
      });
      card.append(outLine);
      if (round.flagged) {
        card.append(el("p", "warning", "decoder fell back: constraints pruned everything"));
      }
      if (round.diffWarning) {
        card.append(el("p", "warning", round.diffWarning));
      }
    }
    return card;
  }

  private async requestRewrite(box: HTMLElement): Promise<void> {
    if (!this.session || this.busy) {
      return;
    }
    const latest = this.session.rounds.length - 1;
    const round = this.session.rounds[latest];
    this.busy = true;
    this.renderSession(box);
    try {
      const response = await this.client.requestEdit({
        source: round.source || undefined,
        guess: round.guessWords.join(" "),
        markers: round.markers,
        model: this.editModel,
      });
      this.session = applyEdit(this.session, response);
    } catch (err) {
      const message =
        err instanceof SafetyError
          ? `refusing to display unsafe output: ${err.message}`
          : err instanceof ApiError
            ? `service error${err.field ? ` (${err.field})` : ""}: ${err.message}`
            : `request failed: ${String(err)}`;
      this.session = { ...this.session, notice: message };
    } finally {
      this.busy = false;
      this.renderSession(box);
    }
  }

  private renderParaphrasePane(pane: HTMLElement): void {
    pane.replaceChildren();
    if (!this.monoAvailable) {
      pane.append(el("p", "hint",
        "Paraphrasing needs a monolingual model and a marker model on the server."));
      return;
    }
    const input = el("input") as HTMLInputElement;
    input.placeholder = "sentence to paraphrase";
    const tauLabel = el("label", "", "boldness threshold tau: 0.50");
    const slider = el("input") as HTMLInputElement;
    slider.type = "range";
    slider.min = "0";
    slider.max = "1";
    slider.step = "0.01";
    slider.value = "0.5";
    slider.oninput = () => {
      tauLabel.textContent = `boldness threshold tau: ${Number(slider.value).toFixed(2)}`;
    };
    const button = el("button", "primary", "Paraphrase");
    const result = el("div", "paraphrase-result");
    button.onclick = async () => {
      if (!input.value.trim() || this.busy) {
        return;
      }
      this.busy = true;
      button.disabled = true;
      try {
        const body = await this.client.requestParaphrase({
          sentence: input.value,
          tau: Number(slider.value),
        });
        result.replaceChildren();
        const inputLine = el("p", "guess");
        input.value.split(/\s+/).filter(Boolean).forEach((word, i) => {
          const span = el("span", "word", word);
          if (body.markers[i] === 1) {
            span.classList.add("struck");
          }
          inputLine.append(span, document.createTextNode(" "));
        });
        const inputWords = new Set(input.value.split(/\s+/).filter(Boolean));
        const outLine = el("p", "output");
        body.output.split(/\s+/).filter(Boolean).forEach((word) => {
          outLine.append(
            inputWords.has(word) ? el("span", "", word)
              : el("strong", "introduced", word),
            document.createTextNode(" "),
          );
        });
        result.append(
          inputLine, outLine,
          el("p", "hint", `boldness: ${(body.boldness * 100).toFixed(1)}%`),
        );
      } catch (err) {
        result.replaceChildren(el("p", "warning",
          err instanceof ApiError ? err.message : String(err)));
      } finally {
        this.busy = false;
        button.disabled = false;
      }
    };
    pane.append(input, tauLabel, slider, button, result);
  }
}
