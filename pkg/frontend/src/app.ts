// Chat page wiring: input box, suggested prompts, plot ID helper,
// rendered turns with inline orthophotos, citations and follow-up chips.

import { ApiClient, ChatResponse, Citation } from "./api";
import { renderMarkdown } from "./markdown";
import { isValidPlotId } from "./plotId";

export interface AppOptions {
  starterPrompts?: string[];
}

const DEFAULT_PROMPTS = [
  "Is plot 0:0:107:55:1 suitable land for planting apple trees?",
  "What's the usage of the plot 0:0:104:223:1?",
  "What conditions do I need on my farm to grow fruit?",
];

export class ChatApp {
  sessionId: string | null = null;
  pending = false;

  private log: HTMLElement;
  private input: HTMLInputElement;
  private sendButton: HTMLButtonElement;
  private plotInput: HTMLInputElement;
  private plotBadge: HTMLElement;

  constructor(
    root: HTMLElement,
    private api: ApiClient,
    options: AppOptions = {},
  ) {
    root.innerHTML = `
      <div class="chat-log"></div>
      <div class="starter-prompts"></div>
      <form class="composer">
        <input class="query-input" type="text" placeholder="Ask about a plot..." />
        <button type="button" class="voice-button" disabled
                title="Voice input is not available yet">&#127908;</button>
        <button type="submit" class="send-button">Send</button>
      </form>
      <div class="plot-helper">
        <input class="plot-id-input" type="text" placeholder="Plot ID, e.g. 0:0:107:161:1" />
        <span class="plot-id-badge"></span>
        <button type="button" class="plot-id-insert">Insert</button>
      </div>
    `;
    this.log = root.querySelector(".chat-log")!;
    this.input = root.querySelector(".query-input")!;
    this.sendButton = root.querySelector(".send-button")!;
    this.plotInput = root.querySelector(".plot-id-input")!;
    this.plotBadge = root.querySelector(".plot-id-badge")!;

    const prompts = options.starterPrompts ?? DEFAULT_PROMPTS;
    const panel = root.querySelector(".starter-prompts")!;
    for (const text of prompts) {
      panel.appendChild(this.chip(text, () => {
        this.input.value = text;
      }));
    }

    root.querySelector<HTMLFormElement>(".composer")!.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.send(this.input.value);
    });
    this.plotInput.addEventListener("input", () => this.updatePlotBadge());
    root.querySelector(".plot-id-insert")!.addEventListener("click", () => {
      if (this.plotInput.value.trim()) {
        this.input.value = `${this.input.value} ${this.plotInput.value.trim()}`.trim();
      }
    });
    this.updatePlotBadge();
  }

  private chip(text: string, onClick: () => void): HTMLButtonElement {
    const button = document.createElement("button");
    button.type = "button";
    button.className = "prompt-chip";
    button.textContent = text;
    button.addEventListener("click", onClick);
    return button;
  }

  private updatePlotBadge() {
    const value = this.plotInput.value.trim();
    if (!value) {
      this.plotBadge.textContent = "";
      this.plotBadge.className = "plot-id-badge";
      return;
    }
    const ok = isValidPlotId(value);
    this.plotBadge.textContent = ok ? "valid" : "invalid";
    this.plotBadge.className = `plot-id-badge ${ok ? "valid" : "invalid"}`;
  }

  async send(text: string): Promise<void> {
    const query = text.trim();
    if (!query || this.pending) return;
    this.pending = true;
    this.sendButton.disabled = true;
    this.appendUserTurn(query);
    this.input.value = "";
    try {
      const response = await this.api.sendQuery(query, this.sessionId ?? undefined);
      this.sessionId = response.session_id;
      this.appendAssistantTurn(response);
    } catch (err) {
      this.appendErrorCard(err instanceof Error ? err.message : String(err));
    } finally {
      this.pending = false;
      this.sendButton.disabled = false;
    }
  }

  /** Rebuild the log from the server's stored session history. */
  async loadSession(sessionId: string): Promise<void> {
    const history = await this.api.getSession(sessionId);
    this.sessionId = history.session_id;
    this.log.innerHTML = "";
    for (const turn of history.turns) {
      this.appendUserTurn(turn.query);
      this.appendAssistantTurn(turn.response);
    }
  }

  private appendUserTurn(query: string) {
    const div = document.createElement("div");
    div.className = "turn user-turn";
    div.textContent = query;
    this.log.appendChild(div);
  }

  private appendAssistantTurn(response: Pick<ChatResponse, "markdown" | "citations" | "followups" | "image_data_uri">) {
    const div = document.createElement("div");
    div.className = "turn assistant-turn";

    if (response.image_data_uri) {
      const img = document.createElement("img");
      img.className = "orthophoto";
      img.src = response.image_data_uri;
      img.alt = "Plot orthophoto";
      div.appendChild(img);
    }

    const body = document.createElement("div");
    body.className = "answer-body";
    const numbers = new Set(response.citations.map((c) => c.number));
    body.innerHTML = renderMarkdown(response.markdown, numbers);
    div.appendChild(body);

    if (response.citations.length) {
      div.appendChild(this.citationList(response.citations));
    }
    if (response.followups.length) {
      const section = document.createElement("div");
      section.className = "followups";
      const title = document.createElement("div");
      title.className = "followups-title";
      title.textContent = "Follow up";
      section.appendChild(title);
      for (const text of response.followups) {
        section.appendChild(this.chip(text, () => void this.send(text)));
      }
      div.appendChild(section);
    }
    this.log.appendChild(div);
  }

  private citationList(citations: Citation[]): HTMLElement {
    const ol = document.createElement("ol");
    ol.className = "citations";
    for (const cit of citations) {
      const li = document.createElement("li");
      li.id = `cite-${cit.number}`;
      li.textContent = cit.relevance_display
        ? `${cit.source_label} - Relevance ${cit.relevance_display}`
        : cit.source_label;
      ol.appendChild(li);
    }
    return ol;
  }

  private appendErrorCard(message: string) {
    const div = document.createElement("div");
    div.className = "turn error-card";
    div.textContent = `Request failed: ${message}`;
    this.log.appendChild(div);
  }
}

export function mountApp(root: HTMLElement, baseUrl = "", options: AppOptions = {}): ChatApp {
  return new ChatApp(root, new ApiClient(baseUrl), options);
}
