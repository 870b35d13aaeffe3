// Thin typed client over the assistant's JSON API.

export interface Citation {
  number: number;
  source_label: string;
  relevance_display: string | null;
}

export interface ChatResponse {
  session_id: string;
  mode: "multimodal" | "rag" | "both" | "none";
  markdown: string;
  citations: Citation[];
  followups: string[];
  image_data_uri: string | null;
}

export interface StoredTurn {
  query: string;
  mode: string;
  response: {
    markdown: string;
    citations: Citation[];
    followups: string[];
    image_data_uri: string | null;
  };
}

export interface SessionHistory {
  session_id: string;
  turns: StoredTurn[];
}

export class ApiError extends Error {
  status: number;

  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

async function readError(res: Response): Promise<string> {
  try {
    const body = await res.json();
    if (typeof body.detail === "string") return body.detail;
    if (body.detail) return JSON.stringify(body.detail);
  } catch {
    // non-JSON error body, fall through
  }
  return `request failed with status ${res.status}`;
}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  async sendQuery(query: string, sessionId?: string): Promise<ChatResponse> {
    const payload: Record<string, string> = { query };
    if (sessionId) payload.session_id = sessionId;
    const res = await fetch(`${this.baseUrl}/chat`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!res.ok) {
      throw new ApiError(res.status, await readError(res));
    }
    return res.json();
  }

  async getSession(sessionId: string): Promise<SessionHistory> {
    const res = await fetch(`${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}`);
    if (!res.ok) {
      throw new ApiError(res.status, await readError(res));
    }
    return res.json();
  }
}
