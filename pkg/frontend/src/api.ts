/** Typed client for the case-pipeline HTTP API.
 *
 * The UI performs no diagnostic computation: every number and label it
 * shows comes out of these calls. Progress arrives over server-sent events
 * when EventSource exists, with a polling fallback that reads the same
 * gapless event log, deduplicated by sequence number either way.
 */

import type {
  PipelineEvent,
  RecordFields,
  Report,
  RulesManifest,
  SessionView,
} from "./types";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly violations: string[] = [],
  ) {
    super(message);
  }
}

export interface UploadPayload {
  name: string;
  bytes: Uint8Array;
}

export interface CaseUploads {
  mri?: UploadPayload;
  vcf?: UploadPayload;
}

/** Multipart/form-data encoder that only needs raw bytes, so it behaves
 * identically in browsers and headless runtimes. */
function encodeMultipart(
  fields: Record<string, string>,
  files: Record<string, UploadPayload | undefined>,
): { contentType: string; body: Uint8Array } {
  const boundary = `----cogstage-${Math.random().toString(36).slice(2)}`;
  const encoder = new TextEncoder();
  const chunks: Uint8Array[] = [];
  for (const [name, value] of Object.entries(fields)) {
    chunks.push(encoder.encode(
      `--${boundary}\r\nContent-Disposition: form-data; name="${name}"\r\n\r\n${value}\r\n`,
    ));
  }
  for (const [name, file] of Object.entries(files)) {
    if (!file) continue;
    chunks.push(encoder.encode(
      `--${boundary}\r\nContent-Disposition: form-data; name="${name}"; ` +
      `filename="${file.name}"\r\nContent-Type: application/octet-stream\r\n\r\n`,
    ));
    chunks.push(file.bytes);
    chunks.push(encoder.encode("\r\n"));
  }
  chunks.push(encoder.encode(`--${boundary}--\r\n`));
  const total = chunks.reduce((n, c) => n + c.length, 0);
  const body = new Uint8Array(total);
  let offset = 0;
  for (const chunk of chunks) {
    body.set(chunk, offset);
    offset += chunk.length;
  }
  return { contentType: `multipart/form-data; boundary=${boundary}`, body };
}

export interface EventSubscription {
  close(): void;
}

const POLL_MS = 200;

export class ApiClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchImpl: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let violations: string[] = [];
      let message = `${response.status} ${response.statusText}`;
      try {
        const body = await response.json();
        const detail = body?.detail;
        if (detail?.violations) violations = detail.violations;
        if (typeof detail === "string") message = detail;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(message, response.status, violations);
    }
    return response;
  }

  async validationRules(): Promise<RulesManifest> {
    return (await this.request("/meta/validation-rules")).json();
  }

  async createCase(record: RecordFields, uploads: CaseUploads = {}): Promise<string> {
    const { contentType, body } = encodeMultipart(
      { record: JSON.stringify(record) },
      { mri: uploads.mri, vcf: uploads.vcf },
    );
    const response = await this.request("/cases", {
      method: "POST",
      headers: { "Content-Type": contentType },
      // Freshly-constructed Uint8Array always sits on a plain ArrayBuffer;
      // the cast only papers over the SharedArrayBuffer-aware lib typings.
      body: body as unknown as BodyInit,
    });
    return (await response.json()).session_id;
  }

  async run(sessionId: string): Promise<void> {
    await this.request(`/cases/${sessionId}/run`, { method: "POST" });
  }

  async getCase(sessionId: string): Promise<SessionView> {
    return (await this.request(`/cases/${sessionId}`)).json();
  }

  async getReport(sessionId: string): Promise<Report> {
    return (await this.request(`/cases/${sessionId}/report`)).json();
  }

  async chat(sessionId: string, message: string): Promise<{ reply: string }> {
    return (
      await this.request(`/cases/${sessionId}/chat`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ message }),
      })
    ).json();
  }

  /** Raw export bytes, exactly as the service serves them. */
  async exportReport(sessionId: string, format: "json" | "markdown"): Promise<string> {
    const response = await this.request(`/cases/${sessionId}/export?format=${format}`);
    return response.text();
  }

  /**
   * Subscribe to pipeline events from `after` onward. Uses EventSource when
   * the runtime provides one, otherwise polls the session view; both paths
   * deliver each sequence number exactly once and call `onEnd` when the
   * session reaches a terminal status.
   */
  subscribeEvents(
    sessionId: string,
    onEvent: (event: PipelineEvent) => void,
    onEnd: (status: string) => void,
    after = 0,
  ): EventSubscription {
    if (typeof EventSource !== "undefined") {
      return this.subscribeSse(sessionId, onEvent, onEnd, after);
    }
    return this.subscribePolling(sessionId, onEvent, onEnd, after);
  }

  private subscribeSse(
    sessionId: string,
    onEvent: (event: PipelineEvent) => void,
    onEnd: (status: string) => void,
    after: number,
  ): EventSubscription {
    let cursor = after;
    let source: EventSource | null = null;
    let closed = false;

    const open = () => {
      source = new EventSource(
        `${this.baseUrl}/cases/${sessionId}/events?after=${cursor}`,
      );
      const handle = (raw: MessageEvent) => {
        const event = JSON.parse(raw.data) as PipelineEvent;
        if (event.sequence <= cursor) return; // reconnects never duplicate cards
        cursor = event.sequence;
        onEvent(event);
      };
      for (const kind of ["started", "tool_ok", "tool_failed", "retry", "fallback", "finished"]) {
        source.addEventListener(kind, handle as EventListener);
      }
      source.addEventListener("end", (raw) => {
        const status = JSON.parse((raw as MessageEvent).data).status as string;
        source?.close();
        if (!closed) onEnd(status);
      });
      source.onerror = () => {
        // Dropped stream: reconnect from the last seen sequence number.
        source?.close();
        if (!closed) setTimeout(open, 500);
      };
    };
    open();
    return {
      close() {
        closed = true;
        source?.close();
      },
    };
  }

  private subscribePolling(
    sessionId: string,
    onEvent: (event: PipelineEvent) => void,
    onEnd: (status: string) => void,
    after: number,
  ): EventSubscription {
    let cursor = after;
    let closed = false;
    const tick = async () => {
      if (closed) return;
      try {
        const view = await this.getCase(sessionId);
        for (const event of view.events) {
          if (event.sequence > cursor) {
            cursor = event.sequence;
            onEvent(event);
          }
        }
        if (view.status === "done" || view.status === "failed") {
          closed = true;
          onEnd(view.status);
          return;
        }
      } catch {
        /* transient poll failure: try again */
      }
      setTimeout(tick, POLL_MS);
    };
    void tick();
    return {
      close() {
        closed = true;
      },
    };
  }
}
