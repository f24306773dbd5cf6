/** Phase 2: live pipeline progress with intermediate results.
 *
 * Three fixed stages (planning, tool execution, aggregation) rendered in
 * order; each tool_ok event expands into an intermediate result card with
 * its payload summary; retries and fallbacks get visible badges. The event
 * feed is append-only and deduplicated by sequence, so reconnects never
 * duplicate cards.
 */

import { ApiClient, EventSubscription } from "./api";
import { clear, el } from "./dom";
import type { PipelineEvent, ToolOutcome } from "./types";

const STAGES = ["planning", "executing", "aggregating"] as const;
const STAGE_LABELS: Record<string, string> = {
  planning: "Planning",
  executing: "Tool execution",
  aggregating: "Aggregation",
};

function summarizePayload(payload: Record<string, unknown>): string {
  const parts: string[] = [];
  for (const [key, value] of Object.entries(payload)) {
    if (key === "source_unit" || key === "diagnostics") continue;
    if (typeof value === "number") {
      parts.push(`${key}: ${Number.isInteger(value) ? value : value.toFixed(2)}`);
    } else if (typeof value === "string" && parts.length < 6) {
      parts.push(`${key}: ${value}`);
    } else if (Array.isArray(value)) {
      parts.push(`${key}: ${value.length} point(s)`);
    }
  }
  return parts.join(", ");
}

export class ProgressView {
  readonly root: HTMLElement;
  private readonly stageChips = new Map<string, HTMLElement>();
  private readonly feed: HTMLElement;
  private readonly cards: HTMLElement;
  private subscription: EventSubscription | null = null;
  private lastSequence = 0;
  private pendingCards: Promise<void>[] = [];

  constructor(
    private readonly client: ApiClient,
    private readonly sessionId: string,
    private readonly onDone: (status: string) => void,
  ) {
    this.root = el("section", { class: "progress-view" });
    this.root.append(el("h2", { text: `Case ${sessionId}` }));

    const chips = el("div", { class: "stages" });
    for (const stage of STAGES) {
      const chip = el("span", {
        class: "stage-chip",
        "data-stage": stage,
        "data-state": "pending",
        text: STAGE_LABELS[stage],
      });
      this.stageChips.set(stage, chip);
      chips.append(chip);
    }
    this.root.append(chips);

    this.cards = el("div", { class: "tool-cards" });
    this.root.append(el("h3", { text: "Intermediate results" }), this.cards);
    this.feed = el("ul", { class: "event-feed" });
    this.root.append(el("h3", { text: "Event log" }), this.feed);
  }

  start(): void {
    this.subscription = this.client.subscribeEvents(
      this.sessionId,
      (event) => this.handleEvent(event),
      (status) => this.finish(status),
      this.lastSequence,
    );
  }

  stop(): void {
    this.subscription?.close();
  }

  private handleEvent(event: PipelineEvent): void {
    this.lastSequence = Math.max(this.lastSequence, event.sequence);
    const chip = this.stageChips.get(event.stage);
    if (chip) {
      if (event.kind === "started") chip.dataset.state = "running";
      if (event.kind === "finished") chip.dataset.state = "done";
      if (event.kind === "fallback") chip.dataset.badge = "fallback";
      if (event.kind === "retry") chip.dataset.badge = "retry";
    }
    const item = el("li", {
      class: `event event-${event.kind}`,
      "data-sequence": String(event.sequence),
      text: `#${event.sequence} [${event.stage}] ${event.kind}` +
        (event.detail ? ` - ${event.detail}` : ""),
    });
    if (event.kind === "retry" || event.kind === "fallback") {
      item.append(el("span", { class: `badge badge-${event.kind}`, text: event.kind }));
    }
    this.feed.append(item);

    if (event.kind === "tool_ok") {
      // The card lands in event order immediately; its payload summary is
      // filled in when the fetch resolves.
      const tool = event.detail.split(" ")[0];
      const card = el("div", {
        class: "tool-card",
        "data-sequence": String(event.sequence),
        "data-tool": tool,
      });
      card.append(el("h4", { text: tool }));
      const summary = el("p", { class: "payload-summary", text: event.detail });
      card.append(summary);
      this.cards.append(card);
      this.pendingCards.push(this.fillToolCard(tool, summary, event.detail));
    }
  }

  private async fillToolCard(
    tool: string,
    summary: HTMLElement,
    fallbackText: string,
  ): Promise<void> {
    try {
      const view = await this.client.getCase(this.sessionId);
      const outcome = view.outcomes.find(
        (o: ToolOutcome) => o.tool === tool && o.status === "ok",
      );
      summary.textContent = outcome ? summarizePayload(outcome.payload) : fallbackText;
    } catch {
      summary.textContent = fallbackText;
    }
  }

  private finish(status: string): void {
    if (status === "done") {
      for (const chip of this.stageChips.values()) {
        if (chip.dataset.state === "running") chip.dataset.state = "done";
      }
    }
    // Intermediate cards fetch their payloads; let them land before the
    // caller navigates away.
    void Promise.allSettled(this.pendingCards).then(() => this.onDone(status));
  }
}

export function renderProgress(
  container: HTMLElement,
  client: ApiClient,
  sessionId: string,
  onDone: (status: string) => void,
): ProgressView {
  clear(container);
  const view = new ProgressView(client, sessionId, onDone);
  container.append(view.root);
  view.start();
  return view;
}
