/** Phase 3: report review, chat, and export.
 *
 * Every report schema field has exactly one rendering slot; the export
 * buttons download the service's bytes unmodified (the last downloaded
 * content is kept on the view for verification).
 */

import { ApiClient } from "./api";
import { clear, el } from "./dom";
import type { Report } from "./types";

export class ReportView {
  readonly root: HTMLElement;
  lastDownload: { format: string; content: string } | null = null;
  private chatLog: HTMLElement;

  constructor(
    private readonly client: ApiClient,
    private readonly sessionId: string,
  ) {
    this.root = el("section", { class: "report-view" });
    this.chatLog = el("ul", { class: "chat-log" });
  }

  async load(): Promise<void> {
    const report = await this.client.getReport(this.sessionId);
    this.render(report);
  }

  private render(report: Report): void {
    clear(this.root);
    this.root.append(el("h2", { text: "Staged diagnosis report" }));

    const badge = el("p", { class: "diagnosis-slot" }, [
      el("strong", { "data-slot": "diagnosis", text: report.diagnosis }),
      " ",
      el("span", {
        "data-slot": "confidence",
        class: `confidence-badge confidence-${report.confidence.toLowerCase()}`,
        text: `confidence: ${report.confidence}`,
      }),
    ]);
    this.root.append(badge);

    this.root.append(
      el("h3", { text: "Clinical reasoning" }),
      el("p", { "data-slot": "clinical_reasoning", text: report.justification.clinical_reasoning }),
    );
    this.root.append(el("h3", { text: "Supporting evidence" }), this.list(
      "supporting_evidence", report.justification.evidence_summary.supporting_evidence,
    ));
    this.root.append(el("h3", { text: "Contradicting evidence" }), this.list(
      "contradicting_evidence", report.justification.evidence_summary.contradicting_evidence,
    ));
    this.root.append(
      el("h3", { text: "Conflict resolution" }),
      el("p", { "data-slot": "conflict_resolution", text: report.justification.conflict_resolution }),
      el("h3", { text: "Diagnostic criteria" }),
      el("p", { "data-slot": "diagnostic_criteria", text: report.justification.diagnostic_criteria }),
    );
    this.root.append(el("h3", { text: "Recommendations" }),
                     this.list("recommendations", report.recommendations));

    const attachments = el("ul", { "data-slot": "attachments", class: "attachments" });
    for (const ref of report.attachments) {
      const item = el("li", {});
      if (/\.(png|jpg|jpeg|gif)$/i.test(ref)) {
        item.append(el("img", { src: ref, alt: ref, class: "attachment-preview" }));
      }
      item.append(el("a", { href: ref, text: ref }));
      attachments.append(item);
    }
    this.root.append(el("h3", { text: "Attachments" }), attachments);

    this.root.append(
      el("h3", { text: "Provenance" }),
      el("p", { "data-slot": "provenance", text: report.provenance }),
      el("h3", { text: "Guideline checksum" }),
      el("p", { "data-slot": "guideline_checksum", text: report.guideline_checksum }),
    );

    const jsonButton = el("button", { id: "export-json", text: "Download JSON" });
    jsonButton.addEventListener("click", () => void this.download("json"));
    const mdButton = el("button", { id: "export-markdown", text: "Download Markdown" });
    mdButton.addEventListener("click", () => void this.download("markdown"));
    this.root.append(el("div", { class: "export-controls" }, [jsonButton, mdButton]));

    const chat = el("div", { class: "chat-panel" }, [el("h3", { text: "Ask the agent" })]);
    chat.append(this.chatLog);
    const input = el("input", { id: "chat-input", placeholder: "why this stage?" });
    const send = el("button", { id: "chat-send", text: "Send" });
    send.addEventListener("click", () => void this.sendChat(input));
    chat.append(el("div", { class: "chat-controls" }, [input, send]));
    this.root.append(chat);
  }

  private list(slot: string, items: string[]): HTMLElement {
    const node = el("ul", { "data-slot": slot });
    if (items.length === 0) {
      node.append(el("li", { class: "empty", text: "None recorded" }));
    }
    for (const item of items) node.append(el("li", { text: item }));
    return node;
  }

  /** Fetch export bytes, remember them, and trigger a browser download
   * when the runtime supports object URLs. Returns the exact content. */
  async download(format: "json" | "markdown"): Promise<string> {
    const content = await this.client.exportReport(this.sessionId, format);
    this.lastDownload = { format, content };
    if (typeof URL !== "undefined" && "createObjectURL" in URL) {
      try {
        const blob = new Blob([content]);
        const href = URL.createObjectURL(blob);
        const anchor = el("a", {
          href,
          download: `report.${format === "json" ? "json" : "md"}`,
        });
        anchor.click();
        URL.revokeObjectURL(href);
      } catch {
        /* headless runtime without object URLs: content is still returned */
      }
    }
    return content;
  }

  async sendChat(input: HTMLInputElement): Promise<string> {
    const message = input.value.trim();
    if (!message) return "";
    this.chatLog.append(el("li", { class: "turn turn-user", text: message }));
    input.value = "";
    const { reply } = await this.client.chat(this.sessionId, message);
    this.chatLog.append(el("li", { class: "turn turn-agent", text: reply }));
    return reply;
  }
}

export async function renderReport(
  container: HTMLElement,
  client: ApiClient,
  sessionId: string,
): Promise<ReportView> {
  clear(container);
  const view = new ReportView(client, sessionId);
  await view.load();
  container.append(view.root);
  return view;
}
