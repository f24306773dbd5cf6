/** Hash-routed shell: #/ (intake) -> #/case/:id (progress) -> report. */

import { ApiClient } from "./api";
import { clear, el } from "./dom";
import { CaseForm } from "./form";
import { renderProgress, ProgressView } from "./progress";
import { renderReport } from "./report";

export class App {
  private active: ProgressView | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: ApiClient,
  ) {}

  async start(): Promise<void> {
    window.addEventListener("hashchange", () => void this.route());
    await this.route();
  }

  async route(): Promise<void> {
    this.active?.stop();
    this.active = null;
    const hash = window.location.hash;
    const match = /^#\/case\/([A-Za-z0-9]+)(\/report)?$/.exec(hash);
    if (match && match[2]) {
      await this.showReport(match[1]);
    } else if (match) {
      this.showProgress(match[1]);
    } else {
      await this.showForm();
    }
  }

  async showForm(): Promise<void> {
    clear(this.root);
    const form = new CaseForm(this.client, (sessionId) => {
      window.location.hash = `#/case/${sessionId}`;
    });
    await form.load();
    this.root.append(form.root);
  }

  showProgress(sessionId: string): void {
    this.active = renderProgress(this.root, this.client, sessionId, (status) => {
      if (status === "done") {
        window.location.hash = `#/case/${sessionId}/report`;
      } else {
        this.root.append(el("p", {
          class: "banner",
          role: "alert",
          text: `Pipeline ended in status ${status}.`,
        }));
      }
    });
  }

  async showReport(sessionId: string): Promise<void> {
    try {
      await renderReport(this.root, this.client, sessionId);
    } catch {
      window.location.hash = `#/case/${sessionId}`; // no report yet: back to progress
    }
  }
}
